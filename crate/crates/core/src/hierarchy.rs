//! Supertile hierarchies along a rule sequence: choice functions, control
//! points, paths, approximants and the greedy supertile decomposition of a
//! window.
//!
//! Level `k` supertiles are built by applying `x_k` to level `k-1`
//! supertiles. All positions are kept exactly in level-0 module coordinates;
//! `chain(k, v)` converts a vector measured in level-`k` units into level-0
//! units by applying `Mθ_{x_k}` first and `Mθ_{x_1}` last.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, ExactVector, Patch, PlacedTile, Point, Region, Shape};
use crate::intmat::IntMatrix;
use crate::substitution::SubstitutionSystem;
use crate::symbolic::SymbolSequence;

/// One chosen digit per (rule, parent).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChoiceFunction {
    choice: Vec<Vec<usize>>,
}

impl ChoiceFunction {
    /// Picks, for every (rule, parent), the child whose corner sits at the
    /// parent's corner, falling back to the first listed child.
    pub fn default_for(sys: &SubstitutionSystem) -> Self {
        let choice = (0..sys.rule_count())
            .map(|l| {
                (0..sys.types())
                    .map(|i| sys.digits(l, i).iter().position(|d| d.offset.is_zero()).unwrap_or(0))
                    .collect()
            })
            .collect();
        ChoiceFunction { choice }
    }

    pub fn new(sys: &SubstitutionSystem, choice: Vec<Vec<usize>>) -> Result<Self> {
        if choice.len() != sys.rule_count() {
            return Err(Error::DimensionMismatch { expected: sys.rule_count(), found: choice.len() });
        }
        for (l, row) in choice.iter().enumerate() {
            if row.len() != sys.types() {
                return Err(Error::DimensionMismatch { expected: sys.types(), found: row.len() });
            }
            for (i, &c) in row.iter().enumerate() {
                let n = sys.digits(l, i).len();
                if c >= n {
                    return Err(Error::IndexOutOfRange { index: c, limit: n });
                }
            }
        }
        Ok(ChoiceFunction { choice })
    }

    pub fn get(&self, rule: usize, parent: usize) -> usize {
        self.choice[rule][parent]
    }

    /// True when every chosen child sits at its parent's corner.
    pub fn is_corner(&self, sys: &SubstitutionSystem) -> bool {
        self.choice
            .iter()
            .enumerate()
            .all(|(l, row)| row.iter().enumerate().all(|(i, &c)| sys.digits(l, i)[c].offset.is_zero()))
    }
}

/// Control points of the prototiles, measured from each tile's corner.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlPointTable {
    pub anchors: Vec<Point>,
    /// The anchors are exactly the tile corners.
    pub exact: bool,
    pub depth: usize,
    pub residual: f64,
    /// Anchors that fall on the tile boundary rather than in its interior.
    pub boundary: Vec<bool>,
}

fn diameter(sys: &SubstitutionSystem) -> f64 {
    let z = ExactVector::zeros(sys.rank());
    let mut d: f64 = 0.0;
    for p in sys.prototiles() {
        if let Ok(bs) = p.boxes(sys.basis(), &z) {
            for b in bs {
                for a in 0..sys.dim() {
                    d = d.max(b.hi[a].abs()).max(b.lo[a].abs());
                }
            }
        }
    }
    d
}

fn on_boundary(sys: &SubstitutionSystem, i: usize, p: Point) -> bool {
    let z = ExactVector::zeros(sys.rank());
    let Ok(boxes) = sys.prototiles()[i].boxes(sys.basis(), &z) else { return true };
    let dim = sys.dim();
    let eps = 1e-9 * (1.0 + diameter(sys));
    let probes: Vec<Point> = if dim == 1 {
        vec![[p[0] - eps, 0.0], [p[0] + eps, 0.0]]
    } else {
        vec![[p[0] - eps, p[1] - eps], [p[0] + eps, p[1] - eps], [p[0] - eps, p[1] + eps], [p[0] + eps, p[1] + eps]]
    };
    !probes.iter().all(|q| {
        boxes.iter().any(|b| (0..dim).all(|a| b.lo[a] < q[a] && q[a] < b.hi[a]))
    })
}

/// Control points as nested fixed points of the chosen children, read along
/// the backward tail `x_{-1}, x_{-2}, …` (repeated periodically if short).
pub fn control_points(
    sys: &SubstitutionSystem,
    minus_tail: &[usize],
    choice: &ChoiceFunction,
    tol: f64,
) -> Result<ControlPointTable> {
    let m = sys.types();
    if minus_tail.is_empty() {
        return Err(Error::Horizon("control points need a backward tail".into()));
    }
    if let Some(&l) = minus_tail.iter().find(|&&l| l >= sys.rule_count()) {
        return Err(Error::IndexOutOfRange { index: l, limit: sys.rule_count() });
    }
    let corner = minus_tail
        .iter()
        .all(|&l| (0..m).all(|i| sys.digits(l, i)[choice.get(l, i)].offset.is_zero()));
    if corner {
        return Ok(ControlPointTable {
            anchors: vec![[0.0; 2]; m],
            exact: true,
            depth: 0,
            residual: 0.0,
            boundary: (0..m).map(|i| on_boundary(sys, i, [0.0; 2])).collect(),
        });
    }
    if !sys.basis().is_self_similar() {
        return Err(Error::Unsupported(
            "non-corner choice functions need a self-similar basis".into(),
        ));
    }
    let diam = diameter(sys);
    let mut anchors = Vec::with_capacity(m);
    let mut depth_used = 0;
    let mut residual_max: f64 = 0.0;
    for i in 0..m {
        let mut p = [0.0; 2];
        let mut scale = 1.0;
        let mut cur = i;
        let mut depth = 0;
        loop {
            let l = minus_tail[depth % minus_tail.len()];
            let d = &sys.digits(l, cur)[choice.get(l, cur)];
            scale /= sys.basis().theta(l);
            let o = sys.basis().embed(&d.offset)?;
            p[0] += scale * o[0];
            p[1] += scale * o[1];
            cur = d.child;
            depth += 1;
            if scale * diam < tol || depth > 100_000 {
                break;
            }
        }
        if scale * diam >= tol {
            return Err(Error::NotConverged(format!("control point of prototile {i}")));
        }
        depth_used = depth_used.max(depth);
        residual_max = residual_max.max(scale * diam);
        anchors.push(p);
    }
    let boundary = anchors.iter().enumerate().map(|(i, &p)| on_boundary(sys, i, p)).collect();
    Ok(ControlPointTable { anchors, exact: false, depth: depth_used, residual: residual_max, boundary })
}

/// A supertile: level, type and the exact position of its corner.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Node {
    pub level: usize,
    pub typ: usize,
    pub corner: ExactVector,
}

/// The hierarchy determined by a rule sequence, up to `levels` levels.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    sys: Arc<SubstitutionSystem>,
    x: SymbolSequence,
    levels: usize,
    choice: ChoiceFunction,
    control: ControlPointTable,
    chain: Vec<IntMatrix>,
    offsets: Vec<Vec<Vec<ExactVector>>>,
    extents: Vec<Vec<Vec<(ExactVector, ExactVector)>>>,
    anchors: Vec<Vec<Point>>,
    scale: Vec<f64>,
    volumes: Vec<Vec<f64>>,
    counts: Vec<Vec<u128>>,
}

impl Hierarchy {
    /// Hierarchy with the default choice function.
    pub fn new(sys: Arc<SubstitutionSystem>, x: SymbolSequence, levels: usize) -> Result<Self> {
        let choice = ChoiceFunction::default_for(&sys);
        Self::with_choice(sys, x, levels, choice, 1e-14)
    }

    pub fn with_choice(
        sys: Arc<SubstitutionSystem>,
        x: SymbolSequence,
        levels: usize,
        choice: ChoiceFunction,
        tol: f64,
    ) -> Result<Self> {
        if x.plus.len() < levels {
            return Err(Error::Horizon(format!("{levels} levels need {levels} forward symbols, have {}", x.plus.len())));
        }
        if let Some(&l) = x.plus[..levels].iter().find(|&&l| l >= sys.rule_count()) {
            return Err(Error::IndexOutOfRange { index: l, limit: sys.rule_count() });
        }
        let m = sys.types();
        let rank = sys.rank();
        let control = control_points(&sys, &x.minus, &choice, tol)?;
        let mut chain = vec![IntMatrix::identity(rank)];
        let mut scale = vec![1.0];
        for k in 1..=levels {
            let l = x.plus[k - 1];
            let next = chain[k - 1].checked_mul(sys.basis().mult_table(l)).map_err(|_| {
                Error::Overflow("supertile coordinates exceed 64 bits; lower the horizon")
            })?;
            chain.push(next);
            scale.push(scale[k - 1] * sys.basis().theta(l));
        }
        let apply = |k: usize, v: &ExactVector| -> Result<ExactVector> {
            Ok(ExactVector::from_slice(&chain[k].checked_mul_vec(v.coords())?))
        };
        let mut offsets = vec![Vec::new()];
        for k in 1..=levels {
            let l = x.plus[k - 1];
            let mut per = Vec::with_capacity(m);
            for i in 0..m {
                per.push(sys.digits(l, i).iter().map(|d| apply(k - 1, &d.offset)).collect::<Result<Vec<_>>>()?);
            }
            offsets.push(per);
        }
        let mut extents = Vec::with_capacity(levels + 1);
        for k in 0..=levels {
            let mut per = Vec::with_capacity(m);
            for p in sys.prototiles() {
                let pieces = p
                    .shape
                    .pieces(rank)
                    .into_iter()
                    .map(|(lo, hi)| Ok((apply(k, &lo)?, apply(k, &hi)?)))
                    .collect::<Result<Vec<_>>>()?;
                per.push(pieces);
            }
            extents.push(per);
        }
        let mut anchors = vec![control.anchors.clone()];
        let mut volumes = vec![sys.volumes().to_vec()];
        let mut counts = vec![vec![1u128; m]];
        for k in 1..=levels {
            let l = x.plus[k - 1];
            let mut a = Vec::with_capacity(m);
            let mut v = Vec::with_capacity(m);
            let mut c = Vec::with_capacity(m);
            for i in 0..m {
                let ds = sys.digits(l, i);
                let e = choice.get(l, i);
                let o = sys.basis().embed(&offsets[k][i][e])?;
                let below = anchors[k - 1][ds[e].child];
                a.push([below[0] + o[0], below[1] + o[1]]);
                v.push(ds.iter().map(|d| volumes[k - 1][d.child]).sum());
                c.push(ds.iter().map(|d| counts[k - 1][d.child]).fold(0u128, |s, t| s.saturating_add(t)));
            }
            anchors.push(a);
            volumes.push(v);
            counts.push(c);
        }
        Ok(Hierarchy { sys, x, levels, choice, control, chain, offsets, extents, anchors, scale, volumes, counts })
    }

    pub fn system(&self) -> &SubstitutionSystem {
        &self.sys
    }

    pub fn system_arc(&self) -> &Arc<SubstitutionSystem> {
        &self.sys
    }

    pub fn sequence(&self) -> &SymbolSequence {
        &self.x
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn choice(&self) -> &ChoiceFunction {
        &self.choice
    }

    pub fn control_points(&self) -> &ControlPointTable {
        &self.control
    }

    /// The rule `x_k` applied at level `k ≥ 1`.
    pub fn rule_at(&self, k: usize) -> usize {
        self.x.plus[k - 1]
    }

    /// `Mθ_{x_1} ⋯ Mθ_{x_k}`.
    pub fn chain_matrix(&self, k: usize) -> &IntMatrix {
        &self.chain[k]
    }

    /// Converts a vector in level-`k` units into level-0 units.
    pub fn chain(&self, k: usize, v: &ExactVector) -> Result<ExactVector> {
        if k > self.levels {
            return Err(Error::Horizon(format!("level {k} beyond {}", self.levels)));
        }
        Ok(ExactVector::from_slice(&self.chain[k].checked_mul_vec(v.coords())?))
    }

    /// Corner of child `e` of a level-`k` supertile of type `parent`,
    /// relative to the parent's corner, in level-0 units.
    pub fn offset(&self, k: usize, parent: usize, e: usize) -> &ExactVector {
        &self.offsets[k][parent][e]
    }

    /// Control point of a level-`k` supertile of type `i`, from its corner.
    pub fn anchor(&self, k: usize, i: usize) -> Point {
        self.anchors[k][i]
    }

    /// True when every control point is the corner of its supertile.
    pub fn anchors_at_corners(&self) -> bool {
        self.control.exact && self.choice.is_corner(&self.sys)
    }

    /// The product of the expansions of `x_1, …, x_k`.
    pub fn scale(&self, k: usize) -> f64 {
        self.scale[k]
    }

    pub fn volume(&self, k: usize, i: usize) -> f64 {
        self.volumes[k][i]
    }

    /// Number of tiles in a level-`k` supertile of type `i` (saturating).
    pub fn tile_count(&self, k: usize, i: usize) -> u128 {
        self.counts[k][i]
    }

    /// Exact corner-to-corner extents of a level-`k` supertile of type `i`.
    pub fn extents(&self, k: usize, i: usize) -> &[(ExactVector, ExactVector)] {
        &self.extents[k][i]
    }

    /// Offsets `u_e` between the control point of each child and that of the
    /// parent at level `k`: `(child, u_e)` per digit.
    pub fn level_offsets(&self, k: usize) -> Result<Vec<Vec<(usize, Point)>>> {
        if k == 0 || k > self.levels {
            return Err(Error::OutOfRange(format!("level {k} outside 1..={}", self.levels)));
        }
        let l = self.rule_at(k);
        let mut out = Vec::with_capacity(self.sys.types());
        for i in 0..self.sys.types() {
            let pa = self.anchors[k][i];
            let row = self
                .sys
                .digits(l, i)
                .iter()
                .enumerate()
                .map(|(e, d)| {
                    let o = self.sys.basis().embed_coords(self.offsets[k][i][e].coords());
                    let ca = self.anchors[k - 1][d.child];
                    (d.child, [o[0] + ca[0] - pa[0], o[1] + ca[1] - pa[1]])
                })
                .collect();
            out.push(row);
        }
        Ok(out)
    }

    /// Exact offsets, available when control points are corners.
    pub fn level_offsets_exact(&self, k: usize) -> Option<Vec<Vec<(usize, ExactVector)>>> {
        if k == 0 || k > self.levels || !self.anchors_at_corners() {
            return None;
        }
        let l = self.rule_at(k);
        Some(
            (0..self.sys.types())
                .map(|i| {
                    self.sys
                        .digits(l, i)
                        .iter()
                        .enumerate()
                        .map(|(e, d)| (d.child, self.offsets[k][i][e].clone()))
                        .collect()
                })
                .collect(),
        )
    }

    /// Children of a supertile, in digit order.
    pub fn children<'a>(&'a self, node: &'a Node) -> impl Iterator<Item = Result<Node>> + 'a {
        let k = node.level;
        let l = if k > 0 { self.rule_at(k) } else { 0 };
        let digits = if k > 0 { self.sys.digits(l, node.typ) } else { &[] };
        digits.iter().enumerate().map(move |(e, d)| {
            Ok(Node { level: k - 1, typ: d.child, corner: node.corner.checked_add(&self.offsets[k][node.typ][e])? })
        })
    }

    /// Real boxes covered by a supertile.
    pub fn node_boxes(&self, node: &Node) -> Result<SmallVec<[Aabb; 1]>> {
        let b = self.sys.basis();
        let mut out = SmallVec::new();
        for (lo, hi) in &self.extents[node.level][node.typ] {
            let lo = b.embed(&node.corner.checked_add(lo)?)?;
            let hi = b.embed(&node.corner.checked_add(hi)?)?;
            out.push(Aabb { lo, hi });
        }
        Ok(out)
    }

    /// Bounding box of a supertile.
    pub fn node_bbox(&self, node: &Node) -> Result<Aabb> {
        let boxes = self.node_boxes(node)?;
        Ok(boxes.iter().skip(1).fold(boxes[0], |acc, b| acc.union(b)))
    }

    /// Tiles of a level-`k` supertile of type `i` placed with its corner at
    /// `corner`, in digit order.
    pub fn supertile_patch(&self, node: &Node) -> Result<Patch> {
        let mut tiles = Vec::new();
        let mut stack = vec![node.clone()];
        while let Some(n) = stack.pop() {
            if n.level == 0 {
                tiles.push(PlacedTile { label: n.typ, translation: n.corner });
                continue;
            }
            let kids: Vec<Node> = self.children(&n).collect::<Result<_>>()?;
            stack.extend(kids.into_iter().rev());
        }
        Ok(Patch::new(tiles))
    }

    /// The hierarchy of `σⁿx`. Units are level-`n` units of this one.
    pub fn shifted(&self, n: usize) -> Result<Hierarchy> {
        if n > self.levels {
            return Err(Error::Horizon(format!("shift {n} beyond {} levels", self.levels)));
        }
        Hierarchy::with_choice(self.sys.clone(), self.x.shift(n)?, self.levels - n, self.choice.clone(), 1e-14)
    }
}

/// One step of a path: the parent type at level `k` and the digit of the
/// level-`(k-1)` supertile inside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Step {
    pub parent: usize,
    pub digit: usize,
}

/// The position of the origin tile in the hierarchy: its type and the chain
/// of parents above it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathAddress {
    pub origin: usize,
    pub steps: Vec<Step>,
}

/// A tiling patch around the origin, known up to the top level of its path.
/// The origin tile has its corner at 0.
#[derive(Clone, Debug)]
pub struct Tiling {
    hier: Arc<Hierarchy>,
    path: PathAddress,
    corners: Vec<ExactVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Placement {
    pub level: usize,
    pub typ: usize,
    pub corner: ExactVector,
    pub position: Point,
}

/// Greedy top-down partition of the tiles inside a window into supertiles.
#[derive(Clone, Debug, Serialize)]
pub struct SupertileDecomposition {
    pub region: Region,
    pub top_level: usize,
    pub min_level: usize,
    /// Supertiles lying entirely inside the window.
    pub whole: Vec<Placement>,
    /// Level-`min_level` supertiles cut by the window boundary.
    pub partial: Vec<Placement>,
    /// `kappa[i][j]`: whole supertiles of level `i` and type `j`.
    pub kappa: Vec<Vec<u64>>,
    /// Tiles covered by whole supertiles.
    pub covered_tiles: u128,
    /// Window volume over the volume scale of the largest whole level.
    pub y_fit: f64,
    /// Per level `i`: `Σ_j κ_j^(i) / (R/θ̄_(i))^(d-1)`.
    pub boundary_ratio: Vec<f64>,
}

impl Tiling {
    pub fn new(hier: Arc<Hierarchy>, path: PathAddress) -> Result<Self> {
        let sys = hier.system();
        if path.steps.len() > hier.levels() {
            return Err(Error::Horizon(format!("path of length {} exceeds {} levels", path.steps.len(), hier.levels())));
        }
        if path.origin >= sys.types() {
            return Err(Error::IndexOutOfRange { index: path.origin, limit: sys.types() });
        }
        let mut child = path.origin;
        let mut corners = vec![ExactVector::zeros(sys.rank())];
        for (k0, s) in path.steps.iter().enumerate() {
            let k = k0 + 1;
            if s.parent >= sys.types() {
                return Err(Error::IndexOutOfRange { index: s.parent, limit: sys.types() });
            }
            let ds = sys.digits(hier.rule_at(k), s.parent);
            let d = ds.get(s.digit).ok_or(Error::IndexOutOfRange { index: s.digit, limit: ds.len() })?;
            if d.child != child {
                return Err(Error::InconsistentPath(format!(
                    "level {k}: digit {} of parent {} has type {}, expected {}",
                    s.digit, s.parent, d.child, child
                )));
            }
            let c = corners[k0].checked_sub(hier.offset(k, s.parent, s.digit))?;
            corners.push(c);
            child = s.parent;
        }
        Ok(Tiling { hier, path, corners })
    }

    /// A path to level `m` drawn top-down: a uniform top type, then children
    /// with probability proportional to their volume, so that the origin tile
    /// is a volume-uniform tile of the top supertile.
    pub fn random<R: Rng + ?Sized>(hier: Arc<Hierarchy>, m: usize, rng: &mut R) -> Result<Self> {
        Self::random_weighted(hier, m, None, rng)
    }

    /// As [`Tiling::random`], with the top type drawn from `top_weights`
    /// (for example the volume-weighted vertex weights at level `m`).
    pub fn random_weighted<R: Rng + ?Sized>(
        hier: Arc<Hierarchy>,
        m: usize,
        top_weights: Option<&[f64]>,
        rng: &mut R,
    ) -> Result<Self> {
        if m > hier.levels() {
            return Err(Error::Horizon(format!("path of length {m} exceeds {} levels", hier.levels())));
        }
        let sys = hier.system();
        let mut typ = match top_weights {
            None => rng.gen_range(0..sys.types()),
            Some(w) => {
                if w.len() != sys.types() {
                    return Err(Error::DimensionMismatch { expected: sys.types(), found: w.len() });
                }
                let dist = rand::distributions::WeightedIndex::new(w)
                    .map_err(|e| Error::InvalidSampler(format!("top weights: {e}")))?;
                rand::distributions::Distribution::sample(&dist, rng)
            }
        };
        let mut steps = vec![Step { parent: 0, digit: 0 }; m];
        for k in (1..=m).rev() {
            let ds = sys.digits(hier.rule_at(k), typ);
            let total: f64 = ds.iter().map(|d| hier.volume(k - 1, d.child)).sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = ds.len() - 1;
            for (e, d) in ds.iter().enumerate() {
                u -= hier.volume(k - 1, d.child);
                if u < 0.0 {
                    pick = e;
                    break;
                }
            }
            steps[k - 1] = Step { parent: typ, digit: pick };
            typ = ds[pick].child;
        }
        Tiling::new(hier, PathAddress { origin: typ, steps })
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hier
    }

    pub fn hierarchy_arc(&self) -> &Arc<Hierarchy> {
        &self.hier
    }

    pub fn path(&self) -> &PathAddress {
        &self.path
    }

    /// Highest level known along the path.
    pub fn top(&self) -> usize {
        self.path.steps.len()
    }

    /// The level-`k` supertile containing the origin tile.
    pub fn ancestor(&self, k: usize) -> Result<Node> {
        if k > self.top() {
            return Err(Error::Horizon(format!("level {k} beyond the path length {}", self.top())));
        }
        let typ = if k == 0 { self.path.origin } else { self.path.steps[k - 1].parent };
        Ok(Node { level: k, typ, corner: self.corners[k].clone() })
    }

    /// The `k`-th approximant: all tiles of the level-`k` ancestor.
    pub fn approximant(&self, k: usize) -> Result<Patch> {
        self.hier.supertile_patch(&self.ancestor(k)?)
    }

    fn covers(&self, node: &Node, window: &Aabb) -> Result<bool> {
        let dim = self.hier.system().dim();
        let boxes = self.hier.node_boxes(node)?;
        if dim == 1 {
            return Ok(boxes[0].contains_box(window, 1));
        }
        let area: f64 = boxes.iter().filter_map(|b| b.intersect(window, dim)).map(|b| b.volume(dim)).sum();
        Ok(area >= window.volume(dim) * (1.0 - 1e-12))
    }

    /// Smallest level whose ancestor contains the window.
    pub fn covering_level(&self, region: &Region) -> Result<usize> {
        let window = region.as_box(self.hier.system().dim());
        for k in 0..=self.top() {
            if self.covers(&self.ancestor(k)?, &window)? {
                return Ok(k);
            }
        }
        Err(Error::Horizon(format!(
            "window of half-width {} at {:?} leaves the level-{} supertile",
            region.half_width,
            region.center,
            self.top()
        )))
    }

    /// Visits every tile whose interior meets the window, together with its
    /// ancestor at level `y`.
    pub fn for_each_tile<F>(&self, region: &Region, y: usize, mut f: F) -> Result<()>
    where
        F: FnMut(&Node, &Node) -> Result<()>,
    {
        let dim = self.hier.system().dim();
        let window = region.as_box(dim);
        let top = self.covering_level(region)?.max(y);
        if top > self.top() {
            return Err(Error::Horizon(format!("level {top} beyond the path length {}", self.top())));
        }
        let root = self.ancestor(top)?;
        let mut stack: Vec<(Node, Option<Node>)> = vec![(root, None)];
        while let Some((n, anc)) = stack.pop() {
            let boxes = self.hier.node_boxes(&n)?;
            if boxes.iter().all(|b| b.interior_disjoint(&window, dim)) {
                continue;
            }
            let anc = if n.level == y { Some(n.clone()) } else { anc };
            if n.level == 0 {
                f(&n, anc.as_ref().expect("ancestor set at level y"))?;
                continue;
            }
            for c in self.hier.children(&n) {
                stack.push((c?, anc.clone()));
            }
        }
        Ok(())
    }

    /// All tiles whose closed geometry lies in the window.
    pub fn clipped_patch(&self, region: &Region) -> Result<Patch> {
        let dim = self.hier.system().dim();
        let window = region.as_box(dim);
        let mut tiles = Vec::new();
        self.for_each_tile(region, 0, |t, _| {
            if self.hier.node_boxes(t)?.iter().all(|b| window.contains_box(b, dim)) {
                tiles.push(PlacedTile { label: t.typ, translation: t.corner.clone() });
            }
            Ok(())
        })?;
        Ok(Patch::new(tiles))
    }

    /// Greedy decomposition of the window into whole supertiles of level at
    /// least `min_level`, plus the level-`min_level` supertiles cut by the
    /// boundary.
    pub fn decompose(&self, region: &Region, min_level: usize) -> Result<SupertileDecomposition> {
        let sys = self.hier.system();
        let dim = sys.dim();
        let b = sys.basis();
        let window = region.as_box(dim);
        let top = self.covering_level(region)?.max(min_level);
        if top > self.top() {
            return Err(Error::Horizon(format!("level {top} beyond the path length {}", self.top())));
        }
        let mut whole = Vec::new();
        let mut partial = Vec::new();
        let mut stack = vec![self.ancestor(top)?];
        while let Some(n) = stack.pop() {
            let boxes = self.hier.node_boxes(&n)?;
            if boxes.iter().all(|bx| bx.interior_disjoint(&window, dim)) {
                continue;
            }
            let place = |n: &Node| Placement {
                level: n.level,
                typ: n.typ,
                position: b.embed_coords(n.corner.coords()),
                corner: n.corner.clone(),
            };
            if boxes.iter().all(|bx| window.contains_box(bx, dim)) {
                whole.push(place(&n));
                continue;
            }
            if n.level == min_level {
                partial.push(place(&n));
                continue;
            }
            let kids: Vec<Node> = self.hier.children(&n).collect::<Result<_>>()?;
            stack.extend(kids.into_iter().rev());
        }
        let mut kappa = vec![vec![0u64; sys.types()]; top + 1];
        let mut covered: u128 = 0;
        for p in &whole {
            kappa[p.level][p.typ] += 1;
            covered += self.hier.tile_count(p.level, p.typ);
        }
        let n_top = whole.iter().map(|p| p.level).max().unwrap_or(0);
        let y_fit = region.volume(dim) / self.hier.scale(n_top).powi(dim as i32);
        let boundary_ratio = (0..=top)
            .map(|i| {
                let s: u64 = kappa[i].iter().sum();
                s as f64 / (region.half_width / self.hier.scale(i)).powi(dim as i32 - 1)
            })
            .collect();
        Ok(SupertileDecomposition {
            region: *region,
            top_level: top,
            min_level,
            whole,
            partial,
            kappa,
            covered_tiles: covered,
            y_fit,
            boundary_ratio,
        })
    }

    /// The same tiling seen from level `n`: the shifted hierarchy, its path,
    /// and the corner of the level-`n` ancestor in this tiling's coordinates.
    pub fn shifted(&self, n: usize) -> Result<(Tiling, ExactVector)> {
        if n > self.top() {
            return Err(Error::Horizon(format!("shift {n} beyond the path length {}", self.top())));
        }
        let hier = Arc::new(self.hier.shifted(n)?);
        let origin = if n == 0 { self.path.origin } else { self.path.steps[n - 1].parent };
        let path = PathAddress { origin, steps: self.path.steps[n..].to_vec() };
        Ok((Tiling::new(hier, path)?, self.corners[n].clone()))
    }

    /// The tile whose closed geometry contains `p`, with its ancestor at
    /// level `y`.
    pub fn locate(&self, p: Point, y: usize) -> Result<Option<(Node, Node)>> {
        let dim = self.hier.system().dim();
        let probe = Region::new(p, 1e-9)?;
        let top = self.covering_level(&probe)?.max(y);
        if top > self.top() {
            return Err(Error::Horizon(format!("level {top} beyond the path length {}", self.top())));
        }
        let inside = |b: &Aabb| (0..dim).all(|a| b.lo[a] <= p[a] && p[a] <= b.hi[a]);
        let mut node = self.ancestor(top)?;
        let mut anc = if top == y { Some(node.clone()) } else { None };
        while node.level > 0 {
            let mut next = None;
            for c in self.hier.children(&node) {
                let c = c?;
                if self.hier.node_boxes(&c)?.iter().any(inside) {
                    next = Some(c);
                    break;
                }
            }
            let Some(c) = next else { return Ok(None) };
            if c.level == y {
                anc = Some(c.clone());
            }
            node = c;
        }
        Ok(anc.map(|a| (node, a)))
    }

    /// Real position of the level-`k` ancestor's corner.
    pub fn ancestor_position(&self, k: usize) -> Result<Point> {
        self.hier.system().basis().embed(&self.ancestor(k)?.corner)
    }

    /// Shape of the origin tile.
    pub fn origin_shape(&self) -> &Shape {
        &self.hier.system().prototiles()[self.path.origin].shape
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::region_clip;
    use crate::golden;
    use crate::symbolic::MeasureSampler;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant(rule: usize, n: usize) -> SymbolSequence {
        SymbolSequence::from_parts(vec![rule; n], vec![rule; n])
    }

    fn hier(sys: SubstitutionSystem, x: SymbolSequence, levels: usize) -> Arc<Hierarchy> {
        Arc::new(Hierarchy::new(Arc::new(sys), x, levels).unwrap())
    }

    #[test]
    fn leftmost_choice_gives_corner_anchors() {
        let sys = golden::tmpd();
        let c = ChoiceFunction::default_for(&sys);
        let t = control_points(&sys, &[0, 1, 0], &c, 1e-14).unwrap();
        assert!(t.exact);
        assert_eq!(t.anchors, vec![[0.0, 0.0]; 2]);
        assert!(t.boundary.iter().all(|&b| b));
        let fib = golden::fibonacci();
        let t = control_points(&fib, &[0], &ChoiceFunction::default_for(&fib), 1e-14).unwrap();
        assert_eq!(t.anchors, vec![[0.0, 0.0]; 2]);
    }

    #[test]
    fn rightmost_choice_lands_on_the_boundary() {
        let sys = golden::tmpd();
        // Thue–Morse, right child for both parents: p = (1 + p)/2, so p = 1
        let c = ChoiceFunction::new(&sys, vec![vec![1, 1], vec![0, 0]]).unwrap();
        let t = control_points(&sys, &[0], &c, 1e-14).unwrap();
        assert!(!t.exact);
        assert!((t.anchors[0][0] - 1.0).abs() < 1e-13);
        assert!(t.boundary[0] && t.boundary[1]);
        // right child for a only: p_a = (1 + p_b)/2 with p_b = 0
        let c = ChoiceFunction::new(&sys, vec![vec![1, 0], vec![0, 0]]).unwrap();
        let t = control_points(&sys, &[0], &c, 1e-14).unwrap();
        assert!((t.anchors[0][0] - 0.5).abs() < 1e-13);
        assert!(!t.boundary[0]);
        assert!(t.residual < 1e-14);
    }

    #[test]
    fn thue_morse_approximant() {
        let h = hier(golden::tmpd(), constant(0, 8), 8);
        let path = PathAddress { origin: 0, steps: vec![Step { parent: 0, digit: 0 }, Step { parent: 0, digit: 0 }] };
        let t = Tiling::new(h.clone(), path).unwrap();
        let p = t.approximant(2).unwrap();
        let word: Vec<(usize, i64)> = p.tiles.iter().map(|t| (t.label, t.translation.coords()[0])).collect();
        assert_eq!(word, vec![(0, 0), (1, 1), (1, 2), (0, 3)]);
        assert_eq!(t.approximant(0).unwrap().tiles.len(), 1);
        let bad = PathAddress { origin: 1, steps: vec![Step { parent: 0, digit: 0 }] };
        assert!(matches!(Tiling::new(h, bad), Err(Error::InconsistentPath(_))));
    }

    #[test]
    fn mixed_approximant_size() {
        // x = (1, 2): level 2 built by period doubling from Thue–Morse supertiles
        let h = hier(golden::tmpd(), SymbolSequence::from_parts(vec![0, 1], vec![0]), 2);
        for top in 0..2 {
            let n = Node { level: 2, typ: top, corner: ExactVector::zeros(1) };
            let p = h.supertile_patch(&n).unwrap();
            let theta = golden::tmpd().substitution_matrix(1).unwrap().checked_mul(golden::tmpd().substitution_matrix(0).unwrap()).unwrap();
            assert_eq!(p.len() as i64, theta.row_sums()[top]);
        }
    }

    #[test]
    fn level_offsets_thue_morse() {
        let h = hier(golden::tmpd(), constant(0, 4), 4);
        let u = h.level_offsets_exact(1).unwrap();
        assert_eq!(u[0], vec![(0, ExactVector::from_slice(&[0])), (1, ExactVector::from_slice(&[1]))]);
        assert_eq!(u[1], vec![(1, ExactVector::from_slice(&[0])), (0, ExactVector::from_slice(&[1]))]);
        let u2 = h.level_offsets_exact(2).unwrap();
        assert_eq!(u2[0][1].1, ExactVector::from_slice(&[2]));
        for k in 1..=4 {
            for sys_u in [h.level_offsets_exact(k).unwrap()] {
                for j in 0..2 {
                    assert!(sys_u.iter().flatten().any(|(c, v)| *c == j && v.is_zero()));
                }
            }
        }
    }

    #[test]
    fn exact_fit_is_one_supertile() {
        let h = hier(golden::tmpd(), constant(0, 12), 12);
        let path = PathAddress { origin: 0, steps: vec![Step { parent: 0, digit: 0 }; 6] };
        let t = Tiling::new(h, path).unwrap();
        // the level-3 ancestor spans [0, 8]
        let d = t.decompose(&Region::new([4.0, 0.0], 4.0).unwrap(), 0).unwrap();
        assert_eq!(d.whole.len(), 1);
        assert_eq!(d.whole[0].level, 3);
        assert!(d.partial.is_empty());
        assert_eq!(d.kappa[3].iter().sum::<u64>(), 1);
    }

    #[test]
    fn tiny_window_inside_a_tile() {
        let h = hier(golden::tmpd(), constant(0, 12), 12);
        let path = PathAddress { origin: 0, steps: vec![Step { parent: 0, digit: 0 }; 6] };
        let t = Tiling::new(h, path).unwrap();
        let r = Region::new([0.5, 0.0], 0.2).unwrap();
        let d = t.decompose(&r, 0).unwrap();
        assert!(d.whole.is_empty());
        assert_eq!(t.clipped_patch(&r).unwrap().len(), 0);
    }

    #[test]
    fn window_beyond_horizon() {
        let h = hier(golden::tmpd(), constant(0, 4), 4);
        let path = PathAddress { origin: 0, steps: vec![Step { parent: 0, digit: 0 }; 4] };
        let t = Tiling::new(h, path).unwrap();
        assert!(matches!(t.covering_level(&Region::centered(3.0).unwrap()), Err(Error::Horizon(_))));
    }

    #[test]
    fn conservation_thue_morse_corner() {
        let h = hier(golden::tmpd(), constant(0, 12), 12);
        let s = |parent, digit| Step { parent, digit };
        let mut steps = vec![s(0, 1), s(1, 1), s(1, 0), s(0, 1)];
        steps.extend([s(0, 0); 4]);
        let path = PathAddress { origin: 1, steps };
        let t = Tiling::new(h, path).unwrap();
        let r = Region::new([0.0, 0.0], 3.5).unwrap();
        let d = t.decompose(&r, 0).unwrap();
        assert!(d.whole.iter().all(|p| p.level <= 2));
        assert_eq!(d.covered_tiles as usize, t.clipped_patch(&r).unwrap().len());
    }

    fn check_conservation(sys: SubstitutionSystem, seed: u64, radius: f64, cx: f64) -> std::result::Result<(), TestCaseError> {
        let dim = sys.dim();
        let x = MeasureSampler::bernoulli(vec![0.5; sys.rule_count()].iter().map(|p| p * 2.0 / sys.rule_count() as f64).collect(), seed)
            .sample_sequence(40)
            .unwrap();
        let h = hier(sys, x, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Tiling::random(h.clone(), 30, &mut rng).unwrap();
        let r = Region::new([cx, if dim == 2 { -cx } else { 0.0 }], radius).unwrap();
        let d = t.decompose(&r, 0).unwrap();
        let clip = t.clipped_patch(&r).unwrap();
        prop_assert_eq!(d.covered_tiles as usize, clip.len());
        // the materialized approximant agrees with the lazy enumeration
        if dim == 1 && radius < 40.0 {
            let k = t.covering_level(&r).unwrap();
            let approx = t.approximant(k).unwrap();
            let direct = region_clip(&approx, &r, h.system().basis(), h.system().prototiles()).unwrap();
            prop_assert_eq!(direct.len(), clip.len());
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn decomposition_conserves_tiles_1d(seed in 0u64..10_000, radius in 0.3f64..200.0, cx in -10.0f64..10.0) {
            check_conservation(golden::tmpd(), seed, radius, cx)?;
            check_conservation(golden::fibonacci(), seed, radius, cx)?;
        }

        #[test]
        fn decomposition_conserves_tiles_2d(seed in 0u64..10_000, radius in 0.3f64..30.0, cx in -5.0f64..5.0) {
            check_conservation(golden::block2d(), seed, radius, cx)?;
        }

        #[test]
        fn approximants_nest(seed in 0u64..10_000, k in 0usize..8) {
            let x = MeasureSampler::bernoulli(vec![0.5, 0.5], seed).sample_sequence(12).unwrap();
            let h = hier(golden::tmpd(), x, 12);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = Tiling::random(h, 10, &mut rng).unwrap();
            let small = t.approximant(k).unwrap();
            let big = t.approximant(k + 1).unwrap();
            for tile in &small.tiles {
                prop_assert!(big.tiles.contains(tile));
            }
        }

        #[test]
        fn shifted_tiling_has_the_same_supertiles(seed in 0u64..10_000, n in 1usize..4) {
            let x = MeasureSampler::bernoulli(vec![0.5, 0.5], seed).sample_sequence(16).unwrap();
            let h = hier(golden::tmpd(), x, 16);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = Tiling::random(h.clone(), 12, &mut rng).unwrap();
            let (s, corner) = t.shifted(n).unwrap();
            prop_assert_eq!(corner, t.ancestor(n).unwrap().corner);
            // level-n supertiles of T scaled down are the tiles of the shifted tiling
            let top = t.ancestor(n + 2).unwrap();
            let mut coarse = Vec::new();
            let mut stack = vec![top];
            while let Some(node) = stack.pop() {
                if node.level == n { coarse.push(node.typ); continue; }
                let kids: Vec<Node> = h.children(&node).collect::<Result<_>>().unwrap();
                stack.extend(kids.into_iter().rev());
            }
            let fine: Vec<usize> = s.approximant(2).unwrap().tiles.iter().map(|t| t.label).collect();
            prop_assert_eq!(coarse, fine);
        }
    }
}
