//! Exact module coordinates, their real embedding, and the box/patch
//! primitives every other module builds on.
//!
//! Positions are integer tuples in a finitely generated Z-module. Floats only
//! appear when a vector is embedded into R^d.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::intmat::IntMatrix;

/// A point of R^d. When d = 1 the second coordinate is always zero.
pub type Point = [f64; 2];

/// Integer coordinates of a module element.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct ExactVector(pub SmallVec<[i64; 4]>);

impl ExactVector {
    pub fn zeros(rank: usize) -> Self {
        ExactVector(SmallVec::from_elem(0, rank))
    }

    pub fn from_slice(c: &[i64]) -> Self {
        ExactVector(SmallVec::from_slice(c))
    }

    pub fn unit(rank: usize, i: usize) -> Self {
        let mut v = Self::zeros(rank);
        v.0[i] = 1;
        v
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn checked_add(&self, other: &ExactVector) -> Result<ExactVector> {
        self.zip_with(other, i64::checked_add)
    }

    pub fn checked_sub(&self, other: &ExactVector) -> Result<ExactVector> {
        self.zip_with(other, i64::checked_sub)
    }

    pub fn checked_scale(&self, k: i64) -> Result<ExactVector> {
        let mut out = SmallVec::with_capacity(self.rank());
        for &c in &self.0 {
            out.push(c.checked_mul(k).ok_or(Error::Overflow("vector scaling"))?);
        }
        Ok(ExactVector(out))
    }

    pub fn neg(&self) -> ExactVector {
        ExactVector(self.0.iter().map(|&c| -c).collect())
    }

    /// Largest absolute coordinate.
    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    fn zip_with(&self, other: &ExactVector, f: fn(i64, i64) -> Option<i64>) -> Result<ExactVector> {
        if self.rank() != other.rank() {
            return Err(Error::DimensionMismatch { expected: self.rank(), found: other.rank() });
        }
        let mut out = SmallVec::with_capacity(self.rank());
        for (&a, &b) in self.0.iter().zip(other.0.iter()) {
            out.push(f(a, b).ok_or(Error::Overflow("vector arithmetic"))?);
        }
        Ok(ExactVector(out))
    }
}

impl fmt::Debug for ExactVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0.as_slice())
    }
}

/// A real number as written in a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberSpec {
    Integer(i64),
    Rational { rational: [i64; 2] },
    /// A root of the integer polynomial `poly` (constant term first) near `root`.
    Algebraic { poly: Vec<i64>, root: f64 },
}

/// A resolved real: its float value and, when it is rational, the exact ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealNumber {
    pub value: f64,
    pub rational: Option<Ratio<i64>>,
}

impl RealNumber {
    pub fn integer(n: i64) -> Self {
        RealNumber { value: n as f64, rational: Some(Ratio::from_integer(n)) }
    }

    pub fn float(value: f64) -> Self {
        RealNumber { value, rational: None }
    }
}

impl NumberSpec {
    pub fn resolve(&self) -> Result<RealNumber> {
        match self {
            NumberSpec::Integer(n) => Ok(RealNumber::integer(*n)),
            NumberSpec::Rational { rational: [n, d] } => {
                if *d == 0 {
                    return Err(Error::InvalidNumber("zero denominator".into()));
                }
                let r = Ratio::new(*n, *d);
                Ok(RealNumber { value: *n as f64 / *d as f64, rational: Some(r) })
            }
            NumberSpec::Algebraic { poly, root } => {
                Ok(RealNumber::float(refine_root(poly, *root)?))
            }
        }
    }
}

fn eval_poly(poly: &[i64], x: f64) -> f64 {
    poly.iter().rev().fold(0.0, |acc, &c| acc * x + c as f64)
}

/// Refines the root of `poly` nearest `approx` by bisection until the bracket
/// is below 1e-15 (or cannot shrink further in double precision).
pub fn refine_root(poly: &[i64], approx: f64) -> Result<f64> {
    if poly.len() < 2 || poly.iter().skip(1).all(|&c| c == 0) {
        return Err(Error::InvalidNumber(format!("polynomial {poly:?} has no roots")));
    }
    if !approx.is_finite() {
        return Err(Error::InvalidNumber("approximate root is not finite".into()));
    }
    if eval_poly(poly, approx) == 0.0 {
        return Ok(approx);
    }
    let mut delta = 1e-9 * (1.0 + approx.abs());
    let (mut lo, mut hi) = loop {
        let (a, b) = (approx - delta, approx + delta);
        let (fa, fb) = (eval_poly(poly, a), eval_poly(poly, b));
        if fa == 0.0 {
            return Ok(a);
        }
        if fb == 0.0 {
            return Ok(b);
        }
        if fa.signum() != fb.signum() {
            break (a, b);
        }
        delta *= 2.0;
        if delta > 0.1 * (1.0 + approx.abs()) {
            return Err(Error::InvalidNumber(format!(
                "no sign change of {poly:?} near {approx}"
            )));
        }
    };
    let flo = eval_poly(poly, lo);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = eval_poly(poly, mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A Z-module of rank `rank` embedded in R^d, together with the integer
/// matrices that realize multiplication by each rule's expansion.
#[derive(Clone, Debug)]
pub struct ModuleBasis {
    dim: usize,
    rank: usize,
    embedding: Vec<Point>,
    rational: Option<Vec<[Ratio<i64>; 2]>>,
    mult: Vec<IntMatrix>,
    theta: Vec<f64>,
    self_similar: bool,
}

impl ModuleBasis {
    /// Builds a basis and checks that every multiplication table agrees with
    /// its real expansion factor.
    pub fn new(
        dim: usize,
        embedding: Vec<Vec<RealNumber>>,
        mult: Vec<IntMatrix>,
        theta: Vec<RealNumber>,
    ) -> Result<Self> {
        let basis = Self::build(dim, embedding, mult, theta.iter().map(|t| t.value).collect(), true)?;
        basis.check_multiplication()?;
        Ok(basis)
    }

    /// A basis whose multiplication tables need not be scalar expansions.
    /// Used for deformed and count-coordinate views of a system.
    pub fn general(
        dim: usize,
        embedding: Vec<Vec<RealNumber>>,
        mult: Vec<IntMatrix>,
        theta: Vec<f64>,
    ) -> Result<Self> {
        Self::build(dim, embedding, mult, theta, false)
    }

    /// Z^d with the standard embedding and integer expansions.
    pub fn integer(dim: usize, expansions: &[i64]) -> Result<Self> {
        let embedding = (0..dim)
            .map(|i| (0..dim).map(|a| RealNumber::integer((a == i) as i64)).collect())
            .collect();
        let mult = expansions.iter().map(|&q| IntMatrix::scalar(dim, q)).collect();
        let theta = expansions.iter().map(|&q| RealNumber::integer(q)).collect();
        Self::new(dim, embedding, mult, theta)
    }

    fn build(
        dim: usize,
        embedding: Vec<Vec<RealNumber>>,
        mult: Vec<IntMatrix>,
        theta: Vec<f64>,
        self_similar: bool,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Unsupported(format!("spatial dimension {dim}")));
        }
        let rank = embedding.len();
        if rank == 0 {
            return Err(Error::InvalidSystem("module basis is empty".into()));
        }
        let mut emb = Vec::with_capacity(rank);
        let mut rat = Vec::with_capacity(rank);
        let mut all_rational = true;
        for e in &embedding {
            if e.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: e.len() });
            }
            let mut p = [0.0; 2];
            let mut r = [Ratio::from_integer(0); 2];
            for (a, x) in e.iter().enumerate() {
                p[a] = x.value;
                match x.rational {
                    Some(q) => r[a] = q,
                    None => all_rational = false,
                }
            }
            emb.push(p);
            rat.push(r);
        }
        if mult.len() != theta.len() {
            return Err(Error::DimensionMismatch { expected: mult.len(), found: theta.len() });
        }
        for (l, m) in mult.iter().enumerate() {
            if m.rows() != rank || m.cols() != rank {
                return Err(Error::DimensionMismatch { expected: rank, found: m.rows().max(m.cols()) });
            }
            if !(theta[l] > 1.0) {
                return Err(Error::NonContracting { rule: l + 1, expansion: theta[l] });
            }
        }
        let basis = ModuleBasis {
            dim,
            rank,
            embedding: emb,
            rational: all_rational.then_some(rat),
            mult,
            theta,
            self_similar,
        };
        if !basis.spans() {
            return Err(Error::Degenerate("module embedding does not span R^d".into()));
        }
        Ok(basis)
    }

    fn spans(&self) -> bool {
        let scale = self.embedding.iter().flat_map(|p| p.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return false;
        }
        if self.dim == 1 {
            return true;
        }
        // some 2x2 minor is nonzero
        for i in 0..self.rank {
            for j in i + 1..self.rank {
                let (a, b) = (self.embedding[i], self.embedding[j]);
                if (a[0] * b[1] - a[1] * b[0]).abs() > 1e-12 * scale * scale {
                    return true;
                }
            }
        }
        false
    }

    fn check_multiplication(&self) -> Result<()> {
        for l in 0..self.mult.len() {
            for i in 0..self.rank {
                let e = ExactVector::unit(self.rank, i);
                let lhs = self.embed(&self.apply(l, &e)?)?;
                let rhs = self.embed(&e)?;
                for a in 0..self.dim {
                    let want = self.theta[l] * rhs[a];
                    if (lhs[a] - want).abs() > 1e-12 * (1.0 + want.abs()) {
                        return Err(Error::InvalidSystem(format!(
                            "multiplication table of rule {} disagrees with expansion {} on basis element {}",
                            l + 1,
                            self.theta[l],
                            i
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rules(&self) -> usize {
        self.mult.len()
    }

    pub fn embedding(&self) -> &[Point] {
        &self.embedding
    }

    pub fn mult_table(&self, rule: usize) -> &IntMatrix {
        &self.mult[rule]
    }

    pub fn theta(&self, rule: usize) -> f64 {
        self.theta[rule]
    }

    pub fn thetas(&self) -> &[f64] {
        &self.theta
    }

    /// True when each multiplication table is multiplication by a scalar.
    pub fn is_self_similar(&self) -> bool {
        self.self_similar
    }

    pub fn is_rational(&self) -> bool {
        self.rational.is_some()
    }

    /// Real image of `v`.
    pub fn embed(&self, v: &ExactVector) -> Result<Point> {
        if v.rank() != self.rank {
            return Err(Error::DimensionMismatch { expected: self.rank, found: v.rank() });
        }
        Ok(self.embed_coords(v.coords()))
    }

    pub(crate) fn embed_coords(&self, c: &[i64]) -> Point {
        let mut p = [0.0; 2];
        for (&k, e) in c.iter().zip(&self.embedding) {
            if k != 0 {
                let k = k as f64;
                p[0] += k * e[0];
                p[1] += k * e[1];
            }
        }
        p
    }

    /// Exact rational image of `v`, when the basis is rational.
    pub fn rational_embed(&self, v: &ExactVector) -> Option<[Ratio<i128>; 2]> {
        let rat = self.rational.as_ref()?;
        let mut out = [Ratio::from_integer(0i128); 2];
        for (&k, r) in v.coords().iter().zip(rat) {
            for a in 0..self.dim {
                let q = Ratio::new(*r[a].numer() as i128, *r[a].denom() as i128);
                out[a] += q * k as i128;
            }
        }
        Some(out)
    }

    /// `Mθ_rule · v`.
    pub fn apply(&self, rule: usize, v: &ExactVector) -> Result<ExactVector> {
        let m = self.mult.get(rule).ok_or(Error::IndexOutOfRange { index: rule, limit: self.mult.len() })?;
        Ok(ExactVector(SmallVec::from_vec(m.checked_mul_vec(v.coords())?)))
    }

    /// The same module and multiplication tables with new real images of the
    /// basis elements.
    pub fn with_embedding(&self, embedding: Vec<Point>) -> Result<Self> {
        if embedding.len() != self.rank {
            return Err(Error::DimensionMismatch { expected: self.rank, found: embedding.len() });
        }
        let mut b = self.clone();
        b.embedding = embedding;
        b.rational = None;
        b.self_similar = false;
        if !b.spans() {
            return Err(Error::Degenerate("deformed embedding does not span R^d".into()));
        }
        Ok(b)
    }
}

/// A closed axis-aligned box. In d = 1 the second axis is the degenerate
/// interval [0, 0].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub lo: Point,
    pub hi: Point,
}

impl Aabb {
    pub fn contains_box(&self, other: &Aabb, dim: usize) -> bool {
        (0..dim).all(|a| other.lo[a] >= self.lo[a] && other.hi[a] <= self.hi[a])
    }

    /// True when the interiors do not meet.
    pub fn interior_disjoint(&self, other: &Aabb, dim: usize) -> bool {
        (0..dim).any(|a| other.hi[a] <= self.lo[a] || other.lo[a] >= self.hi[a])
    }

    pub fn intersect(&self, other: &Aabb, dim: usize) -> Option<Aabb> {
        let mut b = Aabb { lo: [0.0; 2], hi: [0.0; 2] };
        for a in 0..dim {
            b.lo[a] = self.lo[a].max(other.lo[a]);
            b.hi[a] = self.hi[a].min(other.hi[a]);
            if b.hi[a] <= b.lo[a] {
                return None;
            }
        }
        Some(b)
    }

    pub fn volume(&self, dim: usize) -> f64 {
        (0..dim).map(|a| self.hi[a] - self.lo[a]).product()
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            lo: [self.lo[0].min(other.lo[0]), self.lo[1].min(other.lo[1])],
            hi: [self.hi[0].max(other.hi[0]), self.hi[1].max(other.hi[1])],
        }
    }
}

/// The window C_R(c) = c + [-R, R]^d.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Point,
    pub half_width: f64,
}

impl Region {
    pub fn new(center: Point, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::OutOfRange(format!("region half-width {half_width} must be positive")));
        }
        Ok(Region { center, half_width })
    }

    pub fn centered(half_width: f64) -> Result<Self> {
        Self::new([0.0; 2], half_width)
    }

    pub fn as_box(&self, dim: usize) -> Aabb {
        let mut b = Aabb { lo: [0.0; 2], hi: [0.0; 2] };
        for a in 0..dim {
            b.lo[a] = self.center[a] - self.half_width;
            b.hi[a] = self.center[a] + self.half_width;
        }
        b
    }

    pub fn volume(&self, dim: usize) -> f64 {
        (2.0 * self.half_width).powi(dim as i32)
    }
}

/// Geometry of a prototile in its own frame, corner at the origin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    /// d = 1: the interval [0, length].
    Interval(ExactVector),
    /// d = 2: a union of unit cells with the given lower-left corners.
    Cells(Vec<[i64; 2]>),
}

impl Shape {
    /// The frame vectors whose images bound the pieces of the shape, as
    /// (lower corner, upper corner) pairs.
    pub fn pieces(&self, rank: usize) -> Vec<(ExactVector, ExactVector)> {
        match self {
            Shape::Interval(len) => vec![(ExactVector::zeros(rank), len.clone())],
            Shape::Cells(cells) => cells
                .iter()
                .map(|c| (ExactVector::from_slice(c), ExactVector::from_slice(&[c[0] + 1, c[1] + 1])))
                .collect(),
        }
    }

    /// Boxes covered by the shape placed with its corner at `corner`, after
    /// mapping frame vectors to level-0 coordinates by `to_level0`.
    pub fn boxes<F>(&self, basis: &ModuleBasis, corner: &ExactVector, mut to_level0: F) -> Result<SmallVec<[Aabb; 1]>>
    where
        F: FnMut(&ExactVector) -> Result<ExactVector>,
    {
        let mut out = SmallVec::new();
        for (lo, hi) in self.pieces(basis.rank()) {
            let lo = basis.embed(&corner.checked_add(&to_level0(&lo)?)?)?;
            let hi = basis.embed(&corner.checked_add(&to_level0(&hi)?)?)?;
            out.push(Aabb { lo, hi });
        }
        Ok(out)
    }

    pub fn cell_count(&self) -> usize {
        match self {
            Shape::Interval(_) => 1,
            Shape::Cells(c) => c.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prototile {
    pub label: String,
    pub shape: Shape,
}

impl Prototile {
    pub fn boxes(&self, basis: &ModuleBasis, corner: &ExactVector) -> Result<SmallVec<[Aabb; 1]>> {
        self.shape.boxes(basis, corner, |v| Ok(v.clone()))
    }

    pub fn volume(&self, basis: &ModuleBasis) -> Result<f64> {
        let z = ExactVector::zeros(basis.rank());
        Ok(self.boxes(basis, &z)?.iter().map(|b| b.volume(basis.dim())).sum())
    }
}

/// A tile: a prototile index and the exact position of its corner.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlacedTile {
    pub label: usize,
    pub translation: ExactVector,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub tiles: Vec<PlacedTile>,
}

impl Patch {
    pub fn new(tiles: Vec<PlacedTile>) -> Self {
        Patch { tiles }
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Checks that no two tiles overlap in their interiors.
    pub fn validate(&self, basis: &ModuleBasis, prototiles: &[Prototile]) -> Result<()> {
        let dim = basis.dim();
        let mut boxes: Vec<(Aabb, usize)> = Vec::new();
        for (n, t) in self.tiles.iter().enumerate() {
            let p = prototiles
                .get(t.label)
                .ok_or(Error::IndexOutOfRange { index: t.label, limit: prototiles.len() })?;
            for b in p.boxes(basis, &t.translation)? {
                boxes.push((b, n));
            }
        }
        boxes.sort_by(|a, b| a.0.lo[0].total_cmp(&b.0.lo[0]));
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[j].0.lo[0] >= boxes[i].0.hi[0] {
                    break;
                }
                if boxes[i].1 != boxes[j].1 && !boxes[i].0.interior_disjoint(&boxes[j].0, dim) {
                    return Err(Error::InvalidSystem(format!(
                        "tiles {} and {} overlap",
                        boxes[i].1, boxes[j].1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Tiles of `p` whose closed geometry lies inside `r`.
pub fn region_clip(p: &Patch, r: &Region, basis: &ModuleBasis, prototiles: &[Prototile]) -> Result<Patch> {
    let window = r.as_box(basis.dim());
    let mut kept = Vec::new();
    for t in &p.tiles {
        let proto = prototiles
            .get(t.label)
            .ok_or(Error::IndexOutOfRange { index: t.label, limit: prototiles.len() })?;
        if proto.boxes(basis, &t.translation)?.iter().all(|b| window.contains_box(b, basis.dim())) {
            kept.push(t.clone());
        }
    }
    Ok(Patch::new(kept))
}

/// Sup norm of a point in R^d.
pub fn sup_norm(p: Point, dim: usize) -> f64 {
    p[..dim].iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fibonacci_basis() -> ModuleBasis {
        let phi = NumberSpec::Algebraic { poly: vec![-1, -1, 1], root: 1.618 }.resolve().unwrap();
        ModuleBasis::new(
            1,
            vec![vec![RealNumber::integer(1)], vec![phi]],
            vec![IntMatrix::from_rows(&[vec![0, 1], vec![1, 1]]).unwrap()],
            vec![phi],
        )
        .unwrap()
    }

    fn unit_line() -> (ModuleBasis, Vec<Prototile>) {
        let b = ModuleBasis::integer(1, &[2]).unwrap();
        let p = vec![Prototile { label: "a".into(), shape: Shape::Interval(ExactVector::from_slice(&[1])) }];
        (b, p)
    }

    #[test]
    fn golden_ratio_refines() {
        let phi = refine_root(&[-1, -1, 1], 1.6).unwrap();
        assert!((phi - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn root_without_sign_change_is_rejected() {
        assert!(refine_root(&[1, 0, 1], 0.0).is_err());
    }

    #[test]
    fn embed_examples() {
        let z = ModuleBasis::integer(1, &[2]).unwrap();
        assert_eq!(z.embed(&ExactVector::from_slice(&[3])).unwrap()[0], 3.0);
        let fib = fibonacci_basis();
        let v = fib.embed(&ExactVector::from_slice(&[1, 1])).unwrap();
        assert!((v[0] - 2.618_033_988_7).abs() < 1e-10);
        assert_eq!(fib.embed(&ExactVector::zeros(2)).unwrap(), [0.0, 0.0]);
        assert!(fib.embed(&ExactVector::zeros(3)).is_err());
    }

    #[test]
    fn inconsistent_table_is_rejected() {
        let r = ModuleBasis::new(
            1,
            vec![vec![RealNumber::integer(1)]],
            vec![IntMatrix::scalar(1, 3)],
            vec![RealNumber::integer(2)],
        );
        assert!(matches!(r, Err(Error::InvalidSystem(_))));
    }

    #[test]
    fn non_expanding_rule_is_rejected() {
        let r = ModuleBasis::integer(1, &[1]);
        assert!(matches!(r, Err(Error::NonContracting { .. })));
    }

    #[test]
    fn clip_line() {
        let (b, p) = unit_line();
        let patch = Patch::new(
            (0..10).map(|i| PlacedTile { label: 0, translation: ExactVector::from_slice(&[i]) }).collect(),
        );
        let r = Region::new([2.0, 0.0], 2.5).unwrap();
        let clipped = region_clip(&patch, &r, &b, &p).unwrap();
        let xs: Vec<i64> = clipped.tiles.iter().map(|t| t.translation.coords()[0]).collect();
        assert_eq!(xs, vec![0, 1, 2, 3]);
        assert!(region_clip(&Patch::default(), &r, &b, &p).unwrap().is_empty());
    }

    #[test]
    fn clip_square_block() {
        let b = ModuleBasis::integer(2, &[2]).unwrap();
        let p = vec![Prototile { label: "a".into(), shape: Shape::Cells(vec![[0, 0]]) }];
        let mut tiles = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                tiles.push(PlacedTile { label: 0, translation: ExactVector::from_slice(&[i, j]) });
            }
        }
        let r = Region::new([2.0, 2.0], 1.5).unwrap();
        let clipped = region_clip(&Patch::new(tiles), &r, &b, &p).unwrap();
        let mut got: Vec<Vec<i64>> = clipped.tiles.iter().map(|t| t.translation.coords().to_vec()).collect();
        got.sort();
        assert_eq!(got, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
    }

    #[test]
    fn overlapping_patch_fails_validation() {
        let (b, p) = unit_line();
        let patch = Patch::new(vec![
            PlacedTile { label: 0, translation: ExactVector::from_slice(&[0]) },
            PlacedTile { label: 0, translation: ExactVector::from_slice(&[0]) },
        ]);
        assert!(patch.validate(&b, &p).is_err());
    }

    #[test]
    fn region_requires_positive_width() {
        assert!(Region::centered(0.0).is_err());
        assert!(Region::centered(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn embed_is_additive(a in proptest::collection::vec(-1000i64..1000, 2),
                             b in proptest::collection::vec(-1000i64..1000, 2)) {
            let fib = fibonacci_basis();
            let (va, vb) = (ExactVector::from_slice(&a), ExactVector::from_slice(&b));
            let sum = fib.embed(&va.checked_add(&vb).unwrap()).unwrap()[0];
            let parts = fib.embed(&va).unwrap()[0] + fib.embed(&vb).unwrap()[0];
            prop_assert!((sum - parts).abs() <= 1e-12 * (1.0 + sum.abs()));
        }

        #[test]
        fn multiplication_is_consistent(a in proptest::collection::vec(-1000i64..1000, 2)) {
            let fib = fibonacci_basis();
            let v = ExactVector::from_slice(&a);
            let lhs = fib.embed(&fib.apply(0, &v).unwrap()).unwrap()[0];
            let rhs = fib.theta(0) * fib.embed(&v).unwrap()[0];
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + v.max_abs() as f64));
        }

        #[test]
        fn clip_is_maximal(lo in -5i64..15, n in 0i64..12, c in -3.0f64..12.0, r in 0.1f64..6.0) {
            let (b, p) = unit_line();
            let patch = Patch::new((lo..lo + n).map(|i| PlacedTile { label: 0, translation: ExactVector::from_slice(&[i]) }).collect());
            let region = Region::new([c, 0.0], r).unwrap();
            let clipped = region_clip(&patch, &region, &b, &p).unwrap();
            for t in &patch.tiles {
                let x = t.translation.coords()[0] as f64;
                let inside = x >= c - r && x + 1.0 <= c + r;
                prop_assert_eq!(inside, clipped.tiles.contains(t));
            }
        }
    }
}
