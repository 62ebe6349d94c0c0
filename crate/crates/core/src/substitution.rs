//! Substitution rules on a common set of prototiles, their validation, and
//! single-step inflation of patches.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ExactVector, ModuleBasis, Patch, PlacedTile, Prototile, Shape};
use crate::intmat::IntMatrix;

/// One child of an inflated parent: its prototile and the position of its
/// corner relative to the corner of the inflated parent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digit {
    pub child: usize,
    pub offset: ExactVector,
}

/// For each parent prototile, the ordered list of its children.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstitutionRule {
    pub name: String,
    pub digits: Vec<Vec<Digit>>,
}

/// `N` rules on `M` prototiles sharing one module basis.
#[derive(Clone, Debug)]
pub struct SubstitutionSystem {
    basis: ModuleBasis,
    prototiles: Vec<Prototile>,
    rules: Vec<SubstitutionRule>,
    matrices: Vec<IntMatrix>,
    volumes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Smallest word length at which every realizable product is positive.
    pub primitivity_window: Option<usize>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl SubstitutionSystem {
    /// Assembles a system after structural checks (indices in range, vector
    /// ranks, shapes matching the dimension). Geometric checks live in
    /// [`SubstitutionSystem::validate`].
    pub fn new(basis: ModuleBasis, prototiles: Vec<Prototile>, rules: Vec<SubstitutionRule>) -> Result<Self> {
        let m = prototiles.len();
        if m == 0 {
            return Err(Error::InvalidSystem("no prototiles".into()));
        }
        if rules.is_empty() {
            return Err(Error::InvalidSystem("no substitution rules".into()));
        }
        if rules.len() != basis.rules() {
            return Err(Error::InvalidSystem(format!(
                "{} rules but {} multiplication tables",
                rules.len(),
                basis.rules()
            )));
        }
        for p in &prototiles {
            match (&p.shape, basis.dim()) {
                (Shape::Interval(len), 1) => {
                    if len.rank() != basis.rank() {
                        return Err(Error::DimensionMismatch { expected: basis.rank(), found: len.rank() });
                    }
                    if !(basis.embed(len)?[0] > 0.0) {
                        return Err(Error::InvalidSystem(format!("prototile {} has nonpositive length", p.label)));
                    }
                }
                (Shape::Cells(cells), 2) => {
                    if cells.is_empty() {
                        return Err(Error::InvalidSystem(format!("prototile {} has no cells", p.label)));
                    }
                    if basis.rank() != 2 {
                        return Err(Error::Unsupported("planar tiles need the module Z^2".into()));
                    }
                    let e = basis.embedding();
                    if e[0][1] != 0.0 || e[1][0] != 0.0 || e[0][0] <= 0.0 || e[1][1] <= 0.0 {
                        return Err(Error::Unsupported("planar cells need an axis-aligned embedding".into()));
                    }
                }
                _ => {
                    return Err(Error::InvalidSystem(format!(
                        "prototile {} shape does not match dimension {}",
                        p.label,
                        basis.dim()
                    )))
                }
            }
        }
        let mut matrices = Vec::with_capacity(rules.len());
        for rule in &rules {
            if rule.digits.len() != m {
                return Err(Error::InvalidSystem(format!(
                    "rule {} lists {} parents for {} prototiles",
                    rule.name,
                    rule.digits.len(),
                    m
                )));
            }
            let mut f = IntMatrix::zeros(m, m);
            for (i, ds) in rule.digits.iter().enumerate() {
                if ds.is_empty() {
                    return Err(Error::InvalidSystem(format!(
                        "rule {} parent {} has no children",
                        rule.name, prototiles[i].label
                    )));
                }
                for d in ds {
                    if d.child >= m {
                        return Err(Error::IndexOutOfRange { index: d.child, limit: m });
                    }
                    if d.offset.rank() != basis.rank() {
                        return Err(Error::DimensionMismatch { expected: basis.rank(), found: d.offset.rank() });
                    }
                    f.set(i, d.child, f.get(i, d.child) + 1);
                }
            }
            matrices.push(f);
        }
        let volumes = prototiles.iter().map(|p| p.volume(&basis)).collect::<Result<Vec<_>>>()?;
        Ok(SubstitutionSystem { basis, prototiles, rules, matrices, volumes })
    }

    pub fn basis(&self) -> &ModuleBasis {
        &self.basis
    }

    pub fn prototiles(&self) -> &[Prototile] {
        &self.prototiles
    }

    pub fn rules(&self) -> &[SubstitutionRule] {
        &self.rules
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    /// Number of prototiles M.
    pub fn types(&self) -> usize {
        self.prototiles.len()
    }

    /// Number of rules N.
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn digits(&self, rule: usize, parent: usize) -> &[Digit] {
        &self.rules[rule].digits[parent]
    }

    /// Tile volumes (lengths when d = 1).
    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn substitution_matrix(&self, rule: usize) -> Result<&IntMatrix> {
        self.matrices.get(rule).ok_or(Error::IndexOutOfRange { index: rule, limit: self.matrices.len() })
    }

    pub fn matrices(&self) -> &[IntMatrix] {
        &self.matrices
    }

    /// The same combinatorics with a different basis, for deformed views.
    pub fn with_parts(
        basis: ModuleBasis,
        prototiles: Vec<Prototile>,
        rules: Vec<SubstitutionRule>,
    ) -> Result<Self> {
        Self::new(basis, prototiles, rules)
    }

    /// Replaces each tile by the children of its prototile under `rule`.
    pub fn inflate(&self, rule: usize, p: &Patch) -> Result<Patch> {
        if rule >= self.rules.len() {
            return Err(Error::IndexOutOfRange { index: rule, limit: self.rules.len() });
        }
        let mut out = Vec::new();
        for t in &p.tiles {
            let base = self.basis.apply(rule, &t.translation)?;
            for d in self.digits(rule, t.label) {
                out.push(PlacedTile { label: d.child, translation: base.checked_add(&d.offset)? });
            }
        }
        Ok(Patch::new(out))
    }

    /// Runs every check and reports each one; never stops at the first
    /// failure. `support` lists the rules the sampler can produce.
    pub fn validate(&self, support: &[usize], n_max: usize) -> ValidationReport {
        let mut checks = Vec::new();
        checks.push(Check {
            name: "uniform_expansion",
            passed: true,
            detail: format!("one expansion per rule: {:?}", self.basis.thetas()),
        });
        checks.push(Check {
            name: "contracting",
            passed: self.basis.thetas().iter().all(|&t| t > 1.0),
            detail: "all expansions exceed 1, so the inverse maps contract".into(),
        });
        let (ok, detail) = self.check_covering();
        checks.push(Check { name: "covering", passed: ok, detail });
        let (ok, detail) = self.check_lengths();
        checks.push(Check { name: "length_consistency", passed: ok, detail });
        let window = self.primitivity_window(support, n_max);
        checks.push(Check {
            name: "primitivity_window",
            passed: window.is_some(),
            detail: match window {
                Some(n) => format!("all realizable products of length {n} are positive"),
                None => format!("no positive window up to length {n_max}"),
            },
        });
        ValidationReport { checks, primitivity_window: window }
    }

    fn check_covering(&self) -> (bool, String) {
        let mut problems = Vec::new();
        for (l, rule) in self.rules.iter().enumerate() {
            for (i, ds) in rule.digits.iter().enumerate() {
                let parent = &self.prototiles[i].label;
                let res = match self.dim() {
                    1 => self.cover_interval(l, i, ds),
                    _ => self.cover_cells(l, i, ds),
                };
                if let Err(msg) = res {
                    problems.push(format!("rule {} parent {}: {}", rule.name, parent, msg));
                }
            }
        }
        if problems.is_empty() {
            (true, "every inflated parent is partitioned by its children".into())
        } else {
            (false, problems.join("; "))
        }
    }

    fn cover_interval(&self, rule: usize, parent: usize, ds: &[Digit]) -> std::result::Result<(), String> {
        let b = &self.basis;
        let Shape::Interval(len) = &self.prototiles[parent].shape else { unreachable!() };
        let target = b.apply(rule, len).map_err(|e| e.to_string())?;
        let mut pieces: Vec<(f64, ExactVector, ExactVector)> = Vec::new();
        let mut total = 0.0;
        for d in ds {
            let Shape::Interval(cl) = &self.prototiles[d.child].shape else { unreachable!() };
            let end = d.offset.checked_add(cl).map_err(|e| e.to_string())?;
            total += self.volumes[d.child];
            pieces.push((b.embed_coords(d.offset.coords())[0], d.offset.clone(), end));
        }
        let want = b.embed_coords(target.coords())[0];
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cursor = ExactVector::zeros(b.rank());
        for (_, start, end) in &pieces {
            if *start != cursor {
                return Err(format!("child lengths sum {total} ≠ {want} or children leave gaps"));
            }
            cursor = end.clone();
        }
        if cursor != target {
            return Err(format!("child lengths sum {total} ≠ {want}"));
        }
        Ok(())
    }

    fn cover_cells(&self, rule: usize, parent: usize, ds: &[Digit]) -> std::result::Result<(), String> {
        let m = self.basis.mult_table(rule);
        let q = m.get(0, 0);
        if m != &IntMatrix::scalar(2, q) {
            return Err("planar rules must expand by an integer scalar".into());
        }
        let Shape::Cells(pc) = &self.prototiles[parent].shape else { unreachable!() };
        let mut want: Vec<[i64; 2]> = Vec::new();
        for c in pc {
            for u in 0..q {
                for v in 0..q {
                    want.push([q * c[0] + u, q * c[1] + v]);
                }
            }
        }
        let mut got: Vec<[i64; 2]> = Vec::new();
        for d in ds {
            let Shape::Cells(cc) = &self.prototiles[d.child].shape else { unreachable!() };
            let o = d.offset.coords();
            for c in cc {
                got.push([o[0] + c[0], o[1] + c[1]]);
            }
        }
        want.sort();
        got.sort();
        if got.windows(2).any(|w| w[0] == w[1]) {
            return Err("children overlap".into());
        }
        if want != got {
            return Err(format!("children cover {} cells, inflated parent has {}", got.len(), want.len()));
        }
        Ok(())
    }

    fn check_lengths(&self) -> (bool, String) {
        let mut problems = Vec::new();
        for (l, rule) in self.rules.iter().enumerate() {
            let f = &self.matrices[l];
            for i in 0..self.types() {
                let ok = match &self.prototiles[i].shape {
                    Shape::Interval(len) => {
                        let mut sum = ExactVector::zeros(self.rank());
                        let mut ok = true;
                        for j in 0..self.types() {
                            let Shape::Interval(lj) = &self.prototiles[j].shape else { unreachable!() };
                            match lj.checked_scale(f.get(i, j)).and_then(|v| sum.checked_add(&v)) {
                                Ok(s) => sum = s,
                                Err(_) => ok = false,
                            }
                        }
                        ok && self.basis.apply(l, len).map(|t| t == sum).unwrap_or(false)
                    }
                    Shape::Cells(c) => {
                        let q = self.basis.mult_table(l).get(0, 0);
                        let cells: i64 = (0..self.types()).map(|j| f.get(i, j) * self.prototiles[j].shape.cell_count() as i64).sum();
                        cells == q * q * c.len() as i64
                    }
                };
                if !ok {
                    problems.push(format!("rule {} parent {}", rule.name, self.prototiles[i].label));
                }
            }
        }
        if problems.is_empty() {
            (true, "F·L equals the expansion of L for every rule".into())
        } else {
            (false, format!("length accounting fails for {}", problems.join(", ")))
        }
    }

    /// Smallest `n ≤ n_max` such that every product of `n` matrices drawn
    /// from `support` is strictly positive.
    pub fn primitivity_window(&self, support: &[usize], n_max: usize) -> Option<usize> {
        if support.is_empty() || support.iter().any(|&s| s >= self.rules.len()) {
            return None;
        }
        let m = self.types();
        // track the zero patterns of all realizable products as boolean matrices
        let pattern = |a: &IntMatrix| -> Vec<bool> { (0..m * m).map(|k| a.get(k / m, k % m) > 0).collect() };
        let mul = |a: &[bool], b: &[bool]| -> Vec<bool> {
            let mut out = vec![false; m * m];
            for i in 0..m {
                for j in 0..m {
                    out[i * m + j] = (0..m).any(|k| a[i * m + k] && b[k * m + j]);
                }
            }
            out
        };
        let letters: Vec<Vec<bool>> = support.iter().map(|&s| pattern(&self.matrices[s])).collect();
        let mut current: Vec<Vec<bool>> = letters.clone();
        current.sort();
        current.dedup();
        for n in 1..=n_max {
            if current.iter().all(|p| p.iter().all(|&x| x)) {
                return Some(n);
            }
            let mut next: Vec<Vec<bool>> = current.iter().flat_map(|p| letters.iter().map(move |l| mul(l, p))).collect();
            next.sort();
            next.dedup();
            current = next;
        }
        None
    }
}
