//! Shape deformations: the same combinatorics laid out with new geometry.
//!
//! A deformation assigns new real positions to the generators of the
//! return-vector group. Tile counts, the return-vector group in module
//! coordinates and the `G` matrices do not change; only the embedding does.
//!
//! * `Lengths` (d = 1) re-lengthens the tiles. The system is rewritten in
//!   count coordinates: a position is the vector of tile counts to its left,
//!   so any choice of lengths is a new embedding of the same module.
//! * `Linear` applies one linear map to the whole plane (or line).
//! * `Raw` prescribes the new images of the group generators directly.

use std::sync::Arc;

use num_rational::Ratio;
use serde::Serialize;

use crate::cocycles::{fourier_matrix, invariant_weights, FourierMatrix};
use crate::error::{Error, Result};
use crate::geometry::{ExactVector, ModuleBasis, Point, Prototile, RealNumber, Shape};
use crate::hierarchy::Hierarchy;
use crate::intmat::IntMatrix;
use crate::returns::{g_matrix, group_basis, system_return_vectors, ReturnGroup};
use crate::substitution::{Digit, SubstitutionRule, SubstitutionSystem};
use crate::symbolic::SymbolSequence;
use crate::twisted::{rationalize, veech_density, DualVector, VeechDensitySeries};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Deformation {
    /// New tile lengths, one per prototile (d = 1).
    Lengths(Vec<f64>),
    /// A linear map `g` applied to every position.
    Linear([[f64; 2]; 2]),
    /// New images of the return-group generators, one column per generator.
    Raw(Vec<Point>),
}

impl Deformation {
    pub fn mode(&self) -> &'static str {
        match self {
            Deformation::Lengths(_) => "lengths",
            Deformation::Linear(_) => "linear",
            Deformation::Raw(_) => "raw",
        }
    }
}

/// The averaged linear data of a deformation and whether it is invertible.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticCycle {
    pub matrix: [[f64; 2]; 2],
    pub det: f64,
    pub invertible: bool,
}

impl AsymptoticCycle {
    fn new(matrix: [[f64; 2]; 2], dim: usize) -> Self {
        let det = if dim == 1 { matrix[0][0] } else { matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0] };
        AsymptoticCycle { matrix, det, invertible: det.abs() > 1e-10 }
    }
}

fn real(x: f64) -> RealNumber {
    match rationalize(x, 1_000_000) {
        Some(q) if q.numer().abs() < i64::MAX as i128 => {
            let q64 = Ratio::new(*q.numer() as i64, *q.denom() as i64);
            if *q64.numer() as f64 / *q64.denom() as f64 == x {
                return RealNumber { value: x, rational: Some(q64) };
            }
            RealNumber::float(x)
        }
        _ => RealNumber::float(x),
    }
}

/// Perron root of a nonnegative matrix, by power iteration on `F + I`.
fn spectral_radius(f: &IntMatrix) -> f64 {
    let n = f.rows();
    let mut v = vec![1.0; n];
    let mut rho = 0.0;
    for _ in 0..2000 {
        let mut w: Vec<f64> = (0..n).map(|i| v[i] + (0..n).map(|j| f.get(i, j) as f64 * v[j]).sum::<f64>()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let next = (0..n).map(|i| (0..n).map(|j| f.get(i, j) as f64 * w[j]).sum::<f64>() / w[i]).fold(0.0, f64::max);
        let done = (next - rho).abs() < 1e-15 * next;
        rho = next;
        v = w;
        if done {
            break;
        }
    }
    rho
}

/// The system in count coordinates: module Z^M, prototile `i` is the
/// interval `e_i`, and a child's offset counts the siblings to its left.
/// Digit order is kept, so paths carry over unchanged.
pub fn count_view(sys: &SubstitutionSystem, lengths: &[f64]) -> Result<SubstitutionSystem> {
    if sys.dim() != 1 {
        return Err(Error::Unsupported("tile lengths are a one-dimensional deformation".into()));
    }
    let m = sys.types();
    if lengths.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: lengths.len() });
    }
    if let Some(i) = lengths.iter().position(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::OutOfRange(format!("length of prototile {} must be positive", sys.prototiles()[i].label)));
    }
    let b = sys.basis();
    let mut rules = Vec::with_capacity(sys.rule_count());
    for rule in sys.rules() {
        let mut digits = Vec::with_capacity(m);
        for ds in &rule.digits {
            let pos = ds.iter().map(|d| b.embed(&d.offset).map(|p| p[0])).collect::<Result<Vec<_>>>()?;
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.sort_by(|&a, &c| pos[a].total_cmp(&pos[c]));
            let mut offsets = vec![ExactVector::zeros(m); ds.len()];
            let mut acc = vec![0i64; m];
            for &e in &order {
                offsets[e] = ExactVector::from_slice(&acc);
                acc[ds[e].child] += 1;
            }
            digits.push(ds.iter().zip(offsets).map(|(d, offset)| Digit { child: d.child, offset }).collect());
        }
        rules.push(SubstitutionRule { name: rule.name.clone(), digits });
    }
    let embedding = lengths.iter().map(|&l| vec![real(l)]).collect();
    let mult: Vec<IntMatrix> = sys.matrices().iter().map(IntMatrix::transpose).collect();
    let theta = sys.matrices().iter().map(spectral_radius).collect();
    let basis = ModuleBasis::general(1, embedding, mult, theta)?;
    let prototiles = sys
        .prototiles()
        .iter()
        .enumerate()
        .map(|(i, p)| Prototile { label: p.label.clone(), shape: Shape::Interval(ExactVector::unit(m, i)) })
        .collect();
    SubstitutionSystem::new(basis, prototiles, rules)
}

fn original_lengths(sys: &SubstitutionSystem) -> Result<Vec<f64>> {
    sys.prototiles()
        .iter()
        .map(|p| match &p.shape {
            Shape::Interval(l) => sys.basis().embed(l).map(|e| e[0]),
            Shape::Cells(_) => Err(Error::Unsupported("planar tiles have no length".into())),
        })
        .collect()
}

fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &x)| r.iter().copied().chain([x]).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Combinatorial fingerprint that a deformation must leave untouched.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Combinatorics {
    pub matrices: Vec<Vec<Vec<i64>>>,
    pub generators: Vec<Vec<i64>>,
    pub rank: usize,
    pub g: Vec<Vec<Vec<i64>>>,
}

/// Return group of a system from every word of length `depth`, and the `G`
/// matrix of each rule on it.
pub fn group_and_g(sys: &Arc<SubstitutionSystem>, support: &[usize], depth: usize) -> Result<(ReturnGroup, Vec<IntMatrix>)> {
    let vs = system_return_vectors(sys, support, depth)?;
    let group = group_basis(sys.basis(), vs.all())?;
    let g = (0..sys.rule_count()).map(|l| g_matrix(sys.basis(), l, &group, &group)).collect::<Result<Vec<_>>>()?;
    Ok((group, g))
}

pub fn combinatorics(sys: &Arc<SubstitutionSystem>, support: &[usize], depth: usize) -> Result<Combinatorics> {
    let (group, g) = group_and_g(sys, support, depth)?;
    Ok(Combinatorics {
        matrices: sys.matrices().iter().map(IntMatrix::to_rows).collect(),
        generators: group.generators.iter().map(|v| v.coords().to_vec()).collect(),
        rank: group.rank,
        g: g.iter().map(IntMatrix::to_rows).collect(),
    })
}

/// A deformed system next to its undeformed reference. For lengths mode
/// the reference is the count view with the original lengths.
#[derive(Clone, Debug)]
pub struct DeformedSystem {
    pub deformation: Deformation,
    pub reference: Arc<SubstitutionSystem>,
    pub deformed: Arc<SubstitutionSystem>,
    /// Return group of the reference, possibly extended by offsets.
    pub group: ReturnGroup,
    pub g: Vec<IntMatrix>,
    /// New images of the group generators.
    pub v_deformed: Vec<Point>,
    pub cycle: AsymptoticCycle,
    /// Set when some digit offset was outside the return group and the
    /// group was regenerated with the offsets included.
    pub extended: bool,
    pub outside: Vec<Vec<i64>>,
}

/// The averaged linear part of a deformation, with tile frequencies taken
/// from the level-0 vertex weights of `x`.
pub fn asymptotic_cycle(sys: &SubstitutionSystem, x: &SymbolSequence, def: &Deformation, depth: usize) -> Result<AsymptoticCycle> {
    let dim = sys.dim();
    match def {
        Deformation::Lengths(l) => {
            if dim != 1 {
                return Err(Error::Unsupported("tile lengths are a one-dimensional deformation".into()));
            }
            if l.len() != sys.types() {
                return Err(Error::DimensionMismatch { expected: sys.types(), found: l.len() });
            }
            let freq = invariant_weights(sys, x, 0, depth, 1e-9)?.weights;
            let c: f64 = freq.iter().zip(l).map(|(f, l)| f * l).sum();
            Ok(AsymptoticCycle::new([[c, 0.0], [0.0, 0.0]], 1))
        }
        Deformation::Linear(g) => {
            if dim == 1 {
                let freq = invariant_weights(sys, x, 0, depth, 1e-9)?.weights;
                let mean: f64 = freq.iter().zip(original_lengths(sys)?).map(|(f, l)| f * l).sum();
                return Ok(AsymptoticCycle::new([[g[0][0] * mean, 0.0], [0.0, 0.0]], 1));
            }
            Ok(AsymptoticCycle::new(*g, 2))
        }
        Deformation::Raw(cols) => {
            let emb = raw_embedding(sys, cols, &reference_group(sys, x)?)?;
            if dim == 1 {
                let freq = invariant_weights(sys, x, 0, depth, 1e-9)?.weights;
                let b = sys.basis().with_embedding(emb)?;
                let mut c = 0.0;
                for (p, f) in sys.prototiles().iter().zip(&freq) {
                    if let Shape::Interval(l) = &p.shape {
                        c += f * b.embed(l)?[0];
                    }
                }
                return Ok(AsymptoticCycle::new([[c, 0.0], [0.0, 0.0]], 1));
            }
            // the linear map carrying the old generator images to the new ones
            let group = reference_group(sys, x)?;
            let v = &group.embedding;
            let mut vvt = [[0.0; 2]; 2];
            let mut dvt = [[0.0; 2]; 2];
            for (old, new) in v.iter().zip(cols) {
                for a in 0..2 {
                    for b in 0..2 {
                        vvt[a][b] += old[a] * old[b];
                        dvt[a][b] += new[a] * old[b];
                    }
                }
            }
            let det = vvt[0][0] * vvt[1][1] - vvt[0][1] * vvt[1][0];
            if det.abs() < 1e-14 {
                return Err(Error::Degenerate("generator images do not span the plane".into()));
            }
            let inv = [[vvt[1][1] / det, -vvt[0][1] / det], [-vvt[1][0] / det, vvt[0][0] / det]];
            let mut c = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    c[a][b] = dvt[a][0] * inv[0][b] + dvt[a][1] * inv[1][b];
                }
            }
            Ok(AsymptoticCycle::new(c, 2))
        }
    }
}

fn support_of(x: &SymbolSequence, rules: usize) -> Vec<usize> {
    let mut seen = vec![false; rules];
    for &s in x.plus.iter().chain(&x.minus) {
        seen[s] = true;
    }
    (0..rules).filter(|&l| seen[l]).collect()
}

const GROUP_DEPTH: usize = 3;

fn reference_group(sys: &SubstitutionSystem, x: &SymbolSequence) -> Result<ReturnGroup> {
    let arc = Arc::new(sys.clone());
    Ok(group_and_g(&arc, &support_of(x, sys.rule_count()), GROUP_DEPTH)?.0)
}

/// New basis embedding `E'(e_b) = Σ_c (V^{-1})_{cb} v_c` from generator images.
fn raw_embedding(sys: &SubstitutionSystem, cols: &[Point], group: &ReturnGroup) -> Result<Vec<Point>> {
    let r = sys.rank();
    if group.rank != r || cols.len() != r {
        return Err(Error::DimensionMismatch { expected: group.rank.max(r), found: cols.len() });
    }
    // V has the generators as columns; column b of V^{-1} solves V z = e_b
    let v: Vec<Vec<f64>> = (0..r).map(|i| group.generators.iter().map(|g| g.coords()[i] as f64).collect()).collect();
    let mut emb = vec![[0.0; 2]; r];
    for (b, e) in emb.iter_mut().enumerate() {
        let rhs: Vec<f64> = (0..r).map(|i| if i == b { 1.0 } else { 0.0 }).collect();
        let z = solve(&v, &rhs).ok_or_else(|| Error::Degenerate("generator matrix is singular".into()))?;
        for (c, col) in cols.iter().enumerate() {
            e[0] += z[c] * col[0];
            e[1] += z[c] * col[1];
        }
    }
    Ok(emb)
}

/// Checks the invertibility of the asymptotic cycle, builds the deformed
/// system and the reference, and records the images of the group
/// generators.
pub fn apply_deformation(
    sys: &Arc<SubstitutionSystem>,
    x: &SymbolSequence,
    def: &Deformation,
    weight_depth: usize,
) -> Result<DeformedSystem> {
    let cycle = asymptotic_cycle(sys, x, def, weight_depth)?;
    if !cycle.invertible {
        return Err(Error::Degenerate(format!("asymptotic cycle is singular (det {:e})", cycle.det)));
    }
    let support = support_of(x, sys.rule_count());
    let (reference, deformed) = match def {
        Deformation::Lengths(l) => {
            let reference = count_view(sys, &original_lengths(sys)?)?;
            let deformed = count_view(sys, l)?;
            (reference, deformed)
        }
        Deformation::Linear(g) => {
            let dim = sys.dim();
            let emb = sys
                .basis()
                .embedding()
                .iter()
                .map(|e| {
                    let mut p = [0.0; 2];
                    for a in 0..dim {
                        p[a] = (0..dim).map(|c| g[a][c] * e[c]).sum();
                    }
                    p
                })
                .collect();
            let deformed = with_basis(sys, sys.basis().with_embedding(emb)?)?;
            (sys.as_ref().clone(), deformed)
        }
        Deformation::Raw(cols) => {
            let group = reference_group(sys, x)?;
            let emb = raw_embedding(sys, cols, &group)?;
            let deformed = with_basis(sys, sys.basis().with_embedding(emb)?)?;
            (sys.as_ref().clone(), deformed)
        }
    };
    let reference = Arc::new(reference);
    let deformed = Arc::new(deformed);
    let (mut group, mut g) = group_and_g(&reference, &support, GROUP_DEPTH)?;
    let mut outside = Vec::new();
    for rule in reference.rules() {
        for ds in &rule.digits {
            for d in ds {
                if !group.contains(&d.offset) && !outside.contains(&d.offset.coords().to_vec()) {
                    outside.push(d.offset.coords().to_vec());
                }
            }
        }
    }
    let extended = !outside.is_empty();
    if extended {
        let vs = system_return_vectors(&reference, &support, GROUP_DEPTH)?;
        let extra: Vec<ExactVector> = outside.iter().map(|c| ExactVector::from_slice(c)).collect();
        group = group_basis(reference.basis(), vs.all().chain(extra.iter()))?;
        g = (0..reference.rule_count())
            .map(|l| g_matrix(reference.basis(), l, &group, &group))
            .collect::<Result<Vec<_>>>()?;
    }
    let v_deformed = match def {
        Deformation::Raw(cols) if !extended => cols.clone(),
        Deformation::Raw(_) => {
            return Err(Error::Unsupported("raw generator images target the unextended return group".into()))
        }
        _ => group.generators.iter().map(|v| deformed.basis().embed(v)).collect::<Result<Vec<_>>>()?,
    };
    Ok(DeformedSystem { deformation: def.clone(), reference, deformed, group, g, v_deformed, cycle, extended, outside })
}

fn with_basis(sys: &SubstitutionSystem, basis: ModuleBasis) -> Result<SubstitutionSystem> {
    SubstitutionSystem::new(basis, sys.prototiles().to_vec(), sys.rules().to_vec())
}

impl DeformedSystem {
    /// `V^𝔡 α(τ)`: the deformed position of a module vector through its
    /// group address.
    pub fn deformed_position(&self, tau: &ExactVector) -> Result<Point> {
        let alpha = self.group.address(tau)?;
        let mut p = [0.0; 2];
        for (a, v) in alpha.iter().zip(&self.v_deformed) {
            p[0] += *a as f64 * v[0];
            p[1] += *a as f64 * v[1];
        }
        Ok(p)
    }

    pub fn hierarchy(&self, x: SymbolSequence, levels: usize) -> Result<Hierarchy> {
        Hierarchy::new(self.deformed.clone(), x, levels)
    }

    pub fn reference_hierarchy(&self, x: SymbolSequence, levels: usize) -> Result<Hierarchy> {
        Hierarchy::new(self.reference.clone(), x, levels)
    }

    /// The Veech statistic along two routes: with the return group
    /// recomputed on the deformed system, and with the reference group and
    /// `G` matrices paired against the deformed generator images.
    pub fn veech_routes(
        &self,
        x: &SymbolSequence,
        lambda: Point,
        w: &[usize],
        split: usize,
        rho: f64,
        n: usize,
    ) -> Result<(VeechDensitySeries, VeechDensitySeries)> {
        let support = support_of(x, self.deformed.rule_count());
        let (dgroup, dg) = group_and_g(&self.deformed, &support, GROUP_DEPTH)?;
        let dim = self.deformed.dim();
        let direct = veech_density(&DualVector::new(self.deformed.basis(), &dgroup, lambda, false), &dg, x, w, split, rho, n)?;
        let u0 = DualVector::from_embedding(&self.v_deformed, lambda, dim);
        let transported = veech_density(&u0, &self.g, x, w, split, rho, n)?;
        Ok((direct, transported))
    }
}

/// The level-`k` Fourier matrix of the deformed system.
pub fn deformed_fourier(def: &DeformedSystem, x: SymbolSequence, k: usize, lambda: Point) -> Result<FourierMatrix> {
    fourier_matrix(&def.hierarchy(x, k)?, k, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden;
    use crate::symbolic::MeasureSampler;
    use num_complex::Complex64;

    fn seq(seed: u64) -> SymbolSequence {
        MeasureSampler::bernoulli(vec![0.5, 0.5], seed).sample_sequence(80).unwrap()
    }

    #[test]
    fn count_view_positions() {
        let sys = golden::tmpd();
        let cv = count_view(&sys, &[1.0, 2f64.sqrt()]).unwrap();
        // period doubling: b -> a a, the second a sits after one a
        assert_eq!(cv.digits(1, 1)[1].offset.coords(), &[1, 0]);
        let p = cv.basis().embed(&cv.digits(1, 0)[1].offset).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(cv.validate(&[0, 1], 6).passed());
    }

    #[test]
    fn identity_lengths_change_nothing() {
        let sys = Arc::new(golden::tmpd());
        let x = seq(1);
        let d = apply_deformation(&sys, &x, &Deformation::Lengths(vec![1.0, 1.0]), 40).unwrap();
        assert!((d.cycle.det - 1.0).abs() < 1e-9);
        for lam in [0.0, 0.3, 1.0 / 3.0] {
            let a = fourier_matrix(&d.hierarchy(x.clone(), 6).unwrap(), 6, [lam, 0.0]).unwrap();
            let b = fourier_matrix(&Hierarchy::new(sys.clone(), x.clone(), 6).unwrap(), 6, [lam, 0.0]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a.matrix.get(i, j) - b.matrix.get(i, j)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn singular_cycle_rejected() {
        let sys = Arc::new(golden::tmpd());
        // Thue-Morse alone: both letters have frequency one half
        let x = MeasureSampler::word(vec![0], 0).sample_sequence(80).unwrap();
        let c = asymptotic_cycle(&sys, &x, &Deformation::Lengths(vec![1.0, -1.0]), 40).unwrap();
        assert!(c.det.abs() < 1e-9 && !c.invertible);
        let e = apply_deformation(&sys, &x, &Deformation::Lengths(vec![1.0, -1.0]), 40).unwrap_err();
        assert!(matches!(e, Error::Degenerate(_)));
    }

    #[test]
    fn linear_cycle_is_the_map() {
        let sys = Arc::new(golden::block2d());
        let x = seq(3);
        let g = [[2.0, 0.0], [0.0, 0.5]];
        let d = apply_deformation(&sys, &x, &Deformation::Linear(g), 40).unwrap();
        assert_eq!(d.cycle.matrix, g);
        assert!((d.cycle.det - 1.0).abs() < 1e-15 && d.cycle.invertible);
        let shear = [[1.0, 1.0], [0.0, 1.0]];
        assert!(matches!(apply_deformation(&sys, &x, &Deformation::Linear(shear), 40), Err(Error::Unsupported(_))));
    }

    #[test]
    fn fibonacci_relengthening() {
        let sys = Arc::new(golden::fibonacci());
        let x = MeasureSampler::word(vec![0], 0).sample_sequence(80).unwrap();
        let d = apply_deformation(&sys, &x, &Deformation::Lengths(vec![1.0, 1.0]), 60).unwrap();
        // a single a-tile is the count vector e_a; its new length is 1
        let ea = ExactVector::unit(2, 0);
        assert!(d.group.contains(&ea));
        assert_eq!(d.deformed_position(&ea).unwrap()[0], 1.0);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((d.reference.basis().embed(&ea).unwrap()[0] - phi).abs() < 1e-12);
    }

    #[test]
    fn addresses_reproduce_the_embedding() {
        let sys = Arc::new(golden::tmpd());
        let x = seq(4);
        let s = 2f64.sqrt();
        let d = apply_deformation(&sys, &x, &Deformation::Lengths(vec![1.0, s]), 40).unwrap();
        assert!(!d.extended);
        for rule in d.deformed.rules() {
            for ds in &rule.digits {
                for dg in ds {
                    let a = d.deformed_position(&dg.offset).unwrap()[0];
                    let b = d.deformed.basis().embed(&dg.offset).unwrap()[0];
                    assert!((a - b).abs() < 1e-12);
                    let c = dg.offset.coords();
                    assert!((b - (c[0] as f64 + c[1] as f64 * s)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn combinatorics_survive() {
        let sys = Arc::new(golden::tmpd());
        let x = seq(5);
        let d = apply_deformation(&sys, &x, &Deformation::Lengths(vec![1.0, 3f64.sqrt()]), 40).unwrap();
        let a = combinatorics(&d.reference, &[0, 1], 3).unwrap();
        let b = combinatorics(&d.deformed, &[0, 1], 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_parameter_is_the_substitution_matrix() {
        let sys = Arc::new(golden::tmpd());
        let x = seq(6);
        let d = apply_deformation(&sys, &x, &Deformation::Lengths(vec![1.0, 0.7]), 40).unwrap();
        let f = deformed_fourier(&d, x.clone(), 1, [0.0, 0.0]).unwrap();
        let m = sys.substitution_matrix(x.plus[0]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(f.matrix.get(i, j), Complex64::new(m.get(i, j) as f64, 0.0));
            }
        }
    }

    #[test]
    fn veech_routes_agree() {
        let sys = Arc::new(golden::tmpd());
        let x = MeasureSampler::bernoulli(vec![0.5, 0.5], 7).sample_sequence(400).unwrap();
        let d = apply_deformation(&sys, &x, &Deformation::Lengths(vec![1.0, 2f64.sqrt()]), 40).unwrap();
        let (a, b) = d.veech_routes(&x, [0.37, 0.0], &[0, 1], 1, 0.1, 300).unwrap();
        assert_eq!(a, b);
    }
}
