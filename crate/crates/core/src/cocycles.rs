//! The trace cocycle, the Fourier (spectral) cocycle, invariant vertex
//! weights and Lyapunov exponents.
//!
//! Phases follow one convention throughout: a translation `τ` contributes
//! `e^{-2πi⟨λ,τ⟩}`.

use std::f64::consts::TAU;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::Zero;
use serde::Serialize;

use crate::cyclotomic::{common_denominator, exponent, PhaseMatrix};
use crate::error::{Error, Result};
use crate::geometry::{ExactVector, ModuleBasis, Point};
use crate::hierarchy::{Hierarchy, Node};
use crate::intmat::IntMatrix;
use crate::substitution::SubstitutionSystem;
use crate::symbolic::{return_times, MeasureSampler, SymbolSequence};

/// Evaluates `⟨λ, v⟩ mod 1` for exact module vectors without losing the
/// fractional part to large coordinates.
#[derive(Clone, Debug)]
pub struct Phaser {
    lambda: Point,
    dim: usize,
    w: Vec<f64>,
}

fn split_frac(c: f64, w: f64) -> f64 {
    let hi = c * w;
    let lo = c.mul_add(w, -hi);
    (hi - hi.round()) + lo
}

impl Phaser {
    pub fn new(basis: &ModuleBasis, lambda: Point) -> Self {
        let dim = basis.dim();
        let w = basis
            .embedding()
            .iter()
            .map(|e| (0..dim).map(|a| lambda[a] * e[a]).sum())
            .collect();
        Phaser { lambda, dim, w }
    }

    pub fn lambda(&self) -> Point {
        self.lambda
    }

    /// `⟨λ, embed(v)⟩` reduced to `[-½, ½]`.
    pub fn frac(&self, v: &ExactVector) -> f64 {
        let s: f64 = v.coords().iter().zip(&self.w).map(|(&c, &w)| split_frac(c as f64, w)).sum();
        s - s.round()
    }

    pub fn frac_point(&self, p: Point) -> f64 {
        let s: f64 = (0..self.dim).map(|a| split_frac(p[a], self.lambda[a])).sum();
        s - s.round()
    }

    /// `e^{-2πi⟨λ, embed(v)⟩}`.
    pub fn phase(&self, v: &ExactVector) -> Complex64 {
        Complex64::from_polar(1.0, -TAU * self.frac(v))
    }

    pub fn phase_of(&self, f: f64) -> Complex64 {
        Complex64::from_polar(1.0, -TAU * f)
    }
}

/// Distance from `t` to the nearest integer.
pub fn dist_z(t: f64) -> f64 {
    (t - t.round()).abs()
}

/// Small dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![Complex64::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_int(m: &IntMatrix) -> Self {
        ComplexMatrix {
            rows: m.rows(),
            cols: m.cols(),
            data: (0..m.rows())
                .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
                .map(|(i, j)| Complex64::new(m.get(i, j) as f64, 0.0))
                .collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn add(&mut self, i: usize, j: usize, z: Complex64) {
        self.data[i * self.cols + j] += z;
    }

    pub fn mul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, other.rows, "matrix shapes");
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == Complex64::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(l, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum()).collect()
    }

    /// Largest absolute row sum.
    pub fn sup_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.rows).map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec()).collect()
    }
}

/// `Θ^{(m,n)} = A_n ⋯ A_{m+1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceProduct {
    pub m: usize,
    pub n: usize,
    /// Present while the product fits in 64 bits.
    pub matrix: Option<IntMatrix>,
    #[serde(skip)]
    pub big: Vec<Vec<BigInt>>,
}

impl TraceProduct {
    pub fn entry(&self, i: usize, j: usize) -> &BigInt {
        &self.big[i][j]
    }
}

pub fn trace_product(sys: &SubstitutionSystem, x: &SymbolSequence, m: usize, n: usize) -> Result<TraceProduct> {
    if m > n {
        return Err(Error::OutOfRange(format!("trace product needs m ≤ n, got {m} > {n}")));
    }
    if n > x.plus.len() {
        return Err(Error::Horizon(format!("level {n} beyond {} symbols", x.plus.len())));
    }
    let size = sys.types();
    let mut small = Some(IntMatrix::identity(size));
    let mut big: Vec<Vec<BigInt>> =
        (0..size).map(|i| (0..size).map(|j| BigInt::from((i == j) as i64)).collect()).collect();
    for k in m + 1..=n {
        let a = sys.substitution_matrix(x.plus[k - 1])?;
        small = small.and_then(|p| a.checked_mul(&p).ok());
        big = (0..size)
            .map(|i| {
                (0..size)
                    .map(|j| (0..size).map(|l| BigInt::from(a.get(i, l)) * &big[l][j]).sum())
                    .collect()
            })
            .collect();
    }
    Ok(TraceProduct { m, n, matrix: small, big })
}

/// Offsets between control points at level `k` as phases: entry `(i, j)`
/// sums `e^{-2πi⟨λ,u_e⟩}` over the children `e` of type `j` in parent `i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourierMatrix {
    pub level: usize,
    pub lambda: Point,
    pub matrix: ComplexMatrix,
}

fn fourier_factor(hier: &Hierarchy, k: usize, phaser: &Phaser) -> Result<ComplexMatrix> {
    let sys = hier.system();
    let m = sys.types();
    let mut out = ComplexMatrix::zeros(m, m);
    let corners = hier.anchors_at_corners();
    let l = hier.rule_at(k);
    for i in 0..m {
        let pa = hier.anchor(k, i);
        for (e, d) in sys.digits(l, i).iter().enumerate() {
            let mut f = phaser.frac(hier.offset(k, i, e));
            if !corners {
                let ca = hier.anchor(k - 1, d.child);
                f += phaser.frac_point([ca[0] - pa[0], ca[1] - pa[1]]);
            }
            out.add(i, d.child, phaser.phase_of(f));
        }
    }
    Ok(out)
}

/// The level-`k` Fourier matrix of a hierarchy, with `λ` in level-0 units.
pub fn fourier_matrix(hier: &Hierarchy, k: usize, lambda: Point) -> Result<FourierMatrix> {
    if k == 0 || k > hier.levels() {
        return Err(Error::OutOfRange(format!("level {k} outside 1..={}", hier.levels())));
    }
    let phaser = Phaser::new(hier.system().basis(), lambda);
    Ok(FourierMatrix { level: k, lambda, matrix: fourier_factor(hier, k, &phaser)? })
}

/// The Fourier matrix of one rule with corner control points, offsets in
/// the units of the children.
pub fn rule_fourier_matrix(sys: &SubstitutionSystem, rule: usize, lambda: Point) -> Result<FourierMatrix> {
    if rule >= sys.rule_count() {
        return Err(Error::IndexOutOfRange { index: rule, limit: sys.rule_count() });
    }
    let phaser = Phaser::new(sys.basis(), lambda);
    let m = sys.types();
    let mut out = ComplexMatrix::zeros(m, m);
    for i in 0..m {
        for d in sys.digits(rule, i) {
            out.add(i, d.child, phaser.phase(&d.offset));
        }
    }
    Ok(FourierMatrix { level: 1, lambda, matrix: out })
}

/// `M^{(k)}(λ) = M^k(λ) ⋯ M^{from+1}(λ)`, stored as `exp(log_scale)·matrix`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralProduct {
    pub from: usize,
    pub to: usize,
    pub lambda: Point,
    pub matrix: ComplexMatrix,
    pub log_scale: f64,
}

impl SpectralProduct {
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.matrix.get(i, j) * self.log_scale.exp()
    }

    pub fn to_rows(&self) -> Vec<Vec<Complex64>> {
        let s = self.log_scale.exp();
        self.matrix.to_rows().into_iter().map(|r| r.into_iter().map(|z| z * s).collect()).collect()
    }
}

const RENORMALIZE_EVERY: usize = 16;

/// `M^{(from,to)}(λ)`; `from = 0` gives `M^{(to)}(λ)`.
pub fn spectral_product(hier: &Hierarchy, from: usize, to: usize, lambda: Point) -> Result<SpectralProduct> {
    if from > to || to > hier.levels() {
        return Err(Error::OutOfRange(format!("levels {from}..{to} outside 0..={}", hier.levels())));
    }
    let phaser = Phaser::new(hier.system().basis(), lambda);
    let mut p = ComplexMatrix::identity(hier.system().types());
    let mut log_scale = 0.0;
    for k in from + 1..=to {
        p = fourier_factor(hier, k, &phaser)?.mul(&p);
        if (k - from) % RENORMALIZE_EVERY == 0 {
            let s = p.sup_norm();
            if s == 0.0 {
                break;
            }
            p.scale(1.0 / s);
            log_scale += s.ln();
        }
    }
    Ok(SpectralProduct { from, to, lambda, matrix: p, log_scale })
}

/// All partial products `M^{(from,k)}(λ)` for `k = from..=to`, without
/// rescaling. Entries are bounded by tile counts.
pub fn spectral_chain(hier: &Hierarchy, from: usize, to: usize, phaser: &Phaser) -> Result<Vec<ComplexMatrix>> {
    if from > to || to > hier.levels() {
        return Err(Error::OutOfRange(format!("levels {from}..{to} outside 0..={}", hier.levels())));
    }
    let mut out = vec![ComplexMatrix::identity(hier.system().types())];
    for k in from + 1..=to {
        let next = fourier_factor(hier, k, phaser)?.mul(out.last().expect("nonempty"));
        out.push(next);
    }
    Ok(out)
}

/// `M^{(k)}(λ)` with exact phases, for rational `λ` on a rational module
/// with corner control points. `λ = 0` works on every module.
pub fn spectral_product_exact(hier: &Hierarchy, k: usize, lambda: [Ratio<i64>; 2]) -> Result<PhaseMatrix> {
    if k > hier.levels() {
        return Err(Error::OutOfRange(format!("level {k} beyond {}", hier.levels())));
    }
    let sys = hier.system();
    let m = sys.types();
    let dim = sys.dim();
    let zero = lambda[..dim].iter().all(|l| l.is_zero());
    if !zero && !hier.anchors_at_corners() {
        return Err(Error::Unsupported("exact phases need corner control points".into()));
    }
    let lam: Vec<Ratio<i128>> = lambda[..dim].iter().map(|l| Ratio::new(*l.numer() as i128, *l.denom() as i128)).collect();
    let mut fracs: Vec<Vec<Vec<Ratio<i128>>>> = Vec::with_capacity(k);
    for lev in 1..=k {
        let l = hier.rule_at(lev);
        let mut per = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = Vec::new();
            for e in 0..sys.digits(l, i).len() {
                if zero {
                    row.push(Ratio::from_integer(0));
                    continue;
                }
                let p = sys.basis().rational_embed(hier.offset(lev, i, e)).ok_or_else(|| {
                    Error::Unsupported("exact phases need a rational embedding".into())
                })?;
                let mut s = Ratio::from_integer(0i128);
                for a in 0..dim {
                    s += lam[a] * p[a];
                }
                row.push(s);
            }
            per.push(row);
        }
        fracs.push(per);
    }
    let all: Vec<Ratio<i128>> = fracs.iter().flatten().flatten().cloned().collect();
    let q = common_denominator(&all, 1 << 12)
        .ok_or_else(|| Error::Unsupported("phase denominators exceed 4096".into()))?;
    let mut p = PhaseMatrix::identity(q, m);
    for (lev0, per) in fracs.iter().enumerate() {
        let l = hier.rule_at(lev0 + 1);
        let mut f = PhaseMatrix::zeros(q, m, m);
        for i in 0..m {
            for (e, d) in sys.digits(l, i).iter().enumerate() {
                f.add_term(i, d.child, exponent(per[i][e], q), 1);
            }
        }
        p = f.checked_mul(&p)?;
    }
    Ok(p)
}

/// Level-`k` vertex weights `μ⁺(v)`, normalized so that the tiles they
/// cover carry total mass one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexWeights {
    pub level: usize,
    pub weights: Vec<f64>,
    pub residual: f64,
    pub depth: usize,
}

impl VertexWeights {
    /// Weights scaled by supertile volume, summing to one.
    pub fn volume_weights(&self, volumes: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = self.weights.iter().zip(volumes).map(|(a, b)| a * b).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|a| a / s).collect()
    }
}

fn transport_down(sys: &SubstitutionSystem, x: &SymbolSequence, k: usize, depth: usize) -> Result<Vec<f64>> {
    let m = sys.types();
    let mut v = vec![1.0 / m as f64; m];
    for lev in (k + 1..=k + depth).rev() {
        let a = sys.substitution_matrix(x.plus[lev - 1])?;
        let mut next = vec![0.0; m];
        for (i, vi) in v.iter().enumerate() {
            for (j, nj) in next.iter_mut().enumerate() {
                *nj += vi * a.get(i, j) as f64;
            }
        }
        let s: f64 = next.iter().sum();
        v = next.into_iter().map(|t| t / s).collect();
    }
    Ok(v)
}

/// Vertex weights at level `k` from the frequencies of level-`k` supertiles
/// inside level-`(k + depth)` supertiles. The residual compares depth with
/// half the depth.
pub fn invariant_weights(
    sys: &SubstitutionSystem,
    x: &SymbolSequence,
    k: usize,
    depth: usize,
    tol: f64,
) -> Result<VertexWeights> {
    if k + depth > x.plus.len() {
        return Err(Error::Horizon(format!("weights at level {k} need {} symbols", k + depth)));
    }
    let full = transport_down(sys, x, k, depth)?;
    let half = transport_down(sys, x, k, depth / 2)?;
    let residual = full.iter().zip(&half).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if residual > tol {
        return Err(Error::NotConverged(format!("vertex weights residual {residual:e} at depth {depth}")));
    }
    // tiles inside each level-k supertile
    let m = sys.types();
    let mut tiles = vec![1.0; m];
    for lev in 1..=k {
        let a = sys.substitution_matrix(x.plus[lev - 1])?;
        tiles = (0..m).map(|i| (0..m).map(|j| a.get(i, j) as f64 * tiles[j]).sum()).collect();
    }
    let mass: f64 = full.iter().zip(&tiles).map(|(a, b)| a * b).sum();
    Ok(VertexWeights { level: k, weights: full.into_iter().map(|a| a / mass).collect(), residual, depth })
}

/// Exponent estimates with batch-mean standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub name: String,
    pub method: String,
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Exponents that hit the floor because the product lost rank.
    pub minus_infinity: Vec<bool>,
    pub n: usize,
    pub log_scale: f64,
}

/// Batches used for standard errors.
pub const BATCHES: usize = 20;

fn batch_stats(marks: &[f64], lengths: &[usize]) -> (f64, f64) {
    let rates: Vec<f64> = marks.windows(2).zip(lengths).map(|(w, &l)| (w[1] - w[0]) / l as f64).collect();
    let b = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / b;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (b - 1.0).max(1.0);
    (mean, (var / b).sqrt())
}

fn batch_bounds(n: usize) -> Vec<usize> {
    (0..=BATCHES).map(|b| b * n / BATCHES).collect()
}

/// Top exponent `lim (1/n) log‖A_n ⋯ A_1‖` of a stream of factors.
pub fn lyapunov_top(name: &str, factors: &[ComplexMatrix]) -> Result<LyapunovEstimate> {
    let n = factors.len();
    if n < 100 {
        return Err(Error::OutOfRange(format!("{n} steps; at least 100 are needed")));
    }
    let size = factors[0].rows;
    let bounds = batch_bounds(n);
    let mut marks = vec![0.0];
    let mut p = ComplexMatrix::identity(size);
    let mut log_scale = 0.0;
    let mut next_bound = 1;
    for (k, a) in factors.iter().enumerate() {
        if a.rows != size || a.cols != size {
            return Err(Error::DimensionMismatch { expected: size, found: a.rows });
        }
        p = a.mul(&p);
        let done = k + 1;
        if done % RENORMALIZE_EVERY == 0 || done == bounds[next_bound] {
            let s = p.sup_norm();
            if s == 0.0 {
                return Err(Error::Degenerate(format!("product vanished after {done} factors")));
            }
            p.scale(1.0 / s);
            log_scale += s.ln();
        }
        if done == bounds[next_bound] {
            marks.push(log_scale);
            next_bound += 1;
        }
    }
    let lengths: Vec<usize> = bounds.windows(2).map(|w| w[1] - w[0]).collect();
    let (_, se) = batch_stats(&marks, &lengths);
    Ok(LyapunovEstimate {
        name: name.to_string(),
        method: "top".into(),
        exponents: vec![log_scale / n as f64],
        stderr: vec![se],
        minus_infinity: vec![false],
        n,
        log_scale,
    })
}

/// Trace exponent of `x_1, …, x_n`.
pub fn trace_exponent(sys: &SubstitutionSystem, x: &SymbolSequence, n: usize) -> Result<LyapunovEstimate> {
    if n > x.plus.len() {
        return Err(Error::Horizon(format!("{n} steps beyond {} symbols", x.plus.len())));
    }
    let factors = x.plus[..n]
        .iter()
        .map(|&l| sys.substitution_matrix(l).map(ComplexMatrix::from_int))
        .collect::<Result<Vec<_>>>()?;
    lyapunov_top("trace", &factors)
}

/// Floor applied to `log|r_ii|` when a column collapses.
pub const LOG_FLOOR: f64 = -690.0;

/// Full spectrum of the products `G_1 G_2 ⋯ G_n` by repeated QR.
pub fn lyapunov_spectrum(name: &str, factors: &[IntMatrix]) -> Result<LyapunovEstimate> {
    let n = factors.len();
    if n < 100 {
        return Err(Error::OutOfRange(format!("{n} steps; at least 100 are needed")));
    }
    let r = factors[0].rows();
    let bounds = batch_bounds(n);
    let mut q: Vec<Vec<f64>> = (0..r).map(|i| (0..r).map(|j| (i == j) as u8 as f64).collect()).collect();
    let mut acc = vec![0.0; r];
    let mut collapsed = vec![false; r];
    let mut marks: Vec<Vec<f64>> = vec![vec![0.0; r]];
    let mut next_bound = 1;
    for (k, g) in factors.iter().enumerate() {
        if g.rows() != r || g.cols() != r {
            return Err(Error::DimensionMismatch { expected: r, found: g.rows() });
        }
        // columns of Gᵀ·Q
        let mut cols: Vec<Vec<f64>> = (0..r)
            .map(|c| (0..r).map(|i| (0..r).map(|l| g.get(l, i) as f64 * q[l][c]).sum()).collect())
            .collect();
        let scale = cols.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for c in 0..r {
            for p in 0..c {
                let d: f64 = (0..r).map(|i| cols[c][i] * cols[p][i]).sum();
                for i in 0..r {
                    cols[c][i] -= d * cols[p][i];
                }
            }
            let norm = cols[c].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= 1e-13 * scale {
                acc[c] += LOG_FLOOR;
                collapsed[c] = true;
                // complete the frame with a standard vector
                let mut best = vec![0.0; r];
                let mut best_norm = 0.0;
                for e in 0..r {
                    let mut v: Vec<f64> = (0..r).map(|i| (i == e) as u8 as f64).collect();
                    for p in 0..c {
                        let d: f64 = (0..r).map(|i| v[i] * cols[p][i]).sum();
                        for i in 0..r {
                            v[i] -= d * cols[p][i];
                        }
                    }
                    let nv = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                    if nv > best_norm {
                        best_norm = nv;
                        best = v;
                    }
                }
                cols[c] = best.into_iter().map(|t| t / best_norm).collect();
            } else {
                acc[c] += norm.ln();
                for v in cols[c].iter_mut() {
                    *v /= norm;
                }
            }
        }
        for c in 0..r {
            for i in 0..r {
                q[i][c] = cols[c][i];
            }
        }
        if k + 1 == bounds[next_bound] {
            marks.push(acc.clone());
            next_bound += 1;
        }
    }
    let lengths: Vec<usize> = bounds.windows(2).map(|w| w[1] - w[0]).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| acc[b].partial_cmp(&acc[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut exponents = Vec::with_capacity(r);
    let mut stderr = Vec::with_capacity(r);
    let mut flags = Vec::with_capacity(r);
    for &c in &order {
        let m: Vec<f64> = marks.iter().map(|v| v[c]).collect();
        let (_, se) = batch_stats(&m, &lengths);
        exponents.push(acc[c] / n as f64);
        stderr.push(se);
        flags.push(collapsed[c]);
    }
    Ok(LyapunovEstimate {
        name: name.to_string(),
        method: "qr".into(),
        exponents,
        stderr,
        minus_infinity: flags,
        n,
        log_scale: acc.iter().filter(|a| a.is_finite()).sum(),
    })
}

/// `d · E[log θ_ℓ]` under the sampler: the trace exponent predicted by
/// volume counting.
pub fn volume_exponent(sys: &SubstitutionSystem, sampler: &MeasureSampler) -> f64 {
    sys.dim() as f64 * sampler.mean(|l| sys.basis().theta(l).ln())
}

/// The decay bound for a positively simple word realized in `x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordBound {
    pub level: usize,
    pub constant: f64,
    /// Return times `k_n` whose block ends at or below the level.
    pub returns: Vec<usize>,
    /// Per return, the guaranteed phase spread `δ_n`.
    pub spreads: Vec<f64>,
    /// `‖Θ^{(m)}‖`.
    pub trace_norm: f64,
    pub bound: f64,
}

/// Largest circular gap between phases of same-type level-`low` pieces of
/// each canonical level-`high` supertile; the minimum over all blocks.
fn block_spread(hier: &Hierarchy, low: usize, high: usize, phaser: &Phaser) -> Result<f64> {
    let sys = hier.system();
    let m = sys.types();
    let mut spread = f64::INFINITY;
    for top in 0..m {
        let mut by_type: Vec<Vec<f64>> = vec![Vec::new(); m];
        let mut stack = vec![Node { level: high, typ: top, corner: ExactVector::zeros(sys.rank()) }];
        while let Some(n) = stack.pop() {
            if n.level == low {
                let a = hier.anchor(low, n.typ);
                by_type[n.typ].push(phaser.frac(&n.corner) + phaser.frac_point(a));
                continue;
            }
            for c in hier.children(&n) {
                stack.push(c?);
            }
        }
        for fr in by_type.iter().filter(|v| v.len() >= 2) {
            let mut best: f64 = 0.0;
            for (a, &s) in fr.iter().enumerate() {
                for &t in &fr[a + 1..] {
                    best = best.max(dist_z(s - t));
                }
            }
            spread = spread.min(best);
        }
    }
    Ok(if spread.is_finite() { spread } else { 0.0 })
}

/// For a positively simple word `w = w⁻w⁺` realized in `x`, every entry of
/// `M^{(m)}(λ)` is at most `‖Θ^{(m)}‖ ∏_n (1 − c δ_n²)`, where the product
/// runs over returns `k_n` with `k_n + |w⁺| ≤ m`, `δ_n` is the smallest
/// best-pair phase spread of the `w⁺` block at that return, and
/// `c = (2M max Q⁺)^{-1}`.
pub fn word_bound(hier: &Hierarchy, w: &[usize], split: usize, m: usize, lambda: Point) -> Result<WordBound> {
    let sys = hier.system();
    let kx = w.len() - split;
    if m > hier.levels() {
        return Err(Error::Horizon(format!("level {m} beyond {}", hier.levels())));
    }
    let check = crate::symbolic::word_check(sys, w, split)?;
    let constant = 1.0 / (2.0 * sys.types() as f64 * check.q_plus.max_entry() as f64);
    let phaser = Phaser::new(sys.basis(), lambda);
    let horizon = m.saturating_sub(kx);
    let returns: Vec<usize> = if m >= kx {
        return_times(hier.sequence(), w, split, horizon)?.into_iter().filter(|&k| k + kx <= m).collect()
    } else {
        Vec::new()
    };
    let mut spreads = Vec::with_capacity(returns.len());
    let mut factor = 1.0;
    for &k in &returns {
        let d = block_spread(hier, k, k + kx, &phaser)?;
        factor *= 1.0 - constant * d * d;
        spreads.push(d);
    }
    let tp = trace_product(sys, hier.sequence(), 0, m)?;
    let trace_norm = tp
        .big
        .iter()
        .map(|r| r.iter().map(|v| v.to_string().parse::<f64>().unwrap_or(f64::INFINITY)).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(WordBound { level: m, constant, returns, spreads, trace_norm, bound: trace_norm * factor })
}
