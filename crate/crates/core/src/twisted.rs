//! Twisted ergodic integrals `S_R(f, λ) = ∫_{C_R} e^{-2πi⟨λ,t⟩} f(t) dt`.
//!
//! Two independent evaluations are provided. The brute method visits every
//! tile meeting the window and integrates its (possibly clipped) boxes in
//! closed form. The cocycle method decomposes the window into whole
//! supertiles, weighs each by a row of the spectral product, and treats the
//! cut supertiles tile by tile. The two serve as oracles for each other.
//!
//! Around these sit the growth fit, the Veech density statistic, the
//! spectral-measure bound and a correlation estimate.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{Signed, Zero};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cocycles::{dist_z, invariant_weights, spectral_chain, ComplexMatrix, Phaser};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, ExactVector, ModuleBasis, Point, Region};
use crate::hierarchy::{Hierarchy, Node, PathAddress, Tiling};
use crate::intmat::IntMatrix;
use crate::returns::ReturnGroup;
use crate::symbolic::{return_times, SymbolSequence};

/// A constant piece of a step profile, in fractional coordinates of the
/// supertile's bounding box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepPiece {
    pub lo: Point,
    pub hi: Point,
    pub weight: Complex64,
}

/// The values of a function on one canonical supertile.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Profile {
    /// Constant on the whole supertile.
    Indicator(Complex64),
    /// Sum of box pieces; outside every piece the value is zero.
    Step(Vec<StepPiece>),
}

/// A function determined by the level-`level` supertile around each point:
/// one profile per supertile type.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TlcFunction {
    pub level: usize,
    pub profiles: Vec<Profile>,
}

impl TlcFunction {
    /// Level-0 function, constant `w[i]` on tiles of type `i`.
    pub fn indicator(weights: &[Complex64]) -> Self {
        TlcFunction { level: 0, profiles: weights.iter().map(|&c| Profile::Indicator(c)).collect() }
    }

    pub fn constant(types: usize, c: Complex64) -> Self {
        Self::indicator(&vec![c; types])
    }

    pub fn check(&self, types: usize) -> Result<()> {
        if self.profiles.len() != types {
            return Err(Error::DimensionMismatch { expected: types, found: self.profiles.len() });
        }
        Ok(())
    }

    /// Spatial mean `Σ_l μ_l ∫ f` over the level-`level` supertiles, with
    /// `μ` the vertex weights (per tile) at that level.
    pub fn average(&self, hier: &Hierarchy, depth: usize) -> Result<Complex64> {
        let y = self.level;
        let w = invariant_weights(hier.system(), hier.sequence(), y, depth, 1e-9)?;
        let integ = Integrator::new(hier, self, [0.0; 2])?;
        let mass: f64 = (0..w.weights.len()).map(|l| w.weights[l] * hier.volume(y, l)).sum();
        let s: Complex64 = (0..w.weights.len()).map(|l| integ.psi[l] * w.weights[l]).sum();
        Ok(s / mass)
    }

    pub fn is_zero_average(&self, hier: &Hierarchy, depth: usize) -> Result<bool> {
        Ok(self.average(hier, depth)?.norm() <= 1e-10)
    }

    /// Value at a point of the supertile `anc` (level `self.level`), given
    /// the point relative to the supertile's bounding box.
    fn value_in(&self, typ: usize, frac: Point, dim: usize) -> Complex64 {
        match &self.profiles[typ] {
            Profile::Indicator(c) => *c,
            Profile::Step(ps) => ps
                .iter()
                .filter(|p| (0..dim).all(|a| p.lo[a] <= frac[a] && frac[a] < p.hi[a]))
                .map(|p| p.weight)
                .sum(),
        }
    }
}

/// Which evaluation produced a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegralMethod {
    Cocycle,
    Brute,
}

impl IntegralMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            IntegralMethod::Cocycle => "cocycle",
            IntegralMethod::Brute => "brute",
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `∫_box e^{-2πi⟨λ,s⟩} ds` over the first `dim` axes.
pub fn box_transform(b: &Aabb, lambda: Point, dim: usize) -> Complex64 {
    let mut z = Complex64::new(1.0, 0.0);
    for a in 0..dim {
        let len = b.hi[a] - b.lo[a];
        if len <= 0.0 {
            return Complex64::zero();
        }
        let mid = 0.5 * (b.lo[a] + b.hi[a]);
        z *= Complex64::from_polar(len * sinc(PI * lambda[a] * len), -TAU * lambda[a] * mid);
    }
    z
}

/// Closed-form transform of a weight `c` on the interval `[a, b]`.
pub fn interval_transform(a: f64, b: f64, c: Complex64, lambda: f64) -> Complex64 {
    c * box_transform(&Aabb { lo: [a, 0.0], hi: [b, 0.0] }, [lambda, 0.0], 1)
}

fn translate(b: &Aabb, by: Point) -> Aabb {
    Aabb { lo: [b.lo[0] + by[0], b.lo[1] + by[1]], hi: [b.hi[0] + by[0], b.hi[1] + by[1]] }
}

fn clip(b: &Aabb, window: Option<&Aabb>, dim: usize) -> Option<Aabb> {
    match window {
        Some(w) => b.intersect(w, dim),
        None => Some(*b),
    }
}

/// Evaluates twisted integrals of one function at one spectral parameter on
/// tilings built from one hierarchy.
pub struct Integrator<'a> {
    hier: &'a Hierarchy,
    f: &'a TlcFunction,
    phaser: Phaser,
    dim: usize,
    tile_boxes: Vec<Vec<Aabb>>,
    anc_bbox: Vec<Aabb>,
    /// `∫` over the canonical level-`y` supertile of each type, corner at 0.
    psi: Vec<Complex64>,
}

impl<'a> Integrator<'a> {
    pub fn new(hier: &'a Hierarchy, f: &'a TlcFunction, lambda: Point) -> Result<Self> {
        let sys = hier.system();
        f.check(sys.types())?;
        if f.level > hier.levels() {
            return Err(Error::Horizon(format!("function level {} beyond {} levels", f.level, hier.levels())));
        }
        let zero = ExactVector::zeros(sys.rank());
        let tile_boxes = sys
            .prototiles()
            .iter()
            .map(|p| p.boxes(sys.basis(), &zero).map(|b| b.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let anc_bbox = (0..sys.types())
            .map(|t| hier.node_bbox(&Node { level: f.level, typ: t, corner: zero.clone() }))
            .collect::<Result<Vec<_>>>()?;
        let mut integ = Integrator {
            hier,
            f,
            phaser: Phaser::new(sys.basis(), lambda),
            dim: sys.dim(),
            tile_boxes,
            anc_bbox,
            psi: Vec::new(),
        };
        integ.psi = (0..sys.types())
            .map(|t| {
                let n = Node { level: f.level, typ: t, corner: zero.clone() };
                integ.subtree(&n, &n, None)
            })
            .collect::<Result<_>>()?;
        Ok(integ)
    }

    pub fn lambda(&self) -> Point {
        self.phaser.lambda()
    }

    /// `∫ e^{-2πi⟨λ,t⟩} f` over the canonical level-`y` supertile of type
    /// `typ` with its corner at the origin. At `y = 0` this is the transform
    /// of the tile profile.
    pub fn profile_transform(&self, typ: usize) -> Complex64 {
        self.psi[typ]
    }

    fn tile(&self, tile: &Node, anc: &Node, window: Option<&Aabb>) -> Result<Complex64> {
        let b = self.hier.system().basis();
        let origin = b.embed(&tile.corner)?;
        let win = window.map(|w| translate(w, [-origin[0], -origin[1]]));
        let lambda = self.phaser.lambda();
        let boxes = &self.tile_boxes[tile.typ];
        let mut acc = Complex64::zero();
        match &self.f.profiles[anc.typ] {
            Profile::Indicator(c) => {
                for bx in boxes {
                    if let Some(x) = clip(bx, win.as_ref(), self.dim) {
                        acc += c * box_transform(&x, lambda, self.dim);
                    }
                }
            }
            Profile::Step(pieces) => {
                let rel = b.embed(&anc.corner.checked_sub(&tile.corner)?)?;
                let bb = translate(&self.anc_bbox[anc.typ], rel);
                for p in pieces {
                    let mut pb = bb;
                    for a in 0..self.dim {
                        let len = bb.hi[a] - bb.lo[a];
                        pb.lo[a] = bb.lo[a] + p.lo[a] * len;
                        pb.hi[a] = bb.lo[a] + p.hi[a] * len;
                    }
                    for bx in boxes {
                        if let Some(x) = bx.intersect(&pb, self.dim).and_then(|x| clip(&x, win.as_ref(), self.dim)) {
                            acc += p.weight * box_transform(&x, lambda, self.dim);
                        }
                    }
                }
            }
        }
        Ok(acc * self.phaser.phase(&tile.corner))
    }

    /// Tile-by-tile integral over a node of level at least `y`, given its
    /// level-`y` ancestor (the node itself when its level is `y`).
    fn subtree(&self, node: &Node, anc: &Node, window: Option<&Aabb>) -> Result<Complex64> {
        let y = self.f.level;
        let mut acc = Complex64::zero();
        let mut stack: Vec<(Node, Node)> = vec![(node.clone(), anc.clone())];
        while let Some((n, a)) = stack.pop() {
            if let Some(w) = window {
                if self.hier.node_boxes(&n)?.iter().all(|b| b.interior_disjoint(w, self.dim)) {
                    continue;
                }
            }
            if n.level == 0 {
                acc += self.tile(&n, &a, window)?;
                continue;
            }
            for c in self.hier.children(&n) {
                let c = c?;
                let a = if c.level == y { c.clone() } else { a.clone() };
                stack.push((c, a));
            }
        }
        Ok(acc)
    }

    /// Visits every tile meeting the window.
    pub fn brute(&self, tiling: &Tiling, region: &Region) -> Result<Complex64> {
        let window = region.as_box(self.dim);
        let mut acc = Complex64::zero();
        tiling.for_each_tile(region, self.f.level, |t, anc| {
            acc += self.tile(t, anc, Some(&window))?;
            Ok(())
        })?;
        Ok(acc)
    }

    /// Whole supertiles through the spectral cocycle, cut supertiles of the
    /// function's level tile by tile.
    pub fn cocycle(&self, tiling: &Tiling, region: &Region) -> Result<Complex64> {
        let y = self.f.level;
        let window = region.as_box(self.dim);
        let dec = tiling.decompose(region, y)?;
        let chain = spectral_chain(self.hier, y, dec.top_level, &self.phaser)?;
        // Ψ moved from the corner to the control point of each type
        let psi_anchor: Vec<Complex64> = (0..self.psi.len())
            .map(|l| self.psi[l] * self.phaser.phase_of(-self.phaser.frac_point(self.hier.anchor(y, l))))
            .collect();
        let rows: Vec<Vec<Complex64>> = chain.iter().map(|m: &ComplexMatrix| m.mul_vec(&psi_anchor)).collect();
        let mut acc = Complex64::zero();
        for p in &dec.whole {
            let f = self.phaser.frac(&p.corner) + self.phaser.frac_point(self.hier.anchor(p.level, p.typ));
            acc += self.phaser.phase_of(f) * rows[p.level - y][p.typ];
        }
        for p in &dec.partial {
            let n = Node { level: p.level, typ: p.typ, corner: p.corner.clone() };
            acc += self.subtree(&n, &n, Some(&window))?;
        }
        Ok(acc)
    }

    pub fn integral(&self, tiling: &Tiling, region: &Region, method: IntegralMethod) -> Result<Complex64> {
        match method {
            IntegralMethod::Cocycle => self.cocycle(tiling, region),
            IntegralMethod::Brute => self.brute(tiling, region),
        }
    }
}

/// `S_R` for one window.
pub fn twisted_integral(
    tiling: &Tiling,
    f: &TlcFunction,
    lambda: Point,
    region: &Region,
    method: IntegralMethod,
) -> Result<Complex64> {
    Integrator::new(tiling.hierarchy(), f, lambda)?.integral(tiling, region, method)
}

/// `Σ_l M^{(k)}(λ)_{j,l} ψ̂_l(λ)`: the integral over the canonical level-`k`
/// supertile of type `j`, with the function's level at most `k`.
pub fn twisted_integral_supertile(hier: &Hierarchy, k: usize, j: usize, lambda: Point, f: &TlcFunction) -> Result<Complex64> {
    let y = f.level;
    if k < y {
        return Err(Error::OutOfRange(format!("supertile level {k} below the function level {y}")));
    }
    let integ = Integrator::new(hier, f, lambda)?;
    let chain = spectral_chain(hier, y, k, &integ.phaser)?;
    let m = &chain[k - y];
    let lead = integ.phaser.phase_of(integ.phaser.frac_point(hier.anchor(k, j)));
    Ok((0..integ.psi.len())
        .map(|l| {
            let back = integ.phaser.phase_of(-integ.phaser.frac_point(hier.anchor(y, l)));
            lead * m.get(j, l) * back * integ.psi[l]
        })
        .sum())
}

/// Pulls `f` back to the tiling seen from level `n`: a function on the
/// shifted hierarchy whose tiles are the level-`n` supertiles. Requires the
/// level-`n` supertiles to be scaled copies of the prototiles.
pub fn raise_function(hier: &Hierarchy, f: &TlcFunction, n: usize) -> Result<TlcFunction> {
    if f.level >= n {
        return Ok(TlcFunction { level: f.level - n, profiles: f.profiles.clone() });
    }
    let sys = hier.system();
    let dim = sys.dim();
    let zero = ExactVector::zeros(sys.rank());
    let s = hier.scale(n);
    let integ = Integrator::new(hier, f, [0.0; 2])?;
    let mut profiles = Vec::with_capacity(sys.types());
    for i in 0..sys.types() {
        let top = Node { level: n, typ: i, corner: zero.clone() };
        let bb = hier.node_bbox(&top)?;
        let proto = integ.tile_boxes[i].iter().skip(1).fold(integ.tile_boxes[i][0], |a, b| a.union(b));
        if (0..dim).any(|a| ((bb.hi[a] - bb.lo[a]) - s * (proto.hi[a] - proto.lo[a])).abs() > 1e-9 * s) {
            return Err(Error::Unsupported(format!("level-{n} supertile of type {i} is not a scaled prototile")));
        }
        let mut pieces = Vec::new();
        let mut stack = vec![(top.clone(), top.clone())];
        while let Some((node, anc)) = stack.pop() {
            if node.level == 0 {
                let origin = sys.basis().embed(&node.corner)?;
                let boxes: Vec<Aabb> = integ.tile_boxes[node.typ].iter().map(|b| translate(b, origin)).collect();
                let support: Vec<(Aabb, Complex64)> = match &f.profiles[anc.typ] {
                    Profile::Indicator(c) => boxes.iter().map(|b| (*b, *c)).collect(),
                    Profile::Step(ps) => {
                        let ab = translate(&integ.anc_bbox[anc.typ], sys.basis().embed(&anc.corner)?);
                        let mut out = Vec::new();
                        for p in ps {
                            let mut pb = ab;
                            for a in 0..dim {
                                let len = ab.hi[a] - ab.lo[a];
                                pb.lo[a] = ab.lo[a] + p.lo[a] * len;
                                pb.hi[a] = ab.lo[a] + p.hi[a] * len;
                            }
                            out.extend(boxes.iter().filter_map(|b| b.intersect(&pb, dim)).map(|b| (b, p.weight)));
                        }
                        out
                    }
                };
                for (b, w) in support {
                    let mut lo = [0.0, 0.0];
                    let mut hi = [1.0, 1.0];
                    for a in 0..dim {
                        let len = bb.hi[a] - bb.lo[a];
                        lo[a] = (b.lo[a] - bb.lo[a]) / len;
                        hi[a] = (b.hi[a] - bb.lo[a]) / len;
                    }
                    pieces.push(StepPiece { lo, hi, weight: w });
                }
                continue;
            }
            for c in hier.children(&node) {
                let c = c?;
                let a = if c.level == f.level { c.clone() } else { anc.clone() };
                stack.push((c, a));
            }
        }
        profiles.push(Profile::Step(pieces));
    }
    Ok(TlcFunction { level: 0, profiles })
}

/// `S_R` computed on the tiling seen from level `n`: the window, parameter
/// and function are rescaled, and the result multiplied back by `θ̄^d` and
/// the phase of the level-`n` corner.
pub fn renormalized_integral(
    tiling: &Tiling,
    f: &TlcFunction,
    lambda: Point,
    region: &Region,
    n: usize,
    method: IntegralMethod,
) -> Result<Complex64> {
    let hier = tiling.hierarchy();
    let sys = hier.system();
    if !sys.basis().is_self_similar() {
        return Err(Error::Unsupported("renormalization needs a self-similar module".into()));
    }
    let dim = sys.dim();
    let (shifted, corner) = tiling.shifted(n)?;
    let s = hier.scale(n);
    let p = sys.basis().embed(&corner)?;
    let region2 = Region::new([(region.center[0] - p[0]) / s, (region.center[1] - p[1]) / s], region.half_width / s)?;
    let f2 = raise_function(hier, f, n)?;
    let lambda2 = [lambda[0] * s, lambda[1] * s];
    let inner = twisted_integral(&shifted, &f2, lambda2, &region2, method)?;
    let phaser = Phaser::new(sys.basis(), lambda);
    Ok(inner * phaser.phase(&corner) * s.powi(dim as i32))
}

/// Values of `S_R` over a grid of radii around one center.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwistedIntegralSeries {
    pub lambda: Point,
    pub center: Point,
    pub radii: Vec<f64>,
    pub values: Vec<Complex64>,
    pub method: IntegralMethod,
    pub seed: u64,
    pub path: PathAddress,
}

pub fn twisted_series(
    tiling: &Tiling,
    f: &TlcFunction,
    lambda: Point,
    center: Point,
    radii: &[f64],
    method: IntegralMethod,
    seed: u64,
) -> Result<TwistedIntegralSeries> {
    if radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Degenerate("radii must be strictly ascending".into()));
    }
    let integ = Integrator::new(tiling.hierarchy(), f, lambda)?;
    let values = radii
        .iter()
        .map(|&r| integ.integral(tiling, &Region::new(center, r)?, method))
        .collect::<Result<Vec<_>>>()?;
    Ok(TwistedIntegralSeries { lambda, center, radii: radii.to_vec(), values, method, seed, path: tiling.path().clone() })
}

/// Power-law fit `|S_R| ≈ C R^slope` over the top decade of radii.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthFit {
    pub slope: f64,
    /// `d - slope`.
    pub alpha: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub stderr: f64,
    /// `alpha ± 2·stderr`.
    pub band: [f64; 2],
    pub points: usize,
    pub r_min: f64,
    pub r_max: f64,
}

pub const MIN_FIT_POINTS: usize = 8;

pub fn growth_fit(radii: &[f64], magnitudes: &[f64], dim: usize) -> Result<GrowthFit> {
    if radii.len() != magnitudes.len() {
        return Err(Error::DimensionMismatch { expected: radii.len(), found: magnitudes.len() });
    }
    if radii.len() < MIN_FIT_POINTS {
        return Err(Error::Degenerate(format!("{} grid points, need {MIN_FIT_POINTS}", radii.len())));
    }
    let (lo, hi) = radii.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    if !(lo > 0.0) || (hi / lo).log10() < 1.5 {
        return Err(Error::Degenerate("radii must span at least 1.5 decades".into()));
    }
    let mut idx: Vec<usize> = (0..radii.len()).collect();
    idx.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]));
    let mut take: Vec<usize> = idx.iter().copied().filter(|&i| radii[i] >= hi / 10.0).collect();
    if take.len() < MIN_FIT_POINTS {
        take = idx[..MIN_FIT_POINTS].to_vec();
    }
    if take.iter().any(|&i| !(magnitudes[i] > 0.0) || !magnitudes[i].is_finite()) {
        return Err(Error::Degenerate("zero or non-finite value in the fit window".into()));
    }
    let xs: Vec<f64> = take.iter().map(|&i| radii[i].ln()).collect();
    let ys: Vec<f64> = take.iter().map(|&i| magnitudes[i].ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    let alpha = dim as f64 - slope;
    Ok(GrowthFit {
        slope,
        alpha,
        residual: (sse / n).sqrt(),
        stderr,
        band: [alpha - 2.0 * stderr, alpha + 2.0 * stderr],
        points: take.len(),
        r_min: take.iter().map(|&i| radii[i]).fold(f64::INFINITY, f64::min),
        r_max: hi,
    })
}

impl TwistedIntegralSeries {
    pub fn fit(&self, dim: usize) -> Result<GrowthFit> {
        let mags: Vec<f64> = self.values.iter().map(|z| z.norm()).collect();
        growth_fit(&self.radii, &mags, dim)
    }
}

/// `V^*λ`: the pairing of `λ` with each group generator, exact when both
/// are rational.
#[derive(Clone, Debug, PartialEq)]
pub enum DualVector {
    Exact(Vec<Ratio<i128>>),
    Float(Vec<f64>),
}

/// Best rational approximation with denominator at most `max_den`, kept
/// only when it reproduces `x` to 1e-12.
pub fn rationalize(x: f64, max_den: i128) -> Option<Ratio<i128>> {
    if !x.is_finite() {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i128;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = r - a as f64;
        if frac.abs() < 1e-15 || ((p1 as f64 / q1 as f64) - x).abs() < 1e-15 {
            break;
        }
        r = 1.0 / frac;
    }
    if q1 == 0 {
        return None;
    }
    let q = Ratio::new(p1, q1);
    ((p1 as f64 / q1 as f64 - x).abs() <= 1e-12).then_some(q)
}

impl DualVector {
    /// `⟨λ, E(g_c)⟩` for the generators of `group`, exact when `λ` is
    /// rational (`exact` set) and the module embeds rationally.
    pub fn new(basis: &ModuleBasis, group: &ReturnGroup, lambda: Point, exact: bool) -> Self {
        let dim = basis.dim();
        if exact {
            let lam: Option<Vec<Ratio<i128>>> = (0..dim).map(|a| rationalize(lambda[a], 1_000_000)).collect();
            if let Some(lam) = lam {
                let u: Option<Vec<Ratio<i128>>> = group
                    .generators
                    .iter()
                    .map(|g| basis.rational_embed(g).map(|e| (0..dim).map(|a| lam[a] * e[a]).sum()))
                    .collect();
                if let Some(u) = u {
                    return DualVector::Exact(u);
                }
            }
        }
        Self::from_embedding(&group.embedding, lambda, dim)
    }

    /// Float pairing with an arbitrary generator embedding (for example a
    /// deformed one).
    pub fn from_embedding(embedding: &[Point], lambda: Point, dim: usize) -> Self {
        DualVector::Float(embedding.iter().map(|e| (0..dim).map(|a| lambda[a] * e[a]).sum()).collect())
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, DualVector::Exact(_))
    }
}

/// One return time of the Veech statistic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VeechRecord {
    pub j: usize,
    pub k: usize,
    pub dist: f64,
    pub indicator: bool,
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VeechDensitySeries {
    pub rho: f64,
    pub horizon: usize,
    pub exact: bool,
    pub records: Vec<VeechRecord>,
}

impl VeechDensitySeries {
    pub fn final_density(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.density)
    }
}

/// Transports `u_0 = V^*λ` by `u_k = G_{x_k}^T u_{k-1} mod 1` and records the
/// distance of `u_k` to the lattice at the return times of `w` up to `n`.
/// `g[l]` is the matrix of rule `l`.
pub fn veech_density(
    u0: &DualVector,
    g: &[IntMatrix],
    x: &SymbolSequence,
    w: &[usize],
    split: usize,
    rho: f64,
    n: usize,
) -> Result<VeechDensitySeries> {
    if !(rho >= 0.0) {
        return Err(Error::OutOfRange(format!("rho {rho} must be nonnegative")));
    }
    let times = return_times(x, w, split, n)?;
    if times.is_empty() {
        return Err(Error::Degenerate(format!("no returns of the word within {n} levels")));
    }
    let r = match u0 {
        DualVector::Exact(u) => u.len(),
        DualVector::Float(u) => u.len(),
    };
    if let Some(m) = g.iter().find(|m| m.rows() != r || m.cols() != r) {
        return Err(Error::DimensionMismatch { expected: r, found: m.rows().max(m.cols()) });
    }
    let mut records = Vec::with_capacity(times.len());
    let mut hits = 0usize;
    let mut push = |k: usize, dist: f64, inside: bool, records: &mut Vec<VeechRecord>| {
        hits += inside as usize;
        let j = records.len() + 1;
        records.push(VeechRecord { j, k, dist, indicator: inside, density: hits as f64 / j as f64 });
    };
    let mut next = times.iter().copied().peekable();
    match u0 {
        DualVector::Exact(u) => {
            let one = Ratio::from_integer(1i128);
            let reduce = |v: Ratio<i128>| {
                let f = v - v.floor();
                if f.is_negative() { f + one } else { f }
            };
            let mut u: Vec<Ratio<i128>> = u.iter().map(|&v| reduce(v)).collect();
            let rho_q = rationalize(rho, 1 << 40);
            for k in 0..=n {
                if k > 0 {
                    let m = &g[x.at(k)];
                    u = (0..r)
                        .map(|c| reduce((0..r).map(|row| u[row] * Ratio::from_integer(m.get(row, c) as i128)).sum()))
                        .collect();
                }
                if next.peek() == Some(&k) {
                    next.next();
                    let d = u.iter().map(|&v| if v * 2 > one { one - v } else { v }).max().unwrap_or_else(Ratio::zero);
                    let inside = match rho_q {
                        Some(q) => d <= q,
                        None => (*d.numer() as f64) <= rho * *d.denom() as f64,
                    };
                    push(k, *d.numer() as f64 / *d.denom() as f64, inside, &mut records);
                }
            }
        }
        DualVector::Float(u) => {
            let mut u: Vec<f64> = u.iter().map(|v| v.rem_euclid(1.0)).collect();
            for k in 0..=n {
                if k > 0 {
                    let m = &g[x.at(k)];
                    u = (0..r)
                        .map(|c| (0..r).map(|row| u[row] * m.get(row, c) as f64).sum::<f64>().rem_euclid(1.0))
                        .collect();
                }
                if next.peek() == Some(&k) {
                    next.next();
                    let d = u.iter().map(|&v| dist_z(v)).fold(0.0, f64::max);
                    push(k, d, d <= rho, &mut records);
                }
            }
        }
    }
    Ok(VeechDensitySeries { rho, horizon: n, exact: u0.is_exact(), records })
}

/// `inf_{|w| ≤ r} sin²(2πwR) / (π²w²R²)`, evaluated on a fine grid.
pub fn kernel_constant(r: f64, radius: f64) -> f64 {
    let k = |w: f64| {
        let s = sinc(TAU * w * radius);
        4.0 * s * s
    };
    (0..=4096).map(|i| k(r * i as f64 / 4096.0)).fold(f64::INFINITY, f64::min)
}

/// Upper estimate of `μ_f(B_r(λ))` from the mean of `|S_R|²` over sampled
/// tilings, with `R = 1/(4r)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralBound {
    pub lambda: Point,
    pub r: f64,
    pub radius: f64,
    pub kernel_constant: f64,
    pub l2_estimate: f64,
    pub l2_stderr: f64,
    pub samples: usize,
    pub retries: usize,
    pub bound: f64,
}

/// Window radius used for a ball of radius `r`.
pub fn bound_radius(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::OutOfRange(format!("r = {r} must lie in (0, 1/2)")));
    }
    Ok(1.0 / (4.0 * r))
}

/// Point drawn uniformly from the origin tile of a tiling.
fn uniform_in_origin<R: Rng + ?Sized>(tiling: &Tiling, rng: &mut R) -> Result<Point> {
    let hier = tiling.hierarchy();
    let sys = hier.system();
    let dim = sys.dim();
    let boxes = tiling.origin_shape().boxes(sys.basis(), &ExactVector::zeros(sys.rank()), |v| Ok(v.clone()))?;
    let vols: Vec<f64> = boxes.iter().map(|b| b.volume(dim)).collect();
    let pick = WeightedIndex::new(&vols).map_err(|e| Error::Degenerate(e.to_string()))?.sample(rng);
    let b = boxes[pick];
    let mut p = [0.0; 2];
    for a in 0..dim {
        p[a] = b.lo[a] + rng.gen::<f64>() * (b.hi[a] - b.lo[a]);
    }
    Ok(p)
}

/// `n` samples of `|S_R|²` over random tilings of depth `m`, the top type
/// drawn from `top_weights`. Each sample has its own random stream.
pub fn spectral_bound(
    hier: &Arc<Hierarchy>,
    f: &TlcFunction,
    lambda: Point,
    r: f64,
    samples: usize,
    m: usize,
    top_weights: Option<&[f64]>,
    seed: u64,
) -> Result<SpectralBound> {
    let radius = bound_radius(r)?;
    if samples < 2 {
        return Err(Error::OutOfRange("at least two samples are needed".into()));
    }
    let dim = hier.system().dim();
    let integ = Integrator::new(hier, f, lambda)?;
    let draws: Vec<(f64, usize)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64 + 1);
            let mut retries = 0;
            loop {
                let t = Tiling::random_weighted(hier.clone(), m, top_weights, &mut rng)?;
                let c = uniform_in_origin(&t, &mut rng)?;
                match integ.cocycle(&t, &Region::new(c, radius)?) {
                    Ok(z) => return Ok((z.norm_sqr(), retries)),
                    Err(Error::Horizon(e)) => {
                        retries += 1;
                        if retries > 64 {
                            return Err(Error::Horizon(e));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect::<Result<_>>()?;
    let n = draws.len() as f64;
    let mean = draws.iter().map(|d| d.0).sum::<f64>() / n;
    let var = draws.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let c2 = kernel_constant(r, radius);
    Ok(SpectralBound {
        lambda,
        r,
        radius,
        kernel_constant: c2,
        l2_estimate: mean,
        l2_stderr: (var / n).sqrt(),
        samples,
        retries: draws.iter().map(|d| d.1).sum(),
        bound: mean / (c2 * radius * radius).powi(dim as i32),
    })
}

/// Monte Carlo estimate of `∫_{C_R} |⟨f∘φ_t, g⟩| dt`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub radius: f64,
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

fn value_at(tiling: &Tiling, f: &TlcFunction, p: Point) -> Result<Complex64> {
    let hier = tiling.hierarchy();
    let dim = hier.system().dim();
    match tiling.locate(p, f.level)? {
        None => Ok(Complex64::zero()),
        Some((_, anc)) => {
            let bb = hier.node_bbox(&anc)?;
            let mut frac = [0.0; 2];
            for a in 0..dim {
                frac[a] = (p[a] - bb.lo[a]) / (bb.hi[a] - bb.lo[a]);
            }
            Ok(f.value_in(anc.typ, frac, dim))
        }
    }
}

/// Inner products are spatial averages over a grid of `grid` points per
/// axis in `C_L(0)`, `L = average_half_width`; the outer integral samples
/// `t` uniformly in `C_R(0)`, with standard error from 10 batch means.
pub fn correlation_integral(
    tiling: &Tiling,
    f: &TlcFunction,
    g: &TlcFunction,
    radius: f64,
    average_half_width: f64,
    grid: usize,
    samples: usize,
    seed: u64,
) -> Result<CorrelationEstimate> {
    const BATCHES: usize = 10;
    if samples < 2 * BATCHES || grid == 0 {
        return Err(Error::OutOfRange(format!("sample budget {samples} below {}", 2 * BATCHES)));
    }
    let dim = tiling.hierarchy().system().dim();
    let l = average_half_width;
    let step = 2.0 * l / grid as f64;
    // offset the grid off the rational lattice of tile corners
    let shift = 0.5 + 0.1180339887498949;
    let axis: Vec<f64> = (0..grid).map(|i| -l + (i as f64 + shift) * step).collect();
    let points: Vec<Point> = if dim == 1 {
        axis.iter().map(|&a| [a, 0.0]).collect()
    } else {
        axis.iter().flat_map(|&a| axis.iter().map(move |&b| [a, b])).collect()
    };
    let gvals: Vec<Complex64> = points.iter().map(|&p| value_at(tiling, g, p)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts: Vec<Point> = (0..samples)
        .map(|_| {
            let mut t = [0.0; 2];
            for v in t.iter_mut().take(dim) {
                *v = rng.gen_range(-radius..=radius);
            }
            t
        })
        .collect();
    let vals: Vec<f64> = ts
        .par_iter()
        .map(|t| {
            let mut acc = Complex64::zero();
            for (p, gv) in points.iter().zip(&gvals) {
                acc += value_at(tiling, f, [p[0] + t[0], p[1] + t[1]])? * gv.conj();
            }
            Ok(acc.norm() / points.len() as f64)
        })
        .collect::<Result<_>>()?;
    let vol = (2.0 * radius).powi(dim as i32);
    let per = samples / BATCHES;
    let means: Vec<f64> = (0..BATCHES).map(|b| vals[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64).collect();
    let mean = vals.iter().sum::<f64>() / samples as f64;
    let bm = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(CorrelationEstimate { radius, value: vol * mean, stderr: vol * (var / BATCHES as f64).sqrt(), samples })
}
