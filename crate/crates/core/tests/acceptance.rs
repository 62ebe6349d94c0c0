//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tilecocycle::cli::config::{parse_config, RunConfig};
use tilecocycle::cocycles::{
    invariant_weights, lyapunov_spectrum, spectral_product, spectral_product_exact, trace_exponent,
};
use tilecocycle::deformation::{apply_deformation, combinatorics, group_and_g, Deformation};
use tilecocycle::geometry::{Point, Region};
use tilecocycle::golden;
use tilecocycle::hierarchy::{Hierarchy, Tiling};
use tilecocycle::returns::{enumerate_return_vectors, g_matrix, group_basis, postal_check, word_g_matrix};
use tilecocycle::substitution::SubstitutionSystem;
use tilecocycle::symbolic::{all_splits, is_simple, parse_word, word_matrix, SymbolSequence};
use tilecocycle::twisted::{
    renormalized_integral, spectral_bound, twisted_integral, twisted_series, veech_density, DualVector,
    IntegralMethod, Profile, StepPiece, TlcFunction,
};

type Check = Result<String, String>;

/// Number, time budget in seconds, and the check itself.
type Criterion = (u32, u64, fn() -> Check);

fn configs() -> Vec<RunConfig> {
    [golden::TMPD_JSON, golden::FIBONACCI_JSON, golden::BLOCK2D_JSON]
        .iter()
        .map(|t| parse_config(t).expect("bundled config parses"))
        .collect()
}

fn sequence(cfg: &RunConfig, seed: u64, len: usize) -> SymbolSequence {
    let mut s = cfg.sampler.clone();
    s.seed = seed;
    s.sample_sequence(len).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn half_step(types: usize) -> TlcFunction {
    let p = StepPiece { lo: [0.0, 0.0], hi: [0.5, 1.0], weight: Complex64::new(1.0, 0.0) };
    TlcFunction { level: 0, profiles: vec![Profile::Step(vec![p]); types] }
}

/// A step profile on the first type, a complex constant on the others.
fn mixed_function(types: usize) -> TlcFunction {
    let mut profiles = vec![Profile::Step(vec![StepPiece {
        lo: [0.1, 0.2],
        hi: [0.7, 0.9],
        weight: Complex64::new(1.0, 0.5),
    }])];
    profiles.extend((1..types).map(|_| Profile::Indicator(Complex64::new(-1.0, 0.25))));
    TlcFunction { level: 0, profiles }
}

fn random_point(r: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Point {
    let mut p = [0.0; 2];
    for c in p.iter_mut().take(dim) {
        *c = r.gen_range(lo..hi);
    }
    p
}

fn octaves(lo: f64, hi: f64, per: usize) -> Vec<f64> {
    let n = ((hi - lo) * per as f64).round() as usize;
    (0..=n).map(|k| 2f64.powf(lo + k as f64 / per as f64)).collect()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn close(a: Complex64, b: Complex64, rel: f64) -> bool {
    (a - b).norm() <= rel * a.norm().max(b.norm())
}

/// The TMPD tiling used by the growth criteria: Bernoulli x with seed 1,
/// 60 levels, path drawn with seed 1. The sequence runs past the top level
/// so that vertex weights there can converge.
fn tmpd_reference() -> (Arc<SubstitutionSystem>, SymbolSequence, Arc<Hierarchy>, Tiling) {
    let cfg = &configs()[0];
    let sys = Arc::new(cfg.system.clone());
    let x = sequence(cfg, 1, 112);
    let hier = Arc::new(Hierarchy::new(sys.clone(), x.clone(), 60).unwrap());
    let t = Tiling::random(hier.clone(), 60, &mut rng(1)).unwrap();
    (sys, x, hier, t)
}

fn c1_zero_parameter_product() -> Check {
    let mut checked = 0;
    for cfg in configs() {
        let sys = Arc::new(cfg.system.clone());
        for seed in 1..=20 {
            let x = sequence(&cfg, seed, 24);
            let hier = Hierarchy::new(sys.clone(), x.clone(), 20).unwrap();
            for k in 1..=20 {
                let z = Ratio::from_integer(0);
                let m = spectral_product_exact(&hier, k, [z, z]).map_err(|e| e.to_string())?;
                let theta = word_matrix(&sys, &x.plus[..k]).unwrap();
                if m.to_integer().as_ref() != Some(&theta) {
                    return Err(format!("{} seed {seed} level {k}: product differs from the trace matrix", cfg.name));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} exact products equal the trace matrices"))
}

fn c2_methods_agree() -> Check {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (cfg, levels, log_r_max) in configs().into_iter().zip([24usize, 40, 22]).map(|(c, l)| (c, l, 10.0)) {
        let sys = Arc::new(cfg.system.clone());
        let dim = sys.dim();
        let f = mixed_function(sys.types());
        for t in 0..50u64 {
            let x = sequence(&cfg, 100 + t, levels + 4);
            let hier = Arc::new(Hierarchy::new(sys.clone(), x, levels).unwrap());
            let mut r = rng(200 + t);
            let tiling = Tiling::random(hier, levels, &mut r).unwrap();
            let lam = random_point(&mut r, dim, -2.0, 2.0);
            let radius = 2f64.powf(r.gen_range(0.0..log_r_max));
            let center = random_point(&mut r, dim, -3.0, 3.0);
            let region = Region::new(center, radius).unwrap();
            let a = twisted_integral(&tiling, &f, lam, &region, IntegralMethod::Cocycle).map_err(|e| e.to_string())?;
            let b = twisted_integral(&tiling, &f, lam, &region, IntegralMethod::Brute).map_err(|e| e.to_string())?;
            let rel = (a - b).norm() / a.norm().max(b.norm());
            worst = worst.max(rel);
            if !close(a, b, 1e-9) {
                return Err(format!("{} trial {t}: {a} vs {b} (R = {radius:.1})", cfg.name));
            }
            n += 1;
        }
    }
    Ok(format!("{n} windows, worst relative gap {worst:.1e}"))
}

fn c3_domination() -> Check {
    let cfgs = configs();
    let mut worst = f64::NEG_INFINITY;
    for t in 0..1000u64 {
        let cfg = &cfgs[t as usize % 3];
        let sys = Arc::new(cfg.system.clone());
        let mut r = rng(300 + t);
        let k = r.gen_range(1..=12);
        let x = sequence(cfg, 300 + t, k + 2);
        let hier = Hierarchy::new(sys.clone(), x.clone(), k).unwrap();
        let lam = random_point(&mut r, sys.dim(), -3.0, 3.0);
        let p = spectral_product(&hier, 0, k, lam).unwrap();
        let theta = word_matrix(&sys, &x.plus[..k]).unwrap();
        for i in 0..sys.types() {
            for j in 0..sys.types() {
                let gap = p.entry(i, j).norm() - theta.get(i, j) as f64;
                worst = worst.max(gap);
                if gap > 1e-12 {
                    return Err(format!("{} trial {t}: entry ({i},{j}) exceeds the count by {gap:e}", cfg.name));
                }
            }
        }
    }
    Ok(format!("1000 products, largest |M| - count {worst:.2e}"))
}

fn c4_renormalization() -> Check {
    let cfgs = configs();
    let mut worst: f64 = 0.0;
    for t in 0..20u64 {
        let cfg = &cfgs[t as usize % 3];
        let sys = Arc::new(cfg.system.clone());
        let dim = sys.dim();
        let levels = if dim == 2 { 14 } else { 24 };
        let x = sequence(cfg, 400 + t, levels + 4);
        let hier = Arc::new(Hierarchy::new(sys.clone(), x, levels).unwrap());
        let mut r = rng(400 + t);
        let tiling = Tiling::random(hier, levels, &mut r).unwrap();
        let f = mixed_function(sys.types());
        let lam = random_point(&mut r, dim, -1.0, 1.0);
        let radius = 2f64.powf(r.gen_range(2.0..if dim == 2 { 5.0 } else { 8.0 }));
        let region = Region::new(random_point(&mut r, dim, -4.0, 4.0), radius).unwrap();
        let direct = twisted_integral(&tiling, &f, lam, &region, IntegralMethod::Brute).map_err(|e| e.to_string())?;
        for n in 0..=3 {
            let re = renormalized_integral(&tiling, &f, lam, &region, n, IntegralMethod::Cocycle)
                .map_err(|e| format!("{} trial {t} n = {n}: {e}", cfg.name))?;
            worst = worst.max((re - direct).norm() / direct.norm());
            if !close(re, direct, 1e-9) {
                return Err(format!("{} trial {t} n = {n}: {re} vs {direct}", cfg.name));
            }
        }
    }
    Ok(format!("20 windows x 4 shifts, worst relative gap {worst:.1e}"))
}

fn c5_lyapunov() -> Check {
    let cfgs = configs();
    let n = 10_000;
    let phi_log = ((1.0 + 5f64.sqrt()) / 2.0).ln();
    let mut notes = Vec::new();
    let mut fail = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64, tol: f64| {
        notes.push(format!("{name} {got:.7}"));
        if (got - want).abs() > tol {
            fail.push(format!("{name} = {got} not within {tol} of {want}"));
        }
    };
    let tm = &cfgs[0];
    let e = trace_exponent(&tm.system, &sequence(tm, 1, n + 1), n).unwrap();
    expect("tmpd trace", e.exponents[0], 2f64.ln(), 1e-6);
    let fib = &cfgs[1];
    let fsys = Arc::new(fib.system.clone());
    let x = sequence(fib, 1, n + 1);
    let e = trace_exponent(&fsys, &x, n).unwrap();
    expect("fibonacci trace", e.exponents[0], phi_log, 1e-3);
    let (_, g) = group_and_g(&fsys, &fib.sampler.support(), 3).unwrap();
    let factors: Vec<_> = (1..=n).map(|k| g[x.at(k)].clone()).collect();
    let spec = lyapunov_spectrum("G", &factors).unwrap();
    expect("fibonacci G top", spec.exponents[0], phi_log, 1e-3);
    expect("fibonacci G bottom", spec.exponents[1], -phi_log, 1e-3);
    let bl = &cfgs[2];
    let bsys = Arc::new(bl.system.clone());
    let x = sequence(bl, 1, n + 1);
    let trace = trace_exponent(&bsys, &x, n).unwrap().exponents[0];
    expect("block2d trace", trace, 4f64.ln(), 1e-3);
    let (_, g) = group_and_g(&bsys, &bl.sampler.support(), 3).unwrap();
    let factors: Vec<_> = (1..=n).map(|k| g[x.at(k)].clone()).collect();
    let top = lyapunov_spectrum("G", &factors).unwrap().exponents[0];
    expect("block2d d*G top", 2.0 * top, trace, 1e-3);
    if fail.is_empty() {
        Ok(notes.join(", "))
    } else {
        Err(fail.join("; "))
    }
}

fn c6_collapse_vs_gap() -> Check {
    let (_, _, _, t) = tmpd_reference();
    let f = half_step(2);
    let radii = octaves(8.0, 16.0, 4);
    let at_one = twisted_series(&t, &f, [1.0, 0.0], [0.0, 0.0], &radii, IntegralMethod::Cocycle, 1).unwrap();
    let s1 = at_one.fit(1).unwrap().slope;
    let mut worst: f64 = f64::NEG_INFINITY;
    for j in 1..=20 {
        let lam = (j as f64 * 2f64.sqrt()).fract() * 0.9 + 0.05;
        let s = twisted_series(&t, &f, [lam, 0.0], [0.0, 0.0], &radii, IntegralMethod::Cocycle, 1).unwrap();
        worst = worst.max(s.fit(1).unwrap().slope);
    }
    let detail = format!("slope at 1 = {s1:.4}, largest generic slope {worst:.3}");
    if (s1 - 1.0).abs() <= 0.02 && worst <= 0.995 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c7_veech_fixtures() -> Check {
    let cfg = &configs()[0];
    let sys = Arc::new(cfg.system.clone());
    let (group, g) = group_and_g(&sys, &[0, 1], 3).unwrap();
    let w = parse_word("11222").unwrap();
    let n = 1000;
    let x = sequence(cfg, 1, n + w.len() + 1);
    let one = DualVector::new(sys.basis(), &group, [1.0, 0.0], true);
    let third = DualVector::new(sys.basis(), &group, [1.0 / 3.0, 0.0], true);
    if !one.is_exact() || !third.is_exact() {
        return Err("dual vectors are not exact".into());
    }
    let a = veech_density(&one, &g, &x, &w, 2, 0.1, n).unwrap();
    if a.records.iter().any(|r| r.density != 1.0) {
        return Err("D_N drops below 1 at lambda = 1".into());
    }
    for rho in [0.0, 0.1, 0.3333] {
        let b = veech_density(&third, &g, &x, &w, 2, rho, n).unwrap();
        if b.records.iter().any(|r| r.density != 0.0) {
            return Err(format!("D_N leaves 0 at lambda = 1/3, rho = {rho}"));
        }
    }
    Ok(format!("{} returns: D_N = 1 at 1 and 0 at 1/3", a.records.len()))
}

fn c8_positively_simple_and_postal() -> Check {
    let sys = Arc::new(golden::tmpd());
    let w = parse_word("1122").unwrap();
    let simple = is_simple(&w);
    let splits = all_splits(&sys, &w).unwrap();
    let (group, _) = group_and_g(&sys, &[0, 1], 3).unwrap();
    let mut notes = vec![format!("simple {simple}")];
    let mut ok = false;
    for c in &splits {
        let postal = postal_check(&sys, &w[c.split..], &group).unwrap();
        notes.push(format!(
            "split {}: min Q- {} min Q+ {} postal {}",
            c.split,
            c.q_minus.min_entry(),
            c.q_plus.min_entry(),
            postal.postal
        ));
        ok |= simple && c.positively_simple && postal.postal;
    }
    if ok {
        Ok(notes.join("; "))
    } else {
        Err(format!("no split has all Q entries >= 2 with a postal tail ({})", notes.join("; ")))
    }
}

fn c9_addresses_and_words() -> Check {
    let mut report = Vec::new();
    // supertile level and search radius per system, keeping each supertile under the enumeration cap
    for (cfg, (k, radius)) in configs().into_iter().zip([(12, 600.0), (16, 700.0), (6, 20.0)]) {
        let sys = Arc::new(cfg.system.clone());
        let x = sequence(&cfg, 9, 40);
        let hier = Hierarchy::new(sys.clone(), x, k).unwrap();
        let set = enumerate_return_vectors(&hier, k, radius).unwrap();
        let mut vs: Vec<_> = set.all().cloned().collect();
        vs.sort_by(|a, b| a.coords().cmp(b.coords()));
        vs.dedup();
        if vs.len() < 1000 {
            return Err(format!("{}: only {} return vectors", cfg.name, vs.len()));
        }
        let group = group_basis(sys.basis(), vs.iter()).unwrap();
        for v in vs.iter().take(1000) {
            let alpha = group.address(v).unwrap();
            if &group.vector(&alpha).unwrap() != v {
                return Err(format!("{}: round trip fails at {:?}", cfg.name, v.coords()));
            }
        }
        let mut r = rng(9);
        for _ in 0..50 {
            let len = r.gen_range(1..8);
            let w: Vec<usize> = (0..len).map(|_| r.gen_range(0..sys.rule_count())).collect();
            let whole = word_g_matrix(sys.basis(), &group, &w).unwrap();
            let mut prod = tilecocycle::intmat::IntMatrix::identity(group.rank);
            for &l in &w {
                prod = prod.checked_mul(&g_matrix(sys.basis(), l, &group, &group).unwrap()).unwrap();
            }
            if prod != whole {
                return Err(format!("{}: word G differs from the letter product for {w:?}", cfg.name));
            }
        }
        report.push(format!("{} rank {}", cfg.name, group.rank));
    }
    Ok(format!("1000 round trips and 50 words per system ({})", report.join(", ")))
}

fn c10_decomposition() -> Check {
    let cfgs = configs();
    let mut max_ratio: f64 = 0.0;
    let mut windows = 0;
    for t in 0..100u64 {
        let cfg = &cfgs[t as usize % 3];
        let sys = Arc::new(cfg.system.clone());
        let dim = sys.dim();
        let levels = if dim == 2 { 16 } else { 30 };
        let x = sequence(cfg, 1000 + t, levels + 4);
        let hier = Arc::new(Hierarchy::new(sys, x, levels).unwrap());
        let mut r = rng(1000 + t);
        let tiling = Tiling::random(hier, levels, &mut r).unwrap();
        let center = random_point(&mut r, dim, -5.0, 5.0);
        let r0 = 2f64.powf(r.gen_range(1.0..if dim == 2 { 4.0 } else { 6.0 }));
        for step in 0..5 {
            let radius = r0 * 10f64.powf(step as f64 / 4.0);
            let region = Region::new(center, radius).unwrap();
            let dec = tiling.decompose(&region, 0).map_err(|e| e.to_string())?;
            let mut total: u128 = 0;
            tiling.for_each_tile(&region, 0, |_, _| {
                total += 1;
                Ok(())
            })
            .unwrap();
            if dec.covered_tiles + dec.partial.len() as u128 != total {
                return Err(format!("{} trial {t}: {} + {} != {total}", cfg.name, dec.covered_tiles, dec.partial.len()));
            }
            let m = dec.boundary_ratio.iter().copied().fold(0.0, f64::max);
            if !m.is_finite() {
                return Err(format!("{} trial {t}: boundary ratio is not finite", cfg.name));
            }
            max_ratio = max_ratio.max(m);
            windows += 1;
        }
    }
    Ok(format!("{windows} windows conserve tiles; boundary ratio at most {max_ratio:.2} over a decade of R"))
}

fn c11_spectral_chain() -> Check {
    let (sys, x, hier, t) = tmpd_reference();
    let f = half_step(2);
    let radii = octaves(4.0, 11.0, 4);
    let rs: Vec<f64> = (6..=13).map(|k| 2f64.powi(-k)).collect();
    let vw = invariant_weights(&sys, &x, 60, 48, 1e-9).map_err(|e| e.to_string())?;
    let top = vw.volume_weights(&[hier.volume(60, 0), hier.volume(60, 1)]);
    let mut lines = Vec::new();
    let mut fails = 0;
    for j in 1..=5 {
        let lam = (j as f64 * 3f64.sqrt()).fract() * 0.9 + 0.05;
        let s = twisted_series(&t, &f, [lam, 0.0], [0.0, 0.0], &radii, IntegralMethod::Cocycle, 1).unwrap();
        let alpha = s.fit(1).unwrap().alpha;
        let bounds: Vec<f64> = rs
            .iter()
            .map(|&r| spectral_bound(&hier, &f, [lam, 0.0], r, 128, 60, Some(&top), 7).unwrap().bound)
            .collect();
        let xs: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = bounds.iter().map(|b| b.ln()).collect();
        let sl = slope(&xs, &ys);
        let pass = sl >= 2.0 * alpha - 0.2;
        fails += !pass as usize;
        lines.push(format!("{lam:.3}: slope {sl:.2} vs {:.2}{}", 2.0 * alpha - 0.2, if pass { "" } else { " (short)" }));
    }
    let detail = lines.join(", ");
    if fails == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c12_deformation() -> Check {
    let (sys, x, _, t) = tmpd_reference();
    let f = half_step(2);
    let radii = octaves(8.0, 16.0, 4);
    let mut r = rng(12);
    let theta: Vec<_> = (1..=20).map(|k| word_matrix(&sys, &x.plus[..k]).unwrap()).collect();
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..10 {
        let s: f64 = r.gen_range(0.5..2.0);
        let d = apply_deformation(&sys, &x, &Deformation::Lengths(vec![1.0, s]), 40).map_err(|e| e.to_string())?;
        let same = combinatorics(&d.reference, &[0, 1], 3).unwrap() == combinatorics(&d.deformed, &[0, 1], 3).unwrap()
            && (1..=20).all(|k| word_matrix(&d.deformed, &x.plus[..k]).unwrap() == theta[k - 1]);
        if !same {
            return Err(format!("s = {s:.4}: combinatorial data changed"));
        }
        let h = Arc::new(d.hierarchy(x.clone(), 60).unwrap());
        let td = Tiling::new(h, t.path().clone()).unwrap();
        let series = twisted_series(&td, &f, [1.0, 0.0], [0.0, 0.0], &radii, IntegralMethod::Cocycle, 1).unwrap();
        worst = worst.max(series.fit(1).unwrap().slope);
    }
    let detail = format!("10 lengths, combinatorics identical, largest slope at 1 = {worst:.3}");
    if worst < 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, 5, c1_zero_parameter_product),
        (2, 120, c2_methods_agree),
        (3, 30, c3_domination),
        (4, 60, c4_renormalization),
        (5, 60, c5_lyapunov),
        (6, 300, c6_collapse_vs_gap),
        (7, 1, c7_veech_fixtures),
        (8, 1, c8_positively_simple_and_postal),
        (9, 10, c9_addresses_and_words),
        (10, 120, c10_decomposition),
        (11, 300, c11_spectral_chain),
        (12, 600, c12_deformation),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let late = took > Duration::from_secs(budget);
        let (status, detail) = match (&out, late) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {budget} s budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        failed += (status == "FAIL") as usize;
        println!("criterion {id}: {status} [{:.2} s / {budget} s] {detail}", took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
