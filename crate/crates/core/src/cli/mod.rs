//! The `tilecocycle` command line: parses a run config, runs one command
//! on a fixed-size worker pool and writes CSV and JSON outputs with a run
//! manifest.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cocycles::{invariant_weights, lyapunov_spectrum, trace_exponent, volume_exponent};
use crate::deformation::{apply_deformation, combinatorics, group_and_g};
use crate::geometry::{Point, Region};
use crate::hierarchy::{Hierarchy, Tiling};
use crate::substitution::SubstitutionSystem;
use crate::symbolic::{all_splits, SymbolSequence};
use crate::twisted::{
    spectral_bound, twisted_series, veech_density, DualVector, GrowthFit, IntegralMethod, Profile, StepPiece,
    TlcFunction, TwistedIntegralSeries,
};
use crate::Error;

use config::{parse_config, ConfigErrors, LambdaSpec, Method, RunConfig};
use output::{num, versions, sha256_hex, write_atomic, Artifact, Manifest, OutputEntry, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Structural checks on the substitution system.
    Validate,
    /// Trace and return-vector Lyapunov exponents.
    Exponents,
    /// Twisted ergodic integrals over a grid of radii, with growth fits.
    Twist,
    /// Veech density of the transported dual vector.
    Veech,
    /// Upper estimates of the spectral measure of small balls.
    SpectralBound,
    /// Shape deformation: asymptotic cycle, combinatorics and twisted growth.
    Deform,
    /// Supertile decomposition of growing windows.
    Decompose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Exponents => "exponents",
            Command::Twist => "twist",
            Command::Veech => "veech",
            Command::SpectralBound => "spectral-bound",
            Command::Deform => "deform",
            Command::Decompose => "decompose",
        }
    }
}

#[derive(Parser, Debug, Clone)]
#[command(name = "tilecocycle", version, about = "Renormalization cocycles and twisted integrals of random substitution tilings")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads. Falls back to the config, then to the core count.
    #[arg(long, env = "TILECOCYCLE_WORKERS")]
    pub workers: Option<usize>,
    /// Overrides the seed of the config and of its sampler.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Machine-readable failure, printed to stdout and written as `error.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub error: &'static str,
    pub message: String,
    pub details: Vec<Value>,
}

impl Failure {
    fn new(error: &'static str, message: impl Into<String>) -> Self {
        Failure { error, message: message.into(), details: Vec::new() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new("computation", e.to_string())
    }
}

impl From<ConfigErrors> for Failure {
    fn from(e: ConfigErrors) -> Self {
        Failure {
            error: "config",
            message: format!("{} problem(s) in the config", e.0.len()),
            details: e.0.iter().map(|c| json!({ "pointer": c.pointer, "message": c.message })).collect(),
        }
    }
}

/// What a successful command hands back for writing.
struct Outcome {
    artifacts: Vec<Artifact>,
}

/// Parses the process arguments and runs. Returns the exit code.
pub fn main() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => run(&cli),
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let f = Failure::new("usage", e.to_string().trim().to_string());
            println!("{}", serde_json::to_string(&f).expect("failure serializes"));
            1
        }
    }
}

/// Runs one command and writes its outputs under `cli.out`.
pub fn run(cli: &Cli) -> i32 {
    let start = Instant::now();
    let text = std::fs::read(&cli.config);
    let config_sha256 = text.as_ref().map(|t| sha256_hex(t)).unwrap_or_default();
    let mut seeds = (None, None);
    let mut workers = 1;
    let result = text
        .map_err(|e| Failure::new("io", format!("{}: {e}", cli.config.display())))
        .and_then(|t| String::from_utf8(t).map_err(|_| Failure::new("config", "config is not UTF-8")))
        .and_then(|t| prepare(cli, &t))
        .and_then(|(cfg, w)| {
            seeds = (Some(cfg.seed), Some(cfg.sampler.seed));
            workers = w;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Failure::new("io", e.to_string()))?;
            pool.install(|| execute(cli.command, &cfg, &config_sha256))
        });
    let mut manifest = Manifest {
        command: cli.command.name().into(),
        status: "ok".into(),
        config_path: cli.config.display().to_string(),
        config_sha256,
        seed: seeds.0,
        sampler_seed: seeds.1,
        workers,
        versions: versions(),
        wall_time_seconds: 0.0,
        outputs: Vec::new(),
    };
    let (artifacts, failure) = match result {
        Ok(o) => (o.artifacts, None),
        Err(f) => (vec![Artifact::json("error.json", &f)], Some(f)),
    };
    if failure.is_some() {
        manifest.status = "error".into();
    }
    match write_all(&cli.out, &artifacts, &mut manifest, start) {
        Ok(()) => {}
        Err(e) => {
            let f = Failure::new("io", format!("{}: {e}", cli.out.display()));
            println!("{}", serde_json::to_string(&f).expect("failure serializes"));
            return 1;
        }
    }
    match failure {
        None => 0,
        Some(f) => {
            println!("{}", serde_json::to_string(&f).expect("failure serializes"));
            1
        }
    }
}

fn write_all(dir: &Path, artifacts: &[Artifact], manifest: &mut Manifest, start: Instant) -> std::io::Result<()> {
    for a in artifacts {
        write_atomic(dir, &a.name, &a.bytes)?;
        manifest.outputs.push(OutputEntry { file: a.name.clone(), bytes: a.bytes.len(), sha256: sha256_hex(&a.bytes) });
    }
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    let m = Artifact::json("manifest.json", manifest);
    write_atomic(dir, &m.name, &m.bytes)
}

fn prepare(cli: &Cli, text: &str) -> Result<(RunConfig, usize), Failure> {
    let mut cfg = parse_config(text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.sampler.seed = s;
    }
    let workers = cli
        .workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Failure::new("usage", "worker count must be positive"));
    }
    Ok((cfg, workers))
}

fn execute(command: Command, cfg: &RunConfig, hash: &str) -> Result<Outcome, Failure> {
    let ctx = Ctx { cfg, sys: Arc::new(cfg.system.clone()), support: cfg.sampler.support(), hash };
    let artifacts = match command {
        Command::Validate => ctx.validate()?,
        Command::Exponents => ctx.exponents()?,
        Command::Twist => ctx.twist()?,
        Command::Veech => ctx.veech()?,
        Command::SpectralBound => ctx.spectral()?,
        Command::Deform => ctx.deform()?,
        Command::Decompose => ctx.decompose()?,
    };
    Ok(Outcome { artifacts })
}

/// The half-step function: one on the left half of each tile, zero on the
/// right. Its transform does not vanish at integer parameters.
pub fn default_function(types: usize) -> TlcFunction {
    let piece = StepPiece { lo: [0.0, 0.0], hi: [0.5, 1.0], weight: Complex64::new(1.0, 0.0) };
    TlcFunction { level: 0, profiles: vec![Profile::Step(vec![piece]); types] }
}

/// Seeded stream for one purpose of the run.
fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

const LAMBDA_STREAM: u64 = 11;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    sys: Arc<SubstitutionSystem>,
    support: Vec<usize>,
    hash: &'a str,
}

#[derive(Serialize)]
struct FitRecord {
    lambda: Point,
    method: &'static str,
    seed: u64,
    fit: Option<GrowthFit>,
    error: Option<String>,
}

impl Ctx<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn lambdas(&self) -> Vec<Point> {
        match &self.cfg.experiment.lambdas {
            LambdaSpec::Explicit(v) => v.clone(),
            LambdaSpec::Grid { count, lo, hi } => {
                let mut rng = stream(self.cfg.seed, LAMBDA_STREAM);
                let d = self.dim();
                (0..*count)
                    .map(|_| {
                        let mut p = [0.0; 2];
                        for c in p.iter_mut().take(d) {
                            *c = lo + (hi - lo) * rng.gen::<f64>();
                        }
                        p
                    })
                    .collect()
            }
        }
    }

    fn function(&self) -> Result<TlcFunction, Failure> {
        let f = self.cfg.experiment.function.clone().unwrap_or_else(|| default_function(self.sys.types()));
        f.check(self.sys.types())?;
        Ok(f)
    }

    fn sequence(&self, len: usize) -> Result<SymbolSequence, Failure> {
        Ok(self.cfg.sampler.sample_sequence(len)?)
    }

    fn methods(&self) -> Vec<IntegralMethod> {
        match self.cfg.experiment.method {
            Method::Cocycle => vec![IntegralMethod::Cocycle],
            Method::Brute => vec![IntegralMethod::Brute],
            Method::Both => vec![IntegralMethod::Cocycle, IntegralMethod::Brute],
        }
    }

    fn lambda_columns(&self, prefix: &str) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("{prefix}_{i}")).collect()
    }

    fn lambda_cells(&self, l: Point) -> Vec<String> {
        l[..self.dim()].iter().map(|&v| num(v)).collect()
    }

    fn validate(&self) -> Result<Vec<Artifact>, Failure> {
        let report = self.sys.validate(&self.support, self.cfg.experiment.n_max);
        if !report.passed() {
            let mut f = Failure::new("validation", "the substitution system failed validation");
            f.details = report.failures().map(|c| json!({ "check": c.name, "detail": c.detail })).collect();
            return Err(f);
        }
        let doc = json!({ "config_sha256": self.hash, "seed": self.cfg.seed, "name": self.cfg.name, "report": report });
        Ok(vec![Artifact::json("validate.json", &doc)])
    }

    fn exponents(&self) -> Result<Vec<Artifact>, Failure> {
        let n = self.cfg.experiment.n_steps;
        let x = self.sequence(n + 1)?;
        let trace = trace_exponent(&self.sys, &x, n)?;
        let (_, g) = group_and_g(&self.sys, &self.support, 3)?;
        let factors: Vec<_> = (1..=n).map(|k| g[x.at(k)].clone()).collect();
        let spec = lyapunov_spectrum("G", &factors)?;
        let vol = volume_exponent(&self.sys, &self.cfg.sampler);
        let rec = |name: String, value: f64, stderr: f64| json!({ "name": name, "value": value, "stderr": stderr, "n": n });
        let mut records = vec![rec("trace".into(), trace.exponents[0], trace.stderr[0])];
        for (i, (v, s)) in spec.exponents.iter().zip(&spec.stderr).enumerate() {
            records.push(rec(format!("G_{}", i + 1), *v, *s));
        }
        let d = self.dim() as f64;
        records.push(rec("d*G_1".into(), d * spec.exponents[0], d * spec.stderr[0]));
        records.push(rec("volume".into(), vol, 0.0));
        Ok(vec![Artifact::json("exponents.json", &records)])
    }

    fn hierarchy(&self, levels: usize) -> Result<(Arc<Hierarchy>, SymbolSequence), Failure> {
        let x = self.sequence(levels + 64)?;
        Ok((Arc::new(Hierarchy::new(self.sys.clone(), x.clone(), levels)?), x))
    }

    /// Tilings of one hierarchy, one seed each.
    fn tilings(&self, hier: &Arc<Hierarchy>) -> Result<Vec<(u64, Tiling)>, Failure> {
        (0..self.cfg.experiment.tilings as u64)
            .map(|t| {
                let seed = self.cfg.seed.wrapping_add(t);
                let mut rng = stream(seed, 3);
                Ok((seed, Tiling::random(hier.clone(), hier.levels(), &mut rng)?))
            })
            .collect()
    }

    /// Series for every tiling, parameter and method, in that order.
    fn series(&self, tilings: &[(u64, Tiling)], f: &TlcFunction) -> Result<Vec<TwistedIntegralSeries>, Failure> {
        let e = &self.cfg.experiment;
        let lambdas = self.lambdas();
        let methods = self.methods();
        let mut jobs: Vec<(usize, Point, IntegralMethod)> = Vec::new();
        for t in 0..tilings.len() {
            for &l in &lambdas {
                jobs.extend(methods.iter().map(|&m| (t, l, m)));
            }
        }
        let out = jobs
            .par_iter()
            .map(|&(t, l, m)| twisted_series(&tilings[t].1, f, l, e.center, &e.radii, m, tilings[t].0))
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(out)
    }

    fn twist_table(&self, series: &[TwistedIntegralSeries]) -> (Table, Vec<FitRecord>) {
        let mut head = self.lambda_columns("lambda");
        head.extend(["R", "re", "im", "abs", "method", "seed"].map(String::from));
        let mut table = Table::new(head);
        let mut fits = Vec::new();
        for s in series {
            for (r, z) in s.radii.iter().zip(&s.values) {
                let mut row = self.lambda_cells(s.lambda);
                row.extend([num(*r), num(z.re), num(z.im), num(z.norm()), s.method.as_str().into(), s.seed.to_string()]);
                table.push(row);
            }
            let (fit, error) = match s.fit(self.dim()) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            fits.push(FitRecord { lambda: s.lambda, method: s.method.as_str(), seed: s.seed, fit, error });
        }
        (table, fits)
    }

    fn twist(&self) -> Result<Vec<Artifact>, Failure> {
        let (hier, _) = self.hierarchy(self.cfg.experiment.horizon)?;
        let f = self.function()?;
        let tilings = self.tilings(&hier)?;
        let series = self.series(&tilings, &f)?;
        let (table, fits) = self.twist_table(&series);
        let average = f.average(&hier, 48).ok().map(|z| [z.re, z.im]);
        let doc = json!({
            "config_sha256": self.hash,
            "seed": self.cfg.seed,
            "dim": self.dim(),
            "function_average": average,
            "fits": fits,
        });
        Ok(vec![Artifact::csv("twist.csv", &table), Artifact::json("twist-fits.json", &doc)])
    }

    fn word(&self) -> Result<(Vec<usize>, usize), Failure> {
        let e = &self.cfg.experiment;
        let w = e.word.clone().ok_or_else(|| Failure::new("config", "/experiment/word is required for this command"))?;
        let split = match e.split {
            Some(s) => s,
            None => all_splits(&self.sys, &w)?
                .into_iter()
                .find(|c| c.positively_simple)
                .map_or(w.len() / 2, |c| c.split),
        };
        Ok((w, split))
    }

    fn veech(&self) -> Result<Vec<Artifact>, Failure> {
        let e = &self.cfg.experiment;
        let (w, split) = self.word()?;
        let n = e.returns_horizon;
        let x = self.sequence(n + w.len() + 1)?;
        let (group, g) = group_and_g(&self.sys, &self.support, 3)?;
        let lambdas = self.lambdas();
        let runs = lambdas
            .par_iter()
            .map(|&l| veech_density(&DualVector::new(self.sys.basis(), &group, l, e.exact), &g, &x, &w, split, e.rho, n))
            .collect::<crate::Result<Vec<_>>>()?;
        let mut out = Vec::new();
        let mut summary = Vec::new();
        for (i, (l, s)) in lambdas.iter().zip(&runs).enumerate() {
            let mut t = Table::new(["j", "k_j", "dist", "indicator", "D_N"]);
            for r in &s.records {
                t.push(vec![r.j.to_string(), r.k.to_string(), num(r.dist), (r.indicator as u8).to_string(), num(r.density)]);
            }
            let name = format!("veech-{i:03}.csv");
            summary.push(json!({
                "lambda": l, "file": name, "exact": s.exact, "returns": s.records.len(), "final_density": s.final_density(),
            }));
            out.push(Artifact::csv(&name, &t));
        }
        let doc = json!({
            "config_sha256": self.hash, "seed": self.cfg.seed, "word": w.iter().map(|l| l + 1).collect::<Vec<_>>(),
            "split": split, "rho": e.rho, "horizon": n, "rank": group.rank, "series": summary,
        });
        out.push(Artifact::json("veech.json", &doc));
        Ok(out)
    }

    fn spectral(&self) -> Result<Vec<Artifact>, Failure> {
        let e = &self.cfg.experiment;
        let m = e.horizon;
        let (hier, x) = self.hierarchy(m)?;
        let vw = invariant_weights(&self.sys, &x, m, 48, 1e-9)?;
        let vols: Vec<f64> = (0..self.sys.types()).map(|i| hier.volume(m, i)).collect();
        let top = vw.volume_weights(&vols);
        let f = self.function()?;
        let mut head = self.lambda_columns("lambda");
        head.extend(["r", "R", "kernel_constant", "l2_estimate", "l2_stderr", "samples", "retries", "bound"].map(String::from));
        let mut table = Table::new(head);
        let mut slopes = Vec::new();
        for l in self.lambdas() {
            let mut pts = Vec::new();
            for &r in &e.r_values {
                let b = spectral_bound(&hier, &f, l, r, e.samples, m, Some(&top), self.cfg.seed)?;
                let mut row = self.lambda_cells(l);
                row.extend([
                    num(r),
                    num(b.radius),
                    num(b.kernel_constant),
                    num(b.l2_estimate),
                    num(b.l2_stderr),
                    b.samples.to_string(),
                    b.retries.to_string(),
                    num(b.bound),
                ]);
                table.push(row);
                if b.bound > 0.0 {
                    pts.push((r.ln(), b.bound.ln()));
                }
            }
            slopes.push(json!({ "lambda": l, "decay_slope": least_squares_slope(&pts) }));
        }
        let doc = json!({ "config_sha256": self.hash, "seed": self.cfg.seed, "top_weights": top, "slopes": slopes });
        Ok(vec![Artifact::csv("spectral-bound.csv", &table), Artifact::json("spectral-bound.json", &doc)])
    }

    fn deform(&self) -> Result<Vec<Artifact>, Failure> {
        let e = &self.cfg.experiment;
        let def = e.deformation.clone().ok_or_else(|| Failure::new("config", "/experiment/deformation is required for deform"))?;
        let word = e.word.as_ref().map(|_| self.word()).transpose()?;
        let len = (e.horizon + 64).max(word.as_ref().map_or(0, |(w, _)| e.returns_horizon + w.len() + 1));
        let x = self.sequence(len)?;
        let d = apply_deformation(&self.sys, &x, &def, 48)?;
        let same = combinatorics(&d.reference, &self.support, 3)? == combinatorics(&d.deformed, &self.support, 3)?;
        let lambdas = self.lambdas();
        let veech = match (&word, lambdas.first()) {
            (Some((w, split)), Some(&l)) => {
                let (a, b) = d.veech_routes(&x, l, w, *split, e.rho, e.returns_horizon)?;
                Some(json!({
                    "lambda": l,
                    "direct_final_density": a.final_density(),
                    "transported_final_density": b.final_density(),
                    "agree": a.records == b.records,
                }))
            }
            _ => None,
        };
        let hier = Arc::new(d.hierarchy(x.clone(), e.horizon)?);
        let f = self.function()?;
        let tilings = self.tilings(&hier)?;
        let series = self.series(&tilings, &f)?;
        let (table, fits) = self.twist_table(&series);
        let doc = json!({
            "config_sha256": self.hash,
            "seed": self.cfg.seed,
            "mode": def.mode(),
            "deformation": def,
            "cycle": d.cycle,
            "extended": d.extended,
            "outside": d.outside,
            "v_deformed": d.v_deformed,
            "combinatorics_identical": same,
            "veech": veech,
            "fits": fits,
        });
        Ok(vec![Artifact::csv("deform.csv", &table), Artifact::json("deform.json", &doc)])
    }

    fn decompose(&self) -> Result<Vec<Artifact>, Failure> {
        let e = &self.cfg.experiment;
        let (hier, _) = self.hierarchy(e.horizon)?;
        let tiling = Tiling::random(hier, e.horizon, &mut stream(self.cfg.seed, 3))?;
        let mut table = Table::new(
            ["R", "top_level", "whole", "partial", "covered_tiles", "total_tiles", "conserved", "y_fit", "max_boundary_ratio"],
        );
        let mut detail = Vec::new();
        for &r in &e.radii {
            let region = Region::new(e.center, r)?;
            let dec = tiling.decompose(&region, 0)?;
            let mut total: u128 = 0;
            tiling.for_each_tile(&region, 0, |_, _| {
                total += 1;
                Ok(())
            })?;
            let conserved = dec.covered_tiles + dec.partial.len() as u128 == total;
            let max_ratio = dec.boundary_ratio.iter().copied().fold(0.0, f64::max);
            table.push(vec![
                num(r),
                dec.top_level.to_string(),
                dec.whole.len().to_string(),
                dec.partial.len().to_string(),
                dec.covered_tiles.to_string(),
                total.to_string(),
                conserved.to_string(),
                num(dec.y_fit),
                num(max_ratio),
            ]);
            detail.push(json!({ "R": r, "kappa": dec.kappa, "boundary_ratio": dec.boundary_ratio }));
        }
        let doc = json!({ "config_sha256": self.hash, "seed": self.cfg.seed, "path": tiling.path(), "windows": detail });
        Ok(vec![Artifact::csv("decompose.csv", &table), Artifact::json("decompose.json", &doc)])
    }
}

/// Slope of the least-squares line through `pts`, if there are two or more.
fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
