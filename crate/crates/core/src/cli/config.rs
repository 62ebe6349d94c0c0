//! Run configuration: a JSON document holding the system, the sampler, a
//! seed and experiment parameters.
//!
//! Parsing walks the document by hand so that every problem is reported with
//! its JSON pointer, not just the first one serde would hit.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

use crate::deformation::Deformation;
use crate::geometry::{ExactVector, ModuleBasis, NumberSpec, Point, Prototile, RealNumber, Shape};
use crate::intmat::IntMatrix;
use crate::substitution::{Digit, SubstitutionRule, SubstitutionSystem};
use crate::symbolic::{parse_word, MeasureSampler, SamplerKind};
use crate::twisted::{Profile, StepPiece, TlcFunction};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", if self.pointer.is_empty() { "/" } else { &self.pointer }, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cocycle,
    Brute,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LambdaSpec {
    Explicit(Vec<Point>),
    /// `count` parameters drawn uniformly from `[lo, hi]^d` with the run seed.
    Grid { count: usize, lo: f64, hi: f64 },
}

/// Experiment parameters. Every field has a default so one config can drive
/// any command.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub horizon: usize,
    pub lambdas: LambdaSpec,
    pub radii: Vec<f64>,
    pub center: Point,
    pub function: Option<TlcFunction>,
    pub method: Method,
    pub tilings: usize,
    pub word: Option<Vec<usize>>,
    pub split: Option<usize>,
    pub rho: f64,
    pub returns_horizon: usize,
    pub exact: bool,
    pub deformation: Option<Deformation>,
    pub n_steps: usize,
    pub n_max: usize,
    pub samples: usize,
    pub r_values: Vec<f64>,
    pub return_level: usize,
    pub return_radius: f64,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub name: String,
    pub system: SubstitutionSystem,
    pub sampler: MeasureSampler,
    pub seed: u64,
    pub workers: Option<usize>,
    pub experiment: Experiment,
}

/// Error accumulator with pointer-aware accessors.
struct Walker {
    errors: Vec<ConfigError>,
}

impl Walker {
    fn err(&mut self, ptr: &str, msg: impl Into<String>) {
        self.errors.push(ConfigError { pointer: ptr.to_string(), message: msg.into() });
    }

    fn required<'v>(&mut self, v: &'v Value, ptr: &str, key: &str) -> Option<&'v Value> {
        match v.get(key) {
            Some(x) => Some(x),
            None => {
                self.err(&format!("{ptr}/{key}"), "missing field");
                None
            }
        }
    }

    fn int(&mut self, v: &Value, ptr: &str) -> Option<i64> {
        match v.as_i64() {
            Some(x) => Some(x),
            None => {
                self.err(ptr, "expected an integer");
                None
            }
        }
    }

    fn uint(&mut self, v: &Value, ptr: &str) -> Option<usize> {
        match v.as_u64() {
            Some(x) => Some(x as usize),
            None => {
                self.err(ptr, "expected a nonnegative integer");
                None
            }
        }
    }

    fn float(&mut self, v: &Value, ptr: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.err(ptr, "expected a number");
                None
            }
        }
    }

    fn array<'v>(&mut self, v: &'v Value, ptr: &str) -> Option<&'v Vec<Value>> {
        match v.as_array() {
            Some(a) => Some(a),
            None => {
                self.err(ptr, "expected an array");
                None
            }
        }
    }

    fn int_list(&mut self, v: &Value, ptr: &str) -> Option<Vec<i64>> {
        let a = self.array(v, ptr)?;
        let out: Vec<Option<i64>> = a.iter().enumerate().map(|(i, x)| self.int(x, &format!("{ptr}/{i}"))).collect();
        out.into_iter().collect()
    }

    fn float_list(&mut self, v: &Value, ptr: &str) -> Option<Vec<f64>> {
        let a = self.array(v, ptr)?;
        let out: Vec<Option<f64>> = a.iter().enumerate().map(|(i, x)| self.float(x, &format!("{ptr}/{i}"))).collect();
        out.into_iter().collect()
    }

    fn number(&mut self, v: &Value, ptr: &str) -> Option<RealNumber> {
        let spec: NumberSpec = match serde_json::from_value(v.clone()) {
            Ok(s) => s,
            Err(_) => {
                self.err(ptr, "expected an integer, {\"rational\": [n, d]} or {\"poly\": [...], \"root\": x}");
                return None;
            }
        };
        match spec.resolve() {
            Ok(r) => Some(r),
            Err(e) => {
                self.err(ptr, e.to_string());
                None
            }
        }
    }

    fn int_matrix(&mut self, v: &Value, ptr: &str) -> Option<IntMatrix> {
        let rows = self.array(v, ptr)?;
        let rows: Vec<Option<Vec<i64>>> =
            rows.iter().enumerate().map(|(i, r)| self.int_list(r, &format!("{ptr}/{i}"))).collect();
        let rows: Vec<Vec<i64>> = rows.into_iter().collect::<Option<_>>()?;
        match IntMatrix::from_rows(&rows) {
            Ok(m) => Some(m),
            Err(e) => {
                self.err(ptr, e.to_string());
                None
            }
        }
    }

    fn complex(&mut self, v: &Value, ptr: &str) -> Option<Complex64> {
        if let Some(x) = v.as_f64() {
            return Some(Complex64::new(x, 0.0));
        }
        match v.as_array().map(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>()) {
            Some(Some(p)) if p.len() == 2 => Some(Complex64::new(p[0], p[1])),
            _ => {
                self.err(ptr, "expected a number or [re, im]");
                None
            }
        }
    }

    fn point(&mut self, v: &Value, ptr: &str, dim: usize) -> Option<Point> {
        let xs = self.float_list(v, ptr)?;
        if xs.len() != dim {
            self.err(ptr, format!("expected {dim} coordinates, found {}", xs.len()));
            return None;
        }
        let mut p = [0.0; 2];
        p[..dim].copy_from_slice(&xs);
        Some(p)
    }
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let doc: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) if text.trim().is_empty() => {
            let _ = e;
            Value::Object(Default::default())
        }
        Err(e) => {
            return Err(ConfigErrors(vec![ConfigError { pointer: String::new(), message: format!("invalid JSON: {e}") }]))
        }
    };
    let mut w = Walker { errors: Vec::new() };
    if !doc.is_object() {
        w.err("", "expected a JSON object");
        return Err(ConfigErrors(w.errors));
    }
    let system = w.required(&doc, "", "system").and_then(|s| parse_system_value(&mut w, s, "/system"));
    let sampler_kind = w.required(&doc, "", "sampler").and_then(|s| parse_sampler(&mut w, s, "/sampler"));
    let seed = w.required(&doc, "", "seed").and_then(|s| match s.as_u64() {
        Some(x) => Some(x),
        None => {
            w.err("/seed", "expected a nonnegative integer");
            None
        }
    });
    let workers = match doc.get("workers") {
        Some(v) => match w.uint(v, "/workers") {
            Some(0) => {
                w.err("/workers", "must be at least 1");
                None
            }
            n => n,
        },
        None => None,
    };
    let experiment = match doc.get("experiment") {
        Some(e) if e.is_object() => Some(e.clone()),
        Some(_) => {
            w.err("/experiment", "expected an object");
            None
        }
        None => Some(Value::Object(Default::default())),
    };
    // checks that need the system run even when other top-level fields are broken
    let Some((name, system)) = system else {
        return Err(ConfigErrors(w.errors));
    };
    if let Some(kind) = &sampler_kind {
        let probe = MeasureSampler { kind: kind.clone(), seed: 0 };
        if let Err(e) = probe.validate(system.rule_count()) {
            w.err("/sampler", e.to_string().trim_start_matches("invalid sampler: ").to_string());
        }
    }
    let experiment = experiment.and_then(|exp| parse_experiment(&mut w, &exp, "/experiment", &system));
    match (sampler_kind, seed, experiment) {
        (Some(kind), Some(seed), Some(experiment)) if w.errors.is_empty() => {
            Ok(RunConfig { name, system, sampler: MeasureSampler { kind, seed }, seed, workers, experiment })
        }
        _ => Err(ConfigErrors(w.errors)),
    }
}

/// Parses only the `system` part of a document.
pub fn parse_system(text: &str) -> Result<(String, SubstitutionSystem), ConfigErrors> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        ConfigErrors(vec![ConfigError { pointer: String::new(), message: format!("invalid JSON: {e}") }])
    })?;
    let mut w = Walker { errors: Vec::new() };
    let (v, ptr) = match doc.get("system") {
        Some(s) => (s, "/system"),
        None => (&doc, ""),
    };
    match parse_system_value(&mut w, v, ptr) {
        Some(s) if w.errors.is_empty() => Ok(s),
        _ => Err(ConfigErrors(w.errors)),
    }
}

fn parse_system_value(w: &mut Walker, v: &Value, ptr: &str) -> Option<(String, SubstitutionSystem)> {
    if let Some(name) = v.as_str() {
        return match crate::golden::by_name(name) {
            Some(sys) => Some((name.to_string(), sys)),
            None => {
                w.err(ptr, format!("unknown bundled system {name:?}"));
                None
            }
        };
    }
    if !v.is_object() {
        w.err(ptr, "expected an object or the name of a bundled system");
        return None;
    }
    let name = v.get("name").and_then(Value::as_str).unwrap_or("unnamed").to_string();
    let dim = w.required(v, ptr, "dim").and_then(|d| w.uint(d, &format!("{ptr}/dim")));
    if let Some(d) = dim {
        if d != 1 && d != 2 {
            w.err(&format!("{ptr}/dim"), "dimension must be 1 or 2");
        }
    }
    let expansions: Option<Vec<RealNumber>> = w.required(v, ptr, "expansions").and_then(|e| {
        let p = format!("{ptr}/expansions");
        let a = w.array(e, &p)?;
        let xs: Vec<Option<RealNumber>> = a.iter().enumerate().map(|(i, x)| w.number(x, &format!("{p}/{i}"))).collect();
        xs.into_iter().collect()
    });

    // prototiles
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    let prototiles: Option<Vec<Prototile>> = w.required(v, ptr, "prototiles").and_then(|ps| {
        let p = format!("{ptr}/prototiles");
        let arr = w.array(ps, &p)?;
        if arr.is_empty() {
            w.err(&p, "at least one prototile is required");
        }
        let mut out = Vec::new();
        let mut ok = true;
        for (i, t) in arr.iter().enumerate() {
            let tp = format!("{p}/{i}");
            let label = match t.get("label").and_then(Value::as_str) {
                Some(l) => l.to_string(),
                None => {
                    w.err(&format!("{tp}/label"), "missing or non-string label");
                    ok = false;
                    continue;
                }
            };
            if labels.insert(label.clone(), i).is_some() {
                w.err(&format!("{tp}/label"), format!("duplicate label {label:?}"));
                ok = false;
            }
            let shape = if let Some(len) = t.get("length") {
                w.int_list(len, &format!("{tp}/length")).map(|c| Shape::Interval(ExactVector::from_slice(&c)))
            } else if let Some(cells) = t.get("cells") {
                let cp = format!("{tp}/cells");
                w.array(cells, &cp).and_then(|cs| {
                    let v: Vec<Option<[i64; 2]>> = cs
                        .iter()
                        .enumerate()
                        .map(|(k, c)| {
                            let l = w.int_list(c, &format!("{cp}/{k}"))?;
                            if l.len() != 2 {
                                w.err(&format!("{cp}/{k}"), "a cell has two coordinates");
                                return None;
                            }
                            Some([l[0], l[1]])
                        })
                        .collect();
                    v.into_iter().collect::<Option<Vec<_>>>().map(Shape::Cells)
                })
            } else {
                w.err(&tp, "prototile needs \"length\" or \"cells\"");
                None
            };
            match shape {
                Some(shape) => out.push(Prototile { label, shape }),
                None => ok = false,
            }
        }
        ok.then_some(out)
    });

    // rules
    let rules: Option<Vec<SubstitutionRule>> = w.required(v, ptr, "rules").and_then(|rs| {
        let p = format!("{ptr}/rules");
        let arr = w.array(rs, &p)?;
        if arr.is_empty() {
            w.err(&p, "at least one rule is required");
        }
        let mut out = Vec::new();
        let mut ok = true;
        for (l, r) in arr.iter().enumerate() {
            let rp = format!("{p}/{l}");
            let name = r.get("name").and_then(Value::as_str).map(str::to_string).unwrap_or_else(|| format!("{}", l + 1));
            let Some(digits) = w.required(r, &rp, "digits") else {
                ok = false;
                continue;
            };
            let Some(map) = digits.as_object() else {
                w.err(&format!("{rp}/digits"), "expected an object keyed by parent label");
                ok = false;
                continue;
            };
            let mut per_parent: Vec<Option<Vec<Digit>>> = vec![None; labels.len()];
            for (parent, list) in map {
                let dp = format!("{rp}/digits/{parent}");
                let Some(&pi) = labels.get(parent) else {
                    w.err(&dp, format!("undefined parent label {parent:?}"));
                    ok = false;
                    continue;
                };
                let Some(items) = w.array(list, &dp) else {
                    ok = false;
                    continue;
                };
                let mut ds = Vec::new();
                for (k, item) in items.iter().enumerate() {
                    let ip = format!("{dp}/{k}");
                    let pair = item.as_array().filter(|a| a.len() == 2);
                    let Some(pair) = pair else {
                        w.err(&ip, "expected [child label, offset]");
                        ok = false;
                        continue;
                    };
                    let child = match pair[0].as_str().and_then(|c| labels.get(c)) {
                        Some(&c) => c,
                        None => {
                            w.err(&format!("{ip}/0"), format!("undefined child label {}", pair[0]));
                            ok = false;
                            continue;
                        }
                    };
                    match w.int_list(&pair[1], &format!("{ip}/1")) {
                        Some(o) => ds.push(Digit { child, offset: ExactVector::from_slice(&o) }),
                        None => ok = false,
                    }
                }
                per_parent[pi] = Some(ds);
            }
            let mut digits = Vec::new();
            for (pi, d) in per_parent.into_iter().enumerate() {
                match d {
                    Some(d) => digits.push(d),
                    None => {
                        let label = labels.iter().find(|(_, &i)| i == pi).map(|(l, _)| l.clone()).unwrap_or_default();
                        if !labels.is_empty() {
                            w.err(&format!("{rp}/digits"), format!("no children listed for parent {label:?}"));
                        }
                        ok = false;
                    }
                }
            }
            out.push(SubstitutionRule { name, digits });
        }
        ok.then_some(out)
    });

    let (Some(dim), Some(expansions), Some(prototiles), Some(rules)) = (dim, expansions, prototiles, rules) else {
        return None;
    };
    if dim != 1 && dim != 2 {
        return None;
    }
    if expansions.len() != rules.len() {
        w.err(
            &format!("{ptr}/expansions"),
            format!("{} expansions for {} rules", expansions.len(), rules.len()),
        );
        return None;
    }
    let basis = match v.get("basis") {
        Some(b) => {
            let bp = format!("{ptr}/basis");
            let emb = w.required(b, &bp, "embedding").and_then(|e| {
                let ep = format!("{bp}/embedding");
                let arr = w.array(e, &ep)?;
                let rows: Vec<Option<Vec<RealNumber>>> = arr
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let rp = format!("{ep}/{i}");
                        let xs = w.array(row, &rp)?;
                        let v: Vec<Option<RealNumber>> =
                            xs.iter().enumerate().map(|(a, x)| w.number(x, &format!("{rp}/{a}"))).collect();
                        v.into_iter().collect()
                    })
                    .collect();
                rows.into_iter().collect::<Option<Vec<_>>>()
            });
            let mult = w.required(b, &bp, "mult_tables").and_then(|m| {
                let mp = format!("{bp}/mult_tables");
                let arr = w.array(m, &mp)?;
                let ms: Vec<Option<IntMatrix>> =
                    arr.iter().enumerate().map(|(i, x)| w.int_matrix(x, &format!("{mp}/{i}"))).collect();
                ms.into_iter().collect::<Option<Vec<_>>>()
            });
            let (Some(emb), Some(mult)) = (emb, mult) else { return None };
            ModuleBasis::new(dim, emb, mult, expansions)
        }
        None => {
            let ints: Option<Vec<i64>> = expansions
                .iter()
                .map(|e| e.rational.filter(|r| r.is_integer()).map(|r| r.to_integer()))
                .collect();
            match ints {
                Some(q) => ModuleBasis::integer(dim, &q),
                None => {
                    w.err(&format!("{ptr}/basis"), "non-integer expansions need an explicit basis");
                    return None;
                }
            }
        }
    };
    let basis = match basis {
        Ok(b) => b,
        Err(e) => {
            w.err(&format!("{ptr}/basis"), e.to_string());
            return None;
        }
    };
    match SubstitutionSystem::new(basis, prototiles, rules) {
        Ok(s) => Some((name, s)),
        Err(e) => {
            w.err(ptr, e.to_string());
            None
        }
    }
}

fn parse_sampler(w: &mut Walker, v: &Value, ptr: &str) -> Option<SamplerKind> {
    let kind = w.required(v, ptr, "kind")?;
    match kind.as_str() {
        Some("bernoulli") => {
            let p = w.required(v, ptr, "p").and_then(|p| w.float_list(p, &format!("{ptr}/p")))?;
            Some(SamplerKind::Bernoulli { p })
        }
        Some("markov") => {
            let matrix = w.required(v, ptr, "matrix").and_then(|m| {
                let mp = format!("{ptr}/matrix");
                let rows = w.array(m, &mp)?;
                let r: Vec<Option<Vec<f64>>> =
                    rows.iter().enumerate().map(|(i, r)| w.float_list(r, &format!("{mp}/{i}"))).collect();
                r.into_iter().collect::<Option<Vec<_>>>()
            });
            let initial = w.required(v, ptr, "initial").and_then(|p| w.float_list(p, &format!("{ptr}/initial")));
            Some(SamplerKind::Markov { matrix: matrix?, initial: initial? })
        }
        Some("word") => {
            let word = w.required(v, ptr, "word")?;
            match word.as_str().map(parse_word) {
                Some(Ok(word)) => Some(SamplerKind::Word { word }),
                Some(Err(e)) => {
                    w.err(&format!("{ptr}/word"), e.to_string());
                    None
                }
                None => {
                    w.err(&format!("{ptr}/word"), "expected a digit string such as \"12\"");
                    None
                }
            }
        }
        _ => {
            w.err(&format!("{ptr}/kind"), "expected \"bernoulli\", \"markov\" or \"word\"");
            None
        }
    }
}

fn parse_function(w: &mut Walker, v: &Value, ptr: &str, sys: &SubstitutionSystem) -> Option<TlcFunction> {
    let dim = sys.dim();
    let level = match v.get("level") {
        Some(l) => w.uint(l, &format!("{ptr}/level"))?,
        None => 0,
    };
    let pp = format!("{ptr}/profiles");
    let profiles = w.required(v, ptr, "profiles")?;
    let arr = w.array(profiles, &pp)?;
    if arr.len() != sys.types() {
        w.err(&pp, format!("{} profiles for {} prototiles", arr.len(), sys.types()));
        return None;
    }
    let mut out = Vec::new();
    for (i, p) in arr.iter().enumerate() {
        let ip = format!("{pp}/{i}");
        if let Some(c) = p.get("indicator") {
            out.push(Profile::Indicator(w.complex(c, &format!("{ip}/indicator"))?));
        } else if let Some(steps) = p.get("step") {
            let sp = format!("{ip}/step");
            let pieces = w.array(steps, &sp)?;
            let mut ps = Vec::new();
            for (k, piece) in pieces.iter().enumerate() {
                let kp = format!("{sp}/{k}");
                let lo = w.required(piece, &kp, "lo").and_then(|x| w.point(x, &format!("{kp}/lo"), dim));
                let hi = w.required(piece, &kp, "hi").and_then(|x| w.point(x, &format!("{kp}/hi"), dim));
                let weight = w.required(piece, &kp, "weight").and_then(|x| w.complex(x, &format!("{kp}/weight")));
                let (lo, mut hi, weight) = (lo?, hi?, weight?);
                if dim == 1 {
                    hi[1] = 1.0;
                }
                if (0..dim).any(|a| !(0.0 <= lo[a] && lo[a] < hi[a] && hi[a] <= 1.0)) {
                    w.err(&kp, "pieces need 0 ≤ lo < hi ≤ 1 in fractional coordinates");
                    return None;
                }
                ps.push(StepPiece { lo, hi, weight });
            }
            out.push(Profile::Step(ps));
        } else {
            w.err(&ip, "profile needs \"indicator\" or \"step\"");
            return None;
        }
    }
    Some(TlcFunction { level, profiles: out })
}

fn parse_deformation(w: &mut Walker, v: &Value, ptr: &str, dim: usize) -> Option<Deformation> {
    if let Some(l) = v.get("lengths") {
        return w.float_list(l, &format!("{ptr}/lengths")).map(Deformation::Lengths);
    }
    if let Some(m) = v.get("linear") {
        let mp = format!("{ptr}/linear");
        let rows = w.array(m, &mp)?;
        if rows.len() != dim {
            w.err(&mp, format!("expected a {dim}x{dim} matrix"));
            return None;
        }
        let mut g = [[0.0; 2]; 2];
        for (i, r) in rows.iter().enumerate() {
            let p = w.point(r, &format!("{mp}/{i}"), dim)?;
            g[i] = p;
        }
        return Some(Deformation::Linear(g));
    }
    if let Some(m) = v.get("raw") {
        let mp = format!("{ptr}/raw");
        let cols = w.array(m, &mp)?;
        let v: Vec<Option<Point>> = cols.iter().enumerate().map(|(i, c)| w.point(c, &format!("{mp}/{i}"), dim)).collect();
        return v.into_iter().collect::<Option<Vec<_>>>().map(Deformation::Raw);
    }
    w.err(ptr, "deformation needs \"lengths\", \"linear\" or \"raw\"");
    None
}

fn parse_experiment(w: &mut Walker, v: &Value, ptr: &str, sys: &SubstitutionSystem) -> Option<Experiment> {
    let dim = sys.dim();
    let before = w.errors.len();
    let p = |k: &str| format!("{ptr}/{k}");
    let uint_or = |w: &mut Walker, k: &str, d: usize| v.get(k).and_then(|x| w.uint(x, &p(k))).unwrap_or(d);
    let float_or = |w: &mut Walker, k: &str, d: f64| v.get(k).and_then(|x| w.float(x, &p(k))).unwrap_or(d);

    let horizon = uint_or(w, "horizon", 48);
    if !(2..=120).contains(&horizon) {
        w.err(&p("horizon"), "horizon must lie in 2..=120");
    }
    let lambdas = match v.get("lambdas") {
        None => LambdaSpec::Grid { count: 16, lo: 0.05, hi: 0.95 },
        Some(l) if l.is_object() => {
            let count = l.get("count").and_then(|x| w.uint(x, &format!("{}/count", p("lambdas")))).unwrap_or(16);
            let lo = l.get("lo").and_then(|x| w.float(x, &format!("{}/lo", p("lambdas")))).unwrap_or(0.05);
            let hi = l.get("hi").and_then(|x| w.float(x, &format!("{}/hi", p("lambdas")))).unwrap_or(0.95);
            if !(lo < hi) || count == 0 {
                w.err(&p("lambdas"), "grid needs count ≥ 1 and lo < hi");
            }
            LambdaSpec::Grid { count, lo, hi }
        }
        Some(l) => {
            let lp = p("lambdas");
            let arr = w.array(l, &lp).cloned().unwrap_or_default();
            let pts: Vec<Point> = arr
                .iter()
                .enumerate()
                .filter_map(|(i, x)| {
                    if let Some(f) = x.as_f64() {
                        if dim == 1 {
                            return Some([f, 0.0]);
                        }
                    }
                    w.point(x, &format!("{lp}/{i}"), dim)
                })
                .collect();
            if pts.is_empty() {
                w.err(&lp, "at least one spectral parameter is required");
            }
            LambdaSpec::Explicit(pts)
        }
    };
    let radii = match v.get("radii") {
        None => (4..=12).map(|k| 2f64.powi(k)).collect(),
        Some(r) if r.is_object() => {
            let rp = p("radii");
            let lo = r.get("log2_lo").and_then(|x| w.float(x, &format!("{rp}/log2_lo"))).unwrap_or(4.0);
            let hi = r.get("log2_hi").and_then(|x| w.float(x, &format!("{rp}/log2_hi"))).unwrap_or(12.0);
            let per = r.get("per_octave").and_then(|x| w.uint(x, &format!("{rp}/per_octave"))).unwrap_or(1);
            if !(lo <= hi) || per == 0 {
                w.err(&rp, "radii need log2_lo ≤ log2_hi and per_octave ≥ 1");
                Vec::new()
            } else {
                let n = ((hi - lo) * per as f64).round() as usize;
                (0..=n).map(|k| 2f64.powf(lo + k as f64 / per as f64)).collect()
            }
        }
        Some(r) => w.float_list(r, &p("radii")).unwrap_or_default(),
    };
    if radii.iter().any(|&r| !(r > 0.0)) {
        w.err(&p("radii"), "radii must be positive");
    }
    let center = v.get("center").and_then(|c| w.point(c, &p("center"), dim)).unwrap_or([0.0; 2]);
    let function = v.get("function").and_then(|f| parse_function(w, f, &p("function"), sys));
    let method = match v.get("method").map(|m| m.as_str()) {
        None => Method::Cocycle,
        Some(Some("cocycle")) => Method::Cocycle,
        Some(Some("brute")) => Method::Brute,
        Some(Some("both")) => Method::Both,
        Some(_) => {
            w.err(&p("method"), "expected \"cocycle\", \"brute\" or \"both\"");
            Method::Cocycle
        }
    };
    let tilings = uint_or(w, "tilings", 1).max(1);
    let word = match v.get("word") {
        None => None,
        Some(x) => match x.as_str().map(parse_word) {
            Some(Ok(wd)) if !wd.is_empty() => {
                if let Some(&s) = wd.iter().find(|&&s| s >= sys.rule_count()) {
                    w.err(&p("word"), format!("symbol {} exceeds {} rules", s + 1, sys.rule_count()));
                }
                Some(wd)
            }
            _ => {
                w.err(&p("word"), "expected a nonempty digit string");
                None
            }
        },
    };
    let split = v.get("split").and_then(|x| w.uint(x, &p("split")));
    if let (Some(wd), Some(s)) = (&word, split) {
        if s > wd.len() {
            w.err(&p("split"), format!("split {s} exceeds word length {}", wd.len()));
        }
    }
    let rho = float_or(w, "rho", 0.1);
    if !(rho >= 0.0) {
        w.err(&p("rho"), "rho must be nonnegative");
    }
    let returns_horizon = uint_or(w, "returns_horizon", 1000);
    let exact = v.get("exact").and_then(Value::as_bool).unwrap_or(true);
    let deformation = v.get("deformation").and_then(|d| parse_deformation(w, d, &p("deformation"), dim));
    let n_steps = uint_or(w, "n_steps", 10_000);
    if n_steps < 100 {
        w.err(&p("n_steps"), "at least 100 steps are required");
    }
    let n_max = uint_or(w, "n_max", 8);
    let samples = uint_or(w, "samples", 64).max(1);
    let r_values = match v.get("r_values") {
        Some(r) => w.float_list(r, &p("r_values")).unwrap_or_default(),
        None => (3..=8).map(|k| 2f64.powi(-k)).collect(),
    };
    if r_values.iter().any(|&r| !(r > 0.0 && r < 0.5)) {
        w.err(&p("r_values"), "every r must lie in (0, 1/2)");
    }
    let return_level = uint_or(w, "return_level", 4);
    let return_radius = float_or(w, "return_radius", 8.0);

    (w.errors.len() == before).then_some(Experiment {
        horizon,
        lambdas,
        radii,
        center,
        function,
        method,
        tilings,
        word,
        split,
        rho,
        returns_horizon,
        exact,
        deformation,
        n_steps,
        n_max,
        samples,
        r_values,
        return_level,
        return_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_tmpd_parses() {
        let cfg = parse_config(crate::golden::TMPD_JSON).unwrap();
        assert_eq!(cfg.name, "tmpd");
        assert!(cfg.system.validate(&cfg.sampler.support(), 8).passed());
        assert_eq!(cfg.experiment.radii.len(), 13);
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let text = crate::golden::TMPD_JSON.replace("[0.5, 0.5]", "[0.5, 0.6]");
        let errs = parse_config(&text).unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert_eq!(errs.0[0].pointer, "/sampler");
        assert!(errs.0[0].message.contains("probabilities sum 1.1"), "{}", errs.0[0].message);
    }

    #[test]
    fn empty_document_lists_every_missing_field() {
        for text in ["", "{}"] {
            let errs = parse_config(text).unwrap_err();
            let ptrs: Vec<&str> = errs.0.iter().map(|e| e.pointer.as_str()).collect();
            assert_eq!(ptrs, vec!["/system", "/sampler", "/seed"]);
        }
    }

    #[test]
    fn nested_errors_are_all_reported() {
        let text = r#"{
            "system": {"dim": 3, "expansions": [2], "prototiles": [{"label": "a"}], "rules": [{"digits": {"z": []}}]},
            "sampler": {"kind": "dice"},
            "seed": -1
        }"#;
        let errs = parse_config(text).unwrap_err();
        let ptrs: Vec<&str> = errs.0.iter().map(|e| e.pointer.as_str()).collect();
        assert!(ptrs.contains(&"/system/dim"));
        assert!(ptrs.contains(&"/system/prototiles/0"));
        assert!(ptrs.contains(&"/system/rules/0/digits/z"));
        assert!(ptrs.contains(&"/sampler/kind"));
        assert!(ptrs.contains(&"/seed"));
    }

    #[test]
    fn bundled_names_resolve() {
        let text = r#"{"system": "fibonacci", "sampler": {"kind": "word", "word": "1"}, "seed": 3}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.system.types(), 2);
        assert_eq!(cfg.experiment.horizon, 48);
    }
}
