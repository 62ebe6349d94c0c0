//! Driving sequences: samplers for the measure on rule sequences, two-sided
//! sequences, simple words and return times.
//!
//! Rules are 0-based internally. Words are written with 1-based digits
//! ("1122") as in the usual notation and converted on input.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::intmat::IntMatrix;
use crate::substitution::SubstitutionSystem;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SamplerKind {
    Bernoulli { p: Vec<f64> },
    Markov { matrix: Vec<Vec<f64>>, initial: Vec<f64> },
    Word { word: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureSampler {
    pub kind: SamplerKind,
    pub seed: u64,
}

/// A two-sided sequence: `plus[k-1] = x_k` and `minus[k-1] = x_{-k}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SymbolSequence {
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
    pub sampler: String,
    pub seed: u64,
}

fn check_probabilities(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidSampler(format!("{what} is empty")));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidSampler(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidSampler(format!("probabilities sum {}", fmt_sum(s))));
    }
    Ok(())
}

fn fmt_sum(s: f64) -> String {
    let r = (s * 1e9).round() / 1e9;
    format!("{r}")
}

impl MeasureSampler {
    pub fn bernoulli(p: Vec<f64>, seed: u64) -> Self {
        MeasureSampler { kind: SamplerKind::Bernoulli { p }, seed }
    }

    pub fn word(word: Vec<usize>, seed: u64) -> Self {
        MeasureSampler { kind: SamplerKind::Word { word }, seed }
    }

    /// Checks the sampler against a system with `rules` rules.
    pub fn validate(&self, rules: usize) -> Result<()> {
        match &self.kind {
            SamplerKind::Bernoulli { p } => {
                if p.len() != rules {
                    return Err(Error::InvalidSampler(format!("{} probabilities for {rules} rules", p.len())));
                }
                check_probabilities(p, "probability vector")
            }
            SamplerKind::Markov { matrix, initial } => {
                if matrix.len() != rules || initial.len() != rules {
                    return Err(Error::InvalidSampler(format!("markov chain must have {rules} states")));
                }
                check_probabilities(initial, "initial distribution")?;
                for (i, row) in matrix.iter().enumerate() {
                    if row.len() != rules {
                        return Err(Error::InvalidSampler(format!("row {i} has {} entries", row.len())));
                    }
                    check_probabilities(row, &format!("row {i}"))?;
                }
                Ok(())
            }
            SamplerKind::Word { word } => {
                if word.is_empty() {
                    return Err(Error::InvalidSampler("explicit word is empty".into()));
                }
                if let Some(&s) = word.iter().find(|&&s| s >= rules) {
                    return Err(Error::InvalidSampler(format!("symbol {} exceeds {rules} rules", s + 1)));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SamplerKind::Bernoulli { .. } => "bernoulli",
            SamplerKind::Markov { .. } => "markov",
            SamplerKind::Word { .. } => "word",
        }
    }

    /// Rules that occur with positive probability.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = match &self.kind {
            SamplerKind::Bernoulli { p } => (0..p.len()).filter(|&i| p[i] > 0.0).collect(),
            SamplerKind::Markov { matrix, initial } => {
                let mut seen: Vec<bool> = initial.iter().map(|&x| x > 0.0).collect();
                loop {
                    let mut grew = false;
                    for i in 0..matrix.len() {
                        if seen[i] {
                            for j in 0..matrix.len() {
                                if matrix[i][j] > 0.0 && !seen[j] {
                                    seen[j] = true;
                                    grew = true;
                                }
                            }
                        }
                    }
                    if !grew {
                        break;
                    }
                }
                (0..seen.len()).filter(|&i| seen[i]).collect()
            }
            SamplerKind::Word { word } => word.clone(),
        };
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Expected value of `g` under the stationary law of one symbol.
    pub fn mean(&self, g: impl Fn(usize) -> f64) -> f64 {
        match &self.kind {
            SamplerKind::Bernoulli { p } => p.iter().enumerate().map(|(i, &w)| w * g(i)).sum(),
            SamplerKind::Word { word } => word.iter().map(|&s| g(s)).sum::<f64>() / word.len() as f64,
            SamplerKind::Markov { matrix, initial } => {
                // power iteration for the stationary vector
                let mut pi = initial.clone();
                for _ in 0..10_000 {
                    let mut next = vec![0.0; pi.len()];
                    for i in 0..pi.len() {
                        for j in 0..pi.len() {
                            next[j] += pi[i] * matrix[i][j];
                        }
                    }
                    let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
                    pi = next;
                    if diff < 1e-15 {
                        break;
                    }
                }
                pi.iter().enumerate().map(|(i, &w)| w * g(i)).sum()
            }
        }
    }

    /// Draws `k` symbols on each side. Deterministic in the seed; the two
    /// sides use independent streams.
    pub fn sample_sequence(&self, k: usize) -> Result<SymbolSequence> {
        if k == 0 {
            return Err(Error::InvalidSampler("sequence length must be positive".into()));
        }
        let (plus, minus) = match &self.kind {
            SamplerKind::Word { word } => {
                if word.is_empty() {
                    return Err(Error::InvalidSampler("explicit word is empty".into()));
                }
                let n = word.len();
                let plus = (0..k).map(|i| word[i % n]).collect();
                // x_{-j} continues the period backwards: x_{-j} = w[(-j) mod n]
                let minus = (1..=k).map(|j| word[(n - j % n) % n]).collect();
                (plus, minus)
            }
            _ => (self.draw(k, 0)?, self.draw(k, 1)?),
        };
        Ok(SymbolSequence { plus, minus, sampler: self.name().into(), seed: self.seed })
    }

    fn draw(&self, k: usize, stream: u64) -> Result<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let bad = |e: rand::distributions::WeightedError| Error::InvalidSampler(e.to_string());
        match &self.kind {
            SamplerKind::Bernoulli { p } => {
                let d = WeightedIndex::new(p).map_err(bad)?;
                Ok((0..k).map(|_| d.sample(&mut rng)).collect())
            }
            SamplerKind::Markov { matrix, initial } => {
                let start = WeightedIndex::new(initial).map_err(bad)?;
                let rows = matrix.iter().map(|r| WeightedIndex::new(r).map_err(bad)).collect::<Result<Vec<_>>>()?;
                let mut out = Vec::with_capacity(k);
                let mut s = start.sample(&mut rng);
                out.push(s);
                while out.len() < k {
                    s = rows[s].sample(&mut rng);
                    out.push(s);
                }
                Ok(out)
            }
            SamplerKind::Word { .. } => unreachable!(),
        }
    }
}

impl SymbolSequence {
    /// Builds a sequence from explicit one-sided arrays (0-based rules).
    pub fn from_parts(plus: Vec<usize>, minus: Vec<usize>) -> Self {
        SymbolSequence { plus, minus, sampler: "explicit".into(), seed: 0 }
    }

    /// x_k for k ≥ 1.
    pub fn at(&self, k: usize) -> usize {
        self.plus[k - 1]
    }

    pub fn horizon(&self) -> usize {
        self.plus.len()
    }

    /// The shifted sequence σⁿx: the first `n` forward symbols move to the
    /// backward side in reverse order.
    pub fn shift(&self, n: usize) -> Result<SymbolSequence> {
        if n > self.plus.len() {
            return Err(Error::Horizon(format!("cannot shift by {n} with {} symbols", self.plus.len())));
        }
        let plus = self.plus[n..].to_vec();
        let mut minus: Vec<usize> = self.plus[..n].iter().rev().copied().collect();
        minus.extend_from_slice(&self.minus);
        Ok(SymbolSequence { plus, minus, sampler: self.sampler.clone(), seed: self.seed })
    }

    /// 1-based digit string of the forward side.
    pub fn plus_string(&self) -> String {
        self.plus.iter().map(|&s| char::from_digit((s + 1) as u32, 36).unwrap_or('?')).collect()
    }
}

/// Parses "1122" into 0-based rules.
pub fn parse_word(w: &str) -> Result<Vec<usize>> {
    w.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c.to_digit(36) {
            Some(d) if d >= 1 => Ok(d as usize - 1),
            _ => Err(Error::InvalidSampler(format!("invalid symbol {c:?} in word {w:?}"))),
        })
        .collect()
}

/// `w_i ⋯ w_n ≠ w_1 ⋯ w_{n−i+1}` for all `1 < i ≤ n`.
pub fn is_simple(w: &[usize]) -> bool {
    let n = w.len();
    (1..n).all(|s| w[s..] != w[..n - s])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordCheck {
    pub word: Vec<usize>,
    pub split: usize,
    pub simple: bool,
    /// Set for the power-of-one-rule route, where simplicity is not required.
    pub simplicity_waived: bool,
    pub q_minus: IntMatrix,
    pub q_plus: IntMatrix,
    pub positively_simple: bool,
}

/// `F_{w_n} ⋯ F_{w_1}`.
pub fn word_matrix(sys: &SubstitutionSystem, w: &[usize]) -> Result<IntMatrix> {
    let mut q = IntMatrix::identity(sys.types());
    for &l in w {
        q = sys.substitution_matrix(l)?.checked_mul(&q)?;
    }
    Ok(q)
}

/// Tests simplicity and positivity of `Q±` for the split `w = w[..split] w[split..]`.
pub fn word_check(sys: &SubstitutionSystem, w: &[usize], split: usize) -> Result<WordCheck> {
    if split == 0 || split >= w.len() {
        return Err(Error::OutOfRange(format!("split {split} for a word of length {}", w.len())));
    }
    let simple = is_simple(w);
    let q_minus = word_matrix(sys, &w[..split])?;
    let q_plus = word_matrix(sys, &w[split..])?;
    let positive = q_minus.min_entry() >= 2 && q_plus.min_entry() >= 2;
    Ok(WordCheck {
        word: w.to_vec(),
        split,
        simple,
        simplicity_waived: false,
        q_minus,
        q_plus,
        positively_simple: simple && positive,
    })
}

/// The word `ℓ^len` split at `split`, used for a single primitive rule where
/// no word is simple but a high power plays the same role.
pub fn power_word_check(sys: &SubstitutionSystem, rule: usize, len: usize, split: usize) -> Result<WordCheck> {
    let w = vec![rule; len];
    let mut c = word_check(sys, &w, split)?;
    c.simplicity_waived = true;
    c.positively_simple = c.q_minus.min_entry() >= 2 && c.q_plus.min_entry() >= 2;
    Ok(c)
}

/// Every split of `w`, in order.
pub fn all_splits(sys: &SubstitutionSystem, w: &[usize]) -> Result<Vec<WordCheck>> {
    (1..w.len()).map(|s| word_check(sys, w, s)).collect()
}

/// All `k ≤ horizon` such that the letters ending at `x_k` spell `w⁻` and
/// the letters starting at `x_{k+1}` spell `w⁺`. Positions at or below zero
/// read the backward side.
pub fn return_times(x: &SymbolSequence, w: &[usize], split: usize, horizon: usize) -> Result<Vec<usize>> {
    if split > w.len() {
        return Err(Error::OutOfRange(format!("split {split} for a word of length {}", w.len())));
    }
    let (wm, wp) = w.split_at(split);
    if x.plus.len() < horizon + wp.len() {
        return Err(Error::Horizon(format!(
            "need {} forward symbols, have {}",
            horizon + wp.len(),
            x.plus.len()
        )));
    }
    if x.minus.len() < wm.len() {
        return Err(Error::Horizon(format!("need {} backward symbols, have {}", wm.len(), x.minus.len())));
    }
    // symbol at signed position p (p ≥ 1 forward, p ≤ 0 backward as x_{p-1})
    let sym = |p: i64| -> usize {
        if p >= 1 {
            x.plus[(p - 1) as usize]
        } else {
            x.minus[(-p) as usize]
        }
    };
    let mut out = Vec::new();
    for k in 0..=horizon {
        let k = k as i64;
        let minus_ok = wm.iter().rev().enumerate().all(|(j, &s)| sym(k - j as i64) == s);
        let plus_ok = wp.iter().enumerate().all(|(j, &s)| sym(k + 1 + j as i64) == s);
        if minus_ok && plus_ok {
            out.push(k as usize);
        }
    }
    Ok(out)
}
