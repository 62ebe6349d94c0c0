//! Return vectors, the group they generate, the address map and the integer
//! matrices by which inflation acts on that group.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{sup_norm, ExactVector, ModuleBasis, Point};
use crate::hierarchy::{Hierarchy, Node};
use crate::intmat::{big_to_i64, hermite_rows, is_unit, smith_diagonal, to_big_rows, IntMatrix};
use crate::substitution::SubstitutionSystem;
use crate::symbolic::SymbolSequence;

/// Return vectors per tile type, found inside canonical supertiles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReturnVectorSet {
    pub level: usize,
    pub radius: f64,
    /// `per_type[i]`: nonzero differences between corners of two type-`i`
    /// tiles in one canonical level-`level` supertile.
    pub per_type: Vec<Vec<ExactVector>>,
    /// The supertiles are large enough for every return vector of length at
    /// most `radius` to appear.
    pub complete: bool,
}

impl ReturnVectorSet {
    pub fn all(&self) -> impl Iterator<Item = &ExactVector> {
        self.per_type.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.per_type.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tile corners by type in the canonical level-`k` supertile of type `top`.
fn corners_by_type(hier: &Hierarchy, k: usize, top: usize) -> Result<Vec<Vec<ExactVector>>> {
    let sys = hier.system();
    let patch = hier.supertile_patch(&Node { level: k, typ: top, corner: ExactVector::zeros(sys.rank()) })?;
    let mut out = vec![Vec::new(); sys.types()];
    for t in patch.tiles {
        out[t.label].push(t.translation);
    }
    Ok(out)
}

fn collect_differences(
    basis: &ModuleBasis,
    groups: &[Vec<ExactVector>],
    radius: f64,
    into: &mut [BTreeSet<ExactVector>],
) -> Result<()> {
    for (i, cs) in groups.iter().enumerate() {
        for a in cs {
            for b in cs {
                if a == b {
                    continue;
                }
                let d = b.checked_sub(a)?;
                if radius.is_finite() && sup_norm(basis.embed(&d)?, basis.dim()) > radius {
                    continue;
                }
                into[i].insert(d);
            }
        }
    }
    Ok(())
}

/// Largest number of tiles scanned per supertile.
pub const MAX_SCAN: usize = 1 << 13;

/// All return vectors of sup-norm at most `radius` realized inside the
/// canonical level-`k` supertiles of the hierarchy.
pub fn enumerate_return_vectors(hier: &Hierarchy, k: usize, radius: f64) -> Result<ReturnVectorSet> {
    let sys = hier.system();
    if k > hier.levels() {
        return Err(Error::Horizon(format!("level {k} beyond {}", hier.levels())));
    }
    let mut sets = vec![BTreeSet::new(); sys.types()];
    for top in 0..sys.types() {
        if hier.tile_count(k, top) > MAX_SCAN as u128 {
            return Err(Error::OutOfRange(format!("level-{k} supertiles have more than {MAX_SCAN} tiles")));
        }
        let groups = corners_by_type(hier, k, top)?;
        collect_differences(sys.basis(), &groups, radius, &mut sets)?;
    }
    let inradius = sys.volumes().iter().cloned().fold(f64::INFINITY, f64::min).powf(1.0 / sys.dim() as f64);
    Ok(ReturnVectorSet {
        level: k,
        radius,
        per_type: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        complete: hier.scale(k) * inradius > 2.0 * radius,
    })
}

/// Return vectors from every canonical level-`depth` supertile built from
/// every word of length `depth` over `support`.
pub fn system_return_vectors(sys: &Arc<SubstitutionSystem>, support: &[usize], depth: usize) -> Result<ReturnVectorSet> {
    if support.is_empty() {
        return Err(Error::InvalidSampler("empty support".into()));
    }
    let mut sets = vec![BTreeSet::new(); sys.types()];
    let words = support.len().pow(depth as u32);
    for n in 0..words {
        let mut plus = Vec::with_capacity(depth);
        let mut r = n;
        for _ in 0..depth {
            plus.push(support[r % support.len()]);
            r /= support.len();
        }
        let x = SymbolSequence::from_parts(plus, vec![support[0]]);
        let hier = Hierarchy::new(sys.clone(), x, depth)?;
        for top in 0..sys.types() {
            let groups = corners_by_type(&hier, depth, top)?;
            collect_differences(sys.basis(), &groups, f64::INFINITY, &mut sets)?;
        }
    }
    Ok(ReturnVectorSet {
        level: depth,
        radius: f64::INFINITY,
        per_type: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        complete: false,
    })
}

/// The group generated by a set of return vectors, with its canonical
/// Hermite basis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReturnGroup {
    pub rank: usize,
    /// Generators in module coordinates (the Hermite rows).
    pub generators: Vec<ExactVector>,
    /// Real images of the generators.
    pub embedding: Vec<Point>,
}

/// Hermite basis of the span of `vectors`.
pub fn group_basis<'a, I>(basis: &ModuleBasis, vectors: I) -> Result<ReturnGroup>
where
    I: IntoIterator<Item = &'a ExactVector>,
{
    let rows: Vec<Vec<i64>> = vectors.into_iter().map(|v| v.coords().to_vec()).collect();
    if rows.is_empty() {
        return Err(Error::Degenerate("no return vectors".into()));
    }
    if rows.iter().any(|r| r.len() != basis.rank()) {
        return Err(Error::DimensionMismatch { expected: basis.rank(), found: rows[0].len() });
    }
    let h = hermite_rows(&to_big_rows(&rows));
    let generators = h
        .iter()
        .map(|r| r.iter().map(big_to_i64).collect::<Result<Vec<_>>>().map(|c| ExactVector::from_slice(&c)))
        .collect::<Result<Vec<_>>>()?;
    let embedding = generators.iter().map(|g| basis.embed(g)).collect::<Result<Vec<_>>>()?;
    Ok(ReturnGroup { rank: generators.len(), generators, embedding })
}

impl ReturnGroup {
    /// The unique `α` with `Σ α_c g_c = τ`.
    pub fn address(&self, tau: &ExactVector) -> Result<Vec<i64>> {
        let n = tau.rank();
        let mut rest: Vec<BigInt> = tau.coords().iter().map(|&c| BigInt::from(c)).collect();
        let mut alpha = Vec::with_capacity(self.rank);
        for g in &self.generators {
            if g.rank() != n {
                return Err(Error::DimensionMismatch { expected: g.rank(), found: n });
            }
            let p = g.coords().iter().position(|&c| c != 0).expect("Hermite rows are nonzero");
            let piv = BigInt::from(g.coords()[p]);
            let (q, r) = rest[p].div_rem(&piv);
            if !r.is_zero() {
                return Err(Error::NotInGroup(tau.coords().to_vec()));
            }
            for (x, &c) in rest.iter_mut().zip(g.coords()) {
                *x -= &q * BigInt::from(c);
            }
            alpha.push(big_to_i64(&q)?);
        }
        if rest.iter().any(|x| !x.is_zero()) {
            return Err(Error::NotInGroup(tau.coords().to_vec()));
        }
        Ok(alpha)
    }

    pub fn contains(&self, tau: &ExactVector) -> bool {
        self.address(tau).is_ok()
    }

    /// `Σ α_c g_c`.
    pub fn vector(&self, alpha: &[i64]) -> Result<ExactVector> {
        let mut v = ExactVector::zeros(self.generators.first().map_or(0, ExactVector::rank));
        for (g, &a) in self.generators.iter().zip(alpha) {
            v = v.checked_add(&g.checked_scale(a)?)?;
        }
        Ok(v)
    }

    /// Generators as columns: module rank × r.
    pub fn v_matrix(&self) -> IntMatrix {
        let rows = self.generators.first().map_or(0, ExactVector::rank);
        let mut m = IntMatrix::zeros(rows, self.rank);
        for (c, g) in self.generators.iter().enumerate() {
            for (i, &x) in g.coords().iter().enumerate() {
                m.set(i, c, x);
            }
        }
        m
    }
}

/// The integer `G` with `Mθ_rule · V_from = V_to · G`: how the generators of
/// the coarser group, inflated into the finer frame, are addressed there.
pub fn g_matrix(basis: &ModuleBasis, rule: usize, from: &ReturnGroup, to: &ReturnGroup) -> Result<IntMatrix> {
    let mut g = IntMatrix::zeros(to.rank, from.rank);
    for (c, gen) in from.generators.iter().enumerate() {
        let img = basis.apply(rule, gen)?;
        let a = to.address(&img).map_err(|_| {
            Error::Inclusion(format!("inflated generator {:?} is not in the target group", img.coords()))
        })?;
        for (r, v) in a.into_iter().enumerate() {
            g.set(r, c, v);
        }
    }
    Ok(g)
}

/// `G` for a word of rules read from the finest level: `G_{w_1} G_{w_2} ⋯`.
pub fn word_g_matrix(basis: &ModuleBasis, group: &ReturnGroup, w: &[usize]) -> Result<IntMatrix> {
    let mut acc = IntMatrix::identity(group.rank);
    for &l in w {
        acc = acc.checked_mul(&g_matrix(basis, l, group, group)?)?;
    }
    Ok(acc)
}

/// Result of the postal test for a word.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PostalReport {
    pub vectors: usize,
    pub rank: usize,
    pub divisors: Vec<String>,
    pub postal: bool,
}

/// Collects the return vectors inside every canonical level-`|w⁺|`
/// supertile built from `w⁺`, addresses them in `group` and reads the Smith
/// form of the address matrix.
pub fn postal_check(sys: &Arc<SubstitutionSystem>, w_plus: &[usize], group: &ReturnGroup) -> Result<PostalReport> {
    let n = w_plus.len();
    let x = SymbolSequence::from_parts(w_plus.to_vec(), vec![w_plus[0]]);
    let hier = Hierarchy::new(sys.clone(), x, n)?;
    let set = enumerate_return_vectors(&hier, n, f64::INFINITY)?;
    let rows = set.all().map(|v| group.address(v)).collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(PostalReport { vectors: 0, rank: 0, divisors: Vec::new(), postal: false });
    }
    let d = smith_diagonal(&to_big_rows(&rows));
    let postal = d.len() == group.rank && d.iter().all(is_unit);
    Ok(PostalReport {
        vectors: rows.len(),
        rank: d.len(),
        divisors: d.iter().map(|v| v.abs().to_string()).collect(),
        postal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden;
    use crate::symbolic::{parse_word, MeasureSampler};
    use proptest::prelude::*;

    fn ev(c: &[i64]) -> ExactVector {
        ExactVector::from_slice(c)
    }

    fn hier(sys: SubstitutionSystem, plus: Vec<usize>) -> Hierarchy {
        let n = plus.len();
        Hierarchy::new(Arc::new(sys), SymbolSequence::from_parts(plus, vec![0]), n).unwrap()
    }

    #[test]
    fn thue_morse_returns_are_integers() {
        let h = hier(golden::tmpd(), vec![0, 0, 0]);
        let s = enumerate_return_vectors(&h, 3, 4.0).unwrap();
        let all: BTreeSet<i64> = s.all().map(|v| v.coords()[0]).collect();
        assert!(!all.contains(&0));
        assert!(all.iter().all(|v| v.abs() <= 4));
        assert!(all.contains(&1) && all.contains(&-1) && all.contains(&3));
        let none = enumerate_return_vectors(&h, 0, 4.0).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn fibonacci_returns() {
        let sys = golden::fibonacci();
        let h = hier(sys.clone(), vec![0; 4]);
        let s = enumerate_return_vectors(&h, 4, 4.0).unwrap();
        // φ has coordinates (0, 1) and 1 + φ has (1, 1)
        let a: Vec<&ExactVector> = s.per_type[0].iter().collect();
        assert!(a.contains(&&ev(&[0, 1])) && a.contains(&&ev(&[1, 1])));
        let g = group_basis(sys.basis(), s.all()).unwrap();
        assert_eq!(g.generators, vec![ev(&[1, 0]), ev(&[0, 1])]);
    }

    #[test]
    fn small_groups() {
        let z = golden::tmpd();
        let g = group_basis(z.basis(), [ev(&[2]), ev(&[3])].iter()).unwrap();
        assert_eq!(g.generators, vec![ev(&[1])]);
        assert_eq!(g.address(&ev(&[7])).unwrap(), vec![7]);
        let five = group_basis(z.basis(), [ev(&[5]), ev(&[5]), ev(&[5])].iter()).unwrap();
        assert_eq!(five.generators, vec![ev(&[5])]);
        assert!(matches!(five.address(&ev(&[7])), Err(Error::NotInGroup(_))));
        let fib = golden::fibonacci();
        let g = group_basis(fib.basis(), [ev(&[0, 1]), ev(&[1, 1])].iter()).unwrap();
        assert_eq!(g.address(&ev(&[2, 3])).unwrap(), vec![2, 3]);
    }

    #[test]
    fn g_matrices() {
        let z = golden::tmpd();
        let g = group_basis(z.basis(), [ev(&[1])].iter()).unwrap();
        assert_eq!(g_matrix(z.basis(), 1, &g, &g).unwrap().to_rows(), vec![vec![2]]);
        let fib = golden::fibonacci();
        let g = group_basis(fib.basis(), [ev(&[1, 0]), ev(&[0, 1])].iter()).unwrap();
        assert_eq!(g_matrix(fib.basis(), 0, &g, &g).unwrap().to_rows(), vec![vec![0, 1], vec![1, 1]]);
        let b = golden::block2d();
        let g = group_basis(b.basis(), [ev(&[1, 0]), ev(&[0, 1])].iter()).unwrap();
        assert_eq!(g_matrix(b.basis(), 0, &g, &g).unwrap(), IntMatrix::scalar(2, 2));
        // the even integers do not contain the inflated generator of Z
        let even = group_basis(z.basis(), [ev(&[4])].iter()).unwrap();
        let unit = group_basis(z.basis(), [ev(&[1])].iter()).unwrap();
        assert!(matches!(g_matrix(z.basis(), 0, &unit, &even), Err(Error::Inclusion(_))));
    }

    #[test]
    fn period_doubling_square_is_postal() {
        let sys = Arc::new(golden::tmpd());
        let g = group_basis(sys.basis(), [ev(&[1])].iter()).unwrap();
        let r = postal_check(&sys, &parse_word("22").unwrap(), &g).unwrap();
        assert!(r.postal);
        assert_eq!(r.divisors, vec!["1".to_string()]);
    }

    #[test]
    fn even_returns_are_not_postal() {
        let z = golden::tmpd();
        let g = group_basis(z.basis(), [ev(&[1])].iter()).unwrap();
        let d = smith_diagonal(&to_big_rows(&[g.address(&ev(&[2])).unwrap(), g.address(&ev(&[4])).unwrap()]));
        assert_eq!(d, vec![BigInt::from(2)]);
    }

    #[test]
    fn fibonacci_power_is_postal() {
        let sys = Arc::new(golden::fibonacci());
        let g = group_basis(sys.basis(), [ev(&[1, 0]), ev(&[0, 1])].iter()).unwrap();
        assert!(postal_check(&sys, &[0, 0, 0], &g).unwrap().postal);
    }

    #[test]
    fn rank_is_stable() {
        for sys in [golden::tmpd(), golden::fibonacci(), golden::block2d()] {
            let h = hier(sys.clone(), vec![0; 6]);
            let r5 = group_basis(sys.basis(), enumerate_return_vectors(&h, 5, f64::INFINITY).unwrap().all()).unwrap();
            let r6 = group_basis(sys.basis(), enumerate_return_vectors(&h, 6, f64::INFINITY).unwrap().all()).unwrap();
            assert_eq!(r5, r6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn addresses_round_trip(seed in 0u64..5000) {
            for sys in [golden::tmpd(), golden::fibonacci(), golden::block2d()] {
                let n = sys.rule_count();
                let x = MeasureSampler::bernoulli(vec![1.0 / n as f64; n], seed).sample_sequence(6).unwrap();
                let h = Hierarchy::new(Arc::new(sys.clone()), x, 6).unwrap();
                let set = enumerate_return_vectors(&h, 5, f64::INFINITY).unwrap();
                let g = group_basis(sys.basis(), set.all()).unwrap();
                for v in set.all() {
                    let a = g.address(v).unwrap();
                    prop_assert_eq!(&g.vector(&a).unwrap(), v);
                }
            }
        }

        #[test]
        fn word_g_is_a_product(w in proptest::collection::vec(0usize..2, 1..8)) {
            let sys = Arc::new(golden::tmpd());
            let set = system_return_vectors(&sys, &[0, 1], 3).unwrap();
            let g = group_basis(sys.basis(), set.all()).unwrap();
            let direct = {
                // Mθ_{w_1} ⋯ Mθ_{w_n} applied to the generators at once
                let mut m = IntMatrix::identity(sys.rank());
                for &l in &w {
                    m = m.checked_mul(sys.basis().mult_table(l)).unwrap();
                }
                let mut out = IntMatrix::zeros(g.rank, g.rank);
                for (c, gen) in g.generators.iter().enumerate() {
                    let img = ExactVector::from_slice(&m.checked_mul_vec(gen.coords()).unwrap());
                    for (r, v) in g.address(&img).unwrap().into_iter().enumerate() {
                        out.set(r, c, v);
                    }
                }
                out
            };
            prop_assert_eq!(word_g_matrix(sys.basis(), &g, &w).unwrap(), direct);
        }
    }
}
