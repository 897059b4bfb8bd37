//! Classical product structures on a finite configuration space `S`.
//!
//! A candidate CPS is a factorization `|S| = n_1 ... n_k` together with a
//! bijection from `S` to digit tuples. Each factor's block algebra is
//! spanned by the indicators of "digit `t` equals `v`"; a distribution is
//! product-compatible when expectations of products of such indicators
//! factorize.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::OperatorAlgebra;
use crate::error::{Error, Result};
use crate::mps::Mps;
use crate::numerics::{cr, digits_of, hermitian_eigen, index_of, CMatrix, DimVector, Tolerance};
use crate::tps::{default_labels, factorizations};

/// Largest configuration space [`recover_cps`] accepts.
pub const MAX_CPS_SIZE: usize = 12;
/// Largest size searched exhaustively.
pub const MAX_EXHAUSTIVE_SIZE: usize = 9;
pub const DEFAULT_EXACT_TOL: f64 = 1e-6;
pub const DEFAULT_PCA_TAU: f64 = 0.01;
const GREEDY_STARTS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    space_size: usize,
    samples: Vec<Vec<f64>>,
    name: String,
}

impl SampleSet {
    pub fn new(name: impl Into<String>, samples: Vec<Vec<f64>>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("sample set is empty".into()))?;
        let space_size = first.len();
        if space_size == 0 {
            return Err(Error::InvalidInput("samples have length 0".into()));
        }
        for (k, p) in samples.iter().enumerate() {
            if p.len() != space_size {
                return Err(Error::shape(format!(
                    "sample {k} has length {}, expected {space_size}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "sample {k} has a negative or non-finite entry"
                )));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "sample {k} sums to {s}, not 1"
                )));
            }
        }
        Ok(SampleSet {
            space_size,
            samples,
            name: name.into(),
        })
    }

    pub fn space_size(&self) -> usize {
        self.space_size
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpsCandidate {
    pub dims: DimVector,
    /// `index_map[i]` is the digit tuple of configuration `i`.
    pub index_map: Vec<Vec<usize>>,
    /// Largest eloccom defect over the samples it was scored on.
    pub violation: f64,
    pub exact: bool,
}

impl CpsCandidate {
    /// Checks that `index_map` is a bijection onto the digit tuples of `dims`.
    pub fn new(dims: DimVector, index_map: Vec<Vec<usize>>) -> Result<Self> {
        let n = dims.product();
        if index_map.len() != n {
            return Err(Error::shape(format!(
                "index map has {} entries, dims {dims} need {n}",
                index_map.len()
            )));
        }
        let mut seen = vec![false; n];
        for t in &index_map {
            if t.len() != dims.len() || t.iter().zip(dims.as_slice()).any(|(&d, &m)| d >= m) {
                return Err(Error::InvalidInput(format!(
                    "digit tuple {t:?} does not fit dims {dims}"
                )));
            }
            let k = index_of(t, dims.as_slice());
            if seen[k] {
                return Err(Error::InvalidInput(format!("digit tuple {t:?} used twice")));
            }
            seen[k] = true;
        }
        Ok(CpsCandidate {
            dims,
            index_map,
            violation: 0.0,
            exact: false,
        })
    }

    /// Configuration `i` gets the mixed-radix digits of `i`.
    pub fn natural(dims: DimVector) -> Self {
        let index_map = (0..dims.product())
            .map(|i| digits_of(i, dims.as_slice()))
            .collect();
        CpsCandidate {
            dims,
            index_map,
            violation: 0.0,
            exact: false,
        }
    }

    pub fn space_size(&self) -> usize {
        self.index_map.len()
    }

    /// The partition of `S` by the value of each factor's digit. Two
    /// candidates are the same CPS iff these agree as a multiset.
    pub fn coset_partitions(&self) -> Vec<Vec<Vec<usize>>> {
        let mut out: Vec<Vec<Vec<usize>>> = (0..self.dims.len())
            .map(|t| {
                let mut blocks = vec![Vec::new(); self.dims.as_slice()[t]];
                for (i, tuple) in self.index_map.iter().enumerate() {
                    blocks[tuple[t]].push(i);
                }
                blocks.sort();
                blocks
            })
            .collect();
        out.sort();
        out
    }

    pub fn same_structure(&self, other: &CpsCandidate) -> bool {
        self.coset_partitions() == other.coset_partitions()
    }

    /// Digit tuple to configuration, i.e. the inverse of `index_map`.
    pub fn inverse_map(&self) -> Vec<usize> {
        let mut inv = vec![0; self.index_map.len()];
        for (i, t) in self.index_map.iter().enumerate() {
            inv[index_of(t, self.dims.as_slice())] = i;
        }
        inv
    }

    /// The diagonal multipartite structure whose loci are the factor block
    /// algebras.
    pub fn to_mps(&self, tol: Tolerance) -> Result<Mps> {
        let n = self.space_size();
        let labels = default_labels(self.dims.len());
        let mut loci = Vec::with_capacity(self.dims.len());
        for (t, label) in labels.into_iter().enumerate() {
            let indicators: Vec<CMatrix> = (0..self.dims.as_slice()[t])
                .map(|v| {
                    CMatrix::from_fn(n, n, |i, j| {
                        if i == j && self.index_map[i][t] == v {
                            cr(1.0)
                        } else {
                            cr(0.0)
                        }
                    })
                })
                .collect();
            let a = OperatorAlgebra::from_span(&indicators, n, tol)?.with_label(label.clone());
            loci.push((label, a));
        }
        Ok(Mps::new(n, loci, tol)?.with_provenance(format!("cps {}", self.dims)))
    }
}

/// Largest `|P(∩_{t∈T} d_t = v_t) - ∏_{t∈T} P(d_t = v_t)|` over every set `T`
/// of at least two factors and every choice of values.
///
/// For two factors this is the pairwise block-indicator test; with more
/// factors the higher subsets are what make a zero defect equivalent to the
/// multiway factorization of expectations.
pub fn eloccom_defect(p: &[f64], cps: &CpsCandidate) -> Result<f64> {
    if p.len() != cps.space_size() {
        return Err(Error::shape(format!(
            "distribution has length {}, CPS is on {} points",
            p.len(),
            cps.space_size()
        )));
    }
    let k = cps.dims.len();
    if k < 2 {
        return Ok(0.0);
    }
    let dims = cps.dims.as_slice();
    let singles: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            let mut m = vec![0.0; dims[t]];
            for (i, tuple) in cps.index_map.iter().enumerate() {
                m[tuple[t]] += p[i];
            }
            m
        })
        .collect();
    let mut worst: f64 = 0.0;
    for mask in 1usize..(1 << k) {
        if mask.count_ones() < 2 {
            continue;
        }
        let factors: Vec<usize> = (0..k).filter(|t| mask & (1 << t) != 0).collect();
        let sub_dims: Vec<usize> = factors.iter().map(|&t| dims[t]).collect();
        let size: usize = sub_dims.iter().product();
        let mut joint = vec![0.0; size];
        let mut digits = vec![0; factors.len()];
        for (i, tuple) in cps.index_map.iter().enumerate() {
            for (s, &t) in factors.iter().enumerate() {
                digits[s] = tuple[t];
            }
            joint[index_of(&digits, &sub_dims)] += p[i];
        }
        for (idx, &pj) in joint.iter().enumerate() {
            let vals = digits_of(idx, &sub_dims);
            let prod: f64 = factors
                .iter()
                .zip(&vals)
                .map(|(&t, &v)| singles[t][v])
                .product();
            worst = worst.max((pj - prod).abs());
        }
    }
    Ok(worst)
}

/// Largest defect over every sample.
pub fn max_defect(samples: &SampleSet, cps: &CpsCandidate) -> Result<f64> {
    samples
        .samples
        .iter()
        .try_fold(0.0f64, |acc, p| Ok(acc.max(eloccom_defect(p, cps)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaResult {
    pub count: usize,
    /// Covariance eigenvalues, decreasing.
    pub spectrum: Vec<f64>,
}

/// Number of principal directions of the centered samples whose variance
/// exceeds `tau` times the largest one.
pub fn pca_factor_count(samples: &SampleSet, tau: f64) -> Result<PcaResult> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "PCA needs at least 2 samples, got {m}"
        )));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    let n = samples.space_size;
    let mean: Vec<f64> = (0..n)
        .map(|j| samples.samples.iter().map(|p| p[j]).sum::<f64>() / m as f64)
        .collect();
    let cov = CMatrix::from_fn(n, n, |a, b| {
        let s: f64 = samples
            .samples
            .iter()
            .map(|p| (p[a] - mean[a]) * (p[b] - mean[b]))
            .sum();
        cr(s / (m as f64 - 1.0))
    });
    let (vals, _) = hermitian_eigen(&cov);
    let spectrum: Vec<f64> = vals.iter().rev().map(|&x| x.max(0.0)).collect();
    let top = spectrum.first().cloned().unwrap_or(0.0);
    let count = if top <= 1e-12 {
        0
    } else {
        spectrum.iter().filter(|&&x| x > tau * top).count()
    };
    Ok(PcaResult { count, spectrum })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpsRecovery {
    /// Ascending violation; ties keep enumeration order.
    pub candidates: Vec<CpsCandidate>,
    /// Why the list is empty, when it is.
    pub reason: Option<String>,
    /// `exhaustive` or `greedy`.
    pub search: String,
}

/// Scores candidate product structures against the samples.
///
/// Up to [`MAX_EXHAUSTIVE_SIZE`] points every coset structure of every
/// nontrivial factorization is scored. Up to [`MAX_CPS_SIZE`] a seeded
/// local search over swaps of configurations is used instead.
pub fn recover_cps(samples: &SampleSet, exact_tol: f64, seed: u64) -> Result<CpsRecovery> {
    let n = samples.space_size;
    if n > MAX_CPS_SIZE {
        return Err(Error::TooLarge(format!(
            "CPS recovery supports |S| <= {MAX_CPS_SIZE}, got {n}"
        )));
    }
    let search = if n <= MAX_EXHAUSTIVE_SIZE {
        "exhaustive"
    } else {
        "greedy"
    }
    .to_string();
    let empty = |reason: &str| CpsRecovery {
        candidates: Vec::new(),
        reason: Some(reason.to_string()),
        search: search.clone(),
    };
    if n < 2 {
        return Ok(empty("trivial size"));
    }
    let factorizations: Vec<DimVector> = factorizations(n)?
        .into_iter()
        .filter(|d| d.len() >= 2)
        .collect();
    if factorizations.is_empty() {
        return Ok(empty("prime size"));
    }
    let mut candidates = Vec::new();
    for dims in factorizations {
        let found = if n <= MAX_EXHAUSTIVE_SIZE {
            canonical_bijections(&dims)
        } else {
            greedy_search(samples, &dims, seed)?
        };
        for mut c in found {
            c.violation = max_defect(samples, &c)?;
            c.exact = c.violation <= exact_tol;
            candidates.push(c);
        }
    }
    candidates.sort_by(|a, b| a.violation.total_cmp(&b.violation));
    Ok(CpsRecovery {
        candidates,
        reason: None,
        search,
    })
}

/// One bijection per coset structure: digit values first appear in
/// increasing order within each factor, and factors of equal size are
/// ordered by their digit sequences.
pub fn canonical_bijections(dims: &DimVector) -> Vec<CpsCandidate> {
    let d = dims.as_slice().to_vec();
    let n = dims.product();
    let k = d.len();
    let mut out = Vec::new();
    let mut used = vec![false; n];
    let mut map: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut next_new = vec![0usize; k];

    #[allow(clippy::too_many_arguments)]
    fn rec(
        d: &[usize],
        n: usize,
        used: &mut [bool],
        map: &mut Vec<Vec<usize>>,
        next_new: &mut [usize],
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        if map.len() == n {
            out.push(map.clone());
            return;
        }
        for code in 0..n {
            if used[code] {
                continue;
            }
            let tuple = digits_of(code, d);
            if tuple.iter().zip(next_new.iter()).any(|(&v, &nn)| v > nn) {
                continue;
            }
            let saved: Vec<usize> = next_new.to_vec();
            for (t, &v) in tuple.iter().enumerate() {
                if v == next_new[t] && next_new[t] < d[t] {
                    next_new[t] += 1;
                }
            }
            used[code] = true;
            map.push(tuple);
            rec(d, n, used, map, next_new, out);
            map.pop();
            used[code] = false;
            next_new.copy_from_slice(&saved);
        }
    }

    let mut maps = Vec::new();
    rec(&d, n, &mut used, &mut map, &mut next_new, &mut maps);
    for m in maps {
        let ordered = (1..k).all(|t| {
            d[t] != d[t - 1] || {
                let a = m.iter().map(|x| x[t - 1]);
                let b = m.iter().map(|x| x[t]);
                a.lt(b)
            }
        });
        if ordered {
            out.push(CpsCandidate {
                dims: dims.clone(),
                index_map: m,
                violation: 0.0,
                exact: false,
            });
        }
    }
    out
}

/// Seeded best-improvement swap search; returns the distinct local optima.
fn greedy_search(samples: &SampleSet, dims: &DimVector, seed: u64) -> Result<Vec<CpsCandidate>> {
    let n = dims.product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((dims.len() as u64) << 32) ^ n as u64);
    let mut optima: Vec<CpsCandidate> = Vec::new();
    for start in 0..GREEDY_STARTS {
        let mut current = CpsCandidate::natural(dims.clone());
        if start > 0 {
            current.index_map.shuffle(&mut rng);
        }
        let mut score = max_defect(samples, &current)?;
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for i in 0..n {
                for j in (i + 1)..n {
                    if current.index_map[i] == current.index_map[j] {
                        continue;
                    }
                    current.index_map.swap(i, j);
                    let s = max_defect(samples, &current)?;
                    current.index_map.swap(i, j);
                    if s < best.map_or(score, |b| b.2) - 1e-15 {
                        best = Some((i, j, s));
                    }
                }
            }
            match best {
                Some((i, j, s)) => {
                    current.index_map.swap(i, j);
                    score = s;
                }
                None => break,
            }
        }
        if !optima.iter().any(|o| o.same_structure(&current)) {
            optima.push(current);
        }
    }
    Ok(optima)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::{separability_relation, SeparabilityMode};
    use crate::states::classical_embed;
    use rand::Rng;

    fn dims(d: &[usize]) -> DimVector {
        DimVector::new(d.to_vec()).unwrap()
    }

    fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .flat_map(|x| b.iter().map(move |y| x * y))
            .collect()
    }

    #[test]
    fn eloccom_examples() {
        let cps = CpsCandidate::natural(dims(&[3, 3]));
        let uniform = vec![1.0 / 9.0; 9];
        assert!(eloccom_defect(&uniform, &cps).unwrap() < 1e-15);
        let mut diag = vec![0.0; 9];
        for i in 0..3 {
            diag[4 * i] = 1.0 / 3.0;
        }
        assert!((eloccom_defect(&diag, &cps).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        let trivial = CpsCandidate::natural(dims(&[9]));
        assert_eq!(eloccom_defect(&diag, &trivial).unwrap(), 0.0);
        assert!(eloccom_defect(&diag[..4], &cps).is_err());
    }

    #[test]
    fn canonical_counts() {
        assert_eq!(canonical_bijections(&dims(&[2, 2])).len(), 3);
        assert_eq!(canonical_bijections(&dims(&[2, 3])).len(), 60);
        assert_eq!(canonical_bijections(&dims(&[3, 3])).len(), 5040);
        assert_eq!(canonical_bijections(&dims(&[2, 2, 2])).len(), 840);
    }

    #[test]
    fn canonical_bijections_are_distinct_structures() {
        let all = canonical_bijections(&dims(&[2, 3]));
        for (i, a) in all.iter().enumerate() {
            assert!(CpsCandidate::new(a.dims.clone(), a.index_map.clone()).is_ok());
            for b in &all[i + 1..] {
                assert!(!a.same_structure(b));
            }
        }
    }

    #[test]
    fn prime_and_oversized_spaces() {
        let s = SampleSet::new("p7", vec![vec![1.0 / 7.0; 7]]).unwrap();
        let r = recover_cps(&s, DEFAULT_EXACT_TOL, 0).unwrap();
        assert!(r.candidates.is_empty());
        assert_eq!(r.reason.as_deref(), Some("prime size"));
        let s = SampleSet::new("big", vec![vec![1.0 / 13.0; 13]]).unwrap();
        assert_eq!(
            recover_cps(&s, DEFAULT_EXACT_TOL, 0).unwrap_err().kind(),
            "too-large"
        );
    }

    #[test]
    fn planted_two_by_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut draw = |k: usize| {
            let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let perm = [2, 0, 3, 1];
        let samples: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let p = product(&draw(2), &draw(2));
                let mut q = vec![0.0; 4];
                for i in 0..4 {
                    q[perm[i]] = p[i];
                }
                q
            })
            .collect();
        let set = SampleSet::new("planted", samples).unwrap();
        let r = recover_cps(&set, DEFAULT_EXACT_TOL, 0).unwrap();
        let top = &r.candidates[0];
        assert!(top.exact && top.violation <= 1e-12);
        let mut planted = vec![vec![0, 0]; 4];
        for i in 0..4 {
            planted[perm[i]] = digits_of(i, &[2, 2]);
        }
        let planted = CpsCandidate::new(dims(&[2, 2]), planted).unwrap();
        assert!(top.same_structure(&planted));
        assert!(!r.candidates[1].exact);
    }

    #[test]
    fn greedy_regime_finds_planted_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut draw = |k: usize| {
            let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let samples: Vec<Vec<f64>> = (0..4).map(|_| product(&draw(2), &draw(5))).collect();
        let set = SampleSet::new("ten", samples).unwrap();
        let r = recover_cps(&set, DEFAULT_EXACT_TOL, 1).unwrap();
        assert_eq!(r.search, "greedy");
        assert!(r.candidates[0].exact);
        assert!(r.candidates[0].same_structure(&CpsCandidate::natural(dims(&[2, 5]))));
    }

    #[test]
    fn pca_examples() {
        let same = SampleSet::new("same", vec![vec![0.25; 4]; 3]).unwrap();
        assert_eq!(pca_factor_count(&same, 0.01).unwrap().count, 0);
        let a = [0.7, 0.1, 0.1, 0.1];
        let b = [0.1, 0.7, 0.1, 0.1];
        let c = [0.1, 0.1, 0.7, 0.1];
        let mix = |w: [f64; 3]| -> Vec<f64> {
            (0..4)
                .map(|j| w[0] * a[j] + w[1] * b[j] + w[2] * c[j])
                .collect()
        };
        let set = SampleSet::new(
            "plane",
            vec![
                mix([1.0, 0.0, 0.0]),
                mix([0.0, 1.0, 0.0]),
                mix([0.0, 0.0, 1.0]),
                mix([0.2, 0.3, 0.5]),
                mix([0.6, 0.1, 0.3]),
            ],
        )
        .unwrap();
        let r = pca_factor_count(&set, 0.01).unwrap();
        assert_eq!(r.count, 2);
        assert!(r.spectrum.windows(2).all(|w| w[0] >= w[1]));
        assert!(pca_factor_count(&SampleSet::new("one", vec![a.to_vec()]).unwrap(), 0.01).is_err());
    }

    #[test]
    fn cps_mps_matches_eloccom_on_product_and_correlated() {
        let tol = Tolerance::default();
        let cps = CpsCandidate::natural(dims(&[2, 3]));
        let mps = cps.to_mps(tol).unwrap();
        let prod = product(&[0.3, 0.7], &[0.2, 0.5, 0.3]);
        let rel = separability_relation(
            &classical_embed(&prod).unwrap(),
            &mps,
            SeparabilityMode::Multiway,
            tol,
        )
        .unwrap();
        assert!(rel.holds && eloccom_defect(&prod, &cps).unwrap() < 1e-12);
        let corr = vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.5];
        let rel = separability_relation(
            &classical_embed(&corr).unwrap(),
            &mps,
            SeparabilityMode::Multiway,
            tol,
        )
        .unwrap();
        assert!(!rel.holds && eloccom_defect(&corr, &cps).unwrap() > 0.1);
    }
}
