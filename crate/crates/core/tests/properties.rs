//! Randomized invariants across modules.

use locus_forge::algebra::OperatorAlgebra;
use locus_forge::classical::{
    eloccom_defect, pca_factor_count, recover_cps, CpsCandidate, SampleSet,
};
use locus_forge::mps::{
    coarser, join, recover_loci, separability_relation, Mps, MpsCatalog, SeparabilityMode,
};
use locus_forge::numerics::{
    basis_vector, c, kron, kron_all, nullspace, numerical_rank, random_density, random_ginibre,
    random_hermitian, random_pure, random_unitary, trace, CMatrix, DimVector, Tolerance,
};
use locus_forge::partitions::{enumerate_partitions, pi_of_state, refines};
use locus_forge::states::{
    expect, is_sigma_product, is_sigma_separable, SeparabilityOptions, State, StateSet,
};
use locus_forge::tps::{bell_unitary, TpsSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerance {
    Tolerance::default()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn qubits(k: usize) -> TpsSpec {
    TpsSpec::from_dims(&vec![2; k]).unwrap()
}

fn product_pure(k: usize, r: &mut ChaCha8Rng) -> State {
    let factors: Vec<State> = (0..k)
        .map(|_| State::pure(random_pure(2, r)).unwrap())
        .collect();
    State::product(&factors).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kron_is_associative_and_trace_multiplies(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b, d) = (random_ginibre(2, 2, &mut r), random_ginibre(3, 3, &mut r), random_ginibre(2, 2, &mut r));
        let left = kron(&kron(&a, &b), &d);
        let right = kron(&a, &kron(&b, &d));
        prop_assert!((&left - &right).norm() < 1e-12);
        prop_assert!((kron_all([&a, &b, &d]) - &left).norm() < 1e-12);
        let t = trace(&a) * trace(&b) * trace(&d);
        prop_assert!((trace(&left) - t).norm() < 1e-10 * (1.0 + t.norm()));
    }

    #[test]
    fn rank_plus_nullity_is_column_count(seed in any::<u64>(), rows in 2usize..7, cols in 2usize..7, k in 1usize..4) {
        let mut r = rng(seed);
        let m = random_ginibre(rows, k, &mut r) * random_ginibre(k, cols, &mut r);
        let rank = numerical_rank(&m, 1e-9);
        prop_assert_eq!(rank, k.min(rows).min(cols));
        let kernel = nullspace(&m, 1e-9);
        prop_assert_eq!(rank + kernel.len(), cols);
        for v in &kernel {
            prop_assert!((&m * v).norm() < 1e-8 * m.norm());
        }
    }

    #[test]
    fn commutant_reverses_inclusion(seed in any::<u64>(), n in 2usize..5) {
        let mut r = rng(seed);
        let big = OperatorAlgebra::generate(&[random_hermitian(n, &mut r)], n, tol()).unwrap();
        let small = OperatorAlgebra::generate(&[big.basis()[big.dim() - 1].clone()], n, tol()).unwrap();
        prop_assert!(small.is_subalgebra_of(&big, tol()).unwrap());
        let (cb, cs) = (big.commutant(tol()), small.commutant(tol()));
        prop_assert!(cb.is_subalgebra_of(&cs, tol()).unwrap());
        prop_assert!(big.double_commutant(tol()).equal(&big, tol()).unwrap());
    }

    #[test]
    fn commutant_of_twisted_local_algebra(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let spec = TpsSpec::from_dims(&[2, d]).unwrap().twist(&random_unitary(2 * d, &mut r)).unwrap();
        let (a, b) = (spec.local_algebra(0).unwrap(), spec.local_algebra(1).unwrap());
        prop_assert!(a.commutant(tol()).equal(&b, tol()).unwrap());
        prop_assert!(b.commutant(tol()).equal(&a, tol()).unwrap());
    }

    #[test]
    fn pi_is_closed_under_coarsening(seed in any::<u64>(), kind in 0usize..3) {
        let mut r = rng(seed);
        let tps = qubits(3);
        let rho = match kind {
            0 => State::pure(random_pure(8, &mut r)).unwrap(),
            1 => {
                let a = product_pure(1, &mut r);
                let b = State::pure(random_pure(4, &mut r)).unwrap();
                State::product(&[a, b]).unwrap()
            }
            _ => product_pure(3, &mut r),
        };
        let pi = pi_of_state(&rho, &tps, &SeparabilityOptions::default(), tol()).unwrap();
        let all = enumerate_partitions(3).unwrap();
        for fine in pi.separable.members() {
            for coarse in all.members() {
                if refines(fine, coarse).unwrap() {
                    prop_assert!(pi.separable.contains(coarse), "{} in Π but {} is not", fine, coarse);
                }
            }
        }
    }

    #[test]
    fn frame_change_preserves_the_relation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rho = State::from_density(random_density(4, 2, &mut r), tol()).unwrap();
        let p = qubits(2).to_mps();
        let u = random_unitary(4, &mut r);
        for mode in [SeparabilityMode::Pairwise, SeparabilityMode::Multiway] {
            let before = separability_relation(&rho, &p, mode, tol()).unwrap();
            let after = separability_relation(&rho.conjugate(&u).unwrap(), &p.conjugate(&u).unwrap(), mode, tol()).unwrap();
            prop_assert_eq!(before.holds, after.holds);
            prop_assert!((before.max_defect - after.max_defect).abs() < 1e-8);
        }
    }

    #[test]
    fn multiway_implies_pairwise(seed in any::<u64>(), product in any::<bool>()) {
        let mut r = rng(seed);
        let rho = if product {
            product_pure(3, &mut r)
        } else {
            State::from_density(random_density(8, 1 + (seed % 3) as usize, &mut r), tol()).unwrap()
        };
        let u = if seed % 2 == 0 { random_unitary(8, &mut r) } else { CMatrix::identity(8, 8) };
        let p = qubits(3).twist(&u).unwrap().to_mps();
        let multi = separability_relation(&rho, &p, SeparabilityMode::Multiway, tol()).unwrap();
        let pair = separability_relation(&rho, &p, SeparabilityMode::Pairwise, tol()).unwrap();
        prop_assert!(!multi.holds || pair.holds);
    }

    #[test]
    fn relation_extends_from_basis_to_all_elements(seed in any::<u64>(), product in any::<bool>()) {
        let mut r = rng(seed);
        let rho = if product { product_pure(2, &mut r) } else { State::pure(random_pure(4, &mut r)).unwrap() };
        let p = qubits(2).to_mps();
        let outcome = separability_relation(&rho, &p, SeparabilityMode::Pairwise, tol()).unwrap();
        let loci: Vec<&OperatorAlgebra> = p.loci().map(|(_, a)| a).collect();
        let element = |a: &OperatorAlgebra, r: &mut ChaCha8Rng| {
            a.basis().iter().fold(CMatrix::zeros(4, 4), |acc, b| {
                acc + b * c(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)
            })
        };
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let (x, y) = (element(loci[0], &mut r), element(loci[1], &mut r));
            let lhs = expect(&rho, &(&x * &y)).unwrap();
            let rhs = expect(&rho, &x).unwrap() * expect(&rho, &y).unwrap();
            worst = worst.max((lhs - rhs).norm() / (x.norm() * y.norm()));
        }
        if outcome.holds {
            prop_assert!(worst < 1e-8, "basis check passed but a full element pair has gap {worst:e}");
        } else {
            prop_assert!(outcome.witness.is_some());
            prop_assert!(worst > 0.0);
        }
    }

    #[test]
    fn classical_defect_is_relabelling_covariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = DimVector::new(vec![2, 3]).unwrap();
        let mut tuples: Vec<Vec<usize>> = (0..6).map(|i| dims.digits(i)).collect();
        tuples.shuffle(&mut r);
        let cps = CpsCandidate::new(dims.clone(), tuples.clone()).unwrap();
        let raw: Vec<f64> = (0..6).map(|_| r.random::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut r);
        // point i moves to perm[i]
        let mut q = vec![0.0; 6];
        let mut moved = vec![Vec::new(); 6];
        for i in 0..6 {
            q[perm[i]] = p[i];
            moved[perm[i]] = tuples[i].clone();
        }
        let cps_moved = CpsCandidate::new(dims, moved).unwrap();
        let d1 = eloccom_defect(&p, &cps).unwrap();
        let d2 = eloccom_defect(&q, &cps_moved).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-14);
    }

    #[test]
    fn pca_spectrum_sums_to_total_variance(seed in any::<u64>(), m in 2usize..8) {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let raw: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let set = SampleSet::new("s", rows.clone()).unwrap();
        let pca = pca_factor_count(&set, 0.01).unwrap();
        let total: f64 = (0..5)
            .map(|j| {
                let mean = rows.iter().map(|p| p[j]).sum::<f64>() / m as f64;
                rows.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0)
            })
            .sum();
        let sum: f64 = pca.spectrum.iter().sum();
        prop_assert!((sum - total).abs() < 1e-12);
        prop_assert!(pca.count < m);
    }
}

#[test]
fn pure_states_agree_between_product_and_separable_tests() {
    let mut r = rng(200);
    let tps = qubits(3);
    let partitions = enumerate_partitions(3).unwrap();
    for trial in 0..200 {
        let rho = match trial % 3 {
            0 => product_pure(3, &mut r),
            1 => State::product(&[
                product_pure(1, &mut r),
                State::pure(random_pure(4, &mut r)).unwrap(),
            ])
            .unwrap(),
            _ => State::pure(random_pure(8, &mut r)).unwrap(),
        };
        for sigma in partitions.members() {
            let p = is_sigma_product(&rho, &tps, sigma, tol()).unwrap();
            let s = is_sigma_separable(&rho, &tps, sigma, &SeparabilityOptions::default(), tol())
                .unwrap();
            assert_eq!(p.is_product(), s.is_separable(), "trial {trial}, {sigma}");
        }
    }
}

fn random_tps_mps(r: &mut ChaCha8Rng) -> Mps {
    let spec = qubits(2);
    match r.random_range(0..3) {
        0 => spec.to_mps(),
        1 => Mps::trivial(4),
        _ => spec.twist(&random_unitary(4, r)).unwrap().to_mps(),
    }
}

#[test]
fn join_is_associative_and_lies_above_the_trivial_structure() {
    let mut r = rng(31);
    for _ in 0..20 {
        let (p, q, s) = (
            random_tps_mps(&mut r),
            random_tps_mps(&mut r),
            random_tps_mps(&mut r),
        );
        let left = join(
            &[join(&[p.clone(), q.clone()], tol()).unwrap(), s.clone()],
            tol(),
        )
        .unwrap();
        let right = join(
            &[p.clone(), join(&[q.clone(), s.clone()], tol()).unwrap()],
            tol(),
        )
        .unwrap();
        let flat = join(&[p.clone(), q.clone(), s.clone()], tol()).unwrap();
        assert!(left.equal(&right, tol()).unwrap());
        assert!(left.equal(&flat, tol()).unwrap());
        assert!(coarser(&Mps::trivial(4), &flat, tol()).unwrap());
    }
}

#[test]
fn recovered_loci_refine_as_states_or_members_are_added() {
    let standard = qubits(2);
    let twisted = standard.twist(&bell_unitary()).unwrap();
    let small =
        MpsCatalog::from_members(4, vec![standard.to_mps(), Mps::trivial(4)], tol()).unwrap();
    let big = MpsCatalog::from_members(
        4,
        vec![standard.to_mps(), Mps::trivial(4), twisted.to_mps()],
        tol(),
    )
    .unwrap();
    let basis: Vec<State> = (0..4).map(|i| State::basis(4, i).unwrap()).collect();
    let bell: Vec<State> = (0..4)
        .map(|i| State::pure(bell_unitary() * basis_vector(4, i)).unwrap())
        .collect();
    let mode = SeparabilityMode::Multiway;
    let rec = |states: Vec<State>, cat: &MpsCatalog| {
        recover_loci(&StateSet::new("s", states).unwrap(), cat, mode, tol())
            .unwrap()
            .mps
    };
    let few = rec(basis[..1].to_vec(), &big);
    let all_basis = rec(basis.clone(), &big);
    let mut union = basis.clone();
    union.extend(bell.clone());
    let everything = rec(union, &big);
    assert!(coarser(&few, &all_basis, tol()).unwrap());
    assert!(coarser(&all_basis, &everything, tol()).unwrap());
    let with_small = rec(bell.clone(), &small);
    let with_big = rec(bell, &big);
    assert!(coarser(&with_small, &with_big, tol()).unwrap());
}

#[test]
fn tps_structures_hold_multiway_exactly_on_product_states() {
    let mut r = rng(48);
    for k in [2usize, 3] {
        let n = 1 << k;
        for _ in 0..20 {
            let u = random_unitary(n, &mut r);
            let spec = qubits(k).twist(&u).unwrap();
            let rho = product_pure(k, &mut r).conjugate(&u).unwrap();
            let out =
                separability_relation(&rho, &spec.to_mps(), SeparabilityMode::Multiway, tol())
                    .unwrap();
            assert!(out.holds, "n={n}: defect {:e}", out.max_defect);
            let ghz = State::ghz(k).unwrap().conjugate(&u).unwrap();
            let out =
                separability_relation(&ghz, &spec.to_mps(), SeparabilityMode::Multiway, tol())
                    .unwrap();
            assert!(!out.holds);
        }
    }
}

/// Largest `|P(a, b) - P(a) P(b)|` over all cells, computed by direct sums.
fn brute_force_defect(p: &[f64], tuples: &[Vec<usize>]) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..2 {
        for b in 0..2 {
            let pa: f64 = (0..4).filter(|&i| tuples[i][0] == a).map(|i| p[i]).sum();
            let pb: f64 = (0..4).filter(|&i| tuples[i][1] == b).map(|i| p[i]).sum();
            let pab: f64 = (0..4).filter(|&i| tuples[i] == [a, b]).map(|i| p[i]).sum();
            worst = worst.max((pab - pa * pb).abs());
        }
    }
    worst
}

#[test]
fn noisy_two_by_two_scores_match_direct_covariances() {
    let mut r = rng(22);
    for noise in [0.0, 1e-6, 1e-3, 1e-1] {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let (a, b) = (r.random::<f64>() * 0.8 + 0.1, r.random::<f64>() * 0.8 + 0.1);
                let raw: Vec<f64> = [a * b, a * (1.0 - b), (1.0 - a) * b, (1.0 - a) * (1.0 - b)]
                    .iter()
                    .map(|x| x * (1.0 + noise * (r.random::<f64>() - 0.5)))
                    .collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let set = SampleSet::new("noisy", rows.clone()).unwrap();
        let rec = recover_cps(&set, 1e-6, 1).unwrap();
        assert_eq!(rec.candidates.len(), 3);
        for cand in &rec.candidates {
            let oracle = rows
                .iter()
                .map(|p| brute_force_defect(p, &cand.index_map))
                .fold(0.0, f64::max);
            assert!((cand.violation - oracle).abs() < 1e-14, "noise {noise}");
        }
        let natural = CpsCandidate::natural(DimVector::new(vec![2, 2]).unwrap());
        assert!(rec.candidates[0].same_structure(&natural), "noise {noise}");
        assert_eq!(rec.candidates[0].exact, noise < 1e-5, "noise {noise}");
    }
}
