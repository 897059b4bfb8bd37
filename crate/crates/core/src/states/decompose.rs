//! Explicit convex decompositions `ρ = Σ p_α ρ_σ1^α ⊗ .. ⊗ ρ_σM^α`.
//!
//! The general search is a fully corrective Frank-Wolfe method over the
//! convex hull of pure block-product states: the linear subproblem (best
//! product state for the current residual) is solved by alternating top
//! eigenvectors with seeded restarts, and the weights over all atoms found
//! so far are re-fitted by non-negative least squares after every step.
//! Two exact shortcuts come first: block-product states and states that are
//! diagonal in the product basis.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{is_sigma_product, BlockFrame, State};
use crate::error::{Error, Result};
use crate::numerics::{
    basis_vector, cr, digits_of, hermitian_eigen, hermitian_to_real, kron_all, partial_trace,
    projector, random_pure, real_lstsq, CMatrix, CVector, DimVector, Tolerance,
};
use crate::partitions::Partition;
use crate::tps::TpsSpec;

/// Largest ambient dimension the search accepts.
pub const MAX_SEARCH_DIM: usize = 16;
/// Certificates are only returned below this Frobenius reconstruction error.
pub const CERTIFICATE_TOL: f64 = 1e-6;
const CONVERGED: f64 = 1e-10;
const RESTARTS: usize = 4;

#[derive(Debug, Clone)]
pub struct CertificateTerm {
    pub weight: f64,
    /// One state per block of `Σ`, on that block's factors in increasing order.
    pub factors: Vec<State>,
}

#[derive(Debug, Clone)]
pub struct SeparableCertificate {
    pub blocks: Vec<Vec<usize>>,
    pub terms: Vec<CertificateTerm>,
    /// `‖ρ - Σ p_α (..)‖_F`.
    pub reconstruction_error: f64,
}

impl SeparableCertificate {
    pub fn weight_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// Rebuilds the density matrix in the ambient (untwisted) basis.
    pub fn reconstruct(&self, tps: &TpsSpec) -> Result<CMatrix> {
        let sigma = Partition::new(tps.dims().len(), self.blocks.clone())?;
        let frame = BlockFrame::new(tps, &sigma)?;
        let n = tps.ambient_dim();
        let mut acc = CMatrix::zeros(n, n);
        for t in &self.terms {
            let mats: Vec<CMatrix> = t.factors.iter().map(|f| f.rho().clone()).collect();
            acc += frame.assemble(&mats) * cr(t.weight);
        }
        let u = tps.unitary();
        Ok(u * acc * u.adjoint())
    }
}

/// Best-effort search for an explicit Σ-separable decomposition.
///
/// Returns `Ok(None)` when the budget runs out (or the search stalls); that
/// is never a claim of entanglement.
pub fn decompose_separable(
    rho: &State,
    tps: &TpsSpec,
    sigma: &Partition,
    budget: usize,
    seed: u64,
) -> Result<Option<SeparableCertificate>> {
    let n = tps.ambient_dim();
    if rho.dim() != n {
        return Err(Error::shape(format!(
            "state dimension {} vs structure {n}",
            rho.dim()
        )));
    }
    if n > MAX_SEARCH_DIM {
        return Err(Error::TooLarge(format!(
            "decomposition search supports ambient dimension <= {MAX_SEARCH_DIM}, got {n}"
        )));
    }
    if budget == 0 {
        return Err(Error::InvalidInput(
            "search budget must be at least 1".into(),
        ));
    }
    let frame = BlockFrame::new(tps, sigma)?;
    let u = tps.unitary();
    let framed = u.adjoint() * rho.rho() * u;
    let target = frame.to_block_order(&framed);
    let tol = Tolerance::default();

    let cert = if is_sigma_product(rho, tps, sigma, tol)?.is_product() {
        Some(product_certificate(&framed, &frame)?)
    } else if let Some(c) = diagonal_certificate(&target, &frame) {
        Some(c)
    } else {
        frank_wolfe(&target, &frame, budget, seed)
    };
    Ok(cert.filter(|c| c.reconstruction_error <= CERTIFICATE_TOL))
}

fn product_certificate(framed: &CMatrix, frame: &BlockFrame) -> Result<SeparableCertificate> {
    let factors = frame
        .blocks
        .iter()
        .map(|b| {
            let m = partial_trace(framed, &frame.dims, b)?;
            let m = crate::numerics::hermitian_part(&m);
            State::from_density(m, Tolerance::default())
        })
        .collect::<Result<Vec<_>>>()?;
    let mats: Vec<CMatrix> = factors.iter().map(|f| f.rho().clone()).collect();
    let err = (frame.assemble(&mats) - framed).norm();
    Ok(SeparableCertificate {
        blocks: frame.blocks.clone(),
        terms: vec![CertificateTerm {
            weight: 1.0,
            factors,
        }],
        reconstruction_error: err,
    })
}

/// States diagonal in the product basis are mixtures of basis products.
fn diagonal_certificate(target: &CMatrix, frame: &BlockFrame) -> Option<SeparableCertificate> {
    let n = target.nrows();
    let off = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|ij| target[ij].norm())
        .fold(0.0, f64::max);
    if off > 1e-12 {
        return None;
    }
    let mut terms = Vec::new();
    for i in 0..n {
        let w = target[(i, i)].re;
        if w < -1e-12 {
            return None;
        }
        if w <= 1e-15 {
            continue;
        }
        let digits = digits_of(i, &frame.block_dims);
        let factors = digits
            .iter()
            .zip(&frame.block_dims)
            .map(|(&d, &dim)| State::pure(basis_vector(dim, d)).expect("unit vector"))
            .collect();
        terms.push(CertificateTerm { weight: w, factors });
    }
    let total: f64 = terms.iter().map(|t| t.weight).sum();
    for t in &mut terms {
        t.weight /= total;
    }
    let approx = mixture(&terms);
    Some(SeparableCertificate {
        blocks: frame.blocks.clone(),
        terms,
        reconstruction_error: (approx - target).norm(),
    })
}

/// Block-ordered mixture of the terms' factor products.
fn mixture(terms: &[CertificateTerm]) -> CMatrix {
    let mut acc: Option<CMatrix> = None;
    for t in terms {
        let m = kron_all(t.factors.iter().map(|f| f.rho())) * cr(t.weight);
        acc = Some(match acc {
            Some(a) => a + m,
            None => m,
        });
    }
    acc.expect("at least one term")
}

struct Atom {
    vecs: Vec<CVector>,
    mat: CMatrix,
    coords: DVector<f64>,
}

impl Atom {
    fn new(vecs: Vec<CVector>) -> Self {
        let psi = vecs
            .iter()
            .cloned()
            .reduce(|a, b| a.kronecker(&b))
            .expect("at least one block");
        let mat = projector(&psi);
        let coords = hermitian_to_real(&mat);
        Atom { vecs, mat, coords }
    }
}

fn frank_wolfe(
    target: &CMatrix,
    frame: &BlockFrame,
    budget: usize,
    seed: u64,
) -> Option<SeparableCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = &frame.block_dims;
    let goal = hermitian_to_real(target);
    let mut atoms = initial_atoms(target, dims);

    for _ in 0..budget {
        let w = simplex_nnls(&atoms, &goal);
        let approx = combine(&atoms, &w, target.nrows());
        let residual = target - &approx;
        if residual.norm() <= CONVERGED {
            break;
        }
        let keep: Vec<bool> = w.iter().map(|&x| x > 0.0).collect();
        let mut k = 0;
        atoms.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        let base = crate::numerics::hs_inner(&residual, &approx).re;
        let (value, vecs) = best_product(&residual, dims, &mut rng);
        if value <= base + 1e-15 {
            break;
        }
        atoms.push(Atom::new(vecs));
    }

    let w = simplex_nnls(&atoms, &goal);
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let terms: Vec<CertificateTerm> = atoms
        .iter()
        .zip(w.iter())
        .filter(|(_, &x)| x > 0.0)
        .map(|(a, &x)| CertificateTerm {
            weight: x / total,
            factors: a
                .vecs
                .iter()
                .map(|v| State::pure(v.clone()).expect("unit vector"))
                .collect(),
        })
        .collect();
    let err = (mixture(&terms) - target).norm();
    Some(SeparableCertificate {
        blocks: frame.blocks.clone(),
        terms,
        reconstruction_error: err,
    })
}

fn combine(atoms: &[Atom], w: &DVector<f64>, n: usize) -> CMatrix {
    atoms
        .iter()
        .zip(w.iter())
        .fold(CMatrix::zeros(n, n), |acc, (a, &x)| acc + &a.mat * cr(x))
}

/// Products of eigenvectors of the block marginals (at most 64 of them).
fn initial_atoms(target: &CMatrix, dims: &[usize]) -> Vec<Atom> {
    let bdims = DimVector::new(dims.to_vec()).expect("block dims >= 2");
    let eigvecs: Vec<CMatrix> = (0..dims.len())
        .map(|b| {
            let m = partial_trace(target, &bdims, &[b]).expect("consistent dims");
            hermitian_eigen(&m).1
        })
        .collect();
    let combos: usize = dims.iter().product();
    (0..combos.min(64))
        .map(|idx| {
            let digits = digits_of(idx, dims);
            let vecs = digits
                .iter()
                .enumerate()
                .map(|(b, &d)| eigvecs[b].column(dims[b] - 1 - d).into_owned())
                .collect();
            Atom::new(vecs)
        })
        .collect()
}

/// Maximizes `<v|R|v>` over block-product unit vectors `v`.
fn best_product(r: &CMatrix, dims: &[usize], rng: &mut ChaCha8Rng) -> (f64, Vec<CVector>) {
    let mut starts: Vec<Vec<CVector>> = Vec::new();
    // the top eigenvector's block marginals
    let (_, vecs) = hermitian_eigen(r);
    let top = projector(&vecs.column(r.nrows() - 1).into_owned());
    let bdims = DimVector::new(dims.to_vec()).expect("block dims >= 2");
    starts.push(
        (0..dims.len())
            .map(|b| {
                let m = partial_trace(&top, &bdims, &[b]).expect("consistent dims");
                let (_, ev) = hermitian_eigen(&m);
                ev.column(dims[b] - 1).into_owned()
            })
            .collect(),
    );
    for _ in 0..RESTARTS {
        starts.push(dims.iter().map(|&d| random_pure(d, rng)).collect());
    }
    starts
        .into_iter()
        .map(|s| alternate(r, dims, s))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start")
}

fn alternate(r: &CMatrix, dims: &[usize], mut vecs: Vec<CVector>) -> (f64, Vec<CVector>) {
    let mut value = f64::NEG_INFINITY;
    for _ in 0..200 {
        let before = value;
        for b in 0..dims.len() {
            let eff = effective_operator(r, dims, &vecs, b);
            let (vals, ev) = hermitian_eigen(&eff);
            vecs[b] = ev.column(dims[b] - 1).into_owned();
            value = vals[dims[b] - 1];
        }
        if value - before <= 1e-14 {
            break;
        }
    }
    (value, vecs)
}

/// `E_b[i,j] = <ψ_i| R |ψ_j>` with `ψ_i` the product of the fixed block
/// vectors and `e_i` in slot `b`.
fn effective_operator(r: &CMatrix, dims: &[usize], vecs: &[CVector], b: usize) -> CMatrix {
    let n = r.nrows();
    let d = dims[b];
    let mut psis = CMatrix::zeros(n, d);
    for i in 0..d {
        let mut legs: Vec<CVector> = vecs.to_vec();
        legs[b] = basis_vector(d, i);
        let psi = legs
            .into_iter()
            .reduce(|a, x| a.kronecker(&x))
            .expect("non-empty");
        psis.set_column(i, &psi);
    }
    psis.adjoint() * r * &psis
}

/// Non-negative weights minimizing `‖Σ w_k a_k - goal‖² + (Σ w_k - 1)²`.
fn simplex_nnls(atoms: &[Atom], goal: &DVector<f64>) -> DVector<f64> {
    let rows = goal.len() + 1;
    let mut a = DMatrix::<f64>::zeros(rows, atoms.len());
    for (j, atom) in atoms.iter().enumerate() {
        a.view_mut((0, j), (goal.len(), 1)).copy_from(&atom.coords);
        a[(goal.len(), j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(rows);
    b.rows_mut(0, goal.len()).copy_from(goal);
    b[goal.len()] = 1.0;
    nnls(&a, &b)
}

/// Lawson-Hanson active-set non-negative least squares.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    if n == 0 {
        return x;
    }
    let mut passive = vec![false; n];
    let scale = a.norm().max(1.0) * b.norm().max(1.0);
    let tol = 1e-13 * scale;
    for _ in 0..(3 * n + 10) {
        let grad = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && grad[j] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(cand) = candidate else { break };
        passive[cand] = true;
        let mut added_survives = true;
        for _ in 0..(n + 5) {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = solve_subset(a, b, &idx);
            if z.iter().all(|&v| v > 0.0) {
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    let denom = x[j] - z[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z[k] - x[j]);
                if x[j] <= 1e-15 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive[cand] {
                added_survives = false;
                break;
            }
        }
        if !added_survives {
            break;
        }
    }
    x
}

fn solve_subset(a: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> Vec<f64> {
    let mut sub = DMatrix::<f64>::zeros(a.nrows(), idx.len());
    for (k, &j) in idx.iter().enumerate() {
        sub.set_column(k, &a.column(j));
    }
    real_lstsq(&sub, b, 1e-12).iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::index_of;

    fn p(s: &str) -> Partition {
        s.parse().unwrap()
    }

    fn check(cert: &SeparableCertificate, rho: &State, tps: &TpsSpec) {
        let rebuilt = cert.reconstruct(tps).unwrap();
        assert!((rebuilt - rho.rho()).norm() <= CERTIFICATE_TOL);
        assert!((cert.weight_sum() - 1.0).abs() < 1e-9);
        for t in &cert.terms {
            assert!(t.weight >= 0.0);
            for f in &t.factors {
                State::from_density(f.rho().clone(), Tolerance::default()).unwrap();
            }
        }
    }

    #[test]
    fn nnls_matches_known_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0, 0.0]);
        let x = nnls(&a, &b);
        // min over x >= 0 of (x1-1)^2 + (x2+1)^2 + (x1+x2)^2 -> x2 = 0, x1 = 1/2
        assert!((x[0] - 0.5).abs() < 1e-12 && x[1] == 0.0);
    }

    #[test]
    fn product_state_gives_single_term() {
        let tps = TpsSpec::from_dims(&[2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = State::from_density(
            crate::numerics::random_density(2, 2, &mut rng),
            Tolerance::default(),
        )
        .unwrap();
        let b = State::from_density(
            crate::numerics::random_density(2, 2, &mut rng),
            Tolerance::default(),
        )
        .unwrap();
        let rho = State::product(&[a, b]).unwrap();
        let cert = decompose_separable(&rho, &tps, &p("1|2"), 10, 0)
            .unwrap()
            .unwrap();
        assert_eq!(cert.terms.len(), 1);
        assert!((cert.terms[0].weight - 1.0).abs() < 1e-15);
        check(&cert, &rho, &tps);
    }

    #[test]
    fn classical_correlated_state_gives_three_terms() {
        let tps = TpsSpec::from_dims(&[3, 3]).unwrap();
        let mut pvec = vec![0.0; 9];
        for i in 0..3 {
            pvec[index_of(&[i, i], &[3, 3])] = 1.0 / 3.0;
        }
        let rho = State::classical(&pvec).unwrap();
        let cert = decompose_separable(&rho, &tps, &p("1|2"), 10, 0)
            .unwrap()
            .unwrap();
        assert_eq!(cert.terms.len(), 3);
        for t in &cert.terms {
            assert!((t.weight - 1.0 / 3.0).abs() < 1e-12);
        }
        check(&cert, &rho, &tps);
    }

    #[test]
    fn werner_quarter_has_a_short_certificate() {
        let tps = TpsSpec::from_dims(&[2, 2]).unwrap();
        let rho = State::werner(0.25).unwrap();
        let cert = decompose_separable(&rho, &tps, &p("1|2"), 500, 11)
            .unwrap()
            .unwrap();
        assert!(cert.terms.len() <= 20, "{} terms", cert.terms.len());
        assert!(cert.reconstruction_error <= 1e-6);
        check(&cert, &rho, &tps);
    }

    #[test]
    fn entangled_state_yields_no_certificate() {
        let tps = TpsSpec::from_dims(&[2, 2]).unwrap();
        let rho = State::werner(0.6).unwrap();
        assert!(decompose_separable(&rho, &tps, &p("1|2"), 100, 1)
            .unwrap()
            .is_none());
    }

    #[test]
    fn twisted_frame_certificate_reconstructs() {
        let tps = TpsSpec::from_dims(&[2, 2])
            .unwrap()
            .twist(&crate::tps::bell_unitary())
            .unwrap();
        // the Bell state is a product in the twisted frame
        let rho = State::from_density(State::bell().rho().clone(), Tolerance::default()).unwrap();
        let cert = decompose_separable(&rho, &tps, &p("1|2"), 10, 0)
            .unwrap()
            .unwrap();
        check(&cert, &rho, &tps);
    }

    #[test]
    fn rejects_large_ambient_and_zero_budget() {
        let tps = TpsSpec::from_dims(&[2, 2, 2, 2, 2]).unwrap();
        let rho = State::maximally_mixed(32);
        assert_eq!(
            decompose_separable(&rho, &tps, &p("1|2|3|4|5"), 10, 0)
                .unwrap_err()
                .kind(),
            "too-large"
        );
        let tps = TpsSpec::from_dims(&[2, 2]).unwrap();
        assert!(decompose_separable(&State::maximally_mixed(4), &tps, &p("1|2"), 0, 0).is_err());
    }
}
