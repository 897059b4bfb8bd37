//! Finite-dimensional operator algebras inside `M_n`.
//!
//! Every algebra is a unital, adjoint-closed, multiplicatively closed
//! subspace of the `n x n` complex matrices, stored as a Hilbert-Schmidt
//! orthonormal basis of Hermitian matrices. A `*`-closed subspace always has
//! such a basis, and Hermitian elements keep expectation values real.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{
    antihermitian_part, column_span, cr, hermitian_part, hermitian_to_real, hs_inner, identity,
    is_finite, kron, nullspace_with_floor, numerical_rank_with_floor, real_column_span,
    real_to_hermitian, unvectorize, vectorize, CMatrix, Tolerance,
};

#[derive(Debug, Clone)]
pub struct OperatorAlgebra {
    ambient_dim: usize,
    basis: Vec<CMatrix>,
    label: Option<String>,
}

impl OperatorAlgebra {
    /// Wraps a basis already known to be HS-orthonormal, Hermitian and closed.
    pub(crate) fn from_trusted_basis(ambient_dim: usize, basis: Vec<CMatrix>) -> Self {
        OperatorAlgebra {
            ambient_dim,
            basis,
            label: None,
        }
    }

    /// `C * I_n`.
    pub fn scalars(n: usize) -> Self {
        Self::from_trusted_basis(n, vec![identity(n) / cr((n as f64).sqrt())])
    }

    /// All of `M_n`, with the (normalized) generalized Gell-Mann basis.
    pub fn full(n: usize) -> Self {
        let basis = crate::numerics::gell_mann(n)
            .into_iter()
            .map(|g| {
                let norm = g.norm();
                g / cr(norm)
            })
            .collect();
        Self::from_trusted_basis(n, basis)
    }

    /// The diagonal matrices `D_n`.
    pub fn diagonal(n: usize) -> Self {
        let basis = (0..n)
            .map(|i| {
                let mut m = CMatrix::zeros(n, n);
                m[(i, i)] = cr(1.0);
                m
            })
            .collect();
        Self::from_trusted_basis(n, basis)
    }

    /// Orthonormalizes `span` and checks every algebra invariant. Unlike
    /// [`generate`](Self::generate) nothing is added, so a span that is not
    /// already an algebra is rejected.
    pub fn from_span(span: &[CMatrix], n: usize, tol: Tolerance) -> Result<Self> {
        check_shapes(span, n)?;
        if span.iter().any(|m| !is_finite(m)) {
            return Err(Error::InvalidAlgebra("non-finite entry".into()));
        }
        let mut stacked = CMatrix::zeros(n * n, span.len());
        for (j, m) in span.iter().enumerate() {
            stacked.set_column(j, &vectorize(m));
        }
        let basis: Vec<CMatrix> = column_span(&stacked, tol.eps, 0.0)
            .iter()
            .map(|v| unvectorize(v, n))
            .collect();
        if basis.is_empty() {
            return Err(Error::InvalidAlgebra("empty span".into()));
        }
        let raw = OperatorAlgebra {
            ambient_dim: n,
            basis,
            label: None,
        };
        raw.validate(tol)?;
        let hermitian = hermitian_basis(&raw.basis, n, tol.eps);
        if hermitian.len() != raw.basis.len() {
            return Err(Error::InvalidAlgebra("span is not adjoint-closed".into()));
        }
        Ok(Self::from_trusted_basis(n, hermitian))
    }

    /// The smallest unital `*`-algebra containing `generators`.
    ///
    /// Seeds with `I`, the generators and their adjoints, then keeps adding
    /// the Hermitian parts of pairwise products until the span stops growing.
    pub fn generate(generators: &[CMatrix], n: usize, tol: Tolerance) -> Result<Self> {
        check_shapes(generators, n)?;
        let mut seed = vec![identity(n) / cr((n as f64).sqrt())];
        for g in generators {
            if !is_finite(g) {
                return Err(Error::InvalidAlgebra("non-finite generator".into()));
            }
            let norm = g.norm();
            if norm > 0.0 {
                seed.push(g / cr(norm));
            }
        }
        let mut builder = HermitianSpan::new(n, tol.eps);
        for m in hermitian_basis(&seed, n, tol.eps) {
            builder.push(&m);
        }
        let mut fresh_from = 0;
        let mut rounds = 0;
        while fresh_from < builder.len() {
            rounds += 1;
            if rounds > n * n {
                return Err(Error::Internal(format!(
                    "algebra closure did not stabilize within {} rounds",
                    n * n
                )));
            }
            let current = builder.len();
            let snapshot: Vec<CMatrix> = builder.basis.clone();
            for i in 0..current {
                for j in i.max(fresh_from)..current {
                    let p = &snapshot[i] * &snapshot[j];
                    builder.push(&hermitian_part(&p));
                    builder.push(&antihermitian_part(&p));
                    if builder.len() == n * n {
                        return Ok(Self::full(n));
                    }
                }
            }
            fresh_from = current;
        }
        Ok(Self::from_trusted_basis(n, builder.basis))
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Scalars only: indistinguishable from the unit.
    pub fn is_degenerate(&self) -> bool {
        self.basis.len() == 1
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.ambient_dim * self.ambient_dim
    }

    /// Orthogonal projection of `x` onto the algebra.
    pub fn project(&self, x: &CMatrix) -> CMatrix {
        self.basis.iter().fold(
            CMatrix::zeros(self.ambient_dim, self.ambient_dim),
            |acc, b| acc + b * hs_inner(b, x),
        )
    }

    /// HS norm of the component of `x` orthogonal to the algebra, divided by
    /// `max(|x|, 1)` so that round-off on a near-zero `x` is not a residual.
    pub fn relative_residual(&self, x: &CMatrix) -> f64 {
        (x - self.project(x)).norm() / x.norm().max(1.0)
    }

    fn basis_columns(&self) -> CMatrix {
        let n2 = self.ambient_dim * self.ambient_dim;
        let mut q = CMatrix::zeros(n2, self.basis.len());
        for (j, b) in self.basis.iter().enumerate() {
            q.set_column(j, &vectorize(b));
        }
        q
    }

    fn check_same_ambient(&self, other: &OperatorAlgebra) -> Result<()> {
        if self.ambient_dim != other.ambient_dim {
            return Err(Error::shape(format!(
                "ambient dimensions differ: {} vs {}",
                self.ambient_dim, other.ambient_dim
            )));
        }
        Ok(())
    }

    /// Membership of `x` as a subspace element.
    pub fn contains(&self, x: &CMatrix, tol: Tolerance) -> Result<bool> {
        if x.shape() != (self.ambient_dim, self.ambient_dim) {
            return Err(Error::shape(format!(
                "matrix is {}x{}, algebra lives in M_{}",
                x.nrows(),
                x.ncols(),
                self.ambient_dim
            )));
        }
        let norm = x.norm();
        if norm == 0.0 {
            return Ok(true);
        }
        let mut m = self
            .basis_columns()
            .insert_column(self.basis.len(), cr(0.0));
        m.set_column(self.basis.len(), &(vectorize(x) / cr(norm)));
        Ok(numerical_rank_with_floor(&m, tol.eps, 1.0) == self.basis.len())
    }

    /// `self ⊆ other` as subspaces.
    pub fn is_subalgebra_of(&self, other: &OperatorAlgebra, tol: Tolerance) -> Result<bool> {
        self.check_same_ambient(other)?;
        if self.dim() > other.dim() {
            return Ok(false);
        }
        let (qa, qb) = (self.basis_columns(), other.basis_columns());
        let stacked = concat_columns(&qb, &qa);
        Ok(numerical_rank_with_floor(&stacked, tol.eps, 1.0) == other.dim())
    }

    /// Equality as subspaces (labels ignored).
    pub fn equal(&self, other: &OperatorAlgebra, tol: Tolerance) -> Result<bool> {
        self.check_same_ambient(other)?;
        Ok(self.dim() == other.dim() && self.is_subalgebra_of(other, tol)?)
    }

    /// `{X : XB = BX for all B}`: the joint kernel of the commutator maps.
    pub fn commutant(&self, tol: Tolerance) -> OperatorAlgebra {
        let n = self.ambient_dim;
        let n2 = n * n;
        let id = identity(n);
        let mut acc = StackedKernel::new(n2);
        for b in &self.basis {
            // row-major vec: vec(BX) = (B ⊗ I) vec(X), vec(XB) = (I ⊗ B^T) vec(X)
            let map = kron(b, &id) - kron(&id, &b.transpose());
            acc.push(map);
        }
        let kernel = nullspace_with_floor(&acc.finish(), tol.eps, 1.0);
        let span: Vec<CMatrix> = kernel.iter().map(|v| unvectorize(v, n)).collect();
        let basis = hermitian_basis(&span, n, tol.eps);
        Self::from_trusted_basis(n, basis)
    }

    pub fn double_commutant(&self, tol: Tolerance) -> OperatorAlgebra {
        self.commutant(tol).commutant(tol)
    }

    /// Subspace intersection; always contains the identity.
    pub fn intersect(&self, other: &OperatorAlgebra, tol: Tolerance) -> Result<OperatorAlgebra> {
        self.check_same_ambient(other)?;
        let n = self.ambient_dim;
        let qa = self.basis_columns();
        let qb = other.basis_columns();
        // x = Qa c lies in span(b) iff (I - Qb Qb^H) Qa c = 0
        let complement = &qa - &qb * (qb.adjoint() * &qa);
        let coeffs = nullspace_with_floor(&complement, tol.eps, 1.0);
        let span: Vec<CMatrix> = coeffs
            .iter()
            .map(|cvec| unvectorize(&(&qa * cvec), n))
            .collect();
        let basis = hermitian_basis(&span, n, tol.eps);
        let out = Self::from_trusted_basis(n, basis);
        out.validate(tol)
            .map_err(|e| Error::Internal(format!("intersection is not an algebra: {e}")))?;
        Ok(out)
    }

    pub fn center(&self, tol: Tolerance) -> OperatorAlgebra {
        self.intersect(&self.commutant(tol), tol)
            .expect("algebra and its commutant share the ambient space")
    }

    /// `U a U^H`.
    pub fn conjugate(&self, u: &CMatrix) -> Result<OperatorAlgebra> {
        if u.shape() != (self.ambient_dim, self.ambient_dim) {
            return Err(Error::shape("conjugating unitary has the wrong side"));
        }
        let ud = u.adjoint();
        Ok(OperatorAlgebra {
            ambient_dim: self.ambient_dim,
            basis: self.basis.iter().map(|b| u * b * &ud).collect(),
            label: self.label.clone(),
        })
    }

    /// Checks every structural invariant, naming the first one that fails.
    pub fn validate(&self, tol: Tolerance) -> Result<()> {
        let n = self.ambient_dim;
        let d = self.basis.len();
        let fail = |msg: String| Err(Error::InvalidAlgebra(msg));
        if d == 0 || d > n * n {
            return fail(format!("basis size {d} outside 1..={}", n * n));
        }
        if self
            .basis
            .iter()
            .any(|b| b.shape() != (n, n) || !is_finite(b))
        {
            return fail("basis element with wrong shape or non-finite entries".into());
        }
        for i in 0..d {
            for j in i..d {
                let g = hs_inner(&self.basis[i], &self.basis[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                if (g - cr(target)).norm() > tol.eps {
                    return fail(format!("basis not HS-orthonormal at ({i},{j})"));
                }
            }
        }
        let r = self.relative_residual(&identity(n));
        if r > tol.eps {
            return fail(format!("not unital (identity residual {r:.3e})"));
        }
        for (i, b) in self.basis.iter().enumerate() {
            let r = self.relative_residual(&b.adjoint());
            if r > tol.eps {
                return fail(format!(
                    "not adjoint-closed at basis element {i} (residual {r:.3e})"
                ));
            }
        }
        if d < n * n {
            for i in 0..d {
                for j in 0..d {
                    let r = self.relative_residual(&(&self.basis[i] * &self.basis[j]));
                    if r > tol.eps {
                        return fail(format!(
                            "not multiplicatively closed at ({i},{j}) (residual {r:.3e})"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_shapes(ms: &[CMatrix], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::shape("ambient dimension must be positive"));
    }
    if let Some(m) = ms.iter().find(|m| m.shape() != (n, n)) {
        return Err(Error::shape(format!(
            "expected {n}x{n} matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn concat_columns(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

/// HS-orthonormal Hermitian basis for the `*`-closure of `span`.
///
/// Each element contributes its Hermitian and anti-Hermitian parts; the real
/// span of those is orthonormalized in HS-isometric real coordinates. Inputs
/// are expected at unit scale.
pub(crate) fn hermitian_basis(span: &[CMatrix], n: usize, eps: f64) -> Vec<CMatrix> {
    if span.is_empty() {
        return Vec::new();
    }
    let mut real = DMatrix::<f64>::zeros(n * n, 2 * span.len());
    for (j, m) in span.iter().enumerate() {
        real.set_column(2 * j, &hermitian_to_real(&hermitian_part(m)));
        real.set_column(2 * j + 1, &hermitian_to_real(&antihermitian_part(m)));
    }
    real_column_span(&real, eps, 1.0)
        .iter()
        .map(|v| real_to_hermitian(v.as_slice(), n))
        .collect()
}

/// Incremental orthonormal basis of Hermitian matrices, grown by two-pass
/// Gram-Schmidt in real coordinates.
struct HermitianSpan {
    n: usize,
    eps: f64,
    coords: Vec<nalgebra::DVector<f64>>,
    basis: Vec<CMatrix>,
}

impl HermitianSpan {
    fn new(n: usize, eps: f64) -> Self {
        HermitianSpan {
            n,
            eps,
            coords: Vec::new(),
            basis: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.basis.len()
    }

    fn push(&mut self, h: &CMatrix) -> bool {
        let mut r = hermitian_to_real(h);
        let norm = r.norm();
        if norm <= self.eps {
            return false;
        }
        r /= norm;
        for _ in 0..2 {
            for q in &self.coords {
                let proj = q.dot(&r);
                r.axpy(-proj, q, 1.0);
            }
        }
        let rn = r.norm();
        if rn <= self.eps {
            return false;
        }
        r /= rn;
        self.basis.push(real_to_hermitian(r.as_slice(), self.n));
        self.coords.push(r);
        true
    }
}

/// Accumulates a tall stack of linear maps while keeping only an `R` factor,
/// which has the same singular values and kernel as the full stack.
struct StackedKernel {
    cols: usize,
    rows: Vec<CMatrix>,
    pending: usize,
}

impl StackedKernel {
    fn new(cols: usize) -> Self {
        StackedKernel {
            cols,
            rows: Vec::new(),
            pending: 0,
        }
    }

    fn push(&mut self, block: CMatrix) {
        self.pending += block.nrows();
        self.rows.push(block);
        if self.pending >= 3 * self.cols {
            let r = self.compress();
            self.pending = r.nrows();
            self.rows = vec![r];
        }
    }

    fn compress(&self) -> CMatrix {
        let total: usize = self.rows.iter().map(|b| b.nrows()).sum();
        let mut stacked = CMatrix::zeros(total, self.cols);
        let mut at = 0;
        for b in &self.rows {
            stacked.view_mut((at, 0), b.shape()).copy_from(b);
            at += b.nrows();
        }
        if total <= self.cols {
            return stacked;
        }
        stacked.qr().r()
    }

    fn finish(self) -> CMatrix {
        if self.rows.is_empty() {
            return CMatrix::zeros(self.cols, self.cols);
        }
        self.compress()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sigma_x, sigma_y, sigma_z};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn span_ix() -> OperatorAlgebra {
        OperatorAlgebra::generate(&[sigma_x()], 2, tol()).unwrap()
    }

    #[test]
    fn generate_examples() {
        assert_eq!(OperatorAlgebra::generate(&[], 3, tol()).unwrap().dim(), 1);
        let a = span_ix();
        assert_eq!(a.dim(), 2);
        assert!(a.contains(&sigma_x(), tol()).unwrap());
        assert!(a.contains(&identity(2), tol()).unwrap());
        let full = OperatorAlgebra::generate(&[sigma_x(), sigma_z()], 2, tol()).unwrap();
        assert_eq!(full.dim(), 4);
        assert!(full.contains(&sigma_y(), tol()).unwrap());
    }

    #[test]
    fn generate_rejects_wrong_shapes() {
        let err = OperatorAlgebra::generate(&[sigma_x(), identity(3)], 2, tol()).unwrap_err();
        assert_eq!(err.kind(), "shape");
    }

    #[test]
    fn commutant_examples() {
        assert_eq!(OperatorAlgebra::full(2).commutant(tol()).dim(), 1);
        for n in 2..5 {
            let d = OperatorAlgebra::diagonal(n);
            assert!(d.commutant(tol()).equal(&d, tol()).unwrap());
        }
        let gens = [
            kron(&sigma_x(), &identity(2)),
            kron(&sigma_z(), &identity(2)),
        ];
        let a = OperatorAlgebra::generate(&gens, 4, tol()).unwrap();
        assert_eq!(a.dim(), 4);
        let c = a.commutant(tol());
        assert_eq!(c.dim(), 4);
        for p in [sigma_x(), sigma_y(), sigma_z()] {
            assert!(c.contains(&kron(&identity(2), &p), tol()).unwrap());
        }
    }

    #[test]
    fn double_commutant_examples() {
        let s = OperatorAlgebra::scalars(3);
        assert!(s.double_commutant(tol()).equal(&s, tol()).unwrap());
        let a = span_ix();
        assert!(a.double_commutant(tol()).equal(&a, tol()).unwrap());
    }

    #[test]
    fn intersect_examples() {
        let a = span_ix();
        assert!(a.intersect(&a, tol()).unwrap().equal(&a, tol()).unwrap());
        let left = OperatorAlgebra::generate(
            &[
                kron(&sigma_x(), &identity(2)),
                kron(&sigma_z(), &identity(2)),
            ],
            4,
            tol(),
        )
        .unwrap();
        let right = OperatorAlgebra::generate(
            &[
                kron(&identity(2), &sigma_x()),
                kron(&identity(2), &sigma_z()),
            ],
            4,
            tol(),
        )
        .unwrap();
        let meet = left.intersect(&right, tol()).unwrap();
        assert_eq!(meet.dim(), 1);
        assert!(meet.is_degenerate());
        let meet = OperatorAlgebra::diagonal(2).intersect(&a, tol()).unwrap();
        assert_eq!(meet.dim(), 1);
        assert!(meet.contains(&identity(2), tol()).unwrap());
        let err = a
            .intersect(&OperatorAlgebra::scalars(3), tol())
            .unwrap_err();
        assert_eq!(err.kind(), "shape");
    }

    #[test]
    fn contains_and_equal_examples() {
        let s = OperatorAlgebra::scalars(2);
        assert!(s.contains(&(identity(2) * cr(5.0)), tol()).unwrap());
        assert!(!OperatorAlgebra::diagonal(2)
            .contains(&sigma_x(), tol())
            .unwrap());
        let g = OperatorAlgebra::generate(&[sigma_x(), sigma_z()], 2, tol()).unwrap();
        let std_basis: Vec<CMatrix> = (0..4)
            .map(|k| {
                let mut m = CMatrix::zeros(2, 2);
                m[(k / 2, k % 2)] = cr(1.0);
                m
            })
            .collect();
        let full = OperatorAlgebra::from_span(&std_basis, 2, tol()).unwrap();
        assert!(g.equal(&full, tol()).unwrap());
        assert_eq!(s.contains(&identity(3), tol()).unwrap_err().kind(), "shape");
    }

    #[test]
    fn center_examples() {
        assert_eq!(OperatorAlgebra::full(3).center(tol()).dim(), 1);
        let d = OperatorAlgebra::diagonal(3);
        assert!(d.center(tol()).equal(&d, tol()).unwrap());
        let left = OperatorAlgebra::generate(
            &[
                kron(&sigma_x(), &identity(2)),
                kron(&sigma_z(), &identity(2)),
            ],
            4,
            tol(),
        )
        .unwrap();
        assert_eq!(left.center(tol()).dim(), 1);
    }

    #[test]
    fn from_span_rejects_non_algebras() {
        // span{I, N} with N nilpotent: not adjoint-closed
        let mut nil = CMatrix::zeros(2, 2);
        nil[(0, 1)] = cr(1.0);
        let err = OperatorAlgebra::from_span(&[identity(2), nil], 2, tol()).unwrap_err();
        assert_eq!(err.kind(), "invalid-algebra");
        // span{sigma_x} alone: not unital
        assert!(OperatorAlgebra::from_span(&[sigma_x()], 2, tol()).is_err());
        // span{I, X, Z}: not closed under products (XZ = -iY)
        assert!(
            OperatorAlgebra::from_span(&[identity(2), sigma_x(), sigma_z()], 2, tol()).is_err()
        );
    }

    #[test]
    fn validate_accepts_constructed_algebras() {
        for a in [
            OperatorAlgebra::full(3),
            OperatorAlgebra::diagonal(4),
            OperatorAlgebra::scalars(2),
            span_ix(),
        ] {
            a.validate(tol()).unwrap();
            for b in a.basis() {
                assert!(crate::numerics::hermiticity_defect(b) < 1e-12);
            }
        }
    }
}
