//! Dense complex linear algebra shared by every other module.
//!
//! Conventions used throughout the crate:
//!
//! * Matrices are `nalgebra` dense matrices of `Complex64`.
//! * Composite indices use mixed radix with factor 0 as the most significant
//!   digit, so `kron(a, b)` acts with `a` on factor 0 and `b` on factor 1.
//! * Every rank or subspace-membership decision goes through
//!   [`singular_threshold`]: a singular value counts as nonzero when it exceeds
//!   `eps * max(sigma_max, floor)`. The public [`numerical_rank`] and
//!   [`nullspace`] use `floor = 0` (purely relative, with an all-zero matrix
//!   treated as scale 1); subspace computations on HS-normalized data pass
//!   `floor = 1` so that round-off on an all-but-zero map is not mistaken for
//!   signal.
//! * Singular value and Hermitian eigen decompositions are delegated to
//!   `faer`; `nalgebra` remains the storage type.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default subspace / rank tolerance.
pub const DEFAULT_EPS: f64 = 1e-9;
/// Default absolute tolerance on expectation-value factorization.
pub const DEFAULT_EPS_REL: f64 = 1e-8;

/// Tolerances threaded through the algebraic routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Relative singular-value cutoff for rank, nullspace and membership.
    pub eps: f64,
    /// Absolute cutoff on `|rho(ab) - rho(a) rho(b)|` style defects.
    pub eps_rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            eps: DEFAULT_EPS,
            eps_rel: DEFAULT_EPS_REL,
        }
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Local dimensions `n_1, ..., n_k` of a tensor factorization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(transparent)]
pub struct DimVector(Vec<usize>);

impl DimVector {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::shape("dimension vector must be non-empty"));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::shape(format!("local dimension {d} < 2")));
        }
        Ok(DimVector(dims))
    }

    pub fn product(&self) -> usize {
        self.0.iter().product()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn digits(&self, index: usize) -> Vec<usize> {
        digits_of(index, &self.0)
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        index_of(digits, &self.0)
    }
}

impl std::fmt::Display for DimVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Mixed-radix digits of `index`, most significant (factor 0) first.
pub fn digits_of(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = index % d;
        index /= d;
    }
    out
}

pub fn index_of(digits: &[usize], dims: &[usize]) -> usize {
    digits
        .iter()
        .zip(dims)
        .fold(0, |acc, (&digit, &d)| acc * d + digit)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)])
}

/// Computational basis vector `e_i` of dimension `n`.
pub fn basis_vector(n: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[i] = cr(1.0);
    v
}

pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

pub fn projector(v: &CVector) -> CMatrix {
    outer(v, v)
}

/// Generalized Gell-Mann matrices for dimension `d`, ordered as: identity,
/// the `d - 1` diagonal ones, then for each pair `j < k` the symmetric and
/// antisymmetric off-diagonal pair. For `d = 2` this is `I, Z, X, Y`.
/// All elements are Hermitian and mutually HS-orthogonal (not normalized).
pub fn gell_mann(d: usize) -> Vec<CMatrix> {
    let mut out = vec![identity(d)];
    for l in 1..d {
        let scale = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut m = CMatrix::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = cr(scale);
        }
        m[(l, l)] = cr(-(l as f64) * scale);
        out.push(m);
    }
    for j in 0..d {
        for k in (j + 1)..d {
            let mut s = CMatrix::zeros(d, d);
            s[(j, k)] = cr(1.0);
            s[(k, j)] = cr(1.0);
            out.push(s);
            let mut a = CMatrix::zeros(d, d);
            a[(j, k)] = c(0.0, -1.0);
            a[(k, j)] = c(0.0, 1.0);
            out.push(a);
        }
    }
    out
}

/// Kronecker product; dimensions multiply.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    factors
        .into_iter()
        .fold(CMatrix::identity(1, 1), |acc, f| kron(&acc, f))
}

/// Hilbert-Schmidt inner product `tr(a^H b)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn hs_norm(a: &CMatrix) -> f64 {
    a.norm()
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn antihermitian_part(a: &CMatrix) -> CMatrix {
    // (a - a^H) / 2i, Hermitian
    (a - a.adjoint()) * c(0.0, -0.5)
}

/// `max |a - a^H|` entrywise.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    (a - a.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `‖u^H u - I‖_F`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    (u.adjoint() * u - identity(u.nrows())).norm()
}

/// Row-major vectorization.
pub fn vectorize(m: &CMatrix) -> CVector {
    let (r, cols) = m.shape();
    CVector::from_iterator(
        r * cols,
        (0..r)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|ij| m[ij]),
    )
}

pub fn unvectorize(v: &CVector, n: usize) -> CMatrix {
    CMatrix::from_row_slice(n, n, v.as_slice())
}

/// HS-isometric real coordinates of a Hermitian matrix: the diagonal, then
/// `sqrt(2) Re` and `sqrt(2) Im` of each strictly upper entry.
pub fn hermitian_to_real(m: &CMatrix) -> DVector<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(m[(i, i)].re);
    }
    let s2 = std::f64::consts::SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(s2 * m[(i, j)].re);
            out.push(s2 * m[(i, j)].im);
        }
    }
    DVector::from_vec(out)
}

pub fn real_to_hermitian(v: &[f64], n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = cr(v[i]);
    }
    let s2 = std::f64::consts::SQRT_2;
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = c(v[k] / s2, v[k + 1] / s2);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// The cutoff below which a singular value is treated as zero:
/// `eps * max(sigma_max, floor)`, with an all-zero spectrum scaled by 1.
pub fn singular_threshold(singular_values: &[f64], eps: f64, floor: f64) -> f64 {
    let smax = singular_values.iter().cloned().fold(0.0, f64::max);
    let scale = if smax == 0.0 { 1.0 } else { smax.max(floor) };
    eps * scale
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    to_faer(m).singular_values().expect("svd converges")
}

/// Number of singular values above `eps` times the largest one.
pub fn numerical_rank(m: &CMatrix, eps: f64) -> usize {
    numerical_rank_with_floor(m, eps, 0.0)
}

pub fn numerical_rank_with_floor(m: &CMatrix, eps: f64, floor: f64) -> usize {
    let s = singular_values(m);
    let thr = singular_threshold(&s, eps, floor);
    s.iter().filter(|&&x| x > thr).count()
}

/// Orthonormal basis of the kernel of `m`, under the same threshold rule as
/// [`numerical_rank`].
pub fn nullspace(m: &CMatrix, eps: f64) -> Vec<CVector> {
    nullspace_with_floor(m, eps, 0.0)
}

pub fn nullspace_with_floor(m: &CMatrix, eps: f64, floor: f64) -> Vec<CVector> {
    let cols = m.ncols();
    if cols == 0 {
        return Vec::new();
    }
    if m.nrows() == 0 {
        return (0..cols).map(|i| basis_vector(cols, i)).collect();
    }
    let svd = to_faer(m).svd().expect("svd converges");
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let thr = singular_threshold(&s, eps, floor);
    let v = from_faer(svd.V());
    (0..cols)
        .filter(|&i| i >= s.len() || s[i] <= thr)
        .map(|i| v.column(i).into_owned())
        .collect()
}

/// Orthonormal basis for the column span of `m` under the threshold rule.
pub fn column_span(m: &CMatrix, eps: f64, floor: f64) -> Vec<CVector> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Vec::new();
    }
    let svd = to_faer(m).thin_svd().expect("svd converges");
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let thr = singular_threshold(&s, eps, floor);
    let u = from_faer(svd.U());
    (0..s.len())
        .filter(|&i| s[i] > thr)
        .map(|i| u.column(i).into_owned())
        .collect()
}

/// Real counterpart of [`column_span`]; vectors come in decreasing order of
/// singular value.
pub fn real_column_span(m: &DMatrix<f64>, eps: f64, floor: f64) -> Vec<DVector<f64>> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Vec::new();
    }
    let svd = to_faer(m).thin_svd().expect("svd converges");
    let s: Vec<f64> = svd.S().column_vector().iter().cloned().collect();
    let thr = singular_threshold(&s, eps, floor);
    let u = from_faer(svd.U());
    (0..s.len())
        .filter(|&i| s[i] > thr)
        .map(|i| u.column(i).into_owned())
        .collect()
}

/// Minimum-norm least squares solution of `a x = b`, discarding singular
/// values below `eps * sigma_max`.
pub fn real_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, eps: f64) -> DVector<f64> {
    let mut x = DVector::zeros(a.ncols());
    if a.ncols() == 0 || a.nrows() == 0 {
        return x;
    }
    let svd = to_faer(a).thin_svd().expect("svd converges");
    let s: Vec<f64> = svd.S().column_vector().iter().cloned().collect();
    let thr = singular_threshold(&s, eps, 0.0);
    let (u, v) = (from_faer(svd.U()), from_faer(svd.V()));
    for (i, &si) in s.iter().enumerate() {
        if si > thr {
            let coeff = u.column(i).dot(b) / si;
            x.axpy(coeff, &v.column(i), 1.0);
        }
    }
    x
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues ascending, with the
/// eigenvectors as matching columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    if m.nrows() == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let h = to_faer(&hermitian_part(m));
    let eig = h
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("eigensolver converges");
    let values = eig.S().column_vector().iter().map(|z| z.re).collect();
    (values, from_faer(eig.U()))
}

fn to_faer<T: faer::traits::ComplexField + Copy>(m: &DMatrix<T>) -> faer::Mat<T> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer<T: nalgebra::Scalar + Copy>(m: faer::MatRef<'_, T>) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigen(m).0.first().cloned().unwrap_or(0.0)
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_spectral_norm(m: &CMatrix) -> f64 {
    hermitian_eigen(m)
        .0
        .iter()
        .fold(0.0, |acc, x| acc.max(x.abs()))
}

fn check_dims(side: usize, dims: &DimVector, what: &str) -> Result<()> {
    if side != dims.product() {
        return Err(Error::shape(format!(
            "{what} has side {side} but dims {dims} have product {}",
            dims.product()
        )));
    }
    Ok(())
}

fn normalize_subset(set: &[usize], k: usize, what: &str) -> Result<Vec<usize>> {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != set.len() {
        return Err(Error::shape(format!("{what}: repeated factor index")));
    }
    if let Some(&bad) = s.iter().find(|&&i| i >= k) {
        return Err(Error::shape(format!(
            "{what}: factor index {bad} out of range for {k} factors"
        )));
    }
    Ok(s)
}

/// Reduced matrix on the factors in `keep` (kept factors stay in increasing
/// order).
pub fn partial_trace(rho: &CMatrix, dims: &DimVector, keep: &[usize]) -> Result<CMatrix> {
    if !rho.is_square() {
        return Err(Error::shape("partial_trace needs a square matrix"));
    }
    check_dims(rho.nrows(), dims, "matrix")?;
    let keep = normalize_subset(keep, dims.len(), "partial_trace")?;
    if keep.is_empty() {
        return Err(Error::shape("partial_trace: keep set is empty"));
    }
    let d = dims.as_slice();
    let traced: Vec<usize> = (0..d.len()).filter(|i| !keep.contains(i)).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|&i| d[i]).collect();
    let m: usize = keep_dims.iter().product();
    let n = dims.product();
    let digits: Vec<Vec<usize>> = (0..n).map(|i| digits_of(i, d)).collect();
    let reduced_index = |dg: &[usize]| -> usize {
        let sel: Vec<usize> = keep.iter().map(|&i| dg[i]).collect();
        index_of(&sel, &keep_dims)
    };
    let mut out = CMatrix::zeros(m, m);
    for r in 0..n {
        for col in 0..n {
            if traced.iter().all(|&t| digits[r][t] == digits[col][t]) {
                out[(reduced_index(&digits[r]), reduced_index(&digits[col]))] += rho[(r, col)];
            }
        }
    }
    Ok(out)
}

/// Transposes the digits of the listed factors.
pub fn partial_transpose(rho: &CMatrix, dims: &DimVector, factors: &[usize]) -> Result<CMatrix> {
    check_dims(rho.nrows(), dims, "matrix")?;
    let factors = normalize_subset(factors, dims.len(), "partial_transpose")?;
    let d = dims.as_slice();
    let n = dims.product();
    let mut out = CMatrix::zeros(n, n);
    for r in 0..n {
        let dr = digits_of(r, d);
        for col in 0..n {
            let dc = digits_of(col, d);
            let (mut nr, mut nc) = (dr.clone(), dc.clone());
            for &f in &factors {
                nr[f] = dc[f];
                nc[f] = dr[f];
            }
            out[(index_of(&nr, d), index_of(&nc, d))] = rho[(r, col)];
        }
    }
    Ok(out)
}

/// Index permutation taking the factor order `order` (new factor `t` is old
/// factor `order[t]`): returns, for each new index, the old index.
fn factor_permutation(dims: &[usize], order: &[usize]) -> Vec<usize> {
    let new_dims: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    let n: usize = dims.iter().product();
    (0..n)
        .map(|new_idx| {
            let nd = digits_of(new_idx, &new_dims);
            let mut od = vec![0; dims.len()];
            for (t, &o) in order.iter().enumerate() {
                od[o] = nd[t];
            }
            index_of(&od, dims)
        })
        .collect()
}

fn check_order(dims: &DimVector, order: &[usize]) -> Result<()> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..dims.len()).collect::<Vec<_>>() {
        return Err(Error::shape("factor order is not a permutation"));
    }
    Ok(())
}

/// Reorders tensor factors: factor `t` of the result is factor `order[t]` of
/// the input.
pub fn permute_factors(m: &CMatrix, dims: &DimVector, order: &[usize]) -> Result<CMatrix> {
    check_dims(m.nrows(), dims, "matrix")?;
    check_order(dims, order)?;
    let p = factor_permutation(dims.as_slice(), order);
    let n = p.len();
    Ok(CMatrix::from_fn(n, n, |i, j| m[(p[i], p[j])]))
}

pub fn permute_vector_factors(v: &CVector, dims: &DimVector, order: &[usize]) -> Result<CVector> {
    check_dims(v.len(), dims, "vector")?;
    check_order(dims, order)?;
    let p = factor_permutation(dims.as_slice(), order);
    Ok(CVector::from_iterator(p.len(), p.iter().map(|&i| v[i])))
}

/// Coefficient matrix of `psi` across the cut `left | rest`; its numerical
/// rank is the Schmidt rank across that cut.
pub fn reshape_cut(psi: &CVector, dims: &DimVector, left: &[usize]) -> Result<CMatrix> {
    check_dims(psi.len(), dims, "vector")?;
    let left = normalize_subset(left, dims.len(), "reshape_cut")?;
    if left.is_empty() || left.len() == dims.len() {
        return Err(Error::shape("reshape_cut needs a proper non-empty subset"));
    }
    let d = dims.as_slice();
    let right: Vec<usize> = (0..d.len()).filter(|i| !left.contains(i)).collect();
    let ld: Vec<usize> = left.iter().map(|&i| d[i]).collect();
    let rd: Vec<usize> = right.iter().map(|&i| d[i]).collect();
    let (rows, cols) = (ld.iter().product::<usize>(), rd.iter().product::<usize>());
    let mut out = CMatrix::zeros(rows, cols);
    for (idx, &amp) in psi.iter().enumerate() {
        let dg = digits_of(idx, d);
        let l: Vec<usize> = left.iter().map(|&i| dg[i]).collect();
        let r: Vec<usize> = right.iter().map(|&i| dg[i]).collect();
        out[(index_of(&l, &ld), index_of(&r, &rd))] = amp;
    }
    Ok(out)
}

/// Haar-random unitary via QR of a complex Ginibre matrix with phase fix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = random_ginibre(n, n, rng);
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            cr(1.0)
        };
        let col = u.column(j) * phase;
        u.set_column(j, &col);
    }
    u
}

pub fn random_ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) / std::f64::consts::SQRT_2
    })
}

/// Random unit vector, uniform on the sphere.
pub fn random_pure<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    let g = random_ginibre(n, 1, rng);
    let v = g.column(0).into_owned();
    let norm = v.norm();
    v / cr(norm)
}

/// Random density matrix `G G^H / tr` of the given rank.
pub fn random_density<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> CMatrix {
    let g = random_ginibre(n, rank.max(1), rng);
    let m = &g * g.adjoint();
    let t = trace(&m).re;
    m / cr(t)
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    hermitian_part(&random_ginibre(n, n, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).iter().all(|z| z.norm() <= tol)
    }

    fn dims(v: &[usize]) -> DimVector {
        DimVector::new(v.to_vec()).unwrap()
    }

    fn bell() -> CVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        CVector::from_vec(vec![cr(s), cr(0.0), cr(0.0), cr(s)])
    }

    #[test]
    fn kron_examples() {
        assert!(close(&kron(&identity(2), &identity(2)), &identity(4), 0.0));
        let zz = kron(&sigma_z(), &identity(2));
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![
            cr(1.0),
            cr(1.0),
            cr(-1.0),
            cr(-1.0),
        ]));
        assert!(close(&zz, &expected, 0.0));
        let xx = kron(&sigma_x(), &sigma_x());
        assert_eq!(&xx * basis_vector(4, 0), basis_vector(4, 3));
    }

    #[test]
    fn partial_trace_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_density(2, 2, &mut rng);
        let b = random_density(2, 2, &mut rng);
        let d = dims(&[2, 2]);
        assert!(close(
            &partial_trace(&kron(&a, &b), &d, &[0]).unwrap(),
            &a,
            1e-12
        ));
        assert!(close(
            &partial_trace(&kron(&a, &b), &d, &[1]).unwrap(),
            &b,
            1e-12
        ));
        let phi = projector(&bell());
        assert!(close(
            &partial_trace(&phi, &d, &[0]).unwrap(),
            &(identity(2) * cr(0.5)),
            1e-12
        ));
        let err = partial_trace(&phi, &d, &[]).unwrap_err();
        assert_eq!(err.kind(), "shape");
        assert_eq!(
            partial_trace(&phi, &dims(&[2, 3]), &[0])
                .unwrap_err()
                .kind(),
            "shape"
        );
    }

    #[test]
    fn rank_and_nullspace_examples() {
        assert_eq!(numerical_rank(&CMatrix::zeros(3, 3), 1e-9), 0);
        assert_eq!(numerical_rank(&identity(3), 1e-9), 3);
        let v = CVector::from_vec(vec![c(1e-6, 2e-6), cr(-3e-6), c(0.0, 1e-6)]);
        assert_eq!(numerical_rank(&outer(&v, &v), 1e-9), 1);

        assert!(nullspace(&identity(4), 1e-9).is_empty());
        let ns = nullspace(&CMatrix::zeros(2, 2), 1e-9);
        assert_eq!(ns.len(), 2);
        assert!((ns[0].dotc(&ns[1])).norm() < 1e-12);
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![cr(1.0), cr(0.0)]));
        let ns = nullspace(&d, 1e-9);
        assert_eq!(ns.len(), 1);
        assert!((ns[0][1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nullspace_of_wide_matrix_is_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_ginibre(2, 5, &mut rng);
        let ns = nullspace(&m, 1e-9);
        assert_eq!(ns.len(), 3);
        for v in &ns {
            assert!((&m * v).norm() < 1e-10);
        }
    }

    #[test]
    fn reshape_cut_examples() {
        let d = dims(&[2, 2]);
        let m = reshape_cut(&basis_vector(4, 0), &d, &[0]).unwrap();
        assert_eq!(numerical_rank(&m, 1e-9), 1);
        assert_eq!(m[(0, 0)], cr(1.0));
        let m = reshape_cut(&bell(), &d, &[0]).unwrap();
        assert!(close(
            &m,
            &(identity(2) * cr(std::f64::consts::FRAC_1_SQRT_2)),
            1e-15
        ));
        assert_eq!(numerical_rank(&m, 1e-9), 2);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut ghz = CVector::zeros(8);
        ghz[0] = cr(s);
        ghz[7] = cr(s);
        let m = reshape_cut(&ghz, &dims(&[2, 2, 2]), &[0, 1]).unwrap();
        assert_eq!(m.shape(), (4, 2));
        assert_eq!(numerical_rank(&m, 1e-9), 2);
        assert_eq!(
            reshape_cut(&ghz, &dims(&[2, 2, 2]), &[0, 1, 2])
                .unwrap_err()
                .kind(),
            "shape"
        );
        assert_eq!(
            reshape_cut(&ghz, &dims(&[2, 2, 2]), &[])
                .unwrap_err()
                .kind(),
            "shape"
        );
    }

    #[test]
    fn mixed_radix_convention() {
        assert_eq!(digits_of(5, &[3, 2]), vec![2, 1]);
        assert_eq!(index_of(&[2, 1], &[3, 2]), 5);
        // factor 0 is the most significant digit, matching kron
        let v = basis_vector(3, 2).kronecker(&basis_vector(2, 1));
        assert_eq!(v.len(), 6);
        assert_eq!(v[5], cr(1.0));
    }

    #[test]
    fn permute_factors_matches_swapped_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_density(2, 2, &mut rng);
        let b = random_density(3, 3, &mut rng);
        let ab = kron(&a, &b);
        let ba = permute_factors(&ab, &dims(&[2, 3]), &[1, 0]).unwrap();
        assert!(close(&ba, &kron(&b, &a), 1e-14));
    }

    #[test]
    fn partial_transpose_of_bell_has_negative_half() {
        let pt = partial_transpose(&projector(&bell()), &dims(&[2, 2]), &[1]).unwrap();
        assert!((min_eigenvalue(&pt) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn gell_mann_is_orthogonal_hermitian() {
        for d in 2..5 {
            let g = gell_mann(d);
            assert_eq!(g.len(), d * d);
            for (i, a) in g.iter().enumerate() {
                assert!(hermiticity_defect(a) < 1e-15);
                for b in g.iter().skip(i + 1) {
                    assert!(hs_inner(a, b).norm() < 1e-12);
                }
            }
        }
        let g = gell_mann(2);
        assert!(close(&g[1], &sigma_z(), 1e-15));
        assert!(close(&g[2], &sigma_x(), 1e-15));
        assert!(close(&g[3], &sigma_y(), 1e-15));
    }

    #[test]
    fn hermitian_real_coordinates_are_isometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_hermitian(4, &mut rng);
        let b = random_hermitian(4, &mut rng);
        let (ra, rb) = (hermitian_to_real(&a), hermitian_to_real(&b));
        assert!((ra.dot(&rb) - hs_inner(&a, &b).re).abs() < 1e-12);
        assert!(close(&real_to_hermitian(ra.as_slice(), 4), &a, 1e-14));
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..7 {
            assert!(unitarity_defect(&random_unitary(n, &mut rng)) < 1e-12);
        }
    }
}
