//! Tensor product structures on `C^n`: a factorization `n = n_1 ... n_k`
//! together with a global unitary frame `U`.
//!
//! Locus `i` of a structure is the algebra `U (I ⊗ .. ⊗ M_{n_i} ⊗ .. ⊗ I) U^H`.
//! The unitary is how the same factorization yields different, isomorphic
//! subsystem splittings; permutation matrices recover every choice of
//! computational basis labelling.

use serde::Serialize;

use crate::algebra::OperatorAlgebra;
use crate::error::{Error, Result};
use crate::mps::Mps;
use crate::numerics::{
    c, cr, gell_mann, identity, kron_all, unitarity_defect, CMatrix, DimVector, Tolerance,
};
use crate::partitions::Partition;

/// Tolerance on `‖U^H U - I‖` accepted for twist unitaries.
pub const UNITARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct TpsSpec {
    dims: DimVector,
    unitary: CMatrix,
    labels: Vec<String>,
}

/// Default locus labels: `A, B, C, ...`, then `L26, L27, ...`.
pub fn default_labels(k: usize) -> Vec<String> {
    (0..k)
        .map(|i| {
            if i < 26 {
                ((b'A' + i as u8) as char).to_string()
            } else {
                format!("L{i}")
            }
        })
        .collect()
}

impl TpsSpec {
    /// Untwisted structure (`U = I`) with default labels.
    pub fn new(dims: DimVector) -> Self {
        let n = dims.product();
        let labels = default_labels(dims.len());
        TpsSpec {
            dims,
            unitary: identity(n),
            labels,
        }
    }

    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        Ok(Self::new(DimVector::new(dims.to_vec())?))
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dims.len() {
            return Err(Error::shape(format!(
                "{} labels for {} factors",
                labels.len(),
                self.dims.len()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::InvalidInput("locus labels must be unique".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Replaces the frame unitary outright.
    pub fn with_unitary(mut self, u: CMatrix) -> Result<Self> {
        check_unitary(&u, self.ambient_dim())?;
        self.unitary = u;
        Ok(self)
    }

    pub fn dims(&self) -> &DimVector {
        &self.dims
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.unitary
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn ambient_dim(&self) -> usize {
        self.dims.product()
    }

    pub fn is_untwisted(&self) -> bool {
        (&self.unitary - identity(self.ambient_dim())).norm() == 0.0
    }

    /// Same factorization, frame `u · U`.
    pub fn twist(&self, u: &CMatrix) -> Result<TpsSpec> {
        check_unitary(u, self.ambient_dim())?;
        Ok(TpsSpec {
            dims: self.dims.clone(),
            unitary: u * &self.unitary,
            labels: self.labels.clone(),
        })
    }

    /// `U (I ⊗ .. ⊗ M_{n_i} ⊗ .. ⊗ I) U^H`, labelled with locus `i`'s label.
    ///
    /// The basis is the normalized generalized Gell-Mann basis of the factor,
    /// so for qubits it runs `I, Z, X, Y` on that leg.
    pub fn local_algebra(&self, i: usize) -> Result<OperatorAlgebra> {
        let d = self.dims.as_slice();
        if i >= d.len() {
            return Err(Error::shape(format!(
                "locus {i} out of range for {} factors",
                d.len()
            )));
        }
        let n = self.ambient_dim();
        let ud = self.unitary.adjoint();
        let ids: Vec<CMatrix> = d.iter().map(|&m| identity(m)).collect();
        let basis = gell_mann(d[i])
            .into_iter()
            .map(|g| {
                let mut legs = ids.clone();
                legs[i] = g;
                let m = kron_all(legs.iter());
                let norm = m.norm();
                &self.unitary * (m / cr(norm)) * &ud
            })
            .collect();
        Ok(OperatorAlgebra::from_trusted_basis(n, basis).with_label(self.labels[i].clone()))
    }

    /// The multipartite structure whose loci are the local algebras.
    pub fn to_mps(&self) -> Mps {
        let loci = (0..self.dims.len())
            .map(|i| {
                let a = self.local_algebra(i).expect("index in range");
                (self.labels[i].clone(), a)
            })
            .collect();
        let kind = if self.is_untwisted() {
            "tps"
        } else {
            "twisted tps"
        };
        Mps::from_trusted(self.ambient_dim(), loci).with_provenance(format!("{kind} {}", self.dims))
    }
}

pub fn tps_to_mps(tps: &TpsSpec) -> Mps {
    tps.to_mps()
}

pub fn twist(tps: &TpsSpec, u: &CMatrix) -> Result<TpsSpec> {
    tps.twist(u)
}

fn check_unitary(u: &CMatrix, n: usize) -> Result<()> {
    if u.shape() != (n, n) {
        return Err(Error::shape(format!(
            "unitary is {}x{}, ambient dimension is {n}",
            u.nrows(),
            u.ncols()
        )));
    }
    let defect = unitarity_defect(u);
    if !(defect <= UNITARITY_TOL) {
        return Err(Error::NotUnitary(defect));
    }
    Ok(())
}

/// Change of basis from the computational basis to the Bell basis:
/// `|00> → Φ+`, `|01> → Ψ+`, `|10> → Ψ-`, `|11> → i Φ-`.
///
/// With this pairing every computational basis state is entangled in the
/// twisted frame, and the phase on `Φ-` makes each twisted local algebra meet
/// each untwisted one only in the scalars.
pub fn bell_unitary() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    #[rustfmt::skip]
    let cols = [
        [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)],   // Φ+
        [c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)],   // Ψ+
        [c(0.0, 0.0), c(s, 0.0), c(-s, 0.0), c(0.0, 0.0)],  // Ψ-
        [c(0.0, s), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -s)],  // i Φ-
    ];
    CMatrix::from_fn(4, 4, |r, col| cols[col][r])
}

/// Multiplicative partitions of `n` into factors `≥ 2`, each non-decreasing,
/// including `[n]` itself. Sorted by factor count, then lexicographically.
pub fn factorizations(n: usize) -> Result<Vec<DimVector>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "factorizations need n >= 2, got {n}"
        )));
    }
    fn rec(rest: usize, min: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 1 {
            out.push(prefix.clone());
            return;
        }
        let mut f = min;
        while f * f <= rest {
            if rest.is_multiple_of(f) {
                prefix.push(f);
                rec(rest / f, f, prefix, out);
                prefix.pop();
            }
            f += 1;
        }
        if rest >= min {
            prefix.push(rest);
            out.push(prefix.clone());
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, 2, &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out.into_iter().map(DimVector::new).collect()
}

/// `k` partitions of the basis indices `{0, .., n-1}` that behave as
/// independent Boolean algebras.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisPartitionSet {
    pub n: usize,
    pub partitions: Vec<Partition>,
}

impl BasisPartitionSet {
    /// Every choice of one block per partition meets in exactly one index.
    pub fn is_independent(&self) -> bool {
        let labels: Vec<Vec<usize>> = self.partitions.iter().map(|p| p.labels()).collect();
        let counts: Vec<usize> = self.partitions.iter().map(|p| p.num_blocks()).collect();
        let cells: usize = counts.iter().product();
        if cells != self.n {
            return false;
        }
        let mut hits = vec![0usize; cells];
        for idx in 0..self.n {
            let digits: Vec<usize> = labels.iter().map(|l| l[idx]).collect();
            hits[crate::numerics::index_of(&digits, &counts)] += 1;
        }
        hits.iter().all(|&h| h == 1)
    }
}

/// Partition `i` groups basis indices by their `i`-th mixed-radix digit.
pub fn svozil_partitions(dims: &DimVector) -> Result<BasisPartitionSet> {
    let n = dims.product();
    if n > 4096 {
        return Err(Error::TooLarge(format!("basis of size {n} exceeds 4096")));
    }
    let digits: Vec<Vec<usize>> = (0..n).map(|x| dims.digits(x)).collect();
    let partitions = (0..dims.len())
        .map(|i| {
            let labels: Vec<usize> = digits.iter().map(|d| d[i]).collect();
            Partition::from_labels(&labels).expect("digit labels cover every index")
        })
        .collect();
    Ok(BasisPartitionSet { n, partitions })
}

/// Why an algebra could not be split into qubit-like factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NotReconstructible {
    /// Scalars only.
    Degenerate,
    /// Not a full matrix algebra (dimension is not a square, or the center
    /// is larger than the scalars).
    NotAFactor,
    /// `M_d` with `d` an odd prime: no nontrivial factorization.
    PrimeDimension(usize),
}

impl NotReconstructible {
    pub fn reason(&self) -> String {
        match self {
            NotReconstructible::Degenerate => "degenerate".into(),
            NotReconstructible::NotAFactor => "not a factor".into(),
            NotReconstructible::PrimeDimension(_) => "prime dimension".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QubitReconstruction {
    /// Structure on `C^d` with `dims` the prime factorization of `d`.
    pub tps: TpsSpec,
    pub partitions: BasisPartitionSet,
}

/// If `a` is a full matrix algebra `M_d` (dimension `d^2`, trivial center),
/// splits `C^d` into its prime factors. `M_2` is already a single qubit and
/// reconstructs as `[2]`.
pub fn reconstruct_qubits(
    a: &OperatorAlgebra,
    tol: Tolerance,
) -> std::result::Result<QubitReconstruction, NotReconstructible> {
    let dim = a.dim();
    if dim == 1 {
        return Err(NotReconstructible::Degenerate);
    }
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim || a.center(tol).dim() != 1 {
        return Err(NotReconstructible::NotAFactor);
    }
    let primes = prime_factors(side);
    if primes.len() == 1 && side != 2 {
        return Err(NotReconstructible::PrimeDimension(side));
    }
    let dims = DimVector::new(primes).expect("prime factors are >= 2");
    let partitions = svozil_partitions(&dims).expect("side^2 fits in the ambient space");
    Ok(QubitReconstruction {
        tps: TpsSpec::new(dims),
        partitions,
    })
}

pub fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}
