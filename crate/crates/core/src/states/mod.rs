//! Density matrices, expectation values, and product / separability tests
//! relative to a tensor product structure and a grouping of its factors.
//!
//! All tests run in the frame of the supplied [`TpsSpec`]: the state is
//! conjugated by `U^H` before any reshaping, so "product" always means
//! product with respect to that structure's local algebras.

mod decompose;

pub use decompose::{decompose_separable, CertificateTerm, SeparableCertificate};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    cr, hermiticity_defect, identity, kron_all, min_eigenvalue, numerical_rank, partial_trace,
    partial_transpose, permute_factors, projector, reshape_cut, trace, CMatrix, CVector, DimVector,
    Tolerance, C64,
};
use crate::partitions::Partition;
use crate::tps::TpsSpec;

/// How a [`State`] was supplied.
#[derive(Debug, Clone, PartialEq)]
pub enum StateKind {
    Density,
    /// Pure state; the unit vector is kept alongside the projector.
    Pure(CVector),
    /// A classical distribution embedded on the diagonal.
    ClassicalDiagonal,
}

#[derive(Debug, Clone)]
pub struct State {
    rho: CMatrix,
    kind: StateKind,
    name: Option<String>,
}

impl State {
    /// Validates Hermiticity, positivity (min eigenvalue `>= -eps`) and unit
    /// trace.
    pub fn from_density(rho: CMatrix, tol: Tolerance) -> Result<Self> {
        check_density(&rho, tol)?;
        Ok(State {
            rho,
            kind: StateKind::Density,
            name: None,
        })
    }

    /// Normalizes `psi` and stores `|psi><psi|`.
    pub fn pure(psi: CVector) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState(
                "pure state vector must be nonzero and finite".into(),
            ));
        }
        let psi = psi / cr(norm);
        Ok(State {
            rho: projector(&psi),
            kind: StateKind::Pure(psi),
            name: None,
        })
    }

    /// `diag(p)` for a probability vector `p`.
    pub fn classical(p: &[f64]) -> Result<Self> {
        classical_embed(p)
    }

    pub fn basis(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::InvalidState(format!(
                "basis index {i} out of range for dimension {n}"
            )));
        }
        State::pure(crate::numerics::basis_vector(n, i))
    }

    /// `(|0..0> + |1..1>) / sqrt 2` on `k` qubits.
    pub fn ghz(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidState("GHZ needs at least two qubits".into()));
        }
        let n = 1usize << k;
        let mut v = CVector::zeros(n);
        v[0] = cr(1.0);
        v[n - 1] = cr(1.0);
        State::pure(v)
    }

    /// `Φ+ = (|00> + |11>) / sqrt 2`.
    pub fn bell() -> Self {
        State::ghz(2).expect("two qubits")
    }

    pub fn maximally_mixed(n: usize) -> Self {
        State {
            rho: identity(n) / cr(n as f64),
            kind: StateKind::Density,
            name: None,
        }
    }

    /// `(1 - λ) I/4 + λ |Φ+><Φ+|`.
    pub fn werner(lambda: f64) -> Result<Self> {
        if !(-1.0 / 3.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidState(format!(
                "werner parameter {lambda} outside [-1/3, 1]"
            )));
        }
        let rho = State::maximally_mixed(4).rho * cr(1.0 - lambda) + State::bell().rho * cr(lambda);
        State::from_density(rho, Tolerance::default())
    }

    /// Tensor product of states, in order.
    pub fn product(factors: &[State]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidState("empty product".into()));
        }
        if factors.iter().all(|f| matches!(f.kind, StateKind::Pure(_))) {
            let psi = factors
                .iter()
                .map(|f| match &f.kind {
                    StateKind::Pure(v) => v.clone(),
                    _ => unreachable!(),
                })
                .reduce(|a, b| a.kronecker(&b))
                .expect("non-empty");
            return State::pure(psi);
        }
        let rho = kron_all(factors.iter().map(|f| &f.rho));
        let kind = if factors
            .iter()
            .all(|f| f.kind == StateKind::ClassicalDiagonal)
        {
            StateKind::ClassicalDiagonal
        } else {
            StateKind::Density
        };
        Ok(State {
            rho,
            kind,
            name: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn kind(&self) -> &StateKind {
        &self.kind
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn pure_vector(&self) -> Option<&CVector> {
        match &self.kind {
            StateKind::Pure(v) => Some(v),
            _ => None,
        }
    }

    /// `U ρ U^H` (kind and name preserved).
    pub fn conjugate(&self, u: &CMatrix) -> Result<State> {
        if u.shape() != self.rho.shape() {
            return Err(Error::shape("conjugating unitary has the wrong side"));
        }
        let rho = u * &self.rho * u.adjoint();
        let kind = match &self.kind {
            StateKind::Pure(v) => StateKind::Pure(u * v),
            _ => StateKind::Density,
        };
        Ok(State {
            rho,
            kind,
            name: self.name.clone(),
        })
    }
}

fn check_density(rho: &CMatrix, tol: Tolerance) -> Result<()> {
    if !rho.is_square() || rho.nrows() == 0 {
        return Err(Error::InvalidState(
            "density matrix must be square and non-empty".into(),
        ));
    }
    if !crate::numerics::is_finite(rho) {
        return Err(Error::InvalidState("non-finite entry".into()));
    }
    let h = hermiticity_defect(rho);
    if h > tol.eps {
        return Err(Error::InvalidState(format!(
            "not Hermitian (defect {h:.3e})"
        )));
    }
    let t = trace(rho);
    if (t - cr(1.0)).norm() > 1e-9 {
        return Err(Error::InvalidState(format!("trace {:.12} != 1", t.re)));
    }
    let m = min_eigenvalue(rho);
    if m < -tol.eps {
        return Err(Error::InvalidState(format!(
            "not positive semidefinite (min eigenvalue {m:.3e})"
        )));
    }
    Ok(())
}

/// `diag(p)` as a classical-diagonal state.
pub fn classical_embed(p: &[f64]) -> Result<State> {
    if p.is_empty() {
        return Err(Error::InvalidState("empty probability vector".into()));
    }
    if let Some(x) = p.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidState(format!(
            "negative or non-finite probability {x}"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidState(format!(
            "probabilities sum to {s}, not 1"
        )));
    }
    let rho = CMatrix::from_diagonal(&CVector::from_iterator(p.len(), p.iter().map(|&x| cr(x))));
    Ok(State {
        rho,
        kind: StateKind::ClassicalDiagonal,
        name: None,
    })
}

/// The available states: non-empty, one ambient dimension.
#[derive(Debug, Clone)]
pub struct StateSet {
    states: Vec<State>,
    name: String,
}

impl StateSet {
    pub fn new(name: impl Into<String>, states: Vec<State>) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::InvalidInput("state set must be non-empty".into()))?;
        let n = first.dim();
        if let Some(bad) = states.iter().position(|s| s.dim() != n) {
            return Err(Error::shape(format!(
                "state {bad} has dimension {}, expected {n}",
                states[bad].dim()
            )));
        }
        Ok(StateSet {
            states,
            name: name.into(),
        })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ambient_dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// `ρ(A) = tr(ρ A)`.
pub fn expect(rho: &State, a: &CMatrix) -> Result<C64> {
    expect_matrix(&rho.rho, a)
}

pub(crate) fn expect_matrix(rho: &CMatrix, a: &CMatrix) -> Result<C64> {
    if a.shape() != rho.shape() {
        return Err(Error::shape(format!(
            "observable is {}x{}, state is {}x{}",
            a.nrows(),
            a.ncols(),
            rho.nrows(),
            rho.ncols()
        )));
    }
    let n = rho.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += rho[(i, j)] * a[(j, i)];
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Product,
    Separable,
    Entangled,
    Undetermined,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Product => "product",
            Verdict::Separable => "separable",
            Verdict::Entangled => "entangled",
            Verdict::Undetermined => "undetermined",
        }
    }
}

/// Evidence attached to a verdict.
#[derive(Debug, Clone)]
pub enum Witness {
    /// A pure state with Schmidt rank `> 1` across `block | rest`.
    SchmidtCut {
        block: Vec<usize>,
        schmidt_rank: usize,
    },
    /// A mixed state that differs from the product of its block marginals.
    NotProduct { max_deviation: f64 },
    /// The partial transpose on `transposed` factors has a negative eigenvalue.
    NegativePartialTranspose {
        transposed: Vec<usize>,
        min_eigenvalue: f64,
    },
    /// Every partial transpose is positive and the only cut is `2x2` or `2x3`.
    PptConclusive {
        local_dims: (usize, usize),
        min_eigenvalue: f64,
    },
    /// All partial transposes positive but the regime is not conclusive.
    PptPassed { min_eigenvalue: f64 },
    /// An explicit convex decomposition into block-product states.
    Decomposition(SeparableCertificate),
}

#[derive(Debug, Clone)]
pub struct SeparabilityVerdict {
    pub value: Verdict,
    pub witness: Option<Witness>,
}

impl SeparabilityVerdict {
    fn new(value: Verdict, witness: Option<Witness>) -> Self {
        SeparabilityVerdict { value, witness }
    }

    pub fn is_product(&self) -> bool {
        self.value == Verdict::Product
    }

    /// `product` or `separable`.
    pub fn is_separable(&self) -> bool {
        matches!(self.value, Verdict::Product | Verdict::Separable)
    }
}

/// Optional explicit-decomposition search for the inconclusive regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeparabilityOptions {
    pub search: Option<SearchConfig>,
}

/// The state and `Σ` in the structure's frame, factors reordered so that
/// blocks are contiguous.
pub(crate) struct BlockFrame {
    pub dims: DimVector,
    pub blocks: Vec<Vec<usize>>,
    pub order: Vec<usize>,
    pub block_dims: Vec<usize>,
}

impl BlockFrame {
    pub fn new(tps: &TpsSpec, sigma: &Partition) -> Result<Self> {
        let dims = tps.dims().clone();
        if sigma.ground_size() != dims.len() {
            return Err(Error::InvalidInput(format!(
                "partition is over {} elements but the structure has {} factors",
                sigma.ground_size(),
                dims.len()
            )));
        }
        let blocks = sigma.blocks().to_vec();
        let order: Vec<usize> = blocks.iter().flatten().cloned().collect();
        let block_dims = blocks
            .iter()
            .map(|b| b.iter().map(|&i| dims.as_slice()[i]).product())
            .collect();
        Ok(BlockFrame {
            dims,
            blocks,
            order,
            block_dims,
        })
    }

    /// Tensor product of per-block matrices, returned in the original factor
    /// order of the frame.
    pub fn assemble(&self, factors: &[CMatrix]) -> CMatrix {
        let blockwise = kron_all(factors.iter());
        let ordered_dims = DimVector::new(
            self.order
                .iter()
                .map(|&i| self.dims.as_slice()[i])
                .collect(),
        )
        .expect("dims valid");
        let mut inverse = vec![0; self.order.len()];
        for (t, &o) in self.order.iter().enumerate() {
            inverse[o] = t;
        }
        permute_factors(&blockwise, &ordered_dims, &inverse).expect("consistent permutation")
    }

    /// Reorders a frame-level matrix so the blocks are contiguous.
    pub fn to_block_order(&self, m: &CMatrix) -> CMatrix {
        permute_factors(m, &self.dims, &self.order).expect("consistent permutation")
    }
}

fn check_state_tps(rho: &State, tps: &TpsSpec) -> Result<()> {
    if rho.dim() != tps.ambient_dim() {
        return Err(Error::shape(format!(
            "state dimension {} does not match structure dimension {}",
            rho.dim(),
            tps.ambient_dim()
        )));
    }
    Ok(())
}

fn frame_rho(rho: &State, tps: &TpsSpec) -> CMatrix {
    let u = tps.unitary();
    u.adjoint() * rho.rho() * u
}

/// Σ-product test. Pure states: Schmidt rank 1 across every `block | rest`
/// cut. Mixed states: equality with the product of block marginals.
///
/// A non-product answer is reported as [`Verdict::Entangled`] with a
/// [`Witness::SchmidtCut`] or [`Witness::NotProduct`]; for mixed states this
/// means "not Σ-product", not "not Σ-separable".
pub fn is_sigma_product(
    rho: &State,
    tps: &TpsSpec,
    sigma: &Partition,
    tol: Tolerance,
) -> Result<SeparabilityVerdict> {
    check_state_tps(rho, tps)?;
    let frame = BlockFrame::new(tps, sigma)?;
    if frame.blocks.len() == 1 {
        return Ok(SeparabilityVerdict::new(Verdict::Product, None));
    }
    if let Some(psi) = rho.pure_vector() {
        let psi = tps.unitary().adjoint() * psi;
        for block in &frame.blocks {
            let m = reshape_cut(&psi, &frame.dims, block)?;
            let r = numerical_rank(&m, tol.eps);
            if r > 1 {
                return Ok(SeparabilityVerdict::new(
                    Verdict::Entangled,
                    Some(Witness::SchmidtCut {
                        block: block.clone(),
                        schmidt_rank: r,
                    }),
                ));
            }
        }
        return Ok(SeparabilityVerdict::new(Verdict::Product, None));
    }
    let r = frame_rho(rho, tps);
    let marginals = frame
        .blocks
        .iter()
        .map(|b| partial_trace(&r, &frame.dims, b))
        .collect::<Result<Vec<_>>>()?;
    let dev = (frame.assemble(&marginals) - &r)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if dev <= tol.eps_rel {
        Ok(SeparabilityVerdict::new(Verdict::Product, None))
    } else {
        Ok(SeparabilityVerdict::new(
            Verdict::Entangled,
            Some(Witness::NotProduct { max_deviation: dev }),
        ))
    }
}

/// Σ-separability.
///
/// Pure states: exactly the Σ-product test. Mixed states: product check,
/// then positivity of the partial transpose across every split of Σ's blocks
/// into two groups. A negative eigenvalue below `-eps` proves entanglement.
/// If all pass and Σ has two blocks of joint size `2x2` or `2x3`, positivity
/// is sufficient and the verdict is `separable`. Otherwise the answer is
/// `undetermined` unless `options.search` finds an explicit decomposition.
pub fn is_sigma_separable(
    rho: &State,
    tps: &TpsSpec,
    sigma: &Partition,
    options: &SeparabilityOptions,
    tol: Tolerance,
) -> Result<SeparabilityVerdict> {
    let product = is_sigma_product(rho, tps, sigma, tol)?;
    if product.is_product() || rho.pure_vector().is_some() {
        return Ok(product);
    }
    let frame = BlockFrame::new(tps, sigma)?;
    let r = frame_rho(rho, tps);
    let m = frame.blocks.len();
    let mut worst = f64::INFINITY;
    // group A always holds block 0; transpose the other group
    for mask in 1..(1usize << (m - 1)) {
        let transposed: Vec<usize> = (1..m)
            .filter(|b| mask & (1 << (b - 1)) != 0)
            .flat_map(|b| frame.blocks[b].iter().cloned())
            .collect();
        let pt = partial_transpose(&r, &frame.dims, &transposed)?;
        let min = min_eigenvalue(&pt);
        if min < -tol.eps {
            let mut transposed = transposed;
            transposed.sort_unstable();
            return Ok(SeparabilityVerdict::new(
                Verdict::Entangled,
                Some(Witness::NegativePartialTranspose {
                    transposed,
                    min_eigenvalue: min,
                }),
            ));
        }
        worst = worst.min(min);
    }
    if m == 2 {
        let (a, b) = (frame.block_dims[0], frame.block_dims[1]);
        if a * b <= 6 {
            return Ok(SeparabilityVerdict::new(
                Verdict::Separable,
                Some(Witness::PptConclusive {
                    local_dims: (a, b),
                    min_eigenvalue: worst,
                }),
            ));
        }
    }
    if let Some(cfg) = options.search {
        if let Some(cert) = decompose_separable(rho, tps, sigma, cfg.budget, cfg.seed)? {
            return Ok(SeparabilityVerdict::new(
                Verdict::Separable,
                Some(Witness::Decomposition(cert)),
            ));
        }
    }
    Ok(SeparabilityVerdict::new(
        Verdict::Undetermined,
        Some(Witness::PptPassed {
            min_eigenvalue: worst,
        }),
    ))
}
