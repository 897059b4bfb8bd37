//! Virtual multipartite structures: labelled families of unital,
//! double-commutant closed subalgebras of `M_n`.
//!
//! Loci may overlap and need not generate the whole algebra. Structures are
//! ordered by coarsening, joined by intersecting loci, and related to states
//! through the factorization of expectation values.

use indexmap::IndexMap;
use serde::Serialize;

use crate::algebra::OperatorAlgebra;
use crate::error::{Error, Result};
use crate::numerics::{hermitian_spectral_norm, identity, CMatrix, Tolerance, C64};
use crate::states::{expect_matrix, State, StateSet};
use crate::tps::reconstruct_qubits;

/// Largest number of locus tuples the multiway relation will enumerate.
pub const MAX_MULTIWAY_TUPLES: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct Mps {
    ambient_dim: usize,
    loci: IndexMap<String, OperatorAlgebra>,
    provenance: Option<String>,
}

/// Outcome of [`is_valid_mps`].
#[derive(Debug, Clone, PartialEq)]
pub struct MpsValidity {
    pub valid: bool,
    pub diagnostics: Vec<String>,
}

pub fn is_valid_mps(
    ambient_dim: usize,
    candidate: &[(String, OperatorAlgebra)],
    tol: Tolerance,
) -> MpsValidity {
    let mut diagnostics = Vec::new();
    if candidate.is_empty() {
        diagnostics.push("no loci".to_string());
    }
    let mut seen = std::collections::HashSet::new();
    for (label, a) in candidate {
        if !seen.insert(label.as_str()) {
            diagnostics.push(format!("locus {label}: duplicate label"));
            break;
        }
        if a.ambient_dim() != ambient_dim {
            diagnostics.push(format!(
                "locus {label}: ambient dimension {} instead of {ambient_dim}",
                a.ambient_dim()
            ));
            break;
        }
        if let Err(e) = a.validate(tol) {
            diagnostics.push(format!("locus {label}: {e}"));
            break;
        }
        if !a.contains(&identity(ambient_dim), tol).unwrap_or(false) {
            diagnostics.push(format!("locus {label}: not unital"));
            break;
        }
        match a.double_commutant(tol).equal(a, tol) {
            Ok(true) => {}
            _ => {
                diagnostics.push(format!("locus {label}: not closed under double commutant"));
                break;
            }
        }
    }
    MpsValidity {
        valid: diagnostics.is_empty(),
        diagnostics,
    }
}

impl Mps {
    /// Validated constructor.
    pub fn new(
        ambient_dim: usize,
        loci: Vec<(String, OperatorAlgebra)>,
        tol: Tolerance,
    ) -> Result<Self> {
        let check = is_valid_mps(ambient_dim, &loci, tol);
        if !check.valid {
            return Err(Error::InvalidAlgebra(check.diagnostics.join("; ")));
        }
        Ok(Self::from_trusted(ambient_dim, loci))
    }

    pub(crate) fn from_trusted(ambient_dim: usize, loci: Vec<(String, OperatorAlgebra)>) -> Self {
        Mps {
            ambient_dim,
            loci: loci.into_iter().collect(),
            provenance: None,
        }
    }

    /// `{M_n}` with the single locus `all`.
    pub fn trivial(n: usize) -> Self {
        Self::from_trusted(n, vec![("all".into(), OperatorAlgebra::full(n))])
            .with_provenance("trivial".to_string())
    }

    /// A single scalar locus.
    pub fn scalar(n: usize) -> Self {
        Self::from_trusted(n, vec![("scalars".into(), OperatorAlgebra::scalars(n))])
            .with_provenance("scalars".to_string())
    }

    pub fn with_provenance(mut self, note: String) -> Self {
        self.provenance = Some(note);
        self
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.loci.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loci.is_empty()
    }

    pub fn loci(&self) -> impl Iterator<Item = (&String, &OperatorAlgebra)> {
        self.loci.iter()
    }

    pub fn labels(&self) -> Vec<String> {
        self.loci.keys().cloned().collect()
    }

    pub fn locus(&self, label: &str) -> Option<&OperatorAlgebra> {
        self.loci.get(label)
    }

    /// `U a U^H` for every locus.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Mps> {
        let loci = self
            .loci
            .iter()
            .map(|(l, a)| Ok((l.clone(), a.conjugate(u)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Mps {
            ambient_dim: self.ambient_dim,
            loci: loci.into_iter().collect(),
            provenance: self.provenance.clone(),
        })
    }

    /// Equality of the loci as sets of algebras; labels are ignored.
    pub fn equal(&self, other: &Mps, tol: Tolerance) -> Result<bool> {
        check_ambient(self, other)?;
        Ok(covers(self, other, tol)? && covers(other, self, tol)?)
    }
}

fn covers(p: &Mps, q: &Mps, tol: Tolerance) -> Result<bool> {
    for a in q.loci.values() {
        let mut found = false;
        for b in p.loci.values() {
            if a.equal(b, tol)? {
                found = true;
                break;
            }
        }
        if !found {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_ambient(p: &Mps, q: &Mps) -> Result<()> {
    if p.ambient_dim != q.ambient_dim {
        return Err(Error::shape(format!(
            "ambient dimensions differ: {} vs {}",
            p.ambient_dim, q.ambient_dim
        )));
    }
    Ok(())
}

/// `p ⪯ q`: the loci of `q` can be grouped so that each group generates a
/// subalgebra of a distinct locus of `p`.
///
/// Because each locus of `p` is itself an algebra, the algebra generated by a
/// group lies in it exactly when every member does, so the search over
/// groupings reduces to asking that every locus of `q` sits inside some
/// locus of `p` (groups are then the preimages).
pub fn coarser(p: &Mps, q: &Mps, tol: Tolerance) -> Result<bool> {
    check_ambient(p, q)?;
    for a in q.loci.values() {
        let mut inside = false;
        for b in p.loci.values() {
            if a.is_subalgebra_of(b, tol)? {
                inside = true;
                break;
            }
        }
        if !inside {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Join by intersections: one locus per tuple of source loci, deduplicated
/// by algebra equality (first tuple wins).
///
/// Scalar intersections lie in every locus and are dropped, so that
/// `p ∨ p = p`. When every intersection is scalar the result is a single
/// degenerate locus.
pub fn join(members: &[Mps], tol: Tolerance) -> Result<Mps> {
    let first = members.first().ok_or(Error::EmptyJoin)?;
    for m in &members[1..] {
        check_ambient(first, m)?;
    }
    let mut acc: Vec<(Vec<String>, OperatorAlgebra)> = first
        .loci
        .iter()
        .map(|(l, a)| (vec![l.clone()], a.clone()))
        .collect();
    for m in &members[1..] {
        let mut next: Vec<(Vec<String>, OperatorAlgebra)> = Vec::new();
        for (labels, a) in &acc {
            for (l, b) in &m.loci {
                let meet = a.intersect(b, tol)?;
                let mut duplicate = false;
                for (_, c) in &next {
                    if meet.equal(c, tol)? {
                        duplicate = true;
                        break;
                    }
                }
                if !duplicate {
                    let mut tuple = labels.clone();
                    tuple.push(l.clone());
                    next.push((tuple, meet));
                }
            }
        }
        acc = next;
    }
    if acc.iter().any(|(_, a)| !a.is_degenerate()) {
        acc.retain(|(_, a)| !a.is_degenerate());
    } else {
        acc.truncate(1);
    }
    let r = members.len();
    let mut loci = Vec::with_capacity(acc.len());
    for (tuple, a) in acc {
        if !a.double_commutant(tol).equal(&a, tol)? {
            return Err(Error::Internal(format!(
                "intersection ({}) is not double-commutant closed",
                tuple.join(",")
            )));
        }
        let label = if r == 1 {
            tuple[0].clone()
        } else {
            format!("({})", tuple.join(","))
        };
        loci.push((label.clone(), a.with_label(label)));
    }
    let note = format!(
        "join of [{}]",
        members
            .iter()
            .map(|m| m.provenance().unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(Mps::from_trusted(first.ambient_dim, loci).with_provenance(note))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparabilityMode {
    /// `ρ(a_i a_j) = ρ(a_i) ρ(a_j)` for all distinct loci `i, j`.
    #[default]
    Pairwise,
    /// `ρ(∏ a_i) = ∏ ρ(a_i)` with one element from every locus, in both
    /// the forward and reversed product order.
    Multiway,
}

impl std::str::FromStr for SeparabilityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" => Ok(SeparabilityMode::Pairwise),
            "multiway" => Ok(SeparabilityMode::Multiway),
            other => Err(Error::InvalidInput(format!(
                "mode must be pairwise or multiway, got {other:?}"
            ))),
        }
    }
}

/// First tuple of basis elements on which expectations fail to factorize.
#[derive(Debug, Clone)]
pub struct RelationWitness {
    pub loci: Vec<String>,
    /// Basis indices within each locus.
    pub indices: Vec<usize>,
    /// The basis elements, rescaled to unit operator norm.
    pub elements: Vec<CMatrix>,
    /// `ρ(product)`.
    pub lhs: C64,
    /// Product of the single expectations.
    pub rhs: C64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct RelationOutcome {
    pub holds: bool,
    pub max_defect: f64,
    pub witness: Option<RelationWitness>,
}

/// Factorization of expectations over locus bases.
///
/// Checking basis elements suffices: both sides are linear in each slot, so
/// agreement on a basis of every locus gives agreement on all elements.
/// Basis elements are rescaled to unit operator norm, so the reported gaps
/// are on the scale of expectation values. The tolerance is `tol.eps_rel`,
/// absolute.
pub fn separability_relation(
    rho: &State,
    p: &Mps,
    mode: SeparabilityMode,
    tol: Tolerance,
) -> Result<RelationOutcome> {
    if rho.dim() != p.ambient_dim {
        return Err(Error::shape(format!(
            "state dimension {} vs structure {}",
            rho.dim(),
            p.ambient_dim
        )));
    }
    let r = rho.rho();
    let loci: Vec<(&String, Vec<CMatrix>, Vec<C64>)> = p
        .loci
        .iter()
        .map(|(l, a)| {
            let elems: Vec<CMatrix> = a
                .basis()
                .iter()
                .map(|b| {
                    let s = hermitian_spectral_norm(b);
                    if s > 0.0 {
                        b.unscale(s)
                    } else {
                        b.clone()
                    }
                })
                .collect();
            let ev = elems
                .iter()
                .map(|e| expect_matrix(r, e))
                .collect::<Result<Vec<_>>>()?;
            Ok((l, elems, ev))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = RelationOutcome {
        holds: true,
        max_defect: 0.0,
        witness: None,
    };
    let mut record = |idx: &[(usize, usize)], lhs: C64, rhs: C64| {
        let gap = (lhs - rhs).norm();
        out.max_defect = out.max_defect.max(gap);
        if gap > tol.eps_rel && out.witness.is_none() {
            out.holds = false;
            out.witness = Some(RelationWitness {
                loci: idx.iter().map(|&(i, _)| loci[i].0.clone()).collect(),
                indices: idx.iter().map(|&(_, k)| k).collect(),
                elements: idx.iter().map(|&(i, k)| loci[i].1[k].clone()).collect(),
                lhs,
                rhs,
                gap,
            });
        }
    };
    let m = loci.len();
    if m < 2 {
        return Ok(out);
    }
    match mode {
        SeparabilityMode::Pairwise => {
            for i in 0..m {
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    for (a, ea) in loci[i].1.iter().enumerate() {
                        let ra = r * ea;
                        for (b, eb) in loci[j].1.iter().enumerate() {
                            let lhs = trace_product(&ra, eb);
                            let rhs = loci[i].2[a] * loci[j].2[b];
                            record(&[(i, a), (j, b)], lhs, rhs);
                        }
                    }
                }
            }
        }
        SeparabilityMode::Multiway => {
            let sizes: Vec<usize> = loci.iter().map(|l| l.1.len()).collect();
            let total = sizes
                .iter()
                .try_fold(1usize, |acc, &s| acc.checked_mul(s))
                .filter(|&t| t <= MAX_MULTIWAY_TUPLES)
                .ok_or_else(|| {
                    Error::TooLarge(format!(
                        "multiway relation needs more than {MAX_MULTIWAY_TUPLES} tuples"
                    ))
                })?;
            for t in 0..total {
                let digits = crate::numerics::digits_of(t, &sizes);
                let idx: Vec<(usize, usize)> = digits.iter().cloned().enumerate().collect();
                let rhs = idx
                    .iter()
                    .fold(C64::new(1.0, 0.0), |acc, &(i, k)| acc * loci[i].2[k]);
                let forward = idx
                    .iter()
                    .fold(identity(p.ambient_dim), |acc, &(i, k)| acc * &loci[i].1[k]);
                let backward = idx
                    .iter()
                    .rev()
                    .fold(identity(p.ambient_dim), |acc, &(i, k)| acc * &loci[i].1[k]);
                record(&idx, expect_matrix(r, &forward)?, rhs);
                let rev: Vec<(usize, usize)> = idx.iter().rev().cloned().collect();
                record(&rev, expect_matrix(r, &backward)?, rhs);
            }
        }
    }
    Ok(out)
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// A finite, deduplicated family of structures on a common space.
#[derive(Debug, Clone)]
pub struct MpsCatalog {
    ambient_dim: usize,
    members: Vec<Mps>,
}

impl MpsCatalog {
    pub fn new(ambient_dim: usize) -> Self {
        MpsCatalog {
            ambient_dim,
            members: Vec::new(),
        }
    }

    pub fn from_members(ambient_dim: usize, members: Vec<Mps>, tol: Tolerance) -> Result<Self> {
        let mut c = Self::new(ambient_dim);
        for m in members {
            c.push(m, tol)?;
        }
        Ok(c)
    }

    /// Adds `m` unless an equal structure is already present.
    pub fn push(&mut self, m: Mps, tol: Tolerance) -> Result<bool> {
        if m.ambient_dim != self.ambient_dim {
            return Err(Error::shape(format!(
                "catalog is over C^{}, structure over C^{}",
                self.ambient_dim, m.ambient_dim
            )));
        }
        for existing in &self.members {
            if existing.equal(&m, tol)? {
                return Ok(false);
            }
        }
        self.members.push(m);
        Ok(true)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn members(&self) -> &[Mps] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Indices of the catalog members with respect to which `rho` is separable.
pub fn pi_over_catalog(
    rho: &State,
    catalog: &MpsCatalog,
    mode: SeparabilityMode,
    tol: Tolerance,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (k, m) in catalog.members.iter().enumerate() {
        if separability_relation(rho, m, mode, tol)?.holds {
            out.push(k);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub mps: Mps,
    /// Catalog indices that entered the join, in order.
    pub members: Vec<usize>,
    /// `(state index, catalog index)` for every qualifying pair.
    pub contributions: Vec<(usize, usize)>,
    /// Set when no member qualified and the scalar structure was returned.
    pub fallback: bool,
    pub diagnostics: Vec<String>,
}

/// Join of every catalog member that some available state is separable
/// with respect to.
pub fn recover_loci(
    available: &StateSet,
    catalog: &MpsCatalog,
    mode: SeparabilityMode,
    tol: Tolerance,
) -> Result<Recovery> {
    if available.is_empty() {
        return Err(Error::InvalidInput("no available states".into()));
    }
    if catalog.is_empty() {
        return Err(Error::InvalidInput("empty catalog".into()));
    }
    if available.ambient_dim() != catalog.ambient_dim {
        return Err(Error::shape(format!(
            "states on C^{}, catalog on C^{}",
            available.ambient_dim(),
            catalog.ambient_dim
        )));
    }
    let mut contributions = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    for (s, rho) in available.states().iter().enumerate() {
        for k in pi_over_catalog(rho, catalog, mode, tol)? {
            contributions.push((s, k));
            if !members.contains(&k) {
                members.push(k);
            }
        }
    }
    members.sort_unstable();
    let name = |s: usize| {
        available.states()[s]
            .name()
            .map(str::to_string)
            .unwrap_or_else(|| format!("#{s}"))
    };
    let member_name = |k: usize| {
        catalog.members[k]
            .provenance()
            .map(str::to_string)
            .unwrap_or_else(|| format!("#{k}"))
    };
    let mut diagnostics = Vec::new();
    if members.is_empty() {
        diagnostics.push(
            "no catalog member is separable for any available state; returning the scalar locus"
                .to_string(),
        );
        return Ok(Recovery {
            mps: Mps::scalar(catalog.ambient_dim),
            members,
            contributions,
            fallback: true,
            diagnostics,
        });
    }
    let chosen: Vec<Mps> = members
        .iter()
        .map(|&k| catalog.members[k].clone())
        .collect();
    let joined = join(&chosen, tol)?;
    for (label, a) in joined.loci() {
        if a.is_degenerate() {
            diagnostics.push(format!("locus {label} is degenerate (scalars only)"));
        }
    }
    let note = contributions
        .iter()
        .map(|&(s, k)| format!("{} ~ {}", name(s), member_name(k)))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Recovery {
        mps: joined.with_provenance(format!("recovered from [{note}]")),
        members,
        contributions,
        fallback: false,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocusReport {
    pub label: String,
    pub dim: usize,
    pub degenerate: bool,
    pub center_dim: usize,
    /// Prime factor dimensions if the locus is a full matrix algebra.
    pub qubits: Option<Vec<usize>>,
    pub not_reconstructible: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpsReport {
    pub ambient_dim: usize,
    pub provenance: Option<String>,
    pub loci: Vec<LocusReport>,
    /// `commuting[i][j]`: every basis element of locus `i` commutes with
    /// every basis element of locus `j`.
    pub commuting: Vec<Vec<bool>>,
}

pub fn mps_report(p: &Mps, tol: Tolerance) -> MpsReport {
    let loci = p
        .loci
        .iter()
        .map(|(label, a)| {
            let (qubits, not_reconstructible) = match reconstruct_qubits(a, tol) {
                Ok(rec) => (Some(rec.tps.dims().as_slice().to_vec()), None),
                Err(why) => (None, Some(why.reason())),
            };
            LocusReport {
                label: label.clone(),
                dim: a.dim(),
                degenerate: a.is_degenerate(),
                center_dim: a.center(tol).dim(),
                qubits,
                not_reconstructible,
            }
        })
        .collect();
    let algebras: Vec<&OperatorAlgebra> = p.loci.values().collect();
    let commuting = algebras
        .iter()
        .map(|a| algebras.iter().map(|b| commute(a, b, tol)).collect())
        .collect();
    MpsReport {
        ambient_dim: p.ambient_dim,
        provenance: p.provenance.clone(),
        loci,
        commuting,
    }
}

fn commute(a: &OperatorAlgebra, b: &OperatorAlgebra, tol: Tolerance) -> bool {
    a.basis()
        .iter()
        .all(|x| b.basis().iter().all(|y| (x * y - y * x).norm() <= tol.eps))
}
