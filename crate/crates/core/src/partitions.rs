//! Set partitions of the subsystem index set and the coarse-graining order.
//!
//! Orientation: `Σ ⪯ Σ'` means `Σ'` refines `Σ`, i.e. `Σ` is the coarser
//! one. [`refines`]`(fine, coarse)` is true when `coarse ⪯ fine`. The
//! "maximal" members of a family are therefore its *finest* partitions; for a
//! family that is closed under coarsening (as `Π(ρ)` is) they determine all
//! the others.
//!
//! Blocks are written 1-based without separators, so `1|23` is the partition
//! `{{0}, {1, 2}}`. Ground sets larger than 9 use commas inside blocks.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Tolerance;
use crate::states::{is_sigma_separable, SeparabilityOptions, State, Verdict};
use crate::tps::TpsSpec;

/// Upper bound for exhaustive enumeration (B_10 = 115975).
pub const MAX_ENUMERATION: usize = 10;

/// A partition of `{0, ..., ground_size - 1}` in canonical form: each block
/// sorted, blocks ordered by least element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    ground_size: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(ground_size: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if ground_size == 0 {
            return Err(Error::InvalidInput(
                "partition ground set must be non-empty".into(),
            ));
        }
        let mut seen = vec![false; ground_size];
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidInput("empty block".into()));
            }
            for &x in b {
                if x >= ground_size {
                    return Err(Error::InvalidInput(format!(
                        "element {x} outside ground set of size {ground_size}"
                    )));
                }
                if seen[x] {
                    return Err(Error::InvalidInput(format!("element {x} appears twice")));
                }
                seen[x] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!(
                "element {missing} is not covered"
            )));
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Partition {
            ground_size,
            blocks,
        })
    }

    /// From a block label per element (any labels; equal label = same block).
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut blocks: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            match blocks.iter_mut().find(|(lab, _)| *lab == l) {
                Some((_, b)) => b.push(i),
                None => blocks.push((l, vec![i])),
            }
        }
        Partition::new(labels.len(), blocks.into_iter().map(|(_, b)| b).collect())
    }

    /// All singletons.
    pub fn finest(n: usize) -> Self {
        Partition {
            ground_size: n,
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// One block.
    pub fn coarsest(n: usize) -> Self {
        Partition {
            ground_size: n,
            blocks: vec![(0..n).collect()],
        }
    }

    pub fn ground_size(&self) -> usize {
        self.ground_size
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block index of every element.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.ground_size];
        for (k, b) in self.blocks.iter().enumerate() {
            for &x in b {
                out[x] = k;
            }
        }
        out
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.ground_size > 9 { "," } else { "" };
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|x| (x + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(sep)
            })
            .collect();
        write!(f, "{}", parts.join("|"))
    }
}

impl FromStr for Partition {
    type Err = Error;

    /// Parses the 1-based display form, e.g. `1|23` or `1,2|3,10`.
    fn from_str(s: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        for part in s.split('|') {
            let part = part.trim();
            let elems: Result<Vec<usize>> = if part.contains(',') {
                part.split(',').map(|t| parse_element(t.trim())).collect()
            } else {
                part.chars()
                    .map(|ch| parse_element(&ch.to_string()))
                    .collect()
            };
            blocks.push(elems?);
        }
        let n = blocks.iter().flatten().max().map_or(0, |m| m + 1);
        Partition::new(n, blocks)
    }
}

fn parse_element(t: &str) -> Result<usize> {
    match t.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v - 1),
        _ => Err(Error::InvalidInput(format!("bad partition element '{t}'"))),
    }
}

/// A duplicate-free list of partitions of one ground set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionFamily {
    ground_size: usize,
    members: Vec<Partition>,
}

impl PartitionFamily {
    pub fn empty(ground_size: usize) -> Self {
        PartitionFamily {
            ground_size,
            members: Vec::new(),
        }
    }

    pub fn from_members(ground_size: usize, members: Vec<Partition>) -> Result<Self> {
        let mut fam = PartitionFamily::empty(ground_size);
        for m in members {
            if m.ground_size != ground_size {
                return Err(Error::InvalidInput(
                    "partition over a different ground set".into(),
                ));
            }
            if !fam.insert(m) {
                return Err(Error::InvalidInput("duplicate partition in family".into()));
            }
        }
        Ok(fam)
    }

    /// Adds `p` unless already present; returns whether it was added.
    pub fn insert(&mut self, p: Partition) -> bool {
        assert_eq!(p.ground_size, self.ground_size, "ground set mismatch");
        if self.members.contains(&p) {
            return false;
        }
        self.members.push(p);
        true
    }

    pub fn ground_size(&self) -> usize {
        self.ground_size
    }

    pub fn members(&self) -> &[Partition] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, p: &Partition) -> bool {
        self.members.contains(p)
    }
}

/// All partitions of an `n`-set, in lexicographic order of their
/// restricted-growth strings.
pub fn enumerate_partitions(n: usize) -> Result<PartitionFamily> {
    if n == 0 || n > MAX_ENUMERATION {
        return Err(Error::TooLarge(format!(
            "partition enumeration supports 1..={MAX_ENUMERATION} elements, got {n}"
        )));
    }
    let mut members = Vec::new();
    // rgs[i] <= 1 + max(rgs[..i]), rgs[0] = 0
    let mut rgs = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    loop {
        members.push(Partition::from_labels(&rgs).expect("restricted growth strings are valid"));
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(PartitionFamily {
                    ground_size: n,
                    members,
                });
            }
            if rgs[i] <= maxes[i - 1] {
                rgs[i] += 1;
                maxes[i] = maxes[i - 1].max(rgs[i]);
                for j in (i + 1)..n {
                    rgs[j] = 0;
                    maxes[j] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

fn check_ground(a: &Partition, b: &Partition) -> Result<()> {
    if a.ground_size != b.ground_size {
        return Err(Error::shape(format!(
            "partitions of different ground sets ({} vs {})",
            a.ground_size, b.ground_size
        )));
    }
    Ok(())
}

/// True iff every block of `fine` lies inside a block of `coarse`.
pub fn refines(fine: &Partition, coarse: &Partition) -> Result<bool> {
    check_ground(fine, coarse)?;
    let labels = coarse.labels();
    Ok(fine
        .blocks
        .iter()
        .all(|b| b.iter().all(|&x| labels[x] == labels[b[0]])))
}

/// Members not strictly refined by another member: the finest ones.
pub fn maximal_members(family: &PartitionFamily) -> PartitionFamily {
    let members = family
        .members
        .iter()
        .filter(|m| {
            !family
                .members
                .iter()
                .any(|o| o != *m && refines(o, m).unwrap_or(false))
        })
        .cloned()
        .collect();
    PartitionFamily {
        ground_size: family.ground_size,
        members,
    }
}

/// Lattice meet (common refinement) and join (finest common coarsening).
pub fn partition_meet_join(a: &Partition, b: &Partition) -> Result<(Partition, Partition)> {
    check_ground(a, b)?;
    let (la, lb) = (a.labels(), b.labels());
    let pairs: Vec<usize> = (0..a.ground_size)
        .map(|i| la[i] * b.num_blocks() + lb[i])
        .collect();
    let meet = Partition::from_labels(&pairs)?;

    let mut parent: Vec<usize> = (0..a.ground_size).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    for blk in a.blocks.iter().chain(b.blocks.iter()) {
        for &x in &blk[1..] {
            let (r0, r1) = (find(&mut parent, blk[0]), find(&mut parent, x));
            if r0 != r1 {
                parent[r1] = r0;
            }
        }
    }
    let roots: Vec<usize> = (0..a.ground_size).map(|i| find(&mut parent, i)).collect();
    let join = Partition::from_labels(&roots)?;
    Ok((meet, join))
}

/// `Π(ρ)` over all partitions of the factor set of `tps`.
#[derive(Debug, Clone)]
pub struct PiResult {
    /// Partitions with a `product` or `separable` verdict.
    pub separable: PartitionFamily,
    /// Partitions whose verdict was `undetermined`; never folded into
    /// `separable`.
    pub undetermined: Vec<Partition>,
}

impl PiResult {
    pub fn maximal(&self) -> PartitionFamily {
        maximal_members(&self.separable)
    }
}

pub fn pi_of_state(
    rho: &State,
    tps: &TpsSpec,
    options: &SeparabilityOptions,
    tol: Tolerance,
) -> Result<PiResult> {
    let k = tps.dims().len();
    let all = enumerate_partitions(k)?;
    let mut separable = PartitionFamily::empty(k);
    let mut undetermined = Vec::new();
    for sigma in all.members() {
        let verdict = is_sigma_separable(rho, tps, sigma, options, tol)?;
        match verdict.value {
            Verdict::Product | Verdict::Separable => {
                separable.insert(sigma.clone());
            }
            Verdict::Undetermined => undetermined.push(sigma.clone()),
            Verdict::Entangled => {}
        }
    }
    Ok(PiResult {
        separable,
        undetermined,
    })
}
