//! Shared domain types: problem instances, dataset-class profiles, load
//! assignments and the assignment validator.
//!
//! VMs are indexed `0..N` internally in ascending speed order; reports add one
//! to match the usual `1..=N` numbering. A subset of VMs is a [`ClassMask`]
//! with bit `n` set when VM `n` belongs to it.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::ratio::{self, Ratio};

/// Largest VM count for which per-class tables (`2^N - 1` entries) are built.
pub const MAX_CLASS_VMS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("storage capacity M = {m} exceeds dataset count K = {k}")]
    InvalidCapacity { k: u64, m: u64 },
    #[error("instance needs at least one VM")]
    NoVms,
    #[error("speed of VM {} must be strictly positive", .index + 1)]
    NonPositiveSpeed { index: usize },
    #[error("{n} VMs exceed the class-enumeration limit of {max}")]
    TooManyVms { n: usize, max: usize },
    #[error("alpha must be at least 1, got {0}")]
    AlphaBelowOne(String),
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid class profile: {0}")]
    InvalidProfile(String),
    #[error("invalid storage: {0}")]
    InvalidStorage(String),
}

// ---------------------------------------------------------------------------
// ClassMask
// ---------------------------------------------------------------------------

/// A nonempty subset `V` of VMs, encoded as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassMask(pub u32);

impl ClassMask {
    pub fn single(vm: usize) -> Self {
        ClassMask(1 << vm)
    }

    /// The prefix `{0, .., n-1}`.
    pub fn prefix(n: usize) -> Self {
        ClassMask(((1u64 << n) - 1) as u32)
    }

    pub fn from_members(members: impl IntoIterator<Item = usize>) -> Self {
        ClassMask(members.into_iter().fold(0, |acc, n| acc | (1 << n)))
    }

    pub fn contains(self, vm: usize) -> bool {
        self.0 >> vm & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: ClassMask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersect(self, other: ClassMask) -> ClassMask {
        ClassMask(self.0 & other.0)
    }

    pub fn minus(self, other: ClassMask) -> ClassMask {
        ClassMask(self.0 & !other.0)
    }

    /// Highest member, i.e. the fastest VM storing this class.
    pub fn max_member(self) -> Option<usize> {
        (self.0 != 0).then(|| 31 - self.0.leading_zeros() as usize)
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |n| bits >> n & 1 == 1)
    }

    /// Position in dense class tables.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        ClassMask(i as u32 + 1)
    }

    /// All nonempty subsets of `{0, .., n-1}` in increasing mask order.
    pub fn all(n: usize) -> impl Iterator<Item = ClassMask> {
        (1..(1u64 << n)).map(|m| ClassMask(m as u32))
    }
}

impl fmt::Display for ClassMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.members().map(|n| (n + 1).to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

pub fn class_count(n: usize) -> usize {
    (1usize << n) - 1
}

// ---------------------------------------------------------------------------
// ProblemInstance
// ---------------------------------------------------------------------------

/// `K` datasets, per-VM capacity `M`, and the speeds of the available VMs.
///
/// Speeds are stored in ascending order. `original_ids[i]` is the caller's
/// index of the VM now at sorted position `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    k: u64,
    m: u64,
    speeds: Vec<Ratio>,
    original_ids: Vec<usize>,
}

impl ProblemInstance {
    pub fn new(k: u64, m: u64, speeds: Vec<Ratio>) -> Result<Self, ModelError> {
        if m > k {
            return Err(ModelError::InvalidCapacity { k, m });
        }
        if speeds.is_empty() {
            return Err(ModelError::NoVms);
        }
        if let Some(index) = speeds.iter().position(|s| !s.is_positive()) {
            return Err(ModelError::NonPositiveSpeed { index });
        }
        let mut order: Vec<usize> = (0..speeds.len()).collect();
        order.sort_by(|&a, &b| speeds[a].cmp(&speeds[b]));
        let sorted = order.iter().map(|&i| speeds[i].clone()).collect();
        Ok(ProblemInstance {
            k,
            m,
            speeds: sorted,
            original_ids: order,
        })
    }

    /// Builds the instance with the smallest `(K, M)` such that
    /// `K / (K - M) = alpha`.
    pub fn from_alpha(alpha: &Ratio, speeds: Vec<Ratio>) -> Result<Self, ModelError> {
        if *alpha < Ratio::one() {
            return Err(ModelError::AlphaBelowOne(ratio::to_exact_string(alpha)));
        }
        let too_big = || ModelError::InvalidProfile("alpha numerator exceeds u64".into());
        let k = alpha.numer().to_u64().ok_or_else(too_big)?;
        let free = alpha.denom().to_u64().ok_or_else(too_big)?;
        Self::new(k, k - free, speeds)
    }

    pub fn datasets(&self) -> u64 {
        self.k
    }

    pub fn capacity(&self) -> u64 {
        self.m
    }

    pub fn num_vms(&self) -> usize {
        self.speeds.len()
    }

    pub fn speeds(&self) -> &[Ratio] {
        &self.speeds
    }

    pub fn original_ids(&self) -> &[usize] {
        &self.original_ids
    }

    /// `M / K`; zero when `K = 0`.
    pub fn storage_fraction(&self) -> Ratio {
        if self.k == 0 {
            Ratio::zero()
        } else {
            Ratio::new(BigInt::from(self.m), BigInt::from(self.k))
        }
    }

    /// `K / (K - M)`, or `None` when every VM stores everything.
    pub fn alpha(&self) -> Option<Ratio> {
        (self.m < self.k).then(|| Ratio::new(BigInt::from(self.k), BigInt::from(self.k - self.m)))
    }

    /// `((K - M) / K)^N`.
    pub fn beta(&self) -> Ratio {
        match self.alpha() {
            Some(a) => num_traits::pow(a.recip(), self.num_vms()),
            None => Ratio::zero(),
        }
    }

    /// `prefix[i] = s[0] + .. + s[i-1]`, length `N + 1`.
    pub fn speed_prefix_sums(&self) -> Vec<Ratio> {
        let mut out = Vec::with_capacity(self.speeds.len() + 1);
        out.push(Ratio::zero());
        for s in &self.speeds {
            let next = out.last().unwrap() + s;
            out.push(next);
        }
        out
    }

    /// Reorders a per-VM sequence from sorted order back to caller order.
    pub fn to_original_order<T: Clone>(&self, sorted: &[T]) -> Vec<T> {
        let mut out: Vec<Option<T>> = vec![None; sorted.len()];
        for (pos, &orig) in self.original_ids.iter().enumerate() {
            out[orig] = Some(sorted[pos].clone());
        }
        out.into_iter().map(|v| v.expect("permutation")).collect()
    }

    pub fn mask_to_original(&self, mask: ClassMask) -> ClassMask {
        ClassMask::from_members(mask.members().map(|n| self.original_ids[n]))
    }
}

// ---------------------------------------------------------------------------
// ClassProfile
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileMode {
    Exact,
    Asymptotic,
}

/// Normalized class sizes `a(V) = |A_V| / K` for every nonempty `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    mode: ProfileMode,
    num_vms: usize,
    alpha: Option<Ratio>,
    beta: Ratio,
    sizes: Vec<Ratio>,
}

impl ClassProfile {
    pub fn new(
        mode: ProfileMode,
        num_vms: usize,
        alpha: Option<Ratio>,
        beta: Ratio,
        sizes: Vec<Ratio>,
    ) -> Result<Self, ModelError> {
        if num_vms == 0 {
            return Err(ModelError::NoVms);
        }
        if num_vms > MAX_CLASS_VMS {
            return Err(ModelError::TooManyVms {
                n: num_vms,
                max: MAX_CLASS_VMS,
            });
        }
        if sizes.len() != class_count(num_vms) {
            return Err(ModelError::DimensionMismatch {
                what: "class sizes",
                expected: class_count(num_vms),
                found: sizes.len(),
            });
        }
        if let Some(i) = sizes.iter().position(|a| a.is_negative()) {
            return Err(ModelError::InvalidProfile(format!(
                "class {} has negative size",
                ClassMask::from_index(i)
            )));
        }
        if ratio::sum(&sizes) > Ratio::one() {
            return Err(ModelError::InvalidProfile(
                "class sizes sum to more than 1".into(),
            ));
        }
        Ok(ClassProfile {
            mode,
            num_vms,
            alpha,
            beta,
            sizes,
        })
    }

    pub fn mode(&self) -> ProfileMode {
        self.mode
    }

    pub fn num_vms(&self) -> usize {
        self.num_vms
    }

    pub fn alpha(&self) -> Option<&Ratio> {
        self.alpha.as_ref()
    }

    pub fn beta(&self) -> &Ratio {
        &self.beta
    }

    pub fn size(&self, class: ClassMask) -> &Ratio {
        &self.sizes[class.index()]
    }

    pub fn sizes(&self) -> &[Ratio] {
        &self.sizes
    }

    pub fn classes(&self) -> impl Iterator<Item = (ClassMask, &Ratio)> {
        self.sizes
            .iter()
            .enumerate()
            .map(|(i, a)| (ClassMask::from_index(i), a))
    }

    /// Fraction of datasets stored by at least one VM.
    pub fn total(&self) -> Ratio {
        ratio::sum(&self.sizes)
    }

    /// `L(n)` for every `n` in `0..=N`: the mass of classes inside the `n`
    /// slowest VMs.
    pub fn cumulative_table(&self) -> Vec<Ratio> {
        let mut by_top = vec![Ratio::zero(); self.num_vms];
        for (class, a) in self.classes() {
            by_top[class.max_member().unwrap()] += a;
        }
        let mut out = Vec::with_capacity(self.num_vms + 1);
        out.push(Ratio::zero());
        for a in by_top {
            let next = out.last().unwrap() + a;
            out.push(next);
        }
        out
    }

    /// The same profile with VMs renamed so sorted position `i` becomes
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ClassProfile {
        let mut sizes = vec![Ratio::zero(); self.sizes.len()];
        for (class, a) in self.classes() {
            let target = ClassMask::from_members(class.members().map(|n| perm[n]));
            sizes[target.index()] = a.clone();
        }
        ClassProfile {
            sizes,
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// LoadAssignment / TimeResult
// ---------------------------------------------------------------------------

/// Shares `mu[n, V]`: the fraction of `K` from class `V` computed by VM `n`.
///
/// `redundancy` is how many times each in-scope class is computed in total;
/// a class is in scope when it has at least `redundancy` members.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadAssignment {
    num_vms: usize,
    redundancy: usize,
    shares: BTreeMap<(ClassMask, usize), Ratio>,
}

impl LoadAssignment {
    pub fn new(num_vms: usize, redundancy: usize) -> Self {
        LoadAssignment {
            num_vms,
            redundancy,
            shares: BTreeMap::new(),
        }
    }

    pub fn num_vms(&self) -> usize {
        self.num_vms
    }

    pub fn redundancy(&self) -> usize {
        self.redundancy
    }

    pub fn share(&self, vm: usize, class: ClassMask) -> Ratio {
        self.shares
            .get(&(class, vm))
            .cloned()
            .unwrap_or_else(Ratio::zero)
    }

    /// Sets a share; zero removes the entry.
    pub fn set(&mut self, vm: usize, class: ClassMask, value: Ratio) {
        if value.is_zero() {
            self.shares.remove(&(class, vm));
        } else {
            self.shares.insert((class, vm), value);
        }
    }

    pub fn add(&mut self, vm: usize, class: ClassMask, delta: &Ratio) {
        let next = self.share(vm, class) + delta;
        self.set(vm, class, next);
    }

    /// Nonzero entries ordered by class, then VM.
    pub fn entries(&self) -> impl Iterator<Item = (usize, ClassMask, &Ratio)> {
        self.shares.iter().map(|(&(c, n), v)| (n, c, v))
    }

    /// `mu[n]` for every VM.
    pub fn per_vm_loads(&self) -> Vec<Ratio> {
        let mut out = vec![Ratio::zero(); self.num_vms];
        for (n, _, v) in self.entries() {
            if n < self.num_vms {
                out[n] += v;
            }
        }
        out
    }

    pub fn per_vm_times(&self, speeds: &[Ratio]) -> Vec<Ratio> {
        self.per_vm_loads()
            .into_iter()
            .zip(speeds)
            .map(|(load, s)| load / s)
            .collect()
    }

    /// `c(M) = max_n mu[n] / s[n]`.
    pub fn completion_time(&self, speeds: &[Ratio]) -> Ratio {
        self.per_vm_times(speeds)
            .into_iter()
            .max()
            .unwrap_or_else(Ratio::zero)
    }

    pub fn total_load(&self) -> Ratio {
        ratio::sum(self.shares.values())
    }

    pub fn class_total(&self, class: ClassMask) -> Ratio {
        self.shares
            .range((class, 0)..=(class, usize::MAX))
            .fold(Ratio::zero(), |acc, (_, v)| acc + v)
    }
}

/// Optimal completion time with its critical index and per-VM times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeResult {
    pub c_star: Ratio,
    /// 1-based critical prefix length.
    pub n_star: usize,
    pub per_vm_time: Vec<Ratio>,
}

// ---------------------------------------------------------------------------
// ExplicitStorage
// ---------------------------------------------------------------------------

/// Concrete placement: `per_vm[n]` lists the (0-based) dataset ids VM `n`
/// stores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitStorage {
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    #[serde(rename = "perVm")]
    pub per_vm: Vec<Vec<u32>>,
}

impl ExplicitStorage {
    pub fn check(&self) -> Result<(), ModelError> {
        if self.m > self.k {
            return Err(ModelError::InvalidCapacity {
                k: self.k,
                m: self.m,
            });
        }
        if self.per_vm.len() != self.n {
            return Err(ModelError::DimensionMismatch {
                what: "perVm",
                expected: self.n,
                found: self.per_vm.len(),
            });
        }
        if self.n > 32 {
            return Err(ModelError::TooManyVms { n: self.n, max: 32 });
        }
        for (vm, set) in self.per_vm.iter().enumerate() {
            if set.len() as u64 != self.m {
                return Err(ModelError::InvalidStorage(format!(
                    "VM {} stores {} datasets, expected {}",
                    vm + 1,
                    set.len(),
                    self.m
                )));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ModelError::InvalidStorage(format!(
                    "VM {} dataset ids must be strictly increasing",
                    vm + 1
                )));
            }
            if set.last().is_some_and(|&id| id as u64 >= self.k) {
                return Err(ModelError::InvalidStorage(format!(
                    "VM {} stores an id outside 0..K",
                    vm + 1
                )));
            }
        }
        Ok(())
    }

    /// `class_index[i] = { n : i in Z_n }` (possibly empty).
    pub fn class_index(&self) -> Vec<ClassMask> {
        let mut out = vec![ClassMask(0); self.k as usize];
        for (vm, set) in self.per_vm.iter().enumerate() {
            for &id in set {
                out[id as usize].0 |= 1 << vm;
            }
        }
        out
    }

    /// Same placement with VMs listed in a new order: position `i` of the
    /// result is VM `order[i]` of `self`.
    pub fn reordered(&self, order: &[usize]) -> ExplicitStorage {
        ExplicitStorage {
            per_vm: order.iter().map(|&i| self.per_vm[i].clone()).collect(),
            n: order.len(),
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `sum_{n in V} mu[n, V]` differs from `r * a(V)`.
    Coverage {
        class: ClassMask,
        expected: Ratio,
        actual: Ratio,
    },
    Negative {
        vm: usize,
        class: ClassMask,
        share: Ratio,
    },
    /// `mu[n, V] > a(V)`.
    ExceedsClass {
        vm: usize,
        class: ClassMask,
        share: Ratio,
        size: Ratio,
    },
    /// Share given to a VM that does not store the class.
    Domain { vm: usize, class: ClassMask },
    /// Nonzero share on a class with fewer members than the redundancy.
    OutOfScope { vm: usize, class: ClassMask },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ratio::to_exact_string as s;
        match self {
            Violation::Coverage {
                class,
                expected,
                actual,
            } => write!(
                f,
                "class {class}: coverage {} != required {}",
                s(actual),
                s(expected)
            ),
            Violation::Negative { vm, class, share } => {
                write!(
                    f,
                    "VM {} class {class}: negative share {}",
                    vm + 1,
                    s(share)
                )
            }
            Violation::ExceedsClass {
                vm,
                class,
                share,
                size,
            } => write!(
                f,
                "VM {} class {class}: share {} exceeds class size {}",
                vm + 1,
                s(share),
                s(size)
            ),
            Violation::Domain { vm, class } => {
                write!(f, "VM {} does not store class {class}", vm + 1)
            }
            Violation::OutOfScope { vm, class } => {
                write!(f, "VM {} computes out-of-scope class {class}", vm + 1)
            }
        }
    }
}

/// Checks coverage, bounds and domain of an assignment. Returns every violated
/// constraint; an empty list means the assignment is valid. Disagreeing
/// dimensions are a structural error, not a violation.
pub fn validate(
    instance: &ProblemInstance,
    profile: &ClassProfile,
    assignment: &LoadAssignment,
) -> Result<Vec<Violation>, ModelError> {
    let n = instance.num_vms();
    for (what, found) in [
        ("class profile", profile.num_vms()),
        ("load assignment", assignment.num_vms()),
    ] {
        if found != n {
            return Err(ModelError::DimensionMismatch {
                what,
                expected: n,
                found,
            });
        }
    }
    let r = assignment.redundancy();
    let full = ClassMask::prefix(n);
    let mut violations = Vec::new();
    let mut coverage = vec![Ratio::zero(); class_count(n)];

    for (vm, class, share) in assignment.entries() {
        if class.is_empty() || !class.is_subset_of(full) || vm >= n || !class.contains(vm) {
            violations.push(Violation::Domain { vm, class });
            continue;
        }
        if class.len() < r {
            violations.push(Violation::OutOfScope { vm, class });
            continue;
        }
        let size = profile.size(class);
        if share.is_negative() {
            violations.push(Violation::Negative {
                vm,
                class,
                share: share.clone(),
            });
        } else if share > size {
            violations.push(Violation::ExceedsClass {
                vm,
                class,
                share: share.clone(),
                size: size.clone(),
            });
        }
        coverage[class.index()] += share;
    }

    let r_ratio = Ratio::from_integer(BigInt::from(r));
    for (class, size) in profile.classes() {
        if class.len() < r {
            continue;
        }
        let expected = size * &r_ratio;
        let actual = &coverage[class.index()];
        if *actual != expected {
            violations.push(Violation::Coverage {
                class,
                expected,
                actual: actual.clone(),
            });
        }
    }
    Ok(violations)
}
