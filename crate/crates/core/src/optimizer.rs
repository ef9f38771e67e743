//! Optimal min-max computation time and a constructive assignment reaching it.
//!
//! With `L(n)` the mass of classes stored only among the `n` slowest VMs and
//! `S(n)` their pooled speed, the optimum is
//!
//! ```text
//! c* = L(n*) / S(n*),   n* = the (largest) maximizer of L(n) / S(n)
//! ```
//!
//! The assignment is built VM by VM. Every VM first takes the classes whose
//! fastest member it is; whenever the newest group of VMs would finish later
//! than the group before it, the two groups are merged and the slower group
//! hands part of the classes both groups store to the faster-finishing one
//! ([`rearrange`]). Groups live on a stack, so each merge removes one group and
//! the whole pass is linear in `N` apart from the class bookkeeping.

use std::ops::RangeInclusive;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::model::{
    validate, ClassMask, ClassProfile, LoadAssignment, ModelError, ProblemInstance, TimeResult,
};
use crate::ratio::{self, Ratio};
use crate::storage::AsymptoticLaw;
use crate::transport::{TransportError, TransportProblem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("rearranging {} exceeds the {} of classes shared by the two groups", ratio::to_exact_string(.delta), ratio::to_exact_string(.capacity))]
    InfeasibleRearrangement { delta: Ratio, capacity: Ratio },
    #[error("receiver range {receivers:?} must end right before donor range {donors:?}")]
    BadGroups {
        receivers: RangeInclusive<usize>,
        donors: RangeInclusive<usize>,
    },
    #[error("VM {} finishes at {} instead of its group time {}", .vm + 1, ratio::to_exact_string(.actual), ratio::to_exact_string(.expected))]
    Unbalanced {
        vm: usize,
        expected: Ratio,
        actual: Ratio,
    },
    #[error("assignment failed validation: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

// ---------------------------------------------------------------------------
// Closed form
// ---------------------------------------------------------------------------

/// Closed-form optimum from the cumulative table `L(0..=N)`.
pub fn optimal_time_from_cumulative(speeds: &[Ratio], cumulative: &[Ratio]) -> TimeResult {
    time_with_schedule(speeds, cumulative, &schedule_groups(speeds, cumulative))
}

fn time_with_schedule(
    speeds: &[Ratio],
    cumulative: &[Ratio],
    schedule: &GroupSchedule,
) -> TimeResult {
    let prefix = prefix_sums(speeds);
    let mut best = Ratio::zero();
    let mut n_star = 1;
    for n in 1..=speeds.len() {
        let r = ratio::div(&cumulative[n], &prefix[n]);
        if ratio::cmp(&r, &best).is_ge() {
            best = r;
            n_star = n;
        }
    }
    TimeResult {
        c_star: best,
        n_star,
        per_vm_time: schedule.per_vm_times(),
    }
}

pub fn optimal_time(instance: &ProblemInstance, profile: &ClassProfile) -> TimeResult {
    optimal_time_from_cumulative(instance.speeds(), &profile.cumulative_table())
}

fn prefix_sums(speeds: &[Ratio]) -> Vec<Ratio> {
    let mut out = Vec::with_capacity(speeds.len() + 1);
    out.push(Ratio::zero());
    for s in speeds {
        let next = out.last().unwrap() + s;
        out.push(next);
    }
    out
}

/// Which optimality condition an index violates.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionFailure {
    /// A later tail `[n*+1 : n]` would need longer than `c*`.
    Tail { n: usize },
    /// An earlier prefix `[n]` has a larger ratio.
    Prefix { n: usize },
}

/// Evaluates both conditions on a candidate `n_star` (1-based) verbatim.
pub fn check_conditions(
    speeds: &[Ratio],
    cumulative: &[Ratio],
    n_star: usize,
) -> Result<(), ConditionFailure> {
    let prefix = prefix_sums(speeds);
    let head = &cumulative[n_star] / &prefix[n_star];
    for n in n_star + 1..=speeds.len() {
        let tail = (&cumulative[n] - &cumulative[n_star]) / (&prefix[n] - &prefix[n_star]);
        if head < tail {
            return Err(ConditionFailure::Tail { n });
        }
    }
    for n in 1..n_star {
        if head < &cumulative[n] / &prefix[n] {
            return Err(ConditionFailure::Prefix { n });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum CutKind {
    /// Classes inside the `n` slowest VMs must be done by them.
    Prefix { n: usize },
    /// The tail `[from+1 : to]` beyond the critical prefix.
    Tail { from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutsetBound {
    pub kind: CutKind,
    pub value: Ratio,
}

/// `L(n) / S(n)` for every `n`, plus the tail ratios
/// `(L(n) - L(n*)) / (S(n) - S(n*))` past the critical prefix `n*` (the
/// largest maximizer of the prefix family).
pub fn cutset_bounds(instance: &ProblemInstance, profile: &ClassProfile) -> Vec<CutsetBound> {
    let cumulative = profile.cumulative_table();
    let prefix = instance.speed_prefix_sums();
    let n_total = instance.num_vms();
    let mut out: Vec<CutsetBound> = (1..=n_total)
        .map(|n| CutsetBound {
            kind: CutKind::Prefix { n },
            value: &cumulative[n] / &prefix[n],
        })
        .collect();
    let n_star = out
        .iter()
        .enumerate()
        .fold((0, Ratio::zero()), |(bi, bv), (i, b)| {
            if b.value >= bv {
                (i + 1, b.value.clone())
            } else {
                (bi, bv)
            }
        })
        .0;
    for n in n_star + 1..=n_total {
        out.push(CutsetBound {
            kind: CutKind::Tail {
                from: n_star,
                to: n,
            },
            value: (&cumulative[n] - &cumulative[n_star]) / (&prefix[n] - &prefix[n_star]),
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Group stack
// ---------------------------------------------------------------------------

/// A contiguous run of VMs (0-based, inclusive) sharing one finishing time.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub start: usize,
    pub end: usize,
    pub time: Ratio,
}

/// One load transfer between adjacent groups.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangeDelta {
    /// Load moved from donors to receivers, as a fraction of `K`.
    pub delta: Ratio,
    /// Faster-finishing group `[d+1 : d+l]` (0-based indices).
    pub receivers: RangeInclusive<usize>,
    /// Slower group `[d+l+1 : d+l+m]` right after the receivers.
    pub donors: RangeInclusive<usize>,
    pub receiver_time: Ratio,
    pub donor_time: Ratio,
    /// Common time of the merged group.
    pub group_time: Ratio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSchedule {
    /// `(L(n) - L(n-1)) / s[n]`: each VM's time if it took only its own new
    /// classes.
    pub tentative: Vec<Ratio>,
    /// Transfers in the order they happen; merges of equal-time groups move
    /// nothing and are not listed.
    pub rearrangements: Vec<RearrangeDelta>,
    /// Final groups, slowest VMs first; times strictly decrease.
    pub groups: Vec<Group>,
}

impl GroupSchedule {
    pub fn per_vm_times(&self) -> Vec<Ratio> {
        self.groups
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.time.clone(), g.end - g.start + 1))
            .collect()
    }

    pub fn completion_time(&self) -> Ratio {
        self.groups
            .first()
            .map(|g| g.time.clone())
            .unwrap_or_default()
    }

    /// 1-based length of the critical prefix.
    pub fn critical_len(&self) -> usize {
        self.groups.first().map(|g| g.end + 1).unwrap_or(0)
    }
}

fn run_groups<E>(
    speeds: &[Ratio],
    cumulative: &[Ratio],
    mut on_transfer: impl FnMut(&RearrangeDelta, &[Group]) -> Result<(), E>,
) -> Result<GroupSchedule, E> {
    let prefix = prefix_sums(speeds);
    let span_time = |a: usize, b: usize| {
        ratio::div(
            &ratio::sub(&cumulative[b + 1], &cumulative[a]),
            &ratio::sub(&prefix[b + 1], &prefix[a]),
        )
    };
    let mut stack: Vec<Group> = Vec::with_capacity(speeds.len());
    let mut tentative = Vec::with_capacity(speeds.len());
    let mut rearrangements = Vec::new();

    for n in 0..speeds.len() {
        let t = ratio::div(&ratio::sub(&cumulative[n + 1], &cumulative[n]), &speeds[n]);
        tentative.push(t.clone());
        stack.push(Group {
            start: n,
            end: n,
            time: t,
        });
        while stack.len() >= 2
            && ratio::cmp(&stack[stack.len() - 1].time, &stack[stack.len() - 2].time).is_ge()
        {
            let before = stack.len();
            let donors = stack.pop().unwrap();
            let receivers = stack.pop().unwrap();
            let merged = span_time(receivers.start, donors.end);
            if ratio::cmp(&donors.time, &receivers.time).is_gt() {
                let receiver_speed =
                    ratio::sub(&prefix[receivers.end + 1], &prefix[receivers.start]);
                let transfer = RearrangeDelta {
                    delta: ratio::mul(&ratio::sub(&merged, &receivers.time), &receiver_speed),
                    receivers: receivers.start..=receivers.end,
                    donors: donors.start..=donors.end,
                    receiver_time: receivers.time.clone(),
                    donor_time: donors.time.clone(),
                    group_time: merged.clone(),
                };
                on_transfer(&transfer, &stack)?;
                rearrangements.push(transfer);
            }
            stack.push(Group {
                start: receivers.start,
                end: donors.end,
                time: merged,
            });
            debug_assert!(stack.len() < before);
        }
    }
    Ok(GroupSchedule {
        tentative,
        rearrangements,
        groups: stack,
    })
}

/// Group bookkeeping alone, from `L(0..=N)`; works for any `N`.
pub fn schedule_groups(speeds: &[Ratio], cumulative: &[Ratio]) -> GroupSchedule {
    run_groups::<std::convert::Infallible>(speeds, cumulative, |_, _| Ok(()))
        .unwrap_or_else(|e| match e {})
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormSolution {
    pub time: TimeResult,
    pub schedule: GroupSchedule,
}

/// Optimal time and group structure from the asymptotic law, without
/// enumerating classes. Intended for large `N`.
pub fn solve_closed_form(instance: &ProblemInstance) -> ClosedFormSolution {
    let law = AsymptoticLaw::for_instance(instance);
    let Some((scaled, load_den)) = law.scaled_cumulative() else {
        let cumulative = law.cumulative_table();
        let schedule = schedule_groups(instance.speeds(), &cumulative);
        let time = time_with_schedule(instance.speeds(), &cumulative, &schedule);
        return ClosedFormSolution { time, schedule };
    };
    // Integer loads and speeds keep every intermediate fraction small; times
    // come back multiplied by load_den / speed_den, transfers by load_den.
    let speed_den = instance
        .speeds()
        .iter()
        .fold(BigInt::one(), |acc, s| acc.lcm(s.denom()));
    let speeds: Vec<Ratio> = instance
        .speeds()
        .iter()
        .map(|s| Ratio::from_integer(s.numer() * (&speed_den / s.denom())))
        .collect();
    let cumulative: Vec<Ratio> = scaled.into_iter().map(Ratio::from_integer).collect();
    let schedule = schedule_groups(&speeds, &cumulative);
    let time = time_with_schedule(&speeds, &cumulative, &schedule);

    let base = law.alpha().expect("scaled law has alpha").numer().clone();
    let time_scale = PowerScale::new(speed_den, &load_den, &base);
    let load_scale = PowerScale::new(BigInt::one(), &load_den, &base);
    let unscale = |t: &Ratio| time_scale.apply(t);
    let groups: Vec<Group> = schedule
        .groups
        .iter()
        .map(|g| Group {
            time: unscale(&g.time),
            ..g.clone()
        })
        .collect();
    let schedule = GroupSchedule {
        tentative: schedule.tentative.iter().map(unscale).collect(),
        rearrangements: schedule
            .rearrangements
            .iter()
            .map(|r| RearrangeDelta {
                delta: load_scale.apply(&r.delta),
                receivers: r.receivers.clone(),
                donors: r.donors.clone(),
                receiver_time: unscale(&r.receiver_time),
                donor_time: unscale(&r.donor_time),
                group_time: unscale(&r.group_time),
            })
            .collect(),
        groups,
    };
    let time = TimeResult {
        c_star: unscale(&time.c_star),
        n_star: time.n_star,
        per_vm_time: schedule.per_vm_times(),
    };
    ClosedFormSolution { time, schedule }
}

/// Multiplication by a fixed `e / d` whose denominator has only small prime
/// factors. The common factor of a long numerator and `d` is read off prime
/// by prime instead of through a gcd of two long integers.
struct PowerScale {
    factor: Ratio,
    /// `(prime, exponent in d)`, or `None` when `d` could not be factored.
    primes: Option<Vec<(BigInt, usize)>>,
}

/// Trial-division bound for factoring the base of `d`.
const FACTOR_LIMIT: u64 = 1 << 32;

impl PowerScale {
    /// `e / d` where `d` is a power of `base`.
    fn new(e: BigInt, d: &BigInt, base: &BigInt) -> Self {
        let factor = Ratio::new(e, d.clone());
        let primes = small_primes_of(base).map(|ps| {
            ps.into_iter()
                .map(|l| {
                    let mut rest = factor.denom().clone();
                    let k = strip(&mut rest, &l, usize::MAX);
                    (l, k)
                })
                .collect()
        });
        PowerScale { factor, primes }
    }

    fn apply(&self, t: &Ratio) -> Ratio {
        let Some(primes) = &self.primes else {
            return t * &self.factor;
        };
        if t.is_zero() {
            return Ratio::zero();
        }
        let (e, d) = (self.factor.numer(), self.factor.denom());
        let g2 = e.gcd(t.denom());
        let mut a = t.numer().clone();
        let mut g1 = BigInt::one();
        for (l, k) in primes {
            let v = strip(&mut a, l, *k);
            g1 *= num_traits::pow(l.clone(), v);
        }
        Ratio::new_raw(a * (e / &g2), (t.denom() / &g2) * (d / &g1))
    }
}

/// Distinct prime factors of `b`, or `None` if one exceeds [`FACTOR_LIMIT`].
fn small_primes_of(b: &BigInt) -> Option<Vec<BigInt>> {
    let mut rest = b.abs();
    let mut primes = Vec::new();
    let mut l: u64 = 2;
    while l * l < FACTOR_LIMIT && BigInt::from(l * l) <= rest {
        let lb = BigInt::from(l);
        if (&rest % &lb).is_zero() {
            strip(&mut rest, &lb, usize::MAX);
            primes.push(lb);
        }
        l += if l == 2 { 1 } else { 2 };
    }
    if !rest.is_one() {
        // No factor up to its square root, or none below the limit's.
        if rest.bits() > 32 {
            return None;
        }
        primes.push(rest);
    }
    Some(primes)
}

/// Divides `y` by the largest power `l^v` with `v <= cap`; returns `v`.
fn strip(y: &mut BigInt, l: &BigInt, cap: usize) -> usize {
    let mut removed = 0usize;
    let mut step = 1usize;
    let mut chunk = l.clone();
    while removed + step <= cap && (&*y % &chunk).is_zero() {
        *y /= &chunk;
        removed += step;
        chunk = &chunk * &chunk;
        step *= 2;
    }
    while step > 1 {
        step /= 2;
        if removed + step <= cap {
            let c = num_traits::pow(l.clone(), step);
            if (&*y % &c).is_zero() {
                *y /= &c;
                removed += step;
            }
        }
    }
    removed
}

// ---------------------------------------------------------------------------
// Assignment
// ---------------------------------------------------------------------------

/// Intermediate values of an [`assign_loads`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignTrace {
    pub schedule: GroupSchedule,
}

/// Each VM takes the classes it is the fastest member of.
pub fn initial_assignment(profile: &ClassProfile) -> LoadAssignment {
    let mut out = LoadAssignment::new(profile.num_vms(), 1);
    for (class, a) in profile.classes() {
        if let Some(top) = class.max_member() {
            out.set(top, class, a.clone());
        }
    }
    out
}

/// Builds an assignment with completion time equal to [`optimal_time`].
///
/// Requires class sizes that depend only on class cardinality (the asymptotic
/// law); other profiles may fail with [`OptimizerError::Unbalanced`], in which
/// case [`TransportProblem`] is the general solver.
pub fn assign_loads(
    instance: &ProblemInstance,
    profile: &ClassProfile,
) -> Result<(LoadAssignment, TimeResult, AssignTrace), OptimizerError> {
    let n = instance.num_vms();
    if profile.num_vms() != n {
        return Err(ModelError::DimensionMismatch {
            what: "class profile",
            expected: n,
            found: profile.num_vms(),
        }
        .into());
    }
    let speeds = instance.speeds();
    let cumulative = profile.cumulative_table();
    let mut assignment = initial_assignment(profile);
    let schedule = run_groups(speeds, &cumulative, |transfer, _| {
        assignment = rearrange(&assignment, transfer, profile, speeds)?;
        check_group_time(
            &assignment,
            speeds,
            *transfer.receivers.start()..=*transfer.donors.end(),
            &transfer.group_time,
        )
    })?;

    let violations = validate(instance, profile, &assignment)?;
    if let Some(v) = violations.first() {
        return Err(OptimizerError::Invalid(v.to_string()));
    }
    for g in &schedule.groups {
        check_group_time(&assignment, speeds, g.start..=g.end, &g.time)?;
    }
    let per_vm_time = assignment.per_vm_times(speeds);
    let c_star = per_vm_time.iter().max().cloned().unwrap_or_default();
    let time = TimeResult {
        c_star,
        n_star: schedule.critical_len(),
        per_vm_time,
    };
    Ok((assignment, time, AssignTrace { schedule }))
}

fn check_group_time(
    assignment: &LoadAssignment,
    speeds: &[Ratio],
    vms: RangeInclusive<usize>,
    expected: &Ratio,
) -> Result<(), OptimizerError> {
    let loads = assignment.per_vm_loads();
    for vm in vms {
        let actual = &loads[vm] / &speeds[vm];
        if actual != *expected {
            return Err(OptimizerError::Unbalanced {
                vm,
                expected: expected.clone(),
                actual,
            });
        }
    }
    Ok(())
}

/// Moves `delta` of load from the donor group to the receiver group.
///
/// Only classes stored by both groups are touched: `C = U ∪ V ∪ Q` with `V`
/// inside the receivers, `Q` inside the donors and `U` any part of the slower
/// VMs before them. The same fraction `λ = delta / (shared mass)` of every
/// such class changes hands. Donor `q` gives up `λ · mu[q, C]`; receiver `n`
/// takes its proportional part `mu[n, U ∪ V] / a(U ∪ V)` of what is released,
/// i.e. the amount it already computes of the class's projection onto the
/// slower VMs. With cardinality-only class sizes this equalizes every member
/// of both groups at the merged time.
pub fn rearrange(
    assignment: &LoadAssignment,
    transfer: &RearrangeDelta,
    profile: &ClassProfile,
    speeds: &[Ratio],
) -> Result<LoadAssignment, OptimizerError> {
    let (r_lo, r_hi) = (*transfer.receivers.start(), *transfer.receivers.end());
    let (d_lo, d_hi) = (*transfer.donors.start(), *transfer.donors.end());
    if r_lo > r_hi
        || d_lo > d_hi
        || r_hi + 1 != d_lo
        || d_hi >= profile.num_vms()
        || speeds.len() != profile.num_vms()
    {
        return Err(OptimizerError::BadGroups {
            receivers: transfer.receivers.clone(),
            donors: transfer.donors.clone(),
        });
    }
    if transfer.delta.is_zero() {
        return Ok(assignment.clone());
    }
    let receivers = ClassMask::from_members(r_lo..=r_hi);
    let donors = ClassMask::from_members(d_lo..=d_hi);
    let scope = ClassMask::prefix(d_hi + 1);

    let shared: Vec<(ClassMask, &Ratio)> = profile
        .classes()
        .filter(|(c, a)| {
            a.is_positive()
                && c.is_subset_of(scope)
                && !c.intersect(receivers).is_empty()
                && !c.intersect(donors).is_empty()
        })
        .collect();
    let capacity = ratio::sum(shared.iter().map(|(_, a)| *a));
    if transfer.delta.is_negative() || transfer.delta > capacity {
        return Err(OptimizerError::InfeasibleRearrangement {
            delta: transfer.delta.clone(),
            capacity,
        });
    }
    let lambda = &transfer.delta / &capacity;

    let mut out = assignment.clone();
    for (class, _) in shared {
        let mut released = Ratio::zero();
        for q in class.intersect(donors).members() {
            let current = assignment.share(q, class);
            let give = &lambda * &current;
            released += &give;
            out.set(q, class, current - give);
        }
        let takers: Vec<usize> = class.intersect(receivers).members().collect();
        let projection = class.minus(donors);
        let weights: Vec<Ratio> = takers
            .iter()
            .map(|&n| assignment.share(n, projection))
            .collect();
        let mut total = ratio::sum(&weights);
        let weights = if total.is_positive() {
            weights
        } else {
            // Projection not computed by anyone yet: split by speed.
            let w: Vec<Ratio> = takers.iter().map(|&n| speeds[n].clone()).collect();
            total = ratio::sum(&w);
            w
        };
        for (&n, w) in takers.iter().zip(&weights) {
            out.add(n, class, &(&released * w / &total));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Arbitrary profiles
// ---------------------------------------------------------------------------

/// Largest VM set attaining the subset cut bound, with the bound itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetBound {
    pub time: Ratio,
    pub bottleneck: ClassMask,
}

/// `max_U f(U) / S(U)` over nonempty VM sets `U`, where `f(U)` is the mass of
/// classes inside `U`. This is the optimum for any class profile (exact
/// counts included); with the asymptotic law it reduces to [`optimal_time`].
///
/// Runs a subset-sum transform over integer numerators, `O(N 2^N)`.
pub fn subset_bound(speeds: &[Ratio], profile: &ClassProfile) -> SubsetBound {
    use num_bigint::BigInt;
    use num_integer::Integer;
    use num_traits::{One, ToPrimitive};

    let n = profile.num_vms();
    let lcm_of =
        |it: &mut dyn Iterator<Item = &BigInt>| it.fold(BigInt::one(), |acc, d| acc.lcm(d));
    let size_den = lcm_of(&mut profile.sizes().iter().map(|a| a.denom()));
    let speed_den = lcm_of(&mut speeds.iter().map(|s| s.denom()));
    let to_int = |r: &Ratio, d: &BigInt| (r * Ratio::from_integer(d.clone())).to_integer();

    let mut f: Vec<BigInt> = std::iter::once(BigInt::zero())
        .chain(profile.sizes().iter().map(|a| to_int(a, &size_den)))
        .collect();
    for bit in 0..n {
        for u in 0..f.len() {
            if u & (1 << bit) != 0 {
                let lower = f[u ^ (1 << bit)].clone();
                f[u] += lower;
            }
        }
    }
    let weights: Vec<BigInt> = speeds.iter().map(|s| to_int(s, &speed_den)).collect();
    let mut w = vec![BigInt::zero(); f.len()];
    for u in 1..w.len() {
        let low = u.trailing_zeros() as usize;
        w[u] = &w[u & (u - 1)] + &weights[low];
    }

    if n == 0 {
        return SubsetBound {
            time: Ratio::zero(),
            bottleneck: ClassMask(0),
        };
    }
    // f[u]/w[u] against f[v]/w[v], in u128 when the operands allow.
    let cmp =
        |u: usize, v: usize| match (f[u].to_u64(), w[v].to_u64(), f[v].to_u64(), w[u].to_u64()) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                (a as u128 * b as u128).cmp(&(c as u128 * d as u128))
            }
            _ => (&f[u] * &w[v]).cmp(&(&f[v] * &w[u])),
        };
    let best = (2..f.len()).fold(1, |best, u| if cmp(u, best).is_gt() { u } else { best });
    // Maximizers are closed under union, so their union is the widest one.
    let bottleneck = (1..f.len())
        .filter(|&u| cmp(u, best).is_eq())
        .fold(ClassMask(0), |acc, u| ClassMask(acc.0 | u as u32));
    let b = bottleneck.0 as usize;
    SubsetBound {
        time: Ratio::new(&f[b] * &speed_den, &w[b] * &size_den),
        bottleneck,
    }
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

/// Independent optimum of the convex program via max-flow parametric search.
///
/// Every class must be computed `redundancy` times; classes with fewer members
/// than that make the program infeasible and are reported.
pub fn lp_oracle(
    instance: &ProblemInstance,
    profile: &ClassProfile,
    redundancy: usize,
) -> Result<Ratio, OptimizerError> {
    if profile.num_vms() != instance.num_vms() {
        return Err(ModelError::DimensionMismatch {
            what: "class profile",
            expected: instance.num_vms(),
            found: profile.num_vms(),
        }
        .into());
    }
    let classes = profile.classes().map(|(c, a)| (c, a.clone())).collect();
    let problem = TransportProblem::from_classes(instance.speeds(), classes, redundancy)?;
    Ok(problem.solve()?.time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{frac, int};
    use crate::storage::asymptotic_profile;

    fn reference() -> (ProblemInstance, ClassProfile) {
        let inst =
            ProblemInstance::from_alpha(&int(2), vec![int(1), int(2), int(5), int(5)]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        (inst, p)
    }

    #[test]
    fn power_scale_matches_generic_product() {
        use num_bigint::BigInt;
        for (base, n, e) in [
            (12i64, 9usize, 10i64),
            (30, 7, 36),
            (7, 20, 1),
            (2, 40, 6),
            (1_000_003, 3, 5),
        ] {
            let b = BigInt::from(base);
            let d = num_traits::pow(b.clone(), n);
            let scale = PowerScale::new(BigInt::from(e), &d, &b);
            assert!(scale.primes.is_some());
            for k in 0..60i64 {
                let numer =
                    BigInt::from(k * k + 1) * num_traits::pow(BigInt::from(6), (k % 13) as usize);
                let t = Ratio::new(numer, BigInt::from(k % 7 + 1));
                assert_eq!(scale.apply(&t), &t * Ratio::new(BigInt::from(e), d.clone()));
            }
        }
        let big = BigInt::from(4_294_967_311u64);
        let scale = PowerScale::new(BigInt::from(3), &(&big * &big), &big);
        assert!(scale.primes.is_none());
        assert_eq!(
            scale.apply(&frac(5, 2)),
            frac(15, 2) / Ratio::from_integer(&big * &big)
        );
    }

    #[test]
    fn reference_optimal_time() {
        let (inst, p) = reference();
        let t = optimal_time(&inst, &p);
        assert_eq!(t.n_star, 4);
        assert_eq!(t.c_star, frac(15, 208));
        assert_eq!(t.per_vm_time, vec![frac(15, 208); 4]);
        assert_eq!(ratio::to_decimal_string(&t.c_star, 4), "0.0721");
        assert!(check_conditions(inst.speeds(), &p.cumulative_table(), 4).is_ok());
        assert_eq!(
            check_conditions(inst.speeds(), &p.cumulative_table(), 3),
            Err(ConditionFailure::Tail { n: 4 })
        );
    }

    #[test]
    fn single_vm() {
        let inst = ProblemInstance::from_alpha(&frac(5, 2), vec![int(3)]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        let t = optimal_time(&inst, &p);
        let expected = p.beta() * (frac(5, 2) - int(1)) / int(3);
        assert_eq!(t.c_star, expected);
        let (a, at, _) = assign_loads(&inst, &p).unwrap();
        assert_eq!(at.c_star, expected);
        assert_eq!(a.share(0, ClassMask(1)), *p.size(ClassMask(1)));
    }

    #[test]
    fn reference_pipeline_values() {
        let (inst, p) = reference();
        let (assignment, time, trace) = assign_loads(&inst, &p).unwrap();
        let s = &trace.schedule;
        assert_eq!(
            s.tentative,
            vec![frac(1, 16), frac(1, 16), frac(1, 20), frac(1, 10)]
        );
        assert_eq!(s.rearrangements.len(), 2);
        let first = &s.rearrangements[0];
        assert_eq!(first.delta, frac(1, 8));
        assert_eq!(first.group_time, frac(3, 40));
        assert_eq!(first.receivers, 2..=2);
        assert_eq!(first.donors, 3..=3);
        let second = &s.rearrangements[1];
        assert_eq!(second.delta, frac(3, 104));
        assert_eq!(second.receivers, 0..=1);
        assert_eq!(second.donors, 2..=3);
        assert_eq!(time.c_star, frac(15, 208));
        let loads = assignment.per_vm_loads();
        let expected: Vec<Ratio> = [1, 2, 5, 5]
            .iter()
            .map(|&s| frac(15, 208) * int(s))
            .collect();
        assert_eq!(loads, expected);
    }

    #[test]
    fn first_rearrangement_splits_shared_classes_in_half() {
        let (inst, p) = reference();
        let sp = inst.speeds().to_vec();
        let start = initial_assignment(&p);
        let transfer = RearrangeDelta {
            delta: frac(1, 8),
            receivers: 2..=2,
            donors: 3..=3,
            receiver_time: frac(1, 20),
            donor_time: frac(1, 10),
            group_time: frac(3, 40),
        };
        let after = rearrange(&start, &transfer, &p, &sp).unwrap();
        for class in [0b1100u32, 0b1101, 0b1110, 0b1111].map(ClassMask) {
            assert_eq!(after.share(2, class), frac(1, 32), "{class}");
            assert_eq!(after.share(3, class), frac(1, 32), "{class}");
        }
        assert_eq!(after.total_load(), start.total_load());
    }

    #[test]
    fn zero_delta_is_identity_and_bad_ranges_fail() {
        let (inst, p) = reference();
        let sp = inst.speeds().to_vec();
        let start = initial_assignment(&p);
        let mut transfer = RearrangeDelta {
            delta: int(0),
            receivers: 0..=1,
            donors: 2..=3,
            receiver_time: int(0),
            donor_time: int(0),
            group_time: int(0),
        };
        assert_eq!(rearrange(&start, &transfer, &p, &sp).unwrap(), start);
        transfer.donors = 3..=3;
        assert!(matches!(
            rearrange(&start, &transfer, &p, &sp),
            Err(OptimizerError::BadGroups { .. })
        ));
        transfer.donors = 2..=3;
        transfer.delta = int(1);
        assert!(matches!(
            rearrange(&start, &transfer, &p, &sp),
            Err(OptimizerError::InfeasibleRearrangement { .. })
        ));
    }

    #[test]
    fn homogeneous_speeds_share_evenly() {
        let inst = ProblemInstance::from_alpha(&int(3), vec![int(1); 3]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        let (a, t, _) = assign_loads(&inst, &p).unwrap();
        let each = p.cumulative_table()[3].clone() / int(3);
        assert_eq!(a.per_vm_loads(), vec![each.clone(); 3]);
        assert_eq!(t.c_star, each);
        assert_eq!(lp_oracle(&inst, &p, 1).unwrap(), t.c_star);
    }

    #[test]
    fn nonincreasing_tentative_times_need_no_transfer() {
        // alpha close to 1 makes later VMs' exclusive mass tiny.
        let inst =
            ProblemInstance::from_alpha(&frac(11, 10), vec![int(1), int(1), int(1)]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        let (_, _, trace) = assign_loads(&inst, &p).unwrap();
        let t = &trace.schedule.tentative;
        assert!(t.windows(2).all(|w| w[0] >= w[1]) || !trace.schedule.rearrangements.is_empty());
    }

    #[test]
    fn degenerate_storage_cases() {
        let full = ProblemInstance::new(4, 4, vec![int(1), int(3)]).unwrap();
        let p = asymptotic_profile(&full).unwrap();
        let t = optimal_time(&full, &p);
        assert_eq!(t.c_star, frac(1, 4));
        let (_, at, _) = assign_loads(&full, &p).unwrap();
        assert_eq!(at.c_star, frac(1, 4));

        let none = ProblemInstance::new(4, 0, vec![int(1), int(3)]).unwrap();
        let p = asymptotic_profile(&none).unwrap();
        assert_eq!(optimal_time(&none, &p).c_star, int(0));
        assert_eq!(lp_oracle(&none, &p, 1).unwrap(), int(0));
    }

    #[test]
    fn cutset_bounds_reference() {
        let (inst, p) = reference();
        let bounds = cutset_bounds(&inst, &p);
        assert_eq!(bounds.len(), 4);
        assert_eq!(bounds[0].value, frac(1, 16));
        assert_eq!(bounds[3].value, frac(15, 208));
        assert!(bounds.iter().all(|b| b.value <= frac(15, 208)));
    }

    #[test]
    fn closed_form_matches_enumerated_profile() {
        let inst =
            ProblemInstance::from_alpha(&frac(7, 3), vec![int(1), int(4), int(4), int(9)]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        let cf = solve_closed_form(&inst);
        assert_eq!(cf.time, optimal_time(&inst, &p));
    }

    #[test]
    fn oracle_reports_short_classes() {
        let (inst, p) = reference();
        match lp_oracle(&inst, &p, 2) {
            Err(OptimizerError::Transport(TransportError::Infeasible { classes, .. })) => {
                assert_eq!(classes.len(), 4);
                assert!(classes.iter().all(|c| c.len() == 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subset_bound_agrees_with_closed_form_and_flow() {
        let (inst, p) = reference();
        let b = subset_bound(inst.speeds(), &p);
        assert_eq!(b.time, frac(15, 208));
        assert_eq!(b.bottleneck, ClassMask(0b1111));

        for seed in 0..6 {
            let storage = crate::storage::generate_decentralized(60, 25, 5, seed).unwrap();
            let exact = crate::storage::exact_profile(&storage).unwrap();
            let speeds = vec![int(1), frac(3, 2), int(2), int(4), int(7)];
            let b = subset_bound(&speeds, &exact);
            let flow = TransportProblem::new(&speeds, &exact, 1)
                .unwrap()
                .solve()
                .unwrap();
            assert_eq!(b.time, flow.time, "seed {seed}");
            let forced = exact
                .classes()
                .filter(|(c, _)| c.is_subset_of(b.bottleneck))
                .fold(int(0), |acc, (_, a)| acc + a);
            let speed: Ratio = b.bottleneck.members().map(|n| &speeds[n]).sum();
            assert_eq!(forced / speed, b.time);
        }
    }
}
