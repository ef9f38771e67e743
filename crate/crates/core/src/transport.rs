//! Min-max load balancing as a transportation problem.
//!
//! Classes supply `r * a(V)` units of work. Each member VM of `V` may take at
//! most `a(V)` of it (a VM computes any dataset at most once) and VM `n` can
//! absorb `T * s[n]` in time `T`. Feasibility at a given `T` is a max-flow
//! question; the smallest feasible `T` is found exactly by Dinkelbach-style
//! parametric search on the min cut:
//!
//! ```text
//! T_0 = 0
//! while maxflow(T_k) < demand:
//!     U      = VMs on the source side of the min cut
//!     T_k+1  = forced(U) / speed(U)      (strictly larger than T_k)
//! ```
//!
//! where `forced(U) = sum_V max(0, r - |V \ U|) * a(V)` is the work that must
//! land on `U` whatever the other VMs do. Only finitely many cuts exist, so
//! the loop ends on the exact optimum.

use std::collections::VecDeque;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::model::{ClassMask, ClassProfile, LoadAssignment};
use crate::ratio::Ratio;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("classes {classes:?} have fewer members than the required redundancy {redundancy}")]
    Infeasible {
        classes: Vec<ClassMask>,
        redundancy: usize,
    },
    #[error("speed vector has {speeds} entries but the profile has {vms} VMs")]
    DimensionMismatch { speeds: usize, vms: usize },
    #[error("parametric search failed: {0}")]
    Internal(String),
}

// ---------------------------------------------------------------------------
// Dinic max-flow over exact rationals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: Ratio,
}

#[derive(Debug, Clone, Default)]
struct FlowGraph {
    adj: Vec<Vec<Edge>>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        FlowGraph {
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Returns `(from, index)` of the forward edge.
    fn add_edge(&mut self, from: usize, to: usize, cap: Ratio) -> (usize, usize) {
        let fwd = self.adj[from].len();
        let back = self.adj[to].len();
        self.adj[from].push(Edge { to, rev: back, cap });
        self.adj[to].push(Edge {
            to: from,
            rev: fwd,
            cap: Ratio::zero(),
        });
        (from, fwd)
    }

    fn levels(&self, source: usize) -> Vec<Option<usize>> {
        let mut level = vec![None; self.adj.len()];
        level[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let next = level[u].unwrap() + 1;
            for e in &self.adj[u] {
                if e.cap.is_positive() && level[e.to].is_none() {
                    level[e.to] = Some(next);
                    queue.push_back(e.to);
                }
            }
        }
        level
    }

    fn push(
        &mut self,
        u: usize,
        sink: usize,
        limit: Ratio,
        level: &[Option<usize>],
        cursor: &mut [usize],
    ) -> Ratio {
        if u == sink {
            return limit;
        }
        while cursor[u] < self.adj[u].len() {
            let i = cursor[u];
            let (to, cap) = {
                let e = &self.adj[u][i];
                (e.to, e.cap.clone())
            };
            if cap.is_positive() && level[to] == level[u].map(|l| l + 1) {
                let bound = if cap < limit { cap } else { limit.clone() };
                let pushed = self.push(to, sink, bound, level, cursor);
                if pushed.is_positive() {
                    let rev = self.adj[u][i].rev;
                    self.adj[u][i].cap -= &pushed;
                    self.adj[to][rev].cap += &pushed;
                    return pushed;
                }
            }
            cursor[u] += 1;
        }
        Ratio::zero()
    }

    fn max_flow(&mut self, source: usize, sink: usize, upper: &Ratio) -> Ratio {
        let mut total = Ratio::zero();
        loop {
            let level = self.levels(source);
            if level[sink].is_none() {
                return total;
            }
            let mut cursor = vec![0; self.adj.len()];
            loop {
                let remaining = upper - &total;
                if !remaining.is_positive() {
                    return total;
                }
                let pushed = self.push(source, sink, remaining, &level, &mut cursor);
                if pushed.is_zero() {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn reachable(&self, source: usize) -> Vec<bool> {
        self.levels(source)
            .into_iter()
            .map(|l| l.is_some())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Transportation problem
// ---------------------------------------------------------------------------

/// Classes with positive size, each to be computed `redundancy` times.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    speeds: Vec<Ratio>,
    classes: Vec<(ClassMask, Ratio)>,
    redundancy: usize,
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub feasible: bool,
    pub flow: Ratio,
    pub assignment: LoadAssignment,
    /// VMs on the source side of a minimum cut.
    pub cut: ClassMask,
}

#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub time: Ratio,
    pub assignment: LoadAssignment,
    /// VM set whose forced load over its speed equals `time`.
    pub bottleneck: ClassMask,
    /// Number of max-flow evaluations the search needed.
    pub iterations: usize,
}

impl TransportProblem {
    /// Classes with fewer than `redundancy` members are left out; with
    /// `redundancy = 1` that is none of them.
    pub fn new(
        speeds: &[Ratio],
        profile: &ClassProfile,
        redundancy: usize,
    ) -> Result<Self, TransportError> {
        if speeds.len() != profile.num_vms() {
            return Err(TransportError::DimensionMismatch {
                speeds: speeds.len(),
                vms: profile.num_vms(),
            });
        }
        let classes = profile
            .classes()
            .filter(|(c, a)| c.len() >= redundancy && a.is_positive())
            .map(|(c, a)| (c, a.clone()))
            .collect();
        Ok(TransportProblem {
            speeds: speeds.to_vec(),
            classes,
            redundancy: redundancy.max(1),
        })
    }

    /// Arbitrary class list; used by tests and baselines.
    pub fn from_classes(
        speeds: &[Ratio],
        classes: Vec<(ClassMask, Ratio)>,
        redundancy: usize,
    ) -> Result<Self, TransportError> {
        let short: Vec<ClassMask> = classes
            .iter()
            .filter(|(c, a)| c.len() < redundancy && a.is_positive())
            .map(|(c, _)| *c)
            .collect();
        if !short.is_empty() {
            return Err(TransportError::Infeasible {
                classes: short,
                redundancy,
            });
        }
        Ok(TransportProblem {
            speeds: speeds.to_vec(),
            classes: classes
                .into_iter()
                .filter(|(_, a)| a.is_positive())
                .collect(),
            redundancy: redundancy.max(1),
        })
    }

    pub fn num_vms(&self) -> usize {
        self.speeds.len()
    }

    fn r(&self) -> Ratio {
        Ratio::from_integer(BigInt::from(self.redundancy))
    }

    pub fn demand(&self) -> Ratio {
        let r = self.r();
        self.classes
            .iter()
            .fold(Ratio::zero(), |acc, (_, a)| acc + a * &r)
    }

    /// Work that must be done inside `vms` no matter how the rest is split.
    pub fn forced_load(&self, vms: ClassMask) -> Ratio {
        let r = self.redundancy;
        self.classes.iter().fold(Ratio::zero(), |acc, (c, a)| {
            let outside = c.minus(vms).len();
            if outside >= r {
                acc
            } else {
                acc + a * Ratio::from_integer(BigInt::from(r - outside))
            }
        })
    }

    pub fn speed_of(&self, vms: ClassMask) -> Ratio {
        vms.members()
            .filter(|&n| n < self.speeds.len())
            .fold(Ratio::zero(), |acc, n| acc + &self.speeds[n])
    }

    /// Max-flow at time budget `time`.
    pub fn evaluate(&self, time: &Ratio) -> FlowOutcome {
        let c = self.classes.len();
        let n = self.speeds.len();
        let source = 0;
        let sink = c + n + 1;
        let vm_node = |v: usize| c + 1 + v;
        let mut g = FlowGraph::new(c + n + 2);
        let r = self.r();
        let mut middle = Vec::new();
        for (i, (class, a)) in self.classes.iter().enumerate() {
            g.add_edge(source, i + 1, a * &r);
            for vm in class.members() {
                middle.push((vm, *class, g.add_edge(i + 1, vm_node(vm), a.clone()), a));
            }
        }
        for (v, s) in self.speeds.iter().enumerate() {
            g.add_edge(vm_node(v), sink, time * s);
        }
        let demand = self.demand();
        let flow = g.max_flow(source, sink, &demand);

        let mut assignment = LoadAssignment::new(n, self.redundancy);
        for (vm, class, (from, idx), cap) in middle {
            let used = cap - &g.adj[from][idx].cap;
            assignment.set(vm, class, used);
        }
        let seen = g.reachable(source);
        let cut = ClassMask::from_members((0..n).filter(|&v| seen[vm_node(v)]));
        FlowOutcome {
            feasible: flow == demand,
            flow,
            assignment,
            cut,
        }
    }

    pub fn is_feasible(&self, time: &Ratio) -> bool {
        self.evaluate(time).feasible
    }

    /// Exact minimum completion time and an assignment achieving it.
    pub fn solve(&self) -> Result<TransportSolution, TransportError> {
        let mut time = Ratio::zero();
        let mut bottleneck = ClassMask(0);
        let max_iters = 4 * (1usize << self.speeds.len().min(20)) + 8;
        for iteration in 1..=max_iters {
            let outcome = self.evaluate(&time);
            if outcome.feasible {
                self.confirm_tight(&time)?;
                return Ok(TransportSolution {
                    time,
                    assignment: outcome.assignment,
                    bottleneck,
                    iterations: iteration,
                });
            }
            let speed = self.speed_of(outcome.cut);
            if speed.is_zero() {
                return Err(TransportError::Internal(
                    "infeasible with an empty cut".into(),
                ));
            }
            let next = self.forced_load(outcome.cut) / speed;
            if next <= time {
                return Err(TransportError::Internal(format!(
                    "cut {} does not raise the time bound",
                    outcome.cut
                )));
            }
            time = next;
            bottleneck = outcome.cut;
        }
        Err(TransportError::Internal("iteration limit reached".into()))
    }

    /// `time` is the optimum only if shaving a hair off it breaks feasibility.
    fn confirm_tight(&self, time: &Ratio) -> Result<(), TransportError> {
        if time.is_zero() {
            return Ok(());
        }
        let eps = Ratio::new(BigInt::one(), BigInt::one() << 40);
        let below = time * (Ratio::one() - eps);
        if self.is_feasible(&below) {
            return Err(TransportError::Internal(
                "a strictly smaller time is still feasible".into(),
            ));
        }
        Ok(())
    }
}
