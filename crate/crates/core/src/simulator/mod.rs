//! Elastic timelines: VMs join and leave between steps, storage stays put.
//!
//! Each step is solved on its own from the VMs available at that step. In
//! exact mode every catalog VM draws its storage once (ChaCha stream = its
//! catalog position, seed = its catalog seed) and the step works with the
//! realized class counts; in asymptotic mode the class law is used instead.

pub mod baseline;
pub mod gradient;
pub mod report;
pub mod scenario;

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::exec;
use crate::model::{
    ClassMask, ClassProfile, ExplicitStorage, ModelError, ProblemInstance, ProfileMode,
};
use crate::optimizer::{assign_loads, solve_closed_form, subset_bound, OptimizerError};
use crate::ratio::Ratio;
use crate::storage::{asymptotic_profile, exact_profile, vm_datasets, AsymptoticLaw, StorageError};
use crate::straggler::{self, StragglerConfig, StragglerError, DEFAULT_MODULUS};
use crate::transport::{TransportError, TransportProblem};

pub use baseline::{baseline_assign, BaselineKind, BaselineResult};
pub use gradient::{gradient_demo, SyntheticSpec, Trajectory};
pub use report::{reports_to_csv, reports_to_json};
pub use scenario::{load_timeline, parse_scenario, ElasticTimeline, Scenario, Step};

/// Largest step solved with an explicit asymptotic assignment; bigger steps
/// use the closed form alone.
pub const ASSIGNMENT_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("scenario error at {path}: {message}")]
    Scenario { path: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("step {step}: {message}")]
    Step { step: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Straggler(#[from] StragglerError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    /// VM ids in the order the scenario listed them, with their times.
    pub per_vm_time: Vec<(String, Ratio)>,
    pub c_star: Ratio,
    pub n_star: usize,
    /// Fraction of datasets stored by at least one available VM.
    pub coverage: Ratio,
    /// Sum of the covered datasets' messages (exact mode only); with
    /// stragglers it is the decoded in-scope aggregate.
    pub task_value: Option<Vec<u64>>,
    /// `(label, time)` in scenario order.
    pub baseline_times: Vec<(String, Ratio)>,
    pub stragglers: Vec<String>,
    /// Classes too small for the straggler redundancy, as VM id lists.
    pub excluded_classes: Vec<Vec<String>>,
    pub decode_verified: Option<bool>,
}

impl StepReport {
    pub fn num_vms(&self) -> usize {
        self.per_vm_time.len()
    }
}

/// Deterministic stand-in for dataset `i`'s message: `len` field elements.
pub fn dataset_message(i: u64, len: usize, modulus: u64) -> Vec<u64> {
    (0..len as u64)
        .map(|j| splitmix(i.wrapping_mul(0x9E37_79B9).wrapping_add(j)) % modulus)
        .collect()
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Storage of every catalog VM, drawn once.
pub fn catalog_storage(timeline: &ElasticTimeline) -> Vec<Vec<u32>> {
    exec::map_range(timeline.catalog.len(), |pos| {
        vm_datasets(timeline.k, timeline.m, timeline.catalog[pos].1, pos as u64)
    })
}

/// Runs every step of the scenario with its own mode and straggler setting.
pub fn run_scenario(timeline: &ElasticTimeline) -> Result<Vec<StepReport>, SimError> {
    run_timeline(timeline, timeline.mode, timeline.straggler.as_ref())
}

pub fn run_timeline(
    timeline: &ElasticTimeline,
    mode: ProfileMode,
    straggler: Option<&StragglerConfig>,
) -> Result<Vec<StepReport>, SimError> {
    run_timeline_with(timeline, mode, straggler, |_, _, s| s.clone())
}

/// As [`run_timeline`], with `hook(step, vm_id, speed)` rewriting each speed
/// before the step is solved (e.g. to model noisy speed estimates).
pub fn run_timeline_with<H>(
    timeline: &ElasticTimeline,
    mode: ProfileMode,
    straggler: Option<&StragglerConfig>,
    hook: H,
) -> Result<Vec<StepReport>, SimError>
where
    H: Fn(usize, &str, &Ratio) -> Ratio + Sync + Send,
{
    let allowed = straggler.map_or(0, |c| c.s);
    for (t, step) in timeline.steps.iter().enumerate() {
        if step.stragglers.len() > allowed {
            return Err(SimError::Step {
                step: t,
                message: format!(
                    "{} stragglers exceed the tolerated {allowed}",
                    step.stragglers.len()
                ),
            });
        }
    }
    let storage = match mode {
        ProfileMode::Exact => catalog_storage(timeline),
        ProfileMode::Asymptotic => Vec::new(),
    };
    let indices: Vec<usize> = (0..timeline.steps.len()).collect();
    exec::map(&indices, |&t| {
        run_step(timeline, t, mode, straggler, &storage, &hook).map_err(|e| match e {
            e @ SimError::Step { .. } => e,
            e => SimError::Step {
                step: t,
                message: e.to_string(),
            },
        })
    })
    .into_iter()
    .collect()
}

fn run_step<H>(
    timeline: &ElasticTimeline,
    t: usize,
    mode: ProfileMode,
    straggler: Option<&StragglerConfig>,
    storage: &[Vec<u32>],
    hook: &H,
) -> Result<StepReport, SimError>
where
    H: Fn(usize, &str, &Ratio) -> Ratio,
{
    let step = &timeline.steps[t];
    let speeds: Vec<Ratio> = step
        .available
        .iter()
        .zip(&step.speeds)
        .map(|(&vm, s)| hook(t, timeline.id(vm), s))
        .collect();
    let instance = ProblemInstance::new(timeline.k, timeline.m, speeds)?;
    let n = instance.num_vms();
    // Catalog position of each VM in speed order.
    let sorted: Vec<usize> = instance
        .original_ids()
        .iter()
        .map(|&j| step.available[j])
        .collect();
    let ids_of = |mask: ClassMask| -> Vec<String> {
        mask.members()
            .map(|i| timeline.id(sorted[i]).to_string())
            .collect()
    };

    let mut task_value = None;
    let (profile, mut c_star, mut n_star, mut times_sorted, coverage) = match mode {
        ProfileMode::Asymptotic => {
            let cf = solve_closed_form(&instance);
            let coverage = AsymptoticLaw::for_instance(&instance).cumulative(n);
            let profile = if n <= ASSIGNMENT_LIMIT || straggler.is_some() {
                Some(asymptotic_profile(&instance)?)
            } else {
                None
            };
            if let Some(p) = profile.as_ref().filter(|_| n <= ASSIGNMENT_LIMIT) {
                let (_, achieved, _) = assign_loads(&instance, p)?;
                if achieved.c_star != cf.time.c_star {
                    return Err(SimError::Step {
                        step: t,
                        message: "assignment misses the closed-form optimum".into(),
                    });
                }
            }
            (
                profile,
                cf.time.c_star,
                cf.time.n_star,
                cf.time.per_vm_time,
                coverage,
            )
        }
        ProfileMode::Exact => {
            let explicit = ExplicitStorage {
                k: timeline.k,
                m: timeline.m,
                n,
                seed: 0,
                per_vm: sorted.iter().map(|&vm| storage[vm].clone()).collect(),
            };
            let profile = exact_profile(&explicit)?;
            let bound = subset_bound(instance.speeds(), &profile);
            let flow = TransportProblem::new(instance.speeds(), &profile, 1)?.solve()?;
            if flow.time != bound.time {
                return Err(SimError::Step {
                    step: t,
                    message: "flow optimum disagrees with the subset cut bound".into(),
                });
            }
            let mut covered = vec![false; timeline.k as usize];
            for z in &explicit.per_vm {
                for &i in z {
                    covered[i as usize] = true;
                }
            }
            let f = straggler::PrimeField::new(DEFAULT_MODULUS).expect("prime");
            let mut value = vec![0u64; timeline.message_length];
            for (i, _) in covered.iter().enumerate().filter(|(_, c)| **c) {
                for (v, w) in value.iter_mut().zip(dataset_message(
                    i as u64,
                    timeline.message_length,
                    f.modulus(),
                )) {
                    *v = f.add(*v, w);
                }
            }
            task_value = Some(value);
            let coverage = profile.total();
            let times = flow.assignment.per_vm_times(instance.speeds());
            (
                Some(profile),
                bound.time,
                bound.bottleneck.len(),
                times,
                coverage,
            )
        }
    };

    let mut excluded_classes = Vec::new();
    let mut decode_verified = None;
    if let Some(cfg) = straggler {
        let profile = profile.as_ref().expect("profile built for straggler steps");
        let redundant = straggler::redundant_assign(&instance, profile, cfg)?;
        c_star = redundant.time.c_star.clone();
        n_star = redundant.time.n_star;
        times_sorted = redundant.time.per_vm_time.clone();
        excluded_classes = redundant.excluded.iter().map(|&c| ids_of(c)).collect();

        let messages = class_messages(timeline, mode, profile, &sorted, storage, cfg)?;
        let encoding = straggler::encode(&redundant.assignment, cfg, &messages, t as u64)?;
        let failed: Vec<usize> = step
            .stragglers
            .iter()
            .map(|vm| {
                sorted
                    .iter()
                    .position(|s| s == vm)
                    .expect("straggler is available")
            })
            .collect();
        let survivors: Vec<_> = encoding
            .transmissions
            .iter()
            .filter(|tr| !failed.contains(&tr.vm_index))
            .cloned()
            .collect();
        let decoded = straggler::decode(&survivors, cfg, n)?;
        let ok = decoded == encoding.direct_aggregate();
        if !ok {
            return Err(SimError::Step {
                step: t,
                message: "decode without stragglers does not match the aggregate".into(),
            });
        }
        decode_verified = Some(true);
        if mode == ProfileMode::Exact {
            task_value = Some(decoded);
        }
    }

    let mut baseline_times = Vec::with_capacity(timeline.baselines.len());
    for b in &timeline.baselines {
        let result = baseline_assign(b.kind, b.r, &instance)?;
        baseline_times.push((b.label(), result.time));
    }

    let mut per_vm_time: Vec<(String, Ratio)> = step
        .available
        .iter()
        .map(|&vm| (timeline.id(vm).to_string(), Ratio::zero()))
        .collect();
    for (i, time) in times_sorted.into_iter().enumerate() {
        per_vm_time[instance.original_ids()[i]].1 = time;
    }
    Ok(StepReport {
        step: t,
        per_vm_time,
        c_star,
        n_star,
        coverage,
        task_value,
        baseline_times,
        stragglers: step
            .stragglers
            .iter()
            .map(|&vm| timeline.id(vm).to_string())
            .collect(),
        excluded_classes,
        decode_verified,
    })
}

/// Class messages `W_V` for the in-scope classes of a step.
fn class_messages(
    timeline: &ElasticTimeline,
    mode: ProfileMode,
    profile: &ClassProfile,
    sorted: &[usize],
    storage: &[Vec<u32>],
    cfg: &StragglerConfig,
) -> Result<BTreeMap<ClassMask, Vec<u64>>, SimError> {
    let field = cfg.check(sorted.len())?;
    let len = timeline.message_length;
    let mut out: BTreeMap<ClassMask, Vec<u64>> = BTreeMap::new();
    match mode {
        ProfileMode::Exact => {
            let mut class_of = vec![ClassMask(0); timeline.k as usize];
            for (i, &vm) in sorted.iter().enumerate() {
                for &d in &storage[vm] {
                    class_of[d as usize] = ClassMask(class_of[d as usize].0 | 1 << i);
                }
            }
            for (d, class) in class_of.into_iter().enumerate() {
                if class.len() < cfg.redundancy() {
                    continue;
                }
                let entry = out.entry(class).or_insert_with(|| vec![0; len]);
                for (v, w) in entry
                    .iter_mut()
                    .zip(dataset_message(d as u64, len, field.modulus()))
                {
                    *v = field.add(*v, w);
                }
            }
        }
        ProfileMode::Asymptotic => {
            for (class, _) in profile
                .classes()
                .filter(|(c, _)| c.len() >= cfg.redundancy())
            {
                out.insert(class, dataset_message(class.0 as u64, len, field.modulus()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{frac, int};

    fn reference_scenario(mode: &str) -> String {
        format!(
            r#"{{"schemaVersion": 1, "K": 16000, "mode": "{mode}",
            "vmCatalog": {{"v1": {{"seed": 1, "storageFraction": "1/2"}},
                           "v2": {{"seed": 2, "storageFraction": "1/2"}},
                           "v3": {{"seed": 3, "storageFraction": "1/2"}},
                           "v4": {{"seed": 4, "storageFraction": "1/2"}}}},
            "steps": [{{"available": ["v3", "v1", "v4", "v2"],
                        "speeds": {{"v1": "1", "v2": "2", "v3": "5", "v4": "5"}}}}],
            "baselines": [{{"kind": "man", "r": 4}}, {{"kind": "cyclic", "r": 2}}]}}"#
        )
    }

    #[test]
    fn reference_step_asymptotic() {
        let t = load_timeline(&reference_scenario("asymptotic")).unwrap();
        let r = run_scenario(&t).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].c_star, frac(15, 208));
        assert_eq!(r[0].n_star, 4);
        assert_eq!(r[0].coverage, frac(15, 16));
        assert_eq!(r[0].per_vm_time[0], ("v3".to_string(), frac(15, 208)));
        assert_eq!(
            r[0].baseline_times[0],
            ("baseline_man_r4".to_string(), frac(1, 13))
        );
        assert!(r[0].task_value.is_none());
    }

    #[test]
    fn exact_step_matches_oracle_and_union() {
        let t = load_timeline(&reference_scenario("exact")).unwrap();
        let r = run_scenario(&t).unwrap();
        let storage = catalog_storage(&t);
        let union: std::collections::BTreeSet<u32> = storage.iter().flatten().copied().collect();
        assert_eq!(r[0].coverage, Ratio::new(union.len().into(), 16000.into()));
        let f = straggler::PrimeField::new(DEFAULT_MODULUS).unwrap();
        let expect = union.iter().fold(0, |acc, &i| {
            f.add(acc, dataset_message(i as u64, 1, DEFAULT_MODULUS)[0])
        });
        assert_eq!(r[0].task_value, Some(vec![expect]));
    }

    #[test]
    fn leaving_vm_drops_its_exclusive_class() {
        let text = r#"{"schemaVersion": 1, "K": 12, "mode": "exact",
            "vmCatalog": {"a": {"seed": 1, "storageFraction": "1/4"},
                          "b": {"seed": 1, "storageFraction": "1/4"}},
            "steps": [{"available": ["a", "b"], "speeds": {"a": "1", "b": "1"}},
                      {"available": ["a"], "speeds": {"a": "1"}}]}"#;
        let t = load_timeline(text).unwrap();
        let storage = catalog_storage(&t);
        let r = run_scenario(&t).unwrap();
        let only_b = storage[1]
            .iter()
            .filter(|d| !storage[0].contains(d))
            .count();
        assert_eq!(
            &r[0].coverage - &r[1].coverage,
            Ratio::new(only_b.into(), 12.into())
        );
    }

    #[test]
    fn straggler_steps_decode() {
        let text = r#"{"schemaVersion": 1, "K": 400, "mode": "exact",
            "vmCatalog": {"a": {"seed": 1, "storageFraction": "1/2"},
                          "b": {"seed": 2, "storageFraction": "1/2"},
                          "c": {"seed": 3, "storageFraction": "1/2"},
                          "d": {"seed": 4, "storageFraction": "1/2"}},
            "straggler": {"s": 1, "m": 2},
            "steps": [{"available": ["a", "b", "c", "d"],
                       "speeds": {"a": "1", "b": "2", "c": "3", "d": "3"},
                       "stragglers": ["c"]},
                      {"available": ["a", "b", "c"],
                       "speeds": {"a": "1", "b": "1", "c": "3"}}]}"#;
        let t = load_timeline(text).unwrap();
        let r = run_scenario(&t).unwrap();
        assert_eq!(r[0].decode_verified, Some(true));
        assert_eq!(r[0].task_value.as_ref().unwrap().len(), 2);
        assert!(!r[0].excluded_classes.is_empty());
        assert_eq!(r[1].stragglers.len(), 0);
    }

    #[test]
    fn too_many_stragglers_names_the_step() {
        let text = reference_scenario("asymptotic");
        let mut t = load_timeline(&text).unwrap();
        t.steps[0].stragglers = vec![0];
        match run_scenario(&t) {
            Err(SimError::Step { step: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn speed_hook_applies() {
        let t = load_timeline(&reference_scenario("asymptotic")).unwrap();
        let r = run_timeline_with(&t, ProfileMode::Asymptotic, None, |_, _, s| s * int(2)).unwrap();
        assert_eq!(r[0].c_star, frac(15, 416));
    }
}
