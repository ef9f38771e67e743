//! Scenario files: a VM catalog plus the VMs available at each step.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::baseline::BaselineKind;
use super::SimError;
use crate::model::ProfileMode;
use crate::ratio::{Exact, Ratio};
use crate::straggler::StragglerConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(rename = "K")]
    pub k: u64,
    pub mode: ProfileMode,
    pub vm_catalog: BTreeMap<String, CatalogEntry>,
    pub steps: Vec<StepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub straggler: Option<StragglerConfig>,
    #[serde(default)]
    pub baselines: Vec<BaselineSpec>,
    /// Field elements per dataset message; defaults to `m` (or 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CatalogEntry {
    pub seed: u64,
    /// `M / K`.
    pub storage_fraction: Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StepSpec {
    pub available: Vec<String>,
    pub speeds: BTreeMap<String, Exact>,
    #[serde(default)]
    pub stragglers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub r: usize,
}

impl BaselineSpec {
    pub fn label(&self) -> String {
        format!("baseline_{}_r{}", self.kind.name(), self.r)
    }
}

/// A checked scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticTimeline {
    pub k: u64,
    pub m: u64,
    pub mode: ProfileMode,
    /// Catalog ids in sorted order with their storage seeds.
    pub catalog: Vec<(String, u64)>,
    pub steps: Vec<Step>,
    pub straggler: Option<StragglerConfig>,
    pub baselines: Vec<BaselineSpec>,
    pub message_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Catalog positions in the order listed by the scenario.
    pub available: Vec<usize>,
    pub speeds: Vec<Ratio>,
    /// Catalog positions.
    pub stragglers: Vec<usize>,
}

impl ElasticTimeline {
    pub fn id(&self, vm: usize) -> &str {
        &self.catalog[vm].0
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SimError {
    SimError::Scenario {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses JSON text; errors name the offending path.
pub fn parse_scenario(text: &str) -> Result<Scenario, SimError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        invalid(path, e.into_inner().to_string())
    })
}

impl Scenario {
    pub fn validate(&self) -> Result<ElasticTimeline, SimError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schemaVersion",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if self.k == 0 {
            return Err(invalid("K", "must be positive"));
        }
        if self.vm_catalog.is_empty() {
            return Err(invalid("vmCatalog", "must list at least one VM"));
        }
        if self.steps.is_empty() {
            return Err(invalid("steps", "must contain at least one step"));
        }
        let mut fraction: Option<&Ratio> = None;
        for (id, entry) in &self.vm_catalog {
            let f = &entry.storage_fraction.0;
            let path = format!("vmCatalog.{id}.storageFraction");
            if f.is_negative() || *f > Ratio::from_integer(1.into()) {
                return Err(invalid(path, "must lie in [0, 1]"));
            }
            match fraction {
                Some(prev) if prev != f => {
                    return Err(invalid(path, "all VMs must share one storage fraction"))
                }
                _ => fraction = Some(f),
            }
        }
        let fraction = fraction.unwrap();
        let m_exact = fraction * Ratio::from_integer(self.k.into());
        if !m_exact.is_integer() {
            return Err(invalid(
                "vmCatalog",
                format!("storage fraction times K = {} is not an integer", self.k),
            ));
        }
        let m: u64 = m_exact
            .to_integer()
            .try_into()
            .map_err(|_| invalid("vmCatalog", "storage capacity out of range"))?;

        let catalog: Vec<(String, u64)> = self
            .vm_catalog
            .iter()
            .map(|(id, e)| (id.clone(), e.seed))
            .collect();
        let position = |id: &str| catalog.iter().position(|(c, _)| c == id);

        if let Some(cfg) = &self.straggler {
            if cfg.m == 0 {
                return Err(invalid("straggler.m", "must be at least 1"));
            }
        }
        let message_length = self
            .message_length
            .unwrap_or_else(|| self.straggler.map_or(1, |c| c.m));
        if message_length == 0 {
            return Err(invalid("messageLength", "must be positive"));
        }
        if let Some(cfg) = &self.straggler {
            if !message_length.is_multiple_of(cfg.m) {
                return Err(invalid("messageLength", "must be divisible by straggler.m"));
            }
        }
        for (i, b) in self.baselines.iter().enumerate() {
            if b.r == 0 {
                return Err(invalid(format!("baselines[{i}].r"), "must be at least 1"));
            }
        }

        let mut steps = Vec::with_capacity(self.steps.len());
        for (t, spec) in self.steps.iter().enumerate() {
            let here = |field: &str| format!("steps[{t}].{field}");
            if spec.available.is_empty() {
                return Err(invalid(here("available"), "must name at least one VM"));
            }
            let mut seen = BTreeSet::new();
            let mut available = Vec::with_capacity(spec.available.len());
            let mut speeds = Vec::with_capacity(spec.available.len());
            for (j, id) in spec.available.iter().enumerate() {
                let vm = position(id).ok_or_else(|| {
                    invalid(
                        format!("steps[{t}].available[{j}]"),
                        format!("unknown VM {id:?}"),
                    )
                })?;
                if !seen.insert(vm) {
                    return Err(invalid(
                        format!("steps[{t}].available[{j}]"),
                        format!("VM {id:?} listed twice"),
                    ));
                }
                let speed = spec
                    .speeds
                    .get(id)
                    .ok_or_else(|| invalid(here("speeds"), format!("no speed for VM {id:?}")))?;
                if speed.0 <= Ratio::zero() {
                    return Err(invalid(
                        format!("steps[{t}].speeds.{id}"),
                        "speed must be positive",
                    ));
                }
                available.push(vm);
                speeds.push(speed.0.clone());
            }
            if let Some(extra) = spec.speeds.keys().find(|id| !spec.available.contains(id)) {
                return Err(invalid(
                    format!("steps[{t}].speeds.{extra}"),
                    "speed given for a VM that is not available",
                ));
            }
            let mut stragglers = Vec::with_capacity(spec.stragglers.len());
            for (j, id) in spec.stragglers.iter().enumerate() {
                let vm = position(id).filter(|vm| seen.contains(vm)).ok_or_else(|| {
                    invalid(
                        format!("steps[{t}].stragglers[{j}]"),
                        format!("VM {id:?} is not available at this step"),
                    )
                })?;
                if stragglers.contains(&vm) {
                    return Err(invalid(
                        format!("steps[{t}].stragglers[{j}]"),
                        format!("VM {id:?} listed twice"),
                    ));
                }
                stragglers.push(vm);
            }
            let allowed = self.straggler.map_or(0, |c| c.s);
            if stragglers.len() > allowed {
                return Err(invalid(
                    here("stragglers"),
                    format!(
                        "step {t} has {} stragglers but at most {allowed} are tolerated",
                        stragglers.len()
                    ),
                ));
            }
            steps.push(Step {
                available,
                speeds,
                stragglers,
            });
        }
        Ok(ElasticTimeline {
            k: self.k,
            m,
            mode: self.mode,
            catalog,
            steps,
            straggler: self.straggler,
            baselines: self.baselines.clone(),
            message_length,
        })
    }
}

pub fn load_timeline(text: &str) -> Result<ElasticTimeline, SimError> {
    parse_scenario(text)?.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schemaVersion": 1, "K": 16, "mode": "exact",
        "vmCatalog": {"a": {"seed": 1, "storageFraction": "1/2"},
                      "b": {"seed": 2, "storageFraction": "1/2"}},
        "steps": [{"available": ["a", "b"], "speeds": {"a": "1", "b": "3/2"}}]
    }"#;

    #[test]
    fn parses_and_validates() {
        let t = load_timeline(BASE).unwrap();
        assert_eq!((t.k, t.m), (16, 8));
        assert_eq!(t.steps[0].available, vec![0, 1]);
        assert_eq!(t.message_length, 1);
    }

    #[test]
    fn parse_errors_carry_the_path() {
        let bad = BASE.replace(r#""seed": 2"#, r#""seed": "x""#);
        match load_timeline(&bad) {
            Err(SimError::Scenario { path, .. }) => assert_eq!(path, "vmCatalog.b.seed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_empty_steps_and_excess_stragglers() {
        let empty = BASE.replace(
            r#"[{"available": ["a", "b"], "speeds": {"a": "1", "b": "3/2"}}]"#,
            "[]",
        );
        assert!(matches!(
            load_timeline(&empty),
            Err(SimError::Scenario { path, .. }) if path == "steps"
        ));
        let strag = BASE.replace(r#""b": "3/2"}"#, r#""b": "3/2"}, "stragglers": ["a"]"#);
        match load_timeline(&strag) {
            Err(SimError::Scenario { path, message }) => {
                assert_eq!(path, "steps[0].stragglers");
                assert!(message.contains("step 0"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_mixed_fractions_and_unknown_vms() {
        let mixed = BASE.replace(
            r#""seed": 2, "storageFraction": "1/2""#,
            r#""seed": 2, "storageFraction": "1/4""#,
        );
        assert!(load_timeline(&mixed).is_err());
        let unknown = BASE.replace(r#"["a", "b"]"#, r#"["a", "c"]"#);
        assert!(matches!(
            load_timeline(&unknown),
            Err(SimError::Scenario { path, .. }) if path == "steps[0].available[1]"
        ));
    }
}
