//! Tolerating up to `s` unresponsive VMs.
//!
//! Every class with at least `s + m` members is computed `s + m` times
//! ([`redundant_assign`]), split into pieces held by exactly `s + m` VMs
//! ([`filling`]) and polynomial-coded ([`coding`]) so that any `N - s`
//! transmissions of `L / m` symbols recover the aggregate. Classes with fewer
//! members cannot be protected and are listed in the result as excluded.

pub mod coding;
pub mod field;
pub mod filling;

use serde::{Deserialize, Serialize};

use crate::model::{
    ClassMask, ClassProfile, LoadAssignment, ModelError, ProblemInstance, TimeResult,
};
use crate::ratio::Ratio;
use crate::transport::{TransportError, TransportProblem};

pub use coding::{decode, encode, CodedTransmission, CodingScheme, Encoding, WireTransmission};
pub use field::{PrimeField, DEFAULT_MODULUS};
pub use filling::{fill, FillError, Piece};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StragglerConfig {
    pub s: usize,
    pub m: usize,
    #[serde(default = "default_modulus")]
    pub field_modulus: u64,
}

fn default_modulus() -> u64 {
    DEFAULT_MODULUS
}

impl StragglerConfig {
    pub fn new(s: usize, m: usize) -> Self {
        StragglerConfig {
            s,
            m,
            field_modulus: DEFAULT_MODULUS,
        }
    }

    pub fn redundancy(&self) -> usize {
        self.s + self.m
    }

    /// Validates against `num_vms` and returns the coding field.
    pub fn check(&self, num_vms: usize) -> Result<PrimeField, StragglerError> {
        if self.m == 0 {
            return Err(StragglerError::Config("m must be at least 1".into()));
        }
        if self.s >= num_vms {
            return Err(StragglerError::Config(format!(
                "tolerating {} stragglers needs more than {} VMs",
                self.s, num_vms
            )));
        }
        match PrimeField::new(self.field_modulus) {
            Some(f) if self.field_modulus > num_vms as u64 => Ok(f),
            _ => Err(StragglerError::Config(format!(
                "field modulus {} must be a prime above the VM count {} and below 2^63",
                self.field_modulus, num_vms
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StragglerError {
    #[error("invalid straggler configuration: {0}")]
    Config(String),
    #[error("received {received} transmissions, need at least {needed}")]
    InsufficientResponses { received: usize, needed: usize },
    #[error("transmission from VM index {vm} is repeated or out of range")]
    DuplicateResponse { vm: usize },
    #[error("decode system is singular")]
    Singular,
    #[error("message length {length} is not a common multiple of m = {m}")]
    MessageLength { length: usize, m: usize },
    #[error("expected {expected} piece messages, found {found}")]
    MessageCount { expected: usize, found: usize },
    #[error("no message supplied for class {class}")]
    MissingMessage { class: ClassMask },
    #[error("piece {vms} does not have exactly {redundancy} VMs")]
    BadPiece { vms: ClassMask, redundancy: usize },
    #[error("assignment redundancy {found} does not match s + m = {expected}")]
    Redundancy { expected: usize, found: usize },
    #[error("wire format: {0}")]
    Wire(String),
    #[error(transparent)]
    Fill(#[from] FillError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedundantAssignment {
    pub assignment: LoadAssignment,
    /// `n_star` is the size of the bottleneck VM set.
    pub time: TimeResult,
    pub bottleneck: ClassMask,
    /// Nonempty classes with fewer than `s + m` members, left out of the
    /// recoverable aggregate.
    pub excluded: Vec<ClassMask>,
}

/// Min-max assignment computing every in-scope class `s + m` times, each VM
/// at most once per dataset.
pub fn redundant_assign(
    instance: &ProblemInstance,
    profile: &ClassProfile,
    config: &StragglerConfig,
) -> Result<RedundantAssignment, StragglerError> {
    let n = instance.num_vms();
    config.check(n)?;
    if profile.num_vms() != n {
        return Err(ModelError::DimensionMismatch {
            what: "class profile",
            expected: n,
            found: profile.num_vms(),
        }
        .into());
    }
    let r = config.redundancy();
    let excluded: Vec<ClassMask> = profile
        .classes()
        .filter(|(c, a)| c.len() < r && **a > Ratio::default())
        .map(|(c, _)| c)
        .collect();
    let problem = TransportProblem::new(instance.speeds(), profile, r)?;
    let solution = problem.solve()?;
    let per_vm_time = solution.assignment.per_vm_times(instance.speeds());
    Ok(RedundantAssignment {
        time: TimeResult {
            c_star: solution.time,
            n_star: solution.bottleneck.len(),
            per_vm_time,
        },
        assignment: solution.assignment,
        bottleneck: solution.bottleneck,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::validate;
    use crate::optimizer::{assign_loads, lp_oracle};
    use crate::ratio::{frac, int};
    use crate::storage::asymptotic_profile;

    #[test]
    fn config_checks() {
        assert!(StragglerConfig::new(1, 1).check(3).is_ok());
        assert!(StragglerConfig::new(3, 1).check(3).is_err());
        assert!(StragglerConfig::new(0, 0).check(3).is_err());
        let mut c = StragglerConfig::new(0, 1);
        c.field_modulus = 5;
        assert!(c.check(5).is_err());
        c.field_modulus = 7;
        assert!(c.check(5).is_ok());
        c.field_modulus = 9;
        assert!(c.check(5).is_err());
    }

    #[test]
    fn three_vm_example_assignment() {
        // s[1] much slower than s[2] = s[3].
        let inst = ProblemInstance::from_alpha(&int(2), vec![int(1), int(100), int(100)]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        let out = redundant_assign(&inst, &p, &StragglerConfig::new(1, 1)).unwrap();
        let a = &out.assignment;
        for class in [0b011u32, 0b101, 0b110].map(ClassMask) {
            for n in class.members() {
                assert_eq!(a.share(n, class), *p.size(class), "{class} on VM {}", n + 1);
            }
        }
        let all = ClassMask(0b111);
        assert_eq!(a.share(0, all), int(0));
        assert_eq!(a.share(1, all), *p.size(all));
        assert_eq!(a.share(2, all), *p.size(all));
        assert_eq!(out.excluded, vec![ClassMask(1), ClassMask(2), ClassMask(4)]);
        assert!(validate(&inst, &p, a).unwrap().is_empty());
    }

    #[test]
    fn no_redundancy_matches_elastic_optimum() {
        let inst =
            ProblemInstance::from_alpha(&frac(5, 2), vec![int(1), int(2), int(3), int(7)]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        let out = redundant_assign(&inst, &p, &StragglerConfig::new(0, 1)).unwrap();
        let (_, t, _) = assign_loads(&inst, &p).unwrap();
        assert_eq!(out.time.c_star, t.c_star);
        assert!(out.excluded.is_empty());
    }

    #[test]
    fn matches_oracle_on_in_scope_classes() {
        let inst =
            ProblemInstance::from_alpha(&frac(3, 2), vec![int(1), int(2), int(2), int(3), int(5)])
                .unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        let cfg = StragglerConfig::new(1, 2);
        let out = redundant_assign(&inst, &p, &cfg).unwrap();
        let scoped = ClassProfile::new(
            p.mode(),
            5,
            p.alpha().cloned(),
            p.beta().clone(),
            ClassMask::all(5)
                .map(|c| {
                    if c.len() >= 3 {
                        p.size(c).clone()
                    } else {
                        int(0)
                    }
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(out.time.c_star, lp_oracle(&inst, &scoped, 3).unwrap());
        for (c, a) in scoped.classes() {
            assert_eq!(out.assignment.class_total(c), a * int(3));
        }
    }

    #[test]
    fn end_to_end_decode_every_survivor_set() {
        let inst =
            ProblemInstance::from_alpha(&int(2), vec![int(1), int(2), int(5), int(5)]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        let cfg = StragglerConfig::new(1, 2);
        let out = redundant_assign(&inst, &p, &cfg).unwrap();
        let messages: BTreeMap<ClassMask, Vec<u64>> = ClassMask::all(4)
            .map(|c| (c, (0..6).map(|i| (c.0 as u64) * 1000 + i).collect()))
            .collect();
        let enc = encode(&out.assignment, &cfg, &messages, 3).unwrap();
        let f = enc.scheme.field();
        let mut direct = vec![0u64; 6];
        for c in &enc.classes {
            for (d, &v) in direct.iter_mut().zip(&messages[c]) {
                *d = f.add(*d, v);
            }
        }
        assert_eq!(enc.direct_aggregate(), direct);
        assert!(enc.transmissions.iter().all(|t| t.coded_vector.len() == 3));
        for skip in 0..4 {
            let survivors: Vec<CodedTransmission> = enc
                .transmissions
                .iter()
                .filter(|t| t.vm_index != skip)
                .cloned()
                .collect();
            assert_eq!(decode(&survivors, &cfg, 4).unwrap(), direct);
        }
        assert!(matches!(
            decode(&enc.transmissions[..2], &cfg, 4),
            Err(StragglerError::InsufficientResponses { .. })
        ));
    }
}
