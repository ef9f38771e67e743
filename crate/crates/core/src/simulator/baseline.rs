//! Centralized placements for comparison, timed with the same flow solver.
//!
//! All three place the full dataset with replication factor `r` over the
//! instance's VMs (speed order, 0-based):
//!
//! * `cyclic`: `N` equal blocks, block `i` on VMs `i, ..., i + r - 1 (mod N)`.
//! * `repetition`: `N / r` groups of `r` consecutive VMs, each group holding
//!   one of `N / r` equal blocks.
//! * `man`: one equal block per `r`-subset of VMs.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{ClassMask, ProblemInstance, MAX_CLASS_VMS};
use crate::ratio::Ratio;
use crate::transport::TransportProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Cyclic,
    Repetition,
    Man,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Cyclic => "cyclic",
            BaselineKind::Repetition => "repetition",
            BaselineKind::Man => "man",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    /// Block placement: VM set and block size as a fraction of `K`.
    pub storage: Vec<(ClassMask, Ratio)>,
    pub time: Ratio,
}

fn config(message: String) -> SimError {
    SimError::Config(message)
}

pub fn baseline_storage(
    kind: BaselineKind,
    r: usize,
    n: usize,
) -> Result<Vec<(ClassMask, Ratio)>, SimError> {
    if n > MAX_CLASS_VMS {
        return Err(config(format!(
            "baselines support at most {MAX_CLASS_VMS} VMs"
        )));
    }
    if r == 0 || r > n {
        return Err(config(format!(
            "{} replication factor {r} must lie in 1..={n}",
            kind.name()
        )));
    }
    let block = |count: usize| Ratio::new(BigInt::from(1), BigInt::from(count));
    Ok(match kind {
        BaselineKind::Cyclic => (0..n)
            .map(|i| {
                (
                    ClassMask::from_members((0..r).map(|j| (i + j) % n)),
                    block(n),
                )
            })
            .collect(),
        BaselineKind::Repetition => {
            if !n.is_multiple_of(r) {
                return Err(config(format!(
                    "repetition needs r = {r} to divide N = {n}"
                )));
            }
            let groups = n / r;
            (0..groups)
                .map(|g| (ClassMask::from_members(g * r..(g + 1) * r), block(groups)))
                .collect()
        }
        BaselineKind::Man => {
            let subsets: Vec<ClassMask> = ClassMask::all(n).filter(|c| c.len() == r).collect();
            let size = block(subsets.len());
            subsets.into_iter().map(|c| (c, size.clone())).collect()
        }
    })
}

/// Placement plus its min-max time on `instance`'s speeds.
pub fn baseline_assign(
    kind: BaselineKind,
    r: usize,
    instance: &ProblemInstance,
) -> Result<BaselineResult, SimError> {
    let storage = baseline_storage(kind, r, instance.num_vms())?;
    let time = TransportProblem::from_classes(instance.speeds(), storage.clone(), 1)?
        .solve()?
        .time;
    Ok(BaselineResult { storage, time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{frac, int};

    fn inst(speeds: Vec<Ratio>) -> ProblemInstance {
        ProblemInstance::new(1, 0, speeds).unwrap()
    }

    #[test]
    fn full_replication_pools_speed() {
        let i = inst(vec![int(1), int(2), int(5), int(5)]);
        let b = baseline_assign(BaselineKind::Man, 4, &i).unwrap();
        assert_eq!(b.time, frac(1, 13));
        for kind in [
            BaselineKind::Cyclic,
            BaselineKind::Repetition,
            BaselineKind::Man,
        ] {
            for r in [1, 2, 4] {
                let other = baseline_assign(kind, r, &i).unwrap();
                assert!(b.time <= other.time, "{kind:?} r={r}");
            }
        }
    }

    #[test]
    fn repetition_without_sharing() {
        let i = inst(vec![int(2); 4]);
        let b = baseline_assign(BaselineKind::Repetition, 1, &i).unwrap();
        assert_eq!(b.time, frac(1, 8));
    }

    #[test]
    fn cyclic_pairs_on_reference_speeds() {
        let i = inst(vec![int(1), int(2), int(5), int(5)]);
        let b = baseline_assign(BaselineKind::Cyclic, 2, &i).unwrap();
        assert_eq!(
            b.storage.iter().map(|(c, _)| c.0).collect::<Vec<_>>(),
            vec![0b0011, 0b0110, 0b1100, 0b1001]
        );
        // Hand enumeration of cuts: VMs {1,2} alone hold one block (1/4) with
        // speed 3, the largest forced ratio.
        assert_eq!(b.time, frac(1, 12));
    }

    #[test]
    fn divisibility_and_range_errors() {
        let i = inst(vec![int(1); 3]);
        assert!(matches!(
            baseline_assign(BaselineKind::Repetition, 2, &i),
            Err(SimError::Config(_))
        ));
        assert!(baseline_assign(BaselineKind::Man, 4, &i).is_err());
        assert!(baseline_assign(BaselineKind::Cyclic, 0, &i).is_err());
    }
}
