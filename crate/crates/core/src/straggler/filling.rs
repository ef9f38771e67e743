//! Splits each class into pieces computed by exactly `r` VMs.
//!
//! The members' shares are laid end to end on `[0, r·a)` and folded onto a
//! circle of length `a`. A share never exceeds `a`, so no VM covers a point
//! twice, and the total length `r·a` makes every point covered exactly `r`
//! times. Cutting the circle at every fold boundary yields the pieces.

use num_traits::{Signed, Zero};

use crate::model::{ClassMask, LoadAssignment};
use crate::ratio::{self, Ratio};

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub class: ClassMask,
    /// The `r` VMs that all compute this piece.
    pub vms: ClassMask,
    /// Size as a fraction of `K`.
    pub fraction: Ratio,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FillError {
    #[error("class {class} is computed {} times in total, expected {}", ratio::to_exact_string(.actual), ratio::to_exact_string(.expected))]
    Coverage {
        class: ClassMask,
        expected: Ratio,
        actual: Ratio,
    },
    #[error("VM {} computes more of class {class} than the class holds", .vm + 1)]
    Overfull { class: ClassMask, vm: usize },
}

/// Pieces of one class of size `size`, ordered by position on the circle and
/// with equal VM sets merged.
pub fn fill_class(
    assignment: &LoadAssignment,
    class: ClassMask,
    size: &Ratio,
    redundancy: usize,
) -> Result<Vec<Piece>, FillError> {
    if !size.is_positive() {
        return Ok(Vec::new());
    }
    let members: Vec<(usize, Ratio)> = class
        .members()
        .map(|n| (n, assignment.share(n, class)))
        .filter(|(_, mu)| mu.is_positive())
        .collect();
    let total = ratio::sum(members.iter().map(|(_, mu)| mu));
    let expected = size * Ratio::from_integer(redundancy.into());
    if total != expected {
        return Err(FillError::Coverage {
            class,
            expected,
            actual: total,
        });
    }
    if let Some((vm, _)) = members.iter().find(|(_, mu)| mu > size) {
        return Err(FillError::Overfull { class, vm: *vm });
    }

    let wrap = |x: Ratio| {
        let turns = (&x / size).floor();
        x - turns * size
    };
    let mut starts = Vec::with_capacity(members.len());
    let mut cuts = vec![Ratio::zero()];
    let mut pos = Ratio::zero();
    for (_, mu) in &members {
        let start = wrap(pos.clone());
        cuts.push(start.clone());
        starts.push(start);
        pos += mu;
    }
    cuts.sort();
    cuts.dedup();
    cuts.push(size.clone());

    let two = Ratio::from_integer(2.into());
    let mut pieces: Vec<Piece> = Vec::new();
    for w in cuts.windows(2) {
        let len = &w[1] - &w[0];
        if !len.is_positive() {
            continue;
        }
        let mid = (&w[0] + &w[1]) / &two;
        let vms = ClassMask::from_members(
            members
                .iter()
                .zip(&starts)
                .filter(|((_, mu), start)| *mu == *size || wrap(&mid - *start) < *mu)
                .map(|((n, _), _)| *n),
        );
        debug_assert_eq!(vms.len(), redundancy);
        match pieces.iter_mut().find(|p| p.vms == vms) {
            Some(p) => p.fraction += len,
            None => pieces.push(Piece {
                class,
                vms,
                fraction: len,
            }),
        }
    }
    Ok(pieces)
}

/// Pieces of every listed class.
pub fn fill<'a>(
    assignment: &LoadAssignment,
    classes: impl IntoIterator<Item = (ClassMask, &'a Ratio)>,
) -> Result<Vec<Piece>, FillError> {
    let mut out = Vec::new();
    for (class, size) in classes {
        out.extend(fill_class(
            assignment,
            class,
            size,
            assignment.redundancy(),
        )?);
    }
    Ok(out)
}
