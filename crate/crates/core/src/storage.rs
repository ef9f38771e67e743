//! Decentralized random placement and dataset-class profiles.
//!
//! Each VM independently keeps a uniform `M`-subset of the `K` datasets. VM
//! `n`'s subset is drawn from its own ChaCha stream of the shared seed, so
//! adding VM `N + 1` leaves VMs `1..=N` untouched.
//!
//! For large `K` the class sizes concentrate at
//! `a(V) = beta * (alpha - 1)^|V|` with `alpha = K / (K - M)` and
//! `beta = ((K - M) / K)^N`; [`asymptotic_profile`] returns that law and
//! [`exact_profile`] counts an actual placement.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::exec;
use crate::model::{
    class_count, ClassMask, ClassProfile, ExplicitStorage, ModelError, ProblemInstance,
    ProfileMode, MAX_CLASS_VMS,
};
use crate::ratio::Ratio;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StorageError {
    #[error("storage capacity M = {m} exceeds dataset count K = {k}")]
    InvalidCapacity { k: u64, m: u64 },
    #[error("need at least one VM")]
    NoVms,
    #[error("prefix length {n} is outside 0..={max}")]
    OutOfRange { n: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The `M` datasets VM stream `stream` of `seed` stores, sorted ascending.
pub fn vm_datasets(k: u64, m: u64, seed: u64, stream: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut ids: Vec<u32> = rand::seq::index::sample(&mut rng, k as usize, m as usize)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    ids.sort_unstable();
    ids
}

pub fn generate_decentralized(
    k: u64,
    m: u64,
    n: usize,
    seed: u64,
) -> Result<ExplicitStorage, StorageError> {
    if m > k {
        return Err(StorageError::InvalidCapacity { k, m });
    }
    if n == 0 {
        return Err(StorageError::NoVms);
    }
    let per_vm = exec::map_range(n, |vm| vm_datasets(k, m, seed, vm as u64));
    Ok(ExplicitStorage {
        k,
        m,
        n,
        seed,
        per_vm,
    })
}

/// Counts `|A_V| / K` for every nonempty class of an explicit placement.
pub fn exact_profile(storage: &ExplicitStorage) -> Result<ClassProfile, StorageError> {
    storage.check()?;
    if storage.n > MAX_CLASS_VMS {
        return Err(ModelError::TooManyVms {
            n: storage.n,
            max: MAX_CLASS_VMS,
        }
        .into());
    }
    let mut counts = vec![0u64; class_count(storage.n)];
    for class in storage.class_index() {
        if !class.is_empty() {
            counts[class.index()] += 1;
        }
    }
    let k = BigInt::from(storage.k.max(1));
    let sizes = counts
        .into_iter()
        .map(|c| Ratio::new(BigInt::from(c), k.clone()))
        .collect();
    let (alpha, beta) = alpha_beta(storage.k, storage.m, storage.n);
    Ok(ClassProfile::new(
        ProfileMode::Exact,
        storage.n,
        alpha,
        beta,
        sizes,
    )?)
}

fn alpha_beta(k: u64, m: u64, n: usize) -> (Option<Ratio>, Ratio) {
    if m >= k {
        return (None, Ratio::zero());
    }
    let alpha = Ratio::new(BigInt::from(k), BigInt::from(k - m));
    let beta = num_traits::pow(alpha.recip(), n);
    (Some(alpha), beta)
}

/// Closed-form class law for an instance; usable at any `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticLaw {
    num_vms: usize,
    alpha: Option<Ratio>,
    beta: Ratio,
}

impl AsymptoticLaw {
    pub fn new(num_vms: usize, alpha: Option<Ratio>) -> Self {
        let beta = match &alpha {
            Some(a) => num_traits::pow(a.recip(), num_vms),
            None => Ratio::zero(),
        };
        AsymptoticLaw {
            num_vms,
            alpha,
            beta,
        }
    }

    pub fn for_instance(instance: &ProblemInstance) -> Self {
        Self::new(instance.num_vms(), instance.alpha())
    }

    pub fn alpha(&self) -> Option<&Ratio> {
        self.alpha.as_ref()
    }

    pub fn beta(&self) -> &Ratio {
        &self.beta
    }

    /// `a(V)` for a class with `members` VMs.
    pub fn class_size(&self, members: usize) -> Ratio {
        match &self.alpha {
            Some(a) => &self.beta * num_traits::pow(a - Ratio::one(), members),
            None if members == self.num_vms => Ratio::one(),
            None => Ratio::zero(),
        }
    }

    /// `L(n) = beta * (alpha^n - 1)`.
    pub fn cumulative(&self, n: usize) -> Ratio {
        match &self.alpha {
            Some(a) => &self.beta * (num_traits::pow(a.clone(), n) - Ratio::one()),
            None if n == self.num_vms => Ratio::one(),
            None => Ratio::zero(),
        }
    }

    /// `L(0..=N)` as integers over one common denominator `p^N`, where
    /// `alpha = p/q` in lowest terms: `L(n) = q^(N-n) (p^n - q^n) / p^N`.
    pub fn scaled_cumulative(&self) -> Option<(Vec<BigInt>, BigInt)> {
        let a = self.alpha.as_ref()?;
        let (p, q) = (a.numer(), a.denom());
        let n = self.num_vms;
        let mut p_pow = vec![BigInt::one()];
        let mut q_pow = vec![BigInt::one()];
        for i in 0..n {
            p_pow.push(&p_pow[i] * p);
            q_pow.push(&q_pow[i] * q);
        }
        let table = (0..=n)
            .map(|i| &q_pow[n - i] * (&p_pow[i] - &q_pow[i]))
            .collect();
        Some((table, p_pow.pop().expect("p^0 present")))
    }

    pub fn cumulative_table(&self) -> Vec<Ratio> {
        let Some(a) = &self.alpha else {
            return (0..=self.num_vms).map(|n| self.cumulative(n)).collect();
        };
        let mut out = Vec::with_capacity(self.num_vms + 1);
        let mut power = Ratio::one();
        for _ in 0..=self.num_vms {
            out.push(&self.beta * (&power - Ratio::one()));
            power *= a;
        }
        out
    }
}

/// `a(V) = beta * (alpha - 1)^|V|`; when `M = K` the only nonempty class is
/// the full set.
pub fn asymptotic_profile(instance: &ProblemInstance) -> Result<ClassProfile, StorageError> {
    let n = instance.num_vms();
    if n > MAX_CLASS_VMS {
        return Err(ModelError::TooManyVms {
            n,
            max: MAX_CLASS_VMS,
        }
        .into());
    }
    let law = AsymptoticLaw::for_instance(instance);
    let by_size: Vec<Ratio> = (0..=n).map(|c| law.class_size(c)).collect();
    let sizes = ClassMask::all(n)
        .map(|c| by_size[c.len()].clone())
        .collect();
    Ok(ClassProfile::new(
        ProfileMode::Asymptotic,
        n,
        law.alpha,
        law.beta,
        sizes,
    )?)
}

/// `L(n)`: total size of the classes contained in the `n` slowest VMs.
pub fn cumulative_exclusive(profile: &ClassProfile, n: usize) -> Result<Ratio, StorageError> {
    if n > profile.num_vms() {
        return Err(StorageError::OutOfRange {
            n,
            max: profile.num_vms(),
        });
    }
    let prefix = ClassMask::prefix(n);
    Ok(profile
        .classes()
        .filter(|(c, _)| c.is_subset_of(prefix))
        .fold(Ratio::zero(), |acc, (_, a)| acc + a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{frac, int};

    #[test]
    fn full_storage_lands_in_top_class() {
        let s = generate_decentralized(10, 10, 3, 9).unwrap();
        assert!(s.per_vm.iter().all(|z| z.len() == 10));
        assert!(s.class_index().iter().all(|&c| c == ClassMask(0b111)));
        let p = exact_profile(&s).unwrap();
        assert_eq!(p.size(ClassMask(0b111)), &int(1));
        assert_eq!(p.total(), int(1));
    }

    #[test]
    fn zero_storage_has_empty_classes() {
        let s = generate_decentralized(10, 0, 3, 1).unwrap();
        assert!(s.per_vm.iter().all(|z| z.is_empty()));
        assert!(s.class_index().iter().all(|c| c.is_empty()));
        assert_eq!(exact_profile(&s).unwrap().total(), int(0));
    }

    #[test]
    fn rejects_capacity_above_k() {
        assert_eq!(
            generate_decentralized(5, 6, 2, 0),
            Err(StorageError::InvalidCapacity { k: 5, m: 6 })
        );
    }

    #[test]
    fn same_seed_same_storage_and_streams_are_independent_of_n() {
        let a = generate_decentralized(200, 50, 3, 77).unwrap();
        let b = generate_decentralized(200, 50, 3, 77).unwrap();
        assert_eq!(a, b);
        let wider = generate_decentralized(200, 50, 5, 77).unwrap();
        assert_eq!(&wider.per_vm[..3], &a.per_vm[..]);
        let other = generate_decentralized(200, 50, 3, 78).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn disjoint_storage_profile() {
        let s = ExplicitStorage {
            k: 12,
            m: 3,
            n: 3,
            seed: 0,
            per_vm: vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]],
        };
        let p = exact_profile(&s).unwrap();
        for (c, a) in p.classes() {
            let expected = if c.len() == 1 { frac(1, 4) } else { int(0) };
            assert_eq!(a, &expected, "class {c}");
        }
    }

    #[test]
    fn asymptotic_reference_instance() {
        let inst = ProblemInstance::new(16000, 8000, vec![int(1), int(2), int(5), int(5)]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        assert_eq!(p.alpha(), Some(&int(2)));
        assert_eq!(p.beta(), &frac(1, 16));
        assert!(p.sizes().iter().all(|a| *a == frac(1, 16)));
        let l: Vec<Ratio> = (0..=4)
            .map(|n| cumulative_exclusive(&p, n).unwrap())
            .collect();
        assert_eq!(
            l,
            vec![int(0), frac(1, 16), frac(3, 16), frac(7, 16), frac(15, 16)]
        );
        assert_eq!(p.cumulative_table(), l);
        assert_eq!(AsymptoticLaw::for_instance(&inst).cumulative_table(), l);
        assert!(cumulative_exclusive(&p, 5).is_err());
    }

    #[test]
    fn asymptotic_zero_and_half_storage() {
        let inst = ProblemInstance::new(10, 0, vec![int(1); 3]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        assert!(p.sizes().iter().all(|a| *a == int(0)));

        let inst = ProblemInstance::new(8000, 4000, vec![int(1); 3]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        assert!(p.sizes().iter().all(|a| *a == frac(1, 8)));
        assert_eq!(p.total(), frac(7, 8));
        assert_eq!(p.total(), int(1) - p.beta());
    }

    #[test]
    fn degenerate_full_storage_profile() {
        let inst = ProblemInstance::new(6, 6, vec![int(1), int(2), int(3)]).unwrap();
        let p = asymptotic_profile(&inst).unwrap();
        assert_eq!(p.size(ClassMask(0b111)), &int(1));
        assert_eq!(p.total(), int(1));
        assert_eq!(p.cumulative_table(), vec![int(0), int(0), int(0), int(1)]);
    }

    #[test]
    fn exact_cumulative_matches_union_count() {
        let s = generate_decentralized(2000, 700, 4, 5).unwrap();
        let p = exact_profile(&s).unwrap();
        let union: std::collections::BTreeSet<u32> = s.per_vm.iter().flatten().copied().collect();
        assert_eq!(
            cumulative_exclusive(&p, 4).unwrap(),
            Ratio::new(BigInt::from(union.len()), BigInt::from(2000))
        );
        let first_two: std::collections::BTreeSet<u32> =
            s.per_vm[..2].iter().flatten().copied().collect();
        let outside: std::collections::BTreeSet<u32> =
            s.per_vm[2..].iter().flatten().copied().collect();
        let only_first_two = first_two.difference(&outside).count();
        assert_eq!(
            cumulative_exclusive(&p, 2).unwrap(),
            Ratio::new(BigInt::from(only_first_two), BigInt::from(2000))
        );
    }
}
