//! Cross-validation folds, development splits and nested subsamples.
//!
//! Only in-domain data is folded. Out-of-domain data is part of every
//! training split, unchanged and in file order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Domain, SequenceDataset};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Fold<T> {
    pub train: T,
    pub test: T,
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Assigns `0..n` to `k` folds after a seeded shuffle. Fold sizes differ by
/// at most one; indices within a fold are sorted.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "{k} folds requested but only {n} in-domain units"
        )));
    }
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in shuffled(n, seed).into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Folds the in-domain instances; every training split also holds all out-of-domain data.
pub fn split_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold<Dataset>>> {
    let in_idx: Vec<usize> = (0..data.len())
        .filter(|&i| data.instances[i].domain == Domain::In)
        .collect();
    let folds = fold_assignment(in_idx.len(), k, seed)?;
    Ok(folds
        .iter()
        .map(|fold| {
            let mut held = vec![false; data.len()];
            for &p in fold {
                held[in_idx[p]] = true;
            }
            let (test, train): (Vec<_>, Vec<_>) = data
                .instances
                .iter()
                .zip(&held)
                .partition(|(_, &h)| h);
            Fold {
                train: data.with_instances(train.into_iter().map(|(x, _)| x.clone()).collect()),
                test: data.with_instances(test.into_iter().map(|(x, _)| x.clone()).collect()),
            }
        })
        .collect())
}

/// Sequence analogue of [`split_folds`]: in-domain sequences are folded.
pub fn split_sequence_folds(
    data: &SequenceDataset,
    k: usize,
    seed: u64,
) -> Result<Vec<Fold<SequenceDataset>>> {
    let in_idx: Vec<usize> = (0..data.sequences.len())
        .filter(|&i| data.sequences[i].domain == Domain::In)
        .collect();
    let folds = fold_assignment(in_idx.len(), k, seed)?;
    Ok(folds
        .iter()
        .map(|fold| {
            let mut held = vec![false; data.sequences.len()];
            for &p in fold {
                held[in_idx[p]] = true;
            }
            let pick = |want: bool| {
                data.sequences
                    .iter()
                    .zip(&held)
                    .filter(|(_, &h)| h == want)
                    .map(|(s, _)| s.clone())
                    .collect()
            };
            Fold {
                train: data.with_sequences(pick(false)),
                test: data.with_sequences(pick(true)),
            }
        })
        .collect())
}

/// Random `(train, dev)` split with `round(fraction * N)` dev instances.
/// Both parts keep the original order.
pub fn dev_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, dev) = dev_split_indices(data.len(), fraction, seed)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| data.instances[i].clone()).collect();
    Ok((data.with_instances(pick(train)), data.with_instances(pick(dev))))
}

/// Index form of [`dev_split`]: ascending train and dev indices into `0..n`.
pub fn dev_split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "dev fraction must be in (0, 1), got {fraction}"
        )));
    }
    let dev_n = (fraction * n as f64).round() as usize;
    let mut is_dev = vec![false; n];
    for &i in shuffled(n, seed).iter().take(dev_n) {
        is_dev[i] = true;
    }
    Ok((0..n).partition(|&i| !is_dev[i]))
}

/// Nested random subsets of `0..n`: each returned index set (sorted) is
/// a prefix of one seeded permutation, so smaller sizes are contained in larger ones.
pub fn nested_subsets(n: usize, sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    let perm = shuffled(n, seed);
    sizes
        .iter()
        .map(|&s| {
            if s > n {
                return Err(Error::invalid(format!(
                    "subset size {s} exceeds available {n}"
                )));
            }
            let mut v = perm[..s].to_vec();
            v.sort_unstable();
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Alphabet, FeatureVector, Instance};
    use proptest::prelude::*;

    fn toy(n_in: usize, n_out: usize) -> Dataset {
        let mut d = Dataset::new(Alphabet::with_bias(), Alphabet::from_names(["a", "b"]));
        let (mut ins, mut outs) = (0, 0);
        for i in 0..n_in + n_out {
            let dom = if (i % 2 == 1 && outs < n_out) || ins == n_in {
                outs += 1;
                Domain::Out
            } else {
                ins += 1;
                Domain::In
            };
            d.instances
                .push(Instance::new(FeatureVector::from_indices([0, i + 1]), i % 2, dom));
        }
        d
    }

    #[test]
    fn two_folds_of_two() {
        let d = toy(4, 0);
        let folds = split_folds(&d, 2, 7).unwrap();
        assert_eq!(folds.len(), 2);
        assert!(folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 2));
    }

    #[test]
    fn too_many_folds_is_error() {
        let d = toy(3, 5);
        assert!(split_folds(&d, 4, 0).is_err());
        assert!(split_folds(&d, 1, 0).is_err());
    }

    #[test]
    fn folds_are_seeded() {
        let d = toy(20, 10);
        let a = split_folds(&d, 5, 11).unwrap();
        let b = split_folds(&d, 5, 11).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.test, y.test);
        }
    }

    #[test]
    fn dev_split_size() {
        let d = toy(10, 0);
        let (train, dev) = dev_split(&d, 0.2, 3).unwrap();
        assert_eq!(dev.len(), 2);
        assert_eq!(train.len(), 8);
        let (t2, d2) = dev_split(&d, 0.2, 3).unwrap();
        assert_eq!((t2, d2), (train, dev));
        assert!(dev_split(&d, 1.0, 3).is_err());
    }

    #[test]
    fn nested_subsets_are_nested() {
        let s = nested_subsets(50, &[5, 10, 30, 50], 1).unwrap();
        for w in s.windows(2) {
            assert!(w[0].iter().all(|i| w[1].contains(i)));
        }
        assert!(nested_subsets(5, &[6], 1).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_in_domain(n_in in 2usize..40, n_out in 0usize..20, k in 2usize..6, seed in 0u64..1000) {
            prop_assume!(k <= n_in);
            let d = toy(n_in, n_out);
            let folds = split_folds(&d, k, seed).unwrap();
            let mut seen: Vec<FeatureVector> = Vec::new();
            let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in &folds {
                prop_assert!(f.test.instances.iter().all(|i| i.domain == Domain::In));
                prop_assert_eq!(f.train.count(Domain::Out), n_out);
                prop_assert_eq!(f.train.len() + f.test.len(), d.len());
                seen.extend(f.test.instances.iter().map(|i| i.features.clone()));
            }
            seen.sort_by_key(|v| v.bound());
            seen.dedup();
            prop_assert_eq!(seen.len(), n_in);
        }

        #[test]
        fn dev_split_partitions(n in 1usize..60, frac in 0.05f64..0.95, seed in 0u64..100) {
            let d = toy(n, 0);
            let (train, dev) = dev_split(&d, frac, seed).unwrap();
            prop_assert_eq!(train.len() + dev.len(), n);
            prop_assert_eq!(dev.len(), (frac * n as f64).round() as usize);
            let mut all: Vec<_> = train.instances.iter().chain(&dev.instances).map(|i| i.features.bound()).collect();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), n);
        }
    }
}
