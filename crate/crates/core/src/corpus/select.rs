//! Information-gain feature ranking against domain membership.

use super::{Dataset, Domain, Instance};
use crate::{Error, Result};

fn plogp_ratio(joint: f64, a: f64, b: f64) -> f64 {
    if joint <= 0.0 {
        0.0
    } else {
        joint * (joint / (a * b)).ln()
    }
}

/// Mutual information (nats) between each feature's presence and the
/// in/out domain indicator.
pub fn information_gain(data: &Dataset) -> Vec<f64> {
    information_gain_of(&data.instances, data.num_features())
}

/// [`information_gain`] over a bare instance list with `f_count` features.
pub fn information_gain_of<'a, I>(instances: I, f_count: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a Instance>,
{
    let mut present = [vec![0usize; f_count], vec![0usize; f_count]];
    let mut totals = [0usize; 2];
    for inst in instances {
        let d = usize::from(inst.domain == Domain::Out);
        totals[d] += 1;
        for f in inst.features.iter().filter(|&f| f < f_count) {
            present[d][f] += 1;
        }
    }
    let n = (totals[0] + totals[1]) as f64;
    if n == 0.0 {
        return vec![0.0; f_count];
    }
    let p_dom = [totals[0] as f64 / n, totals[1] as f64 / n];
    (0..f_count)
        .map(|f| {
            let on = [present[0][f] as f64 / n, present[1][f] as f64 / n];
            let off = [p_dom[0] - on[0], p_dom[1] - on[1]];
            let p_on = on[0] + on[1];
            let p_off = 1.0 - p_on;
            let mi = plogp_ratio(on[0], p_on, p_dom[0])
                + plogp_ratio(on[1], p_on, p_dom[1])
                + plogp_ratio(off[0], p_off, p_dom[0])
                + plogp_ratio(off[1], p_off, p_dom[1]);
            mi.max(0.0)
        })
        .collect()
}

/// Top `top_k` features by information gain, best first; ties go to the
/// lower feature index. Asking for more than F features returns all of them.
pub fn information_gain_select(data: &Dataset, top_k: usize) -> Result<Vec<usize>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    if data.count(Domain::In) == 0 || data.count(Domain::Out) == 0 {
        return Err(Error::invalid(
            "information gain selection needs both domains",
        ));
    }
    Ok(rank_top(&information_gain(data), top_k))
}

/// Indices of the `top_k` largest scores, best first, ties to the lower index.
pub(crate) fn rank_top(ig: &[f64], top_k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ig.len()).collect();
    order.sort_by(|&a, &b| ig[b].total_cmp(&ig[a]).then(a.cmp(&b)));
    order.truncate(top_k);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Alphabet, FeatureVector, Instance};
    use proptest::prelude::*;

    fn table(rows: &[(Domain, &[usize])], f_count: usize) -> Dataset {
        let names: Vec<String> = (0..f_count).map(|i| format!("f{i}")).collect();
        let mut d = Dataset::new(Alphabet::from_names(&names), Alphabet::from_names(["y"]));
        for (dom, feats) in rows {
            d.instances.push(Instance::new(
                FeatureVector::from_indices(feats.iter().copied()),
                0,
                *dom,
            ));
        }
        d
    }

    /// Direct sum over the 2x2 contingency table.
    fn brute_force_mi(data: &Dataset, f: usize) -> f64 {
        let n = data.len() as f64;
        let mut mi = 0.0;
        for present in [false, true] {
            for dom in [Domain::In, Domain::Out] {
                let joint = data
                    .instances
                    .iter()
                    .filter(|i| i.features.contains(f) == present && i.domain == dom)
                    .count() as f64
                    / n;
                let pf = data
                    .instances
                    .iter()
                    .filter(|i| i.features.contains(f) == present)
                    .count() as f64
                    / n;
                let pd = data.instances.iter().filter(|i| i.domain == dom).count() as f64 / n;
                if joint > 0.0 {
                    mi += joint * (joint / (pf * pd)).ln();
                }
            }
        }
        mi
    }

    #[test]
    fn perfectly_domain_aligned_feature_ranks_first() {
        let d = table(
            &[
                (Domain::In, &[1, 2]),
                (Domain::In, &[1]),
                (Domain::Out, &[2]),
                (Domain::Out, &[0]),
            ],
            3,
        );
        assert_eq!(information_gain_select(&d, 1).unwrap(), vec![1]);
    }

    #[test]
    fn equal_rates_give_zero_gain() {
        let d = table(
            &[
                (Domain::In, &[0]),
                (Domain::In, &[]),
                (Domain::Out, &[0]),
                (Domain::Out, &[]),
            ],
            1,
        );
        assert!(information_gain(&d)[0].abs() < 1e-15);
    }

    #[test]
    fn five_by_eight_table_matches_brute_force() {
        let d = table(
            &[
                (Domain::In, &[0, 1, 3]),
                (Domain::In, &[0, 2]),
                (Domain::In, &[1, 4]),
                (Domain::In, &[0, 1, 2, 3]),
                (Domain::In, &[4]),
                (Domain::Out, &[2, 3]),
                (Domain::Out, &[2, 4]),
                (Domain::Out, &[0, 2]),
            ],
            5,
        );
        let ig = information_gain(&d);
        for f in 0..5 {
            assert!((ig[f] - brute_force_mi(&d, f)).abs() < 1e-14, "feature {f}");
        }
        // too many requested returns all
        assert_eq!(information_gain_select(&d, 99).unwrap().len(), 5);
    }

    #[test]
    fn needs_both_domains() {
        let d = table(&[(Domain::In, &[0])], 1);
        assert!(information_gain_select(&d, 1).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(rows in prop::collection::vec((prop::bool::ANY, prop::collection::vec(0usize..6, 0..4)), 4..20), seed in 0u64..50) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let owned: Vec<(Domain, Vec<usize>)> = rows.iter().enumerate().map(|(i, (b, f))| {
                // guarantee both domains are present
                let dom = if i == 0 { Domain::In } else if i == 1 { Domain::Out } else if *b { Domain::In } else { Domain::Out };
                (dom, f.clone())
            }).collect();
            let refs: Vec<(Domain, &[usize])> = owned.iter().map(|(d, f)| (*d, f.as_slice())).collect();
            let a = table(&refs, 6);
            let mut shuffled = refs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = table(&shuffled, 6);
            prop_assert_eq!(information_gain_select(&a, 6).unwrap(), information_gain_select(&b, 6).unwrap());
        }
    }
}
