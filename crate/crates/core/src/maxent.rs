//! Weighted maximum-entropy (multiclass logistic) classification with a
//! Gaussian prior on the weights.
//!
//! Features are binary, so the score of class `y` for input `x` is the sum of
//! `λ[y][f]` over the active features of `x`. The prior penalizes squared
//! distance to a mean matrix (zero unless the caller supplies one).

use std::borrow::Borrow;

use crate::corpus::{FeatureVector, Instance};
use crate::optim::{lbfgs_minimize, LbfgsConfig, LbfgsResult, ObjectiveEvaluation};
use crate::{argmax, log_sum_exp, par, Error, Result};

/// Class-by-feature weight matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxentWeights {
    num_labels: usize,
    num_features: usize,
    values: Vec<f64>,
}

impl MaxentWeights {
    pub fn zeros(num_labels: usize, num_features: usize) -> Self {
        MaxentWeights {
            num_labels,
            num_features,
            values: vec![0.0; num_labels * num_features],
        }
    }

    pub fn from_values(num_labels: usize, num_features: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_labels * num_features {
            return Err(Error::Dimension(format!(
                "{} values for a {num_labels}x{num_features} matrix",
                values.len()
            )));
        }
        Ok(MaxentWeights {
            num_labels,
            num_features,
            values,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    #[inline]
    pub fn get(&self, label: usize, feature: usize) -> f64 {
        self.values[label * self.num_features + feature]
    }

    #[inline]
    pub fn set(&mut self, label: usize, feature: usize, v: f64) {
        self.values[label * self.num_features + feature] = v;
    }

    pub fn row(&self, label: usize) -> &[f64] {
        &self.values[label * self.num_features..(label + 1) * self.num_features]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Unnormalized log scores `λ_y · x`. Features beyond the matrix are ignored.
    pub fn scores(&self, x: &FeatureVector) -> Vec<f64> {
        (0..self.num_labels)
            .map(|y| {
                let row = self.row(y);
                x.iter()
                    .filter(|&f| f < self.num_features)
                    .map(|f| row[f])
                    .sum()
            })
            .collect()
    }

    /// Euclidean distance between two matrices of equal shape.
    pub fn distance(&self, other: &MaxentWeights) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &MaxentWeights) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxentTrainConfig {
    /// Variance of the Gaussian prior.
    pub sigma2: f64,
    /// Prior mean; `None` means all zeros.
    pub prior_mean: Option<MaxentWeights>,
    pub lbfgs: LbfgsConfig,
}

impl Default for MaxentTrainConfig {
    fn default() -> Self {
        MaxentTrainConfig {
            sigma2: 1.0,
            prior_mean: None,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl MaxentTrainConfig {
    pub fn with_sigma2(sigma2: f64) -> Self {
        MaxentTrainConfig {
            sigma2,
            ..Default::default()
        }
    }
}

/// Log class probabilities `log p(y | x; λ)`, max-shifted.
pub fn class_log_distribution(weights: &MaxentWeights, x: &FeatureVector) -> Vec<f64> {
    let mut s = weights.scores(x);
    let z = log_sum_exp(&s);
    s.iter_mut().for_each(|v| *v -= z);
    s
}

/// Class probabilities `p(y | x; λ)`.
pub fn class_distribution(weights: &MaxentWeights, x: &FeatureVector) -> Vec<f64> {
    class_log_distribution(weights, x)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Most probable class; ties go to the lowest class index.
pub fn predict(weights: &MaxentWeights, x: &FeatureVector) -> usize {
    argmax(&weights.scores(x))
}

fn check(weights: &MaxentWeights, config: &MaxentTrainConfig, inst_weights: Option<&[f64]>, n: usize) -> Result<()> {
    if !(config.sigma2 > 0.0) {
        return Err(Error::invalid("prior variance must be positive"));
    }
    if let Some(w) = inst_weights {
        if w.len() != n {
            return Err(Error::Dimension(format!(
                "{} instance weights for {n} instances",
                w.len()
            )));
        }
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("instance weights must be nonnegative"));
        }
    }
    if let Some(mu) = &config.prior_mean {
        if mu.num_labels != weights.num_labels || mu.num_features != weights.num_features {
            return Err(Error::Dimension("prior mean shape differs from weights".into()));
        }
    }
    Ok(())
}

fn prior_term(weights: &MaxentWeights, config: &MaxentTrainConfig) -> f64 {
    let inv = 1.0 / (2.0 * config.sigma2);
    match &config.prior_mean {
        None => -inv * weights.squared_norm(),
        Some(mu) => -inv * weights.distance(mu).powi(2),
    }
}

/// Penalized, instance-weighted log posterior (additive constant dropped).
pub fn log_posterior<I>(
    weights: &MaxentWeights,
    data: &[I],
    inst_weights: Option<&[f64]>,
    config: &MaxentTrainConfig,
) -> f64
where
    I: Borrow<Instance> + Sync,
{
    let likelihood = par::sum_indices(data.len(), |n| {
        let w = inst_weights.map_or(1.0, |iw| iw[n]);
        if w == 0.0 {
            return 0.0;
        }
        let inst = data[n].borrow();
        let s = weights.scores(&inst.features);
        w * (s[inst.label] - log_sum_exp(&s))
    });
    prior_term(weights, config) + likelihood
}

/// Log posterior and its gradient in one pass over the data.
pub fn log_posterior_and_gradient<I>(
    weights: &MaxentWeights,
    data: &[I],
    inst_weights: Option<&[f64]>,
    config: &MaxentTrainConfig,
) -> (f64, MaxentWeights)
where
    I: Borrow<Instance> + Sync,
{
    let (nl, nf) = (weights.num_labels, weights.num_features);
    let partials = par::chunked_fold(
        data.len(),
        || (0.0, vec![0.0; nl * nf]),
        |(mut value, mut grad), n| {
            let w = inst_weights.map_or(1.0, |iw| iw[n]);
            if w == 0.0 {
                return (value, grad);
            }
            let inst = data[n].borrow();
            let s = weights.scores(&inst.features);
            let z = log_sum_exp(&s);
            value += w * (s[inst.label] - z);
            for (y, sy) in s.iter().enumerate() {
                let coef = w * (f64::from(u8::from(y == inst.label)) - (sy - z).exp());
                let row = &mut grad[y * nf..(y + 1) * nf];
                for f in inst.features.iter().filter(|&f| f < nf) {
                    row[f] += coef;
                }
            }
            (value, grad)
        },
    );
    let mut value = prior_term(weights, config);
    let mut grad = vec![0.0; nl * nf];
    for (v, g) in partials {
        value += v;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let inv = 1.0 / config.sigma2;
    for (i, g) in grad.iter_mut().enumerate() {
        let mu = config.prior_mean.as_ref().map_or(0.0, |m| m.values[i]);
        *g -= (weights.values[i] - mu) * inv;
    }
    (
        value,
        MaxentWeights {
            num_labels: nl,
            num_features: nf,
            values: grad,
        },
    )
}

/// Gradient of [`log_posterior`] with respect to every weight.
pub fn log_posterior_gradient<I>(
    weights: &MaxentWeights,
    data: &[I],
    inst_weights: Option<&[f64]>,
    config: &MaxentTrainConfig,
) -> MaxentWeights
where
    I: Borrow<Instance> + Sync,
{
    log_posterior_and_gradient(weights, data, inst_weights, config).1
}

/// Maximizes the penalized log posterior from the all-zero start.
pub fn train<I>(
    data: &[I],
    inst_weights: Option<&[f64]>,
    num_labels: usize,
    num_features: usize,
    config: &MaxentTrainConfig,
) -> Result<MaxentWeights>
where
    I: Borrow<Instance> + Sync,
{
    let start = MaxentWeights::zeros(num_labels, num_features);
    train_from(data, inst_weights, start, config).map(|(w, _)| w)
}

/// Maximizes the penalized log posterior from a given starting matrix.
pub fn train_from<I>(
    data: &[I],
    inst_weights: Option<&[f64]>,
    start: MaxentWeights,
    config: &MaxentTrainConfig,
) -> Result<(MaxentWeights, LbfgsResult)>
where
    I: Borrow<Instance> + Sync,
{
    check(&start, config, inst_weights, data.len())?;
    if let Some(bad) = data.iter().find(|i| Borrow::<Instance>::borrow(*i).label >= start.num_labels) {
        return Err(Error::Dimension(format!(
            "label {} outside {} classes",
            bad.borrow().label,
            start.num_labels
        )));
    }
    let (nl, nf) = (start.num_labels, start.num_features);
    let objective = |v: &[f64]| {
        let w = MaxentWeights {
            num_labels: nl,
            num_features: nf,
            values: v.to_vec(),
        };
        let (value, grad) = log_posterior_and_gradient(&w, data, inst_weights, config);
        ObjectiveEvaluation {
            value: -value,
            gradient: grad.values.into_iter().map(|g| -g).collect(),
        }
    };
    let result = lbfgs_minimize(objective, start.values, &config.lbfgs)?;
    let weights = MaxentWeights {
        num_labels: nl,
        num_features: nf,
        values: result.x.clone(),
    };
    Ok((weights, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use crate::optim::finite_difference_gradient;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(ix: &[usize]) -> FeatureVector {
        FeatureVector::from_indices(ix.iter().copied())
    }

    pub(crate) fn random_problem(
        seed: u64,
        n: usize,
        nl: usize,
        nf: usize,
    ) -> (Vec<Instance>, MaxentWeights) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n)
            .map(|_| {
                let x = FeatureVector::from_indices((0..nf).filter(|_| rng.random_bool(0.4)));
                Instance::new(x, rng.random_range(0..nl), Domain::In)
            })
            .collect();
        let vals = (0..nl * nf).map(|_| rng.random_range(-1.0..1.0)).collect();
        (data, MaxentWeights::from_values(nl, nf, vals).unwrap())
    }

    #[test]
    fn zero_weights_give_uniform() {
        let w = MaxentWeights::zeros(4, 3);
        let p = class_distribution(&w, &fv(&[0, 2]));
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert_eq!(predict(&w, &fv(&[1])), 0);
    }

    #[test]
    fn ln2_closed_form() {
        let mut w = MaxentWeights::zeros(2, 2);
        w.set(1, 1, 2f64.ln());
        let p = class_distribution(&w, &fv(&[1]));
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(predict(&w, &fv(&[1])), 1);
    }

    #[test]
    fn per_feature_shift_invariance() {
        let (_, mut w) = random_problem(3, 1, 3, 5);
        let x = fv(&[0, 2, 4]);
        let before = class_distribution(&w, &x);
        let pred = predict(&w, &x);
        for y in 0..3 {
            let v = w.get(y, 2) + 7.5;
            w.set(y, 2, v);
        }
        let after = class_distribution(&w, &x);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(predict(&w, &x), pred);
    }

    #[test]
    fn log_posterior_trivial_values() {
        let cfg = MaxentTrainConfig::default();
        let w = MaxentWeights::zeros(3, 4);
        let empty: Vec<Instance> = Vec::new();
        assert_eq!(log_posterior(&w, &empty, None, &cfg), 0.0);
        let (data, _) = random_problem(1, 7, 3, 4);
        let lp = log_posterior(&w, &data, None, &cfg);
        assert!((lp + 7.0 * 3f64.ln()).abs() < 1e-12);
    }

    /// Plain double loop over instances and classes.
    fn naive_log_posterior(w: &MaxentWeights, data: &[Instance], iw: &[f64], sigma2: f64) -> f64 {
        let mut prior = 0.0;
        for y in 0..w.num_labels() {
            for f in 0..w.num_features() {
                prior += w.get(y, f) * w.get(y, f);
            }
        }
        let mut total = -prior / (2.0 * sigma2);
        for (inst, wt) in data.iter().zip(iw) {
            let mut scores = vec![0.0; w.num_labels()];
            for (y, s) in scores.iter_mut().enumerate() {
                for f in 0..w.num_features() {
                    if inst.features.contains(f) {
                        *s += w.get(y, f);
                    }
                }
            }
            let z: f64 = scores.iter().map(|s| s.exp()).sum::<f64>().ln();
            total += wt * (scores[inst.label] - z);
        }
        total
    }

    #[test]
    fn log_posterior_matches_direct_summation() {
        let (data, w) = random_problem(11, 5, 4, 4);
        let iw = [1.0, 0.5, 2.0, 0.0, 1.5];
        let cfg = MaxentTrainConfig::with_sigma2(0.7);
        let fast = log_posterior(&w, &data, Some(&iw), &cfg);
        let slow = naive_log_posterior(&w, &data, &iw, 0.7);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn zero_weight_instance_contributes_nothing() {
        let (data, w) = random_problem(5, 10, 3, 6);
        let cfg = MaxentTrainConfig::default();
        let mut iw = vec![1.0; 10];
        iw[4] = 0.0;
        let g_weighted = log_posterior_gradient(&w, &data, Some(&iw), &cfg);
        let mut pruned = data.clone();
        pruned.remove(4);
        let g_pruned = log_posterior_gradient(&w, &pruned, None, &cfg);
        assert!(g_weighted.max_abs_diff(&g_pruned) < 1e-14);
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        let data: Vec<Instance> = (0..20)
            .map(|i| {
                let y = i % 2;
                Instance::new(fv(&[0, 1 + y, 3 + (i % 3)]), y, Domain::In)
            })
            .collect();
        let w = train(&data, None, 2, 6, &MaxentTrainConfig::with_sigma2(10.0)).unwrap();
        assert!(data.iter().all(|i| predict(&w, &i.features) == i.label));
    }

    #[test]
    fn scalar_stationarity_oracle() {
        // one instance, one feature, two classes: stationarity is -λ + (1 - σ(λ)) = 0
        // on the class-1 row with the class-0 row at -λ by symmetry of the prior.
        let data = vec![Instance::new(fv(&[0]), 1, Domain::In)];
        let mut cfg = MaxentTrainConfig::default();
        cfg.lbfgs.gradient_tolerance = 1e-12;
        let w = train(&data, None, 2, 1, &cfg).unwrap();
        // independent root: the margin d = λ1 - λ0 solves d/2 = 1 - e^d/(1+e^d) by bisection
        let g = |d: f64| d / 2.0 - (1.0 - d.exp() / (1.0 + d.exp()));
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let d = 0.5 * (lo + hi);
        assert!((w.get(1, 0) - d / 2.0).abs() < 1e-8);
        assert!((w.get(0, 0) + d / 2.0).abs() < 1e-8);
        // and each row satisfies -λ_y + ([y = 1] - p_y) = 0
        let p = class_distribution(&w, &fv(&[0]));
        assert!((-w.get(1, 0) + (1.0 - p[1])).abs() < 1e-10);
    }

    #[test]
    fn instance_weight_scaling_equals_variance_scaling() {
        let (data, _) = random_problem(21, 25, 3, 6);
        let c = 3.0;
        let mut cfg = MaxentTrainConfig::with_sigma2(0.5);
        cfg.lbfgs.gradient_tolerance = 1e-10;
        cfg.lbfgs.max_iterations = 1000;
        let iw = vec![c; data.len()];
        let a = train(&data, Some(&iw), 3, 6, &cfg).unwrap();
        cfg.sigma2 = 0.5 * c;
        let b = train(&data, None, 3, 6, &cfg).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-6);
    }

    #[test]
    fn trained_optimum_is_stationary_and_cross_checked() {
        let (data, _) = random_problem(8, 20, 3, 5);
        let cfg = MaxentTrainConfig::default();
        let start = MaxentWeights::zeros(3, 5);
        let start_value = log_posterior(&start, &data, None, &cfg);
        let (w, res) = train_from(&data, None, start, &cfg).unwrap();
        assert!(res.gradient_norm <= 1e-6);
        let g = log_posterior_gradient(&w, &data, None, &cfg);
        assert!(g.squared_norm().sqrt() <= 1e-6);
        assert!(log_posterior(&w, &data, None, &cfg) >= start_value);
        // long plain gradient ascent reaches the same optimum
        let mut v = MaxentWeights::zeros(3, 5);
        for _ in 0..20000 {
            let g = log_posterior_gradient(&v, &data, None, &cfg);
            for (a, b) in v.values.iter_mut().zip(&g.values) {
                *a += 0.05 * b;
            }
        }
        assert!(w.max_abs_diff(&v) < 1e-6);
    }

    #[test]
    fn training_is_order_invariant() {
        let (data, _) = random_problem(2, 30, 3, 5);
        let mut rev = data.clone();
        rev.reverse();
        let cfg = MaxentTrainConfig::default();
        let a = train(&data, None, 3, 5, &cfg).unwrap();
        let b = train(&rev, None, 3, 5, &cfg).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..10_000) {
            let (data, w) = random_problem(seed, 12, 3, 6);
            let cfg = MaxentTrainConfig::with_sigma2(1.3);
            let g = log_posterior_gradient(&w, &data, None, &cfg);
            let fd = finite_difference_gradient(
                |v| log_posterior(&MaxentWeights::from_values(3, 6, v.to_vec()).unwrap(), &data, None, &cfg),
                w.values(),
                1e-5,
            );
            for (a, b) in g.values().iter().zip(&fd) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
            }
        }

        #[test]
        fn distribution_sums_to_one(seed in 0u64..10_000) {
            let (data, w) = random_problem(seed, 3, 4, 6);
            for inst in &data {
                let p = class_distribution(&w, &inst.features);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(p.iter().all(|v| *v > 0.0));
            }
        }

        #[test]
        fn log_posterior_is_concave(seed in 0u64..10_000, t in 0.01f64..0.99) {
            let (data, a) = random_problem(seed, 10, 3, 5);
            let (_, b) = random_problem(seed + 1, 1, 3, 5);
            let cfg = MaxentTrainConfig::default();
            let mix: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let m = MaxentWeights::from_values(3, 5, mix).unwrap();
            let lhs = log_posterior(&m, &data, None, &cfg);
            let rhs = t * log_posterior(&a, &data, None, &cfg) + (1.0 - t) * log_posterior(&b, &data, None, &cfg);
            prop_assert!(lhs >= rhs - 1e-9);
        }
    }
}
