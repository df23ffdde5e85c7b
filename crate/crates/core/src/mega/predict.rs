use super::{Component, MegaModel};
use crate::corpus::{Domain, FeatureVector};
use crate::maxent::class_log_distribution;
use crate::{argmax, log_add_exp, log_sum_exp};

#[derive(Clone, Debug, PartialEq)]
pub struct MixturePrediction {
    pub label: usize,
    /// Normalized class distribution.
    pub distribution: Vec<f64>,
    /// Posterior probability that the input came from the general component.
    pub p_general: f64,
}

/// Normalized log class distribution of the mixture for input `x` drawn
/// from `domain`:
/// `log p(y | x) = log Σ_z p(z) p(x | z) p(y | x, z) − log Σ_z p(z) p(x | z)`.
pub fn mixture_log_distribution(model: &MegaModel, x: &FeatureVector, domain: Domain) -> Vec<f64> {
    mixture_parts(model, x, domain).0
}

fn mixture_parts(model: &MegaModel, x: &FeatureVector, domain: Domain) -> (Vec<f64>, f64) {
    let tables = model.nb_tables();
    let pi = model.pi(domain);
    let spec = Component::specific(domain);
    let la = [
        (1.0 - pi).ln() + tables[spec.index()].log_prob(x),
        pi.ln() + tables[Component::General.index()].log_prob(x),
    ];
    let l0 = class_log_distribution(model.lambda(spec), x);
    let l1 = class_log_distribution(model.lambda(Component::General), x);
    let scores: Vec<f64> = l0
        .iter()
        .zip(&l1)
        .map(|(a, b)| log_add_exp(la[0] + a, la[1] + b))
        .collect();
    let z = log_sum_exp(&scores);
    let p_general = (la[1] - log_add_exp(la[0], la[1])).exp();
    (scores.into_iter().map(|s| s - z).collect(), p_general)
}

/// Most probable label under the mixture; ties go to the lowest index.
pub fn predict_mixture(model: &MegaModel, x: &FeatureVector, domain: Domain) -> MixturePrediction {
    let (log_dist, p_general) = mixture_parts(model, x, domain);
    let label = argmax(&log_dist);
    MixturePrediction {
        label,
        distribution: log_dist.iter().map(|l| l.exp()).collect(),
        p_general,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::class_distribution;
    use crate::mega::testutil::random_state;

    #[test]
    fn matches_linear_space_mixture() {
        let (model, data) = random_state(3, 4, 6, 20, 20);
        for (inst, d) in data
            .in_domain
            .iter()
            .map(|i| (i, Domain::In))
            .chain(data.out_domain.iter().map(|i| (i, Domain::Out)))
        {
            let pi = model.pi(d);
            let spec = Component::specific(d);
            let px = |c: Component| -> f64 {
                (1..6)
                    .map(|f| {
                        let p = model.psi(c)[f];
                        if inst.features.contains(f) {
                            p
                        } else {
                            1.0 - p
                        }
                    })
                    .product()
            };
            let w0 = (1.0 - pi) * px(spec);
            let w1 = pi * px(Component::General);
            let c0 = class_distribution(model.lambda(spec), &inst.features);
            let c1 = class_distribution(model.lambda(Component::General), &inst.features);
            let pred = predict_mixture(&model, &inst.features, d);
            for y in 0..4 {
                let expect = (w0 * c0[y] + w1 * c1[y]) / (w0 + w1);
                assert!((pred.distribution[y] - expect).abs() < 1e-12);
            }
            assert!((pred.p_general - w1 / (w0 + w1)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_components_reduce_to_single_classifier() {
        let (mut model, data) = random_state(4, 3, 5, 10, 0);
        let g = model.lambda(Component::General).clone();
        model.lambda[Component::In.index()] = g.clone();
        for inst in &data.in_domain {
            let pred = predict_mixture(&model, &inst.features, Domain::In);
            let single = class_distribution(&g, &inst.features);
            for (a, b) in pred.distribution.iter().zip(&single) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
