//! E-step, the conditional-EM bound, and the penalized objective it bounds.

use super::{Component, DomainData, MegaModel, NbTable};
use crate::corpus::{Domain, Instance};
use crate::{log_add_exp, log_sum_exp, par};

/// Per-instance posterior quantities for one domain, computed at the
/// previous iterate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DomainResponsibilities {
    /// `h_n = p(z_n = general | x_n, y_n)`.
    pub h: Vec<f64>,
    /// `log m_n = -log Σ_z p(x_n, z)`: the log inverse marginal of the input.
    pub log_m: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Responsibilities {
    pub in_domain: DomainResponsibilities,
    pub out_domain: DomainResponsibilities,
}

impl Responsibilities {
    pub fn domain(&self, d: Domain) -> &DomainResponsibilities {
        match d {
            Domain::In => &self.in_domain,
            Domain::Out => &self.out_domain,
        }
    }

    pub fn domain_mut(&mut self, d: Domain) -> &mut DomainResponsibilities {
        match d {
            Domain::In => &mut self.in_domain,
            Domain::Out => &mut self.out_domain,
        }
    }
}

/// Log-space pieces of the joint for one instance; index 0 is the
/// domain-specific component, index 1 the general one.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Terms {
    /// `log p(z) + log p(x | z)`
    pub(crate) marginal: [f64; 2],
    /// `log p(y | x, z)`
    pub(crate) label: [f64; 2],
}

impl Terms {
    pub(crate) fn joint(&self, z: usize) -> f64 {
        self.marginal[z] + self.label[z]
    }

    pub(crate) fn log_conditional(&self) -> f64 {
        log_add_exp(self.joint(0), self.joint(1)) - log_add_exp(self.marginal[0], self.marginal[1])
    }
}

pub(crate) fn gibbs_log_prob(model: &MegaModel, c: Component, inst: &Instance) -> f64 {
    let s = model.lambda(c).scores(&inst.features);
    s[inst.label] - log_sum_exp(&s)
}

pub(crate) fn instance_terms(
    model: &MegaModel,
    tables: &[NbTable; 3],
    inst: &Instance,
    domain: Domain,
) -> Terms {
    let pi = model.pi(domain);
    let spec = Component::specific(domain);
    let general = Component::General;
    Terms {
        marginal: [
            (1.0 - pi).ln() + tables[spec.index()].log_prob(&inst.features),
            pi.ln() + tables[general.index()].log_prob(&inst.features),
        ],
        label: [
            gibbs_log_prob(model, spec, inst),
            gibbs_log_prob(model, general, inst),
        ],
    }
}

fn domain_terms(model: &MegaModel, tables: &[NbTable; 3], data: &[Instance], d: Domain) -> Vec<Terms> {
    par::map_slice(data, |inst| instance_terms(model, tables, inst, d))
}

/// Posterior of the general component and the inverse input marginal for
/// every training instance.
pub fn e_step(model: &MegaModel, data: &DomainData) -> Responsibilities {
    let tables = model.nb_tables();
    let mut resp = Responsibilities::default();
    for d in [Domain::In, Domain::Out] {
        let terms = domain_terms(model, &tables, data.domain(d), d);
        let out = resp.domain_mut(d);
        out.h = terms
            .iter()
            .map(|t| {
                let (j0, j1) = (t.joint(0), t.joint(1));
                (j1 - log_add_exp(j0, j1)).exp()
            })
            .collect();
        out.log_m = terms
            .iter()
            .map(|t| -log_add_exp(t.marginal[0], t.marginal[1]))
            .collect();
    }
    resp
}

/// Log of the Gaussian and Beta priors, additive constants dropped.
pub fn log_prior(model: &MegaModel) -> f64 {
    let h = &model.hyper;
    let gauss: f64 = model.lambda.iter().map(|l| l.squared_norm()).sum::<f64>() / (2.0 * h.sigma2);
    let (a1, b1) = (h.beta_a - 1.0, h.beta_b - 1.0);
    let mut beta = 0.0;
    for psi in &model.psi {
        for (p, &m) in psi.iter().zip(&model.nb_mask) {
            if m {
                if a1 != 0.0 {
                    beta += a1 * p.ln();
                }
                if b1 != 0.0 {
                    beta += b1 * (1.0 - p).ln();
                }
            }
        }
    }
    beta - gauss
}

fn sum_conditional(model: &MegaModel, data: &DomainData) -> f64 {
    let tables = model.nb_tables();
    let mut total = 0.0;
    for d in [Domain::In, Domain::Out] {
        let inst = data.domain(d);
        total += par::sum_indices(inst.len(), |n| {
            instance_terms(model, &tables, &inst[n], d).log_conditional()
        });
    }
    total
}

/// Penalized conditional log-likelihood `Σ log p(y | x) + log p(Θ)` over both domains.
pub fn log_posterior(model: &MegaModel, data: &DomainData) -> f64 {
    log_prior(model) + sum_conditional(model, data)
}

/// `-Σ log p(y | x)` over both domains, no prior.
pub fn neg_conditional_log_likelihood(model: &MegaModel, data: &DomainData) -> f64 {
    -sum_conditional(model, data)
}

fn weighted_diff(w: f64, now: f64, before: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * (now - before)
    }
}

/// Lower bound on `log_posterior(current) - log_posterior(previous)`, with
/// `resp` computed by [`e_step`] at `previous`. Zero when the two models agree.
pub fn q_bound(
    current: &MegaModel,
    previous: &MegaModel,
    resp: &Responsibilities,
    data: &DomainData,
) -> f64 {
    let now_tables = current.nb_tables();
    let prev_tables = previous.nb_tables();
    let mut q = log_prior(current) - log_prior(previous);
    for d in [Domain::In, Domain::Out] {
        let inst = data.domain(d);
        let r = resp.domain(d);
        q += par::sum_indices(inst.len(), |n| {
            let now = instance_terms(current, &now_tables, &inst[n], d);
            let before = instance_terms(previous, &prev_tables, &inst[n], d);
            let h = r.h[n];
            let jensen = weighted_diff(h, now.joint(1), before.joint(1))
                + weighted_diff(1.0 - h, now.joint(0), before.joint(0));
            let ratio = (r.log_m[n] + log_add_exp(now.marginal[0], now.marginal[1])).exp();
            jensen - ratio + 1.0
        });
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mega::testutil::{perturbed, random_state};
    use crate::mega::MegaModel;

    /// Linear-space enumeration of p(z, x, y) with explicit products.
    fn enumerate(model: &MegaModel, inst: &Instance, d: Domain) -> ([f64; 2], [f64; 2]) {
        let pi = model.pi(d);
        let comps = [Component::specific(d), Component::General];
        let prior = [1.0 - pi, pi];
        let mut joint = [0.0; 2];
        let mut marginal = [0.0; 2];
        for z in 0..2 {
            let psi = model.psi(comps[z]);
            let mut px = 1.0;
            for f in 0..model.num_features() {
                if !model.nb_mask[f] {
                    continue;
                }
                px *= if inst.features.contains(f) { psi[f] } else { 1.0 - psi[f] };
            }
            let lam = model.lambda(comps[z]);
            let scores: Vec<f64> = (0..model.num_labels())
                .map(|y| {
                    (0..model.num_features())
                        .filter(|f| inst.features.contains(*f))
                        .map(|f| lam.get(y, f))
                        .sum::<f64>()
                        .exp()
                })
                .collect();
            let py = scores[inst.label] / scores.iter().sum::<f64>();
            marginal[z] = prior[z] * px;
            joint[z] = prior[z] * px * py;
        }
        (joint, marginal)
    }

    #[test]
    fn e_step_matches_enumeration() {
        for seed in 0..20 {
            let (model, data) = random_state(seed, 2, 5, 6, 4);
            let resp = e_step(&model, &data);
            for d in [Domain::In, Domain::Out] {
                for (n, inst) in data.domain(d).iter().enumerate() {
                    let (joint, marginal) = enumerate(&model, inst, d);
                    let h = joint[1] / (joint[0] + joint[1]);
                    let m = 1.0 / (marginal[0] + marginal[1]);
                    let r = resp.domain(d);
                    assert!((r.h[n] - h).abs() <= 1e-10 * h.abs().max(1e-300));
                    assert!((r.log_m[n].exp() - m).abs() <= 1e-10 * m);
                }
            }
        }
    }

    #[test]
    fn identical_components_give_half() {
        let (mut model, data) = random_state(3, 3, 6, 10, 10);
        model.lambda[Component::General.index()] = model.lambda(Component::In).clone();
        model.psi[Component::General.index()] = model.psi(Component::In).to_vec();
        model.pi_in = 0.5;
        let resp = e_step(&model, &data);
        assert!(resp.in_domain.h.iter().all(|h| (h - 0.5).abs() < 1e-12));
    }

    #[test]
    fn dominant_prior_pushes_h_to_one() {
        let (mut model, data) = random_state(4, 3, 6, 10, 10);
        // nondegenerate components whose likelihood ratio stays below 10
        let general = Component::General.index();
        model.lambda[general] = model.lambda(Component::In).clone();
        model.psi[general] = model
            .psi(Component::In)
            .iter()
            .map(|p| (p * 1.01).min(0.97))
            .collect();
        for eps in [1e-6, 1e-9, 1e-12] {
            model.pi_in = 1.0 - eps;
            let resp = e_step(&model, &data);
            assert!(resp.in_domain.h.iter().all(|h| *h >= 1.0 - 10.0 * eps));
        }
    }

    #[test]
    fn q_is_zero_at_contact_point() {
        for seed in 0..10 {
            let (model, data) = random_state(seed, 3, 5, 8, 8);
            let resp = e_step(&model, &data);
            assert!(q_bound(&model, &model, &resp, &data).abs() <= 1e-10);
        }
    }

    #[test]
    fn q_lower_bounds_objective_change() {
        for seed in 0..40 {
            let (prev, data) = random_state(seed, 3, 5, 10, 10);
            let cur = perturbed(&prev, seed + 100, 0.5);
            let resp = e_step(&prev, &data);
            let q = q_bound(&cur, &prev, &resp, &data);
            let delta = log_posterior(&cur, &data) - log_posterior(&prev, &data);
            assert!(q <= delta + 1e-8, "seed {seed}: Q {q} > Δ {delta}");
        }
    }
}
