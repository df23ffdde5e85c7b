//! The three maximization blocks. Each maximizes its slice of the bound
//! with the responsibilities held fixed.

use super::bound::Responsibilities;
use super::{Component, DomainData, MegaModel, NbTable, PI_EPS};
use crate::corpus::{Domain, FeatureVector, Instance};
use crate::maxent::{self, MaxentTrainConfig, MaxentWeights};
use crate::optim::{
    golden_section_maximize, solve_bounded_quadratic, QuadraticStationarity, BOUNDARY_EPS,
};
use crate::{par, Result};

/// Sufficient statistics of the `π` slice of the bound for one domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiStats {
    pub n: f64,
    pub h_sum: f64,
    /// `Σ m_n p(x_n | specific)`
    pub specific_mass: f64,
    /// `Σ m_n p(x_n | general)`
    pub general_mass: f64,
}

/// The `π` slice of the bound, up to terms constant in `π`.
pub fn pi_slice(s: &PiStats, t: f64) -> f64 {
    let mut v = -t * s.general_mass - (1.0 - t) * s.specific_mass;
    if s.h_sum != 0.0 {
        v += s.h_sum * t.ln();
    }
    if s.n - s.h_sum != 0.0 {
        v += (s.n - s.h_sum) * (1.0 - t).ln();
    }
    v
}

/// Stationarity of [`pi_slice`] multiplied through by `π(1 − π)`:
/// `D π² + (N − D) π − Σh = 0` with `D = specific_mass − general_mass`.
pub fn pi_stationarity(s: &PiStats) -> QuadraticStationarity {
    let d = s.specific_mass - s.general_mass;
    QuadraticStationarity::new(d, s.n - d, -s.h_sum, 0.0, 1.0)
}

fn pi_stats(model: &MegaModel, resp: &Responsibilities, data: &DomainData, domain: Domain) -> PiStats {
    let tables = model.nb_tables();
    let spec = &tables[Component::specific(domain).index()];
    let general = &tables[Component::General.index()];
    let inst = data.domain(domain);
    let r = resp.domain(domain);
    let specific_mass = par::sum_indices(inst.len(), |n| {
        (r.log_m[n] + spec.log_prob(&inst[n].features)).exp()
    });
    let general_mass = par::sum_indices(inst.len(), |n| {
        (r.log_m[n] + general.log_prob(&inst[n].features)).exp()
    });
    PiStats {
        n: inst.len() as f64,
        h_sum: r.h.iter().sum(),
        specific_mass,
        general_mass,
    }
}

fn maximize_slice<F: Fn(f64) -> f64>(q: &QuadraticStationarity, slice: F, current: f64) -> f64 {
    let t = solve_bounded_quadratic(q, &slice).unwrap_or_else(|_| {
        golden_section_maximize(&slice, q.lo + BOUNDARY_EPS, q.hi - BOUNDARY_EPS, 1e-12)
    });
    // never accept a move that lowers the slice
    if slice(t) >= slice(current) {
        t
    } else {
        current
    }
}

/// Closed-form update of the mixing weight of `domain`.
pub fn m_step_pi(model: &MegaModel, resp: &Responsibilities, data: &DomainData, domain: Domain) -> f64 {
    let current = model.pi(domain).clamp(PI_EPS, 1.0 - PI_EPS);
    if data.domain(domain).is_empty() {
        return model.pi(domain);
    }
    let stats = pi_stats(model, resp, data, domain);
    let q = pi_stationarity(&stats);
    maximize_slice(&q, |t| pi_slice(&stats, t), current).clamp(PI_EPS, 1.0 - PI_EPS)
}

fn lambda_weights<'a>(
    resp: &Responsibilities,
    data: &'a DomainData,
    component: Component,
) -> (Vec<&'a Instance>, Vec<f64>) {
    match component {
        Component::In | Component::Out => {
            let d = if component == Component::In { Domain::In } else { Domain::Out };
            let inst = data.domain(d).iter().collect();
            let w = resp.domain(d).h.iter().map(|h| 1.0 - h).collect();
            (inst, w)
        }
        Component::General => {
            let inst = data.in_domain.iter().chain(&data.out_domain).collect();
            let w = resp
                .in_domain
                .h
                .iter()
                .chain(&resp.out_domain.h)
                .copied()
                .collect();
            (inst, w)
        }
    }
}

/// Weighted maximum-entropy update of one component's class weights,
/// warm-started from the current matrix.
pub fn m_step_lambda(
    model: &MegaModel,
    resp: &Responsibilities,
    data: &DomainData,
    component: Component,
) -> Result<MaxentWeights> {
    let (inst, w) = lambda_weights(resp, data, component);
    let config = MaxentTrainConfig {
        sigma2: model.hyper.sigma2,
        prior_mean: None,
        lbfgs: model.hyper.lbfgs.clone(),
    };
    maxent::train_from(&inst, Some(&w), model.lambda(component).clone(), &config).map(|(l, _)| l)
}

/// Sufficient statistics of the slice of the bound in one Bernoulli mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiCoordinateStats {
    pub beta_a: f64,
    pub beta_b: f64,
    /// Total responsibility weight of the component.
    pub weight: f64,
    /// Responsibility weight of the instances with the feature on.
    pub weight_on: f64,
    /// `Σ c_n p(x_n without f | component)` over instances with the feature on,
    /// where `c_n` is `m_n` times the component's prior.
    pub mass_on: f64,
    /// The same sum over instances with the feature off.
    pub mass_off: f64,
}

impl PsiCoordinateStats {
    /// The slice of the bound as a function of the mean, up to constants.
    pub fn slice(&self, t: f64) -> f64 {
        let on = self.beta_a - 1.0 + self.weight_on;
        let off = self.beta_b - 1.0 + self.weight - self.weight_on;
        let mut v = -self.mass_on * t - self.mass_off * (1.0 - t);
        if on != 0.0 {
            v += on * t.ln();
        }
        if off != 0.0 {
            v += off * (1.0 - t).ln();
        }
        v
    }
}

/// Stationarity of the mean's slice multiplied through by `ψ(1 − ψ)`:
/// `D ψ² − (A + B + W + D) ψ + (A + X) = 0`, with `A = a − 1`, `B = b − 1`,
/// `W` the component weight, `X` its on-weight and `D = mass_on − mass_off`.
pub fn psi_stationarity(s: &PsiCoordinateStats) -> QuadraticStationarity {
    let (a, b) = (s.beta_a - 1.0, s.beta_b - 1.0);
    let d = s.mass_on - s.mass_off;
    QuadraticStationarity::new(d, -(a + b + s.weight + d), a + s.weight_on, 0.0, 1.0)
}

/// One instance's contribution to a component's mean update: features,
/// responsibility weight and `log c_n`.
struct PsiEntry<'a> {
    x: &'a FeatureVector,
    weight: f64,
    log_c: f64,
}

fn psi_entries<'a>(
    model: &MegaModel,
    resp: &Responsibilities,
    data: &'a DomainData,
    component: Component,
) -> Vec<PsiEntry<'a>> {
    let build = |d: Domain, general: bool| {
        let r = resp.domain(d);
        let pi = model.pi(d);
        let log_prior = if general { pi.ln() } else { (1.0 - pi).ln() };
        data.domain(d)
            .iter()
            .enumerate()
            .map(|(n, inst)| PsiEntry {
                x: &inst.features,
                weight: if general { r.h[n] } else { 1.0 - r.h[n] },
                log_c: r.log_m[n] + log_prior,
            })
            .collect::<Vec<_>>()
    };
    match component {
        Component::In => build(Domain::In, false),
        Component::Out => build(Domain::Out, false),
        Component::General => {
            let mut v = build(Domain::In, true);
            v.extend(build(Domain::Out, true));
            v
        }
    }
}

fn coordinate_stats_direct(
    model: &MegaModel,
    entries: &[PsiEntry<'_>],
    component: Component,
    f: usize,
) -> PsiCoordinateStats {
    let psi = model.psi(component);
    let table = NbTable::new(psi, &model.nb_mask);
    let (p_on, p_off) = (psi[f].ln(), (1.0 - psi[f]).ln());
    let mut s = PsiCoordinateStats {
        beta_a: model.hyper.beta_a,
        beta_b: model.hyper.beta_b,
        weight: 0.0,
        weight_on: 0.0,
        mass_on: 0.0,
        mass_off: 0.0,
    };
    for e in entries {
        let on = e.x.contains(f);
        let loo = table.log_prob(e.x) - if on { p_on } else { p_off };
        let mass = (e.log_c + loo).exp();
        s.weight += e.weight;
        if on {
            s.weight_on += e.weight;
            s.mass_on += mass;
        } else {
            s.mass_off += mass;
        }
    }
    s
}

/// Exact maximizer of the bound in a single Bernoulli mean `ψ_f`, with
/// every other parameter held at its value in `model`.
pub fn psi_coordinate_update(
    model: &MegaModel,
    resp: &Responsibilities,
    data: &DomainData,
    component: Component,
    f: usize,
) -> f64 {
    let current = model.psi(component)[f];
    if !model.nb_mask[f] {
        return current;
    }
    let entries = psi_entries(model, resp, data, component);
    let stats = coordinate_stats_direct(model, &entries, component, f);
    maximize_slice(&psi_stationarity(&stats), |t| stats.slice(t), current)
}

/// Coordinate ascent over the Bernoulli means of one component.
///
/// Sweeps features in ascending order until the largest change in a sweep
/// falls below the tolerance or the sweep cap is hit. The leave-one-out
/// products are maintained incrementally in log space and refreshed
/// exactly at the start of every sweep.
pub fn m_step_psi(
    model: &MegaModel,
    resp: &Responsibilities,
    data: &DomainData,
    component: Component,
) -> Vec<f64> {
    let mut psi = model.psi(component).to_vec();
    let mask = &model.nb_mask;
    let nf = psi.len();
    let entries = psi_entries(model, resp, data, component);
    if entries.is_empty() {
        return psi;
    }
    let mut postings: Vec<Vec<u32>> = vec![Vec::new(); nf];
    for (n, e) in entries.iter().enumerate() {
        for f in e.x.iter().filter(|&f| f < nf && mask[f]) {
            postings[f].push(n as u32);
        }
    }
    let weight: f64 = entries.iter().map(|e| e.weight).sum();
    let weight_on: Vec<f64> = postings
        .iter()
        .map(|p| p.iter().map(|&n| entries[n as usize].weight).sum())
        .collect();
    let logit = |p: f64| p.ln() - (1.0 - p).ln();
    let (a, b) = (model.hyper.beta_a, model.hyper.beta_b);

    for _ in 0..model.hyper.psi_max_sweeps {
        let table = NbTable::new(&psi, mask);
        let mut base = table.base;
        let mut active: Vec<f64> = entries
            .iter()
            .map(|e| table.log_prob(e.x) - table.base)
            .collect();
        let mut total: f64 = entries
            .iter()
            .zip(&active)
            .map(|(e, r)| (e.log_c + base + r).exp())
            .sum();
        let mut max_change: f64 = 0.0;
        for f in (0..nf).filter(|&f| mask[f]) {
            let p = psi[f];
            let on: f64 = postings[f]
                .iter()
                .map(|&n| (entries[n as usize].log_c + base + active[n as usize]).exp())
                .sum();
            let off = (total - on).max(0.0);
            let stats = PsiCoordinateStats {
                beta_a: a,
                beta_b: b,
                weight,
                weight_on: weight_on[f],
                mass_on: on / p,
                mass_off: off / (1.0 - p),
            };
            let t = maximize_slice(&psi_stationarity(&stats), |t| stats.slice(t), p);
            if t != p {
                let delta = logit(t) - logit(p);
                base += (1.0 - t).ln() - (1.0 - p).ln();
                for &n in &postings[f] {
                    active[n as usize] += delta;
                }
                total = stats.mass_on * t + stats.mass_off * (1.0 - t);
                psi[f] = t;
                max_change = max_change.max((t - p).abs());
            }
        }
        if max_change < model.hyper.psi_tolerance {
            break;
        }
    }
    psi
}
