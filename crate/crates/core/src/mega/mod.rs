//! The three-component mixture of maximum-entropy classifiers.
//!
//! Every instance has a latent indicator `z`. Throughout this module `z = 1`
//! selects the shared ("general") component and has prior probability `π`
//! for the instance's domain; `z = 0` selects the domain-specific component.
//! Each component owns a weight matrix for the class distribution and a
//! vector of Bernoulli means for a naive-Bayes model of the binary input.
//!
//! Training alternates an E-step ([`e_step`]) with three maximization blocks
//! ([`m_step_pi`], [`m_step_lambda`], [`m_step_psi`]), each of which raises the
//! conditional-EM lower bound [`q_bound`] on the change in penalized
//! conditional log-likelihood.

mod bound;
mod mstep;
mod predict;
mod train;

pub use bound::{
    e_step, log_posterior, log_prior, neg_conditional_log_likelihood, q_bound, DomainResponsibilities,
    Responsibilities,
};
pub use mstep::{
    m_step_lambda, m_step_pi, m_step_psi, pi_slice, pi_stationarity, psi_coordinate_update, psi_stationarity,
    PiStats, PsiCoordinateStats,
};
pub use predict::{mixture_log_distribution, predict_mixture, MixturePrediction};
pub use train::{train_cem, train_cem_from, Block, CemRecord, CemTrace};

use crate::corpus::{Dataset, Domain, FeatureVector, Instance, BIAS_INDEX};
use crate::maxent::MaxentWeights;
use crate::optim::LbfgsConfig;
use crate::{Error, Result};

/// Lower and upper clamp distance for `π`.
pub const PI_EPS: f64 = 1e-6;

/// Mixture components, indexable into the per-component arrays of [`MegaModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    In = 0,
    Out = 1,
    General = 2,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::In, Component::Out, Component::General];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The domain-specific component of `domain`.
    pub fn specific(domain: Domain) -> Component {
        match domain {
            Domain::In => Component::In,
            Domain::Out => Component::Out,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::In => "in",
            Component::Out => "out",
            Component::General => "general",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MegaHyperparams {
    /// Gaussian prior variance shared by the three weight matrices.
    pub sigma2: f64,
    /// Beta prior pseudo-counts for every Bernoulli mean.
    pub beta_a: f64,
    pub beta_b: f64,
    /// Outer CEM iterations.
    pub max_iterations: usize,
    /// Stop when no parameter moves more than this in one iteration.
    pub convergence_tolerance: f64,
    pub psi_max_sweeps: usize,
    pub psi_tolerance: f64,
    /// Restrict the naive-Bayes input model to the top-k features by
    /// information gain for domain membership. `None` uses all features.
    pub nb_top_k: Option<usize>,
    pub lbfgs: LbfgsConfig,
}

impl Default for MegaHyperparams {
    fn default() -> Self {
        MegaHyperparams {
            sigma2: 1.0,
            beta_a: 2.0,
            beta_b: 2.0,
            max_iterations: 5,
            convergence_tolerance: 1e-6,
            psi_max_sweeps: 20,
            psi_tolerance: 1e-8,
            nb_top_k: None,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl MegaHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::invalid("sigma2 must be positive"));
        }
        if !(self.beta_a >= 1.0 && self.beta_b >= 1.0) {
            return Err(Error::invalid("Beta prior parameters must be at least 1"));
        }
        if self.nb_top_k == Some(0) {
            return Err(Error::invalid("nb_top_k must be at least 1"));
        }
        Ok(())
    }
}

/// Naive-Bayes log probability of a binary vector, precomputed as
/// `base + Σ_{f ∈ x} logit[f]`.
#[derive(Clone, Debug)]
pub(crate) struct NbTable {
    base: f64,
    logit: Vec<f64>,
}

impl NbTable {
    pub(crate) fn new(psi: &[f64], mask: &[bool]) -> Self {
        let mut base = 0.0;
        let logit = psi
            .iter()
            .zip(mask)
            .map(|(&p, &m)| {
                if m {
                    base += (1.0 - p).ln();
                    p.ln() - (1.0 - p).ln()
                } else {
                    0.0
                }
            })
            .collect();
        NbTable { base, logit }
    }

    #[inline]
    pub(crate) fn log_prob(&self, x: &FeatureVector) -> f64 {
        self.base
            + x.iter()
                .filter(|&f| f < self.logit.len())
                .map(|f| self.logit[f])
                .sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MegaModel {
    /// Class weights per component, indexed by [`Component::index`].
    pub lambda: [MaxentWeights; 3],
    /// Bernoulli means per component.
    pub psi: [Vec<f64>; 3],
    /// Prior probability of the general component for in-domain data.
    pub pi_in: f64,
    pub pi_out: f64,
    /// Features that enter the naive-Bayes product.
    pub nb_mask: Vec<bool>,
    pub hyper: MegaHyperparams,
}

impl MegaModel {
    /// Starting point of training: zero weights, all means 0.5, `π = 0.5`.
    pub fn initial(num_labels: usize, num_features: usize, hyper: MegaHyperparams) -> Self {
        let mut nb_mask = vec![true; num_features];
        if num_features > BIAS_INDEX {
            nb_mask[BIAS_INDEX] = false;
        }
        MegaModel {
            lambda: std::array::from_fn(|_| MaxentWeights::zeros(num_labels, num_features)),
            psi: std::array::from_fn(|_| vec![0.5; num_features]),
            pi_in: 0.5,
            pi_out: 0.5,
            nb_mask,
            hyper,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.lambda[0].num_labels()
    }

    pub fn num_features(&self) -> usize {
        self.lambda[0].num_features()
    }

    pub fn lambda(&self, c: Component) -> &MaxentWeights {
        &self.lambda[c.index()]
    }

    pub fn psi(&self, c: Component) -> &[f64] {
        &self.psi[c.index()]
    }

    pub fn pi(&self, domain: Domain) -> f64 {
        match domain {
            Domain::In => self.pi_in,
            Domain::Out => self.pi_out,
        }
    }

    pub fn set_pi(&mut self, domain: Domain, value: f64) {
        match domain {
            Domain::In => self.pi_in = value,
            Domain::Out => self.pi_out = value,
        }
    }

    pub(crate) fn nb_tables(&self) -> [NbTable; 3] {
        std::array::from_fn(|c| NbTable::new(&self.psi[c], &self.nb_mask))
    }

    /// Checks shapes and parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let (nl, nf) = (self.num_labels(), self.num_features());
        for c in Component::ALL {
            let l = self.lambda(c);
            if l.num_labels() != nl || l.num_features() != nf {
                return Err(Error::Dimension("component weight shapes differ".into()));
            }
            if l.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite weight".into()));
            }
            let p = self.psi(c);
            if p.len() != nf || p.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return Err(Error::invalid("Bernoulli means must lie in (0, 1)"));
            }
        }
        if self.nb_mask.len() != nf {
            return Err(Error::Dimension("naive-Bayes mask length".into()));
        }
        for pi in [self.pi_in, self.pi_out] {
            if !(0.0..=1.0).contains(&pi) {
                return Err(Error::invalid("mixing weight outside [0, 1]"));
            }
        }
        self.hyper.validate()
    }

    /// Largest absolute parameter change relative to `other`.
    pub fn max_delta(&self, other: &MegaModel) -> f64 {
        let mut d = (self.pi_in - other.pi_in)
            .abs()
            .max((self.pi_out - other.pi_out).abs());
        for c in 0..3 {
            d = d.max(self.lambda[c].max_abs_diff(&other.lambda[c]));
            for (a, b) in self.psi[c].iter().zip(&other.psi[c]) {
                d = d.max((a - b).abs());
            }
        }
        d
    }

    /// Same model with the in/out roles exchanged.
    pub fn swapped(&self) -> MegaModel {
        let mut m = self.clone();
        m.lambda.swap(0, 1);
        m.psi.swap(0, 1);
        std::mem::swap(&mut m.pi_in, &mut m.pi_out);
        m
    }
}

/// Training data for the mixture: the two domains kept apart.
#[derive(Clone, Debug)]
pub struct DomainData {
    pub in_domain: Vec<Instance>,
    pub out_domain: Vec<Instance>,
    pub num_labels: usize,
    pub num_features: usize,
}

impl DomainData {
    pub fn new(
        in_domain: Vec<Instance>,
        out_domain: Vec<Instance>,
        num_labels: usize,
        num_features: usize,
    ) -> Self {
        DomainData {
            in_domain,
            out_domain,
            num_labels,
            num_features,
        }
    }

    pub fn from_dataset(data: &Dataset) -> Self {
        DomainData::new(
            data.domain_instances(Domain::In),
            data.domain_instances(Domain::Out),
            data.num_labels(),
            data.num_features(),
        )
    }

    pub fn domain(&self, d: Domain) -> &[Instance] {
        match d {
            Domain::In => &self.in_domain,
            Domain::Out => &self.out_domain,
        }
    }

    /// Exchanges the roles of the two domains.
    pub fn swapped(&self) -> DomainData {
        let relabel = |v: &[Instance], d: Domain| {
            v.iter()
                .map(|i| Instance::new(i.features.clone(), i.label, d))
                .collect()
        };
        DomainData::new(
            relabel(&self.out_domain, Domain::In),
            relabel(&self.in_domain, Domain::Out),
            self.num_labels,
            self.num_features,
        )
    }
}
