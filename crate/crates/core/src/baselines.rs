//! The seven comparison systems, all built on the plain maxent trainer.

use std::fmt;
use std::str::FromStr;

use crate::corpus::{dev_split_indices, FeatureVector, Instance};
use crate::maxent::{self, class_distribution, MaxentTrainConfig, MaxentWeights};
use crate::mega::DomainData;
use crate::optim::LbfgsConfig;
use crate::{argmax, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Maxent on in-domain data only.
    OnlyI,
    /// Maxent on out-domain data only.
    OnlyO,
    /// Linear interpolation of the OnlyI and OnlyO distributions.
    LinI,
    /// Maxent on the union of both domains.
    Mix,
    /// Union with out-domain instances down-weighted to the in-domain size.
    MixW,
    /// OnlyO's prediction added as a feature of an in-domain model.
    Feats,
    /// In-domain maxent with a Gaussian prior centered on OnlyO's weights.
    Prior,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::OnlyI,
        BaselineKind::OnlyO,
        BaselineKind::LinI,
        BaselineKind::Mix,
        BaselineKind::MixW,
        BaselineKind::Feats,
        BaselineKind::Prior,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::OnlyI => "onlyi",
            BaselineKind::OnlyO => "onlyo",
            BaselineKind::LinI => "lini",
            BaselineKind::Mix => "mix",
            BaselineKind::MixW => "mixw",
            BaselineKind::Feats => "feats",
            BaselineKind::Prior => "prior",
        }
    }

    /// Display name used in reports.
    pub fn title(self) -> &'static str {
        match self {
            BaselineKind::OnlyI => "OnlyI",
            BaselineKind::OnlyO => "OnlyO",
            BaselineKind::LinI => "LinI",
            BaselineKind::Mix => "Mix",
            BaselineKind::MixW => "MixW",
            BaselineKind::Feats => "Feats",
            BaselineKind::Prior => "Prior",
        }
    }

    fn needs_in(self) -> bool {
        self != BaselineKind::OnlyO && self != BaselineKind::Mix
    }

    fn needs_out(self) -> bool {
        !matches!(self, BaselineKind::OnlyI | BaselineKind::Mix)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown baseline {s:?}")))
    }
}

/// Interpolation weights tried for LinI.
pub fn lini_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) * 0.05).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    /// Fixed prior variance. `None` tunes it over `sigma2_grid` on a dev split.
    pub sigma2: Option<f64>,
    pub sigma2_grid: Vec<f64>,
    /// Fixed LinI weight. `None` tunes it over [`lini_alpha_grid`].
    pub alpha: Option<f64>,
    /// Fraction of the in-domain data held out for tuning.
    pub dev_fraction: f64,
    pub seed: u64,
    pub lbfgs: LbfgsConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            sigma2: None,
            sigma2_grid: vec![0.1, 1.0, 10.0],
            alpha: None,
            dev_fraction: 0.2,
            seed: 0,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl BaselineConfig {
    pub fn with_sigma2(sigma2: f64) -> Self {
        BaselineConfig {
            sigma2: Some(sigma2),
            ..Default::default()
        }
    }
}

/// A trained baseline. `weights` is the model applied to the input;
/// `aux` holds the OnlyO weights that LinI mixes in and Feats consults.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselinePredictor {
    pub kind: BaselineKind,
    pub weights: MaxentWeights,
    pub aux: Option<MaxentWeights>,
    /// LinI interpolation weight on the OnlyI distribution.
    pub alpha: f64,
    /// Prior variance the final model was trained with.
    pub sigma2: f64,
}

impl BaselinePredictor {
    pub fn num_labels(&self) -> usize {
        self.weights.num_labels()
    }

    /// Input width before any stacking feature is appended.
    pub fn num_features(&self) -> usize {
        match self.kind {
            BaselineKind::Feats => self.aux.as_ref().map_or(0, MaxentWeights::num_features),
            _ => self.weights.num_features(),
        }
    }

    /// Normalized class distribution for `x`.
    pub fn distribution(&self, x: &FeatureVector) -> Vec<f64> {
        match (self.kind, &self.aux) {
            (BaselineKind::LinI, Some(out)) => {
                let pi = class_distribution(&self.weights, x);
                let po = class_distribution(out, x);
                let a = self.alpha;
                pi.iter().zip(&po).map(|(i, o)| a * i + (1.0 - a) * o).collect()
            }
            (BaselineKind::Feats, Some(out)) => {
                class_distribution(&self.weights, &stack_feature(out, x))
            }
            _ => class_distribution(&self.weights, x),
        }
    }
}

/// Most probable class; ties go to the lowest index.
pub fn predict_baseline(p: &BaselinePredictor, x: &FeatureVector) -> usize {
    argmax(&p.distribution(x))
}

/// `x` plus the indicator of OnlyO's predicted label, which lives at index
/// `F + label`.
fn stack_feature(out: &MaxentWeights, x: &FeatureVector) -> FeatureVector {
    x.with(out.num_features() + maxent::predict(out, x))
}

fn fit(
    inst: &[&Instance],
    weights: Option<&[f64]>,
    nl: usize,
    nf: usize,
    sigma2: f64,
    prior_mean: Option<MaxentWeights>,
    lbfgs: &LbfgsConfig,
) -> Result<MaxentWeights> {
    let config = MaxentTrainConfig {
        sigma2,
        prior_mean,
        lbfgs: lbfgs.clone(),
    };
    maxent::train(inst, weights, nl, nf, &config)
}

/// Trains one kind at a fixed variance and interpolation weight.
fn fit_kind(
    kind: BaselineKind,
    in_data: &[&Instance],
    out_data: &[&Instance],
    nl: usize,
    nf: usize,
    sigma2: f64,
    alpha: f64,
    lbfgs: &LbfgsConfig,
) -> Result<BaselinePredictor> {
    let only = |d: &[&Instance]| fit(d, None, nl, nf, sigma2, None, lbfgs);
    let union: Vec<&Instance> = in_data.iter().chain(out_data).copied().collect();
    let (weights, aux) = match kind {
        BaselineKind::OnlyI => (only(in_data)?, None),
        BaselineKind::OnlyO => (only(out_data)?, None),
        BaselineKind::LinI => (only(in_data)?, Some(only(out_data)?)),
        BaselineKind::Mix => (only(&union)?, None),
        BaselineKind::MixW => {
            let scale = in_data.len() as f64 / out_data.len().max(1) as f64;
            let w: Vec<f64> = std::iter::repeat_n(1.0, in_data.len())
                .chain(std::iter::repeat_n(scale, out_data.len()))
                .collect();
            (fit(&union, Some(&w), nl, nf, sigma2, None, lbfgs)?, None)
        }
        BaselineKind::Feats => {
            let out = only(out_data)?;
            let stacked: Vec<Instance> = in_data
                .iter()
                .map(|i| Instance::new(stack_feature(&out, &i.features), i.label, i.domain))
                .collect();
            let refs: Vec<&Instance> = stacked.iter().collect();
            (fit(&refs, None, nl, nf + nl, sigma2, None, lbfgs)?, Some(out))
        }
        BaselineKind::Prior => {
            let mean = only(out_data)?;
            (fit(in_data, None, nl, nf, sigma2, Some(mean), lbfgs)?, None)
        }
    };
    Ok(BaselinePredictor {
        kind,
        weights,
        aux,
        alpha,
        sigma2,
    })
}

fn dev_accuracy(p: &BaselinePredictor, dev: &[&Instance]) -> f64 {
    let hits = dev
        .iter()
        .filter(|i| predict_baseline(p, &i.features) == i.label)
        .count();
    hits as f64 / dev.len() as f64
}

/// Trains a baseline. Unset hyperparameters are chosen by accuracy on a
/// random in-domain dev split; the final model is then retrained on all
/// the data with the chosen values. Ties prefer the earlier variance in
/// the grid and the larger interpolation weight.
pub fn train_baseline(kind: BaselineKind, data: &DomainData, config: &BaselineConfig) -> Result<BaselinePredictor> {
    if kind.needs_in() && data.in_domain.is_empty() {
        return Err(Error::invalid(format!("{kind} needs in-domain training data")));
    }
    if kind.needs_out() && data.out_domain.is_empty() {
        return Err(Error::invalid(format!("{kind} needs out-domain training data")));
    }
    if data.in_domain.is_empty() && data.out_domain.is_empty() {
        return Err(Error::invalid("no training data"));
    }
    let (nl, nf) = (data.num_labels, data.num_features);
    let in_all: Vec<&Instance> = data.in_domain.iter().collect();
    let out_all: Vec<&Instance> = data.out_domain.iter().collect();

    let sigmas = match config.sigma2 {
        Some(s) => vec![s],
        None => config.sigma2_grid.clone(),
    };
    if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("prior variances must be positive"));
    }
    let alphas = match (kind, config.alpha) {
        (BaselineKind::LinI, None) => lini_alpha_grid(),
        (_, Some(a)) if (0.0..=1.0).contains(&a) => vec![a],
        (_, Some(a)) => return Err(Error::invalid(format!("alpha {a} outside [0, 1]"))),
        (_, None) => vec![1.0],
    };

    let (mut sigma2, mut alpha) = (sigmas[0], alphas[alphas.len() - 1]);
    let (train_idx, dev_idx) = dev_split_indices(in_all.len(), config.dev_fraction, config.seed)?;
    let tunable = sigmas.len() > 1 || alphas.len() > 1;
    if tunable && !dev_idx.is_empty() && !(kind.needs_in() && train_idx.is_empty()) {
        let tr: Vec<&Instance> = train_idx.iter().map(|&i| in_all[i]).collect();
        let dev: Vec<&Instance> = dev_idx.iter().map(|&i| in_all[i]).collect();
        let mut best = f64::NEG_INFINITY;
        for &s in &sigmas {
            let mut p = fit_kind(kind, &tr, &out_all, nl, nf, s, 1.0, &config.lbfgs)?;
            for &a in alphas.iter().rev() {
                p.alpha = a;
                let acc = dev_accuracy(&p, &dev);
                if acc > best {
                    best = acc;
                    sigma2 = s;
                    alpha = a;
                }
            }
        }
    }
    fit_kind(kind, &in_all, &out_all, nl, nf, sigma2, alpha, &config.lbfgs)
}
