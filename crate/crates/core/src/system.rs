//! Uniform front door over every trainable system.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{train_baseline, BaselineConfig, BaselineKind, BaselinePredictor};
use crate::chain::{train_memm, ChainConfig, ChainMode, ChainModel};
use crate::corpus::{Domain, FeatureVector, SequenceDataset};
use crate::mega::{predict_mixture, train_cem, CemTrace, DomainData, MegaHyperparams, MegaModel};
use crate::{argmax, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemKind {
    MegaM,
    Baseline(BaselineKind),
    Memm,
    MegaMemm,
}

impl SystemKind {
    pub const ALL: [SystemKind; 10] = [
        SystemKind::MegaM,
        SystemKind::Baseline(BaselineKind::OnlyI),
        SystemKind::Baseline(BaselineKind::OnlyO),
        SystemKind::Baseline(BaselineKind::LinI),
        SystemKind::Baseline(BaselineKind::Mix),
        SystemKind::Baseline(BaselineKind::MixW),
        SystemKind::Baseline(BaselineKind::Feats),
        SystemKind::Baseline(BaselineKind::Prior),
        SystemKind::Memm,
        SystemKind::MegaMemm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemKind::MegaM => "megam",
            SystemKind::Baseline(k) => k.as_str(),
            SystemKind::Memm => "memm",
            SystemKind::MegaMemm => "mega-memm",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SystemKind::MegaM => "MegaM",
            SystemKind::Baseline(k) => k.title(),
            SystemKind::Memm => "MEMM",
            SystemKind::MegaMemm => "MegaMEMM",
        }
    }

    /// Chain systems train on sequence data.
    pub fn is_sequence(self) -> bool {
        matches!(self, SystemKind::Memm | SystemKind::MegaMemm)
    }

    pub fn ignores_in_domain(self) -> bool {
        self == SystemKind::Baseline(BaselineKind::OnlyO)
    }

    pub fn needs_in_domain(self) -> bool {
        matches!(self, SystemKind::Baseline(k) if k != BaselineKind::OnlyO && k != BaselineKind::Mix)
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        SystemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| Error::invalid(format!("unknown system {s:?}")))
    }
}

/// Settings for every system family.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SystemConfig {
    pub mega: MegaHyperparams,
    pub baseline: BaselineConfig,
    pub chain: ChainConfig,
}

/// A trained classification system.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedSystem {
    Mega { model: MegaModel, trace: CemTrace },
    Baseline(BaselinePredictor),
}

impl TrainedSystem {
    /// Normalized class distribution for input `x` from `domain`.
    pub fn distribution(&self, x: &FeatureVector, domain: Domain) -> Vec<f64> {
        match self {
            TrainedSystem::Mega { model, .. } => predict_mixture(model, x, domain).distribution,
            TrainedSystem::Baseline(p) => p.distribution(x),
        }
    }

    pub fn predict(&self, x: &FeatureVector, domain: Domain) -> usize {
        match self {
            TrainedSystem::Mega { model, .. } => predict_mixture(model, x, domain).label,
            TrainedSystem::Baseline(p) => argmax(&p.distribution(x)),
        }
    }
}

/// Trains a classification system.
pub fn train_system(kind: SystemKind, config: &SystemConfig, data: &DomainData) -> Result<TrainedSystem> {
    match kind {
        SystemKind::MegaM => {
            let (model, trace) = train_cem(data, config.mega.clone())?;
            Ok(TrainedSystem::Mega { model, trace })
        }
        SystemKind::Baseline(k) => Ok(TrainedSystem::Baseline(train_baseline(k, data, &config.baseline)?)),
        _ => Err(Error::invalid(format!("{kind} trains on sequence data"))),
    }
}

/// Trains a chain system.
pub fn train_chain_system(kind: SystemKind, config: &SystemConfig, data: &SequenceDataset) -> Result<ChainModel> {
    let mode = match kind {
        SystemKind::Memm => ChainMode::Plain,
        SystemKind::MegaMemm => ChainMode::Mega,
        _ => return Err(Error::invalid(format!("{kind} trains on classification data"))),
    };
    let mut chain = config.chain.clone();
    chain.mega = config.mega.clone();
    Ok(train_memm(data, mode, &chain)?.0)
}
