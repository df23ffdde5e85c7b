//! Synthetic corpora drawn from the mixture's own generative story.
//!
//! For an instance of domain `d`, draw `z ~ Bernoulli(π_d)`; `z = 1` picks the
//! general component and `z = 0` the domain-specific one. Then draw every
//! feature from that component's Bernoulli means and the label from its
//! Gibbs distribution. Each instance uses its own random stream, keyed by the
//! seed, the partition and the index, so output never depends on threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

use super::{
    Alphabet, Dataset, Domain, FeatureVector, Instance, Sequence, SequenceDataset, BIAS_INDEX,
};
use crate::maxent::{class_distribution, MaxentWeights};
use crate::mega::{Component, MegaHyperparams, MegaModel};
use crate::{par, Error, Result};

/// Generator settings. `features` counts declared features; the intercept is
/// added on top.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub features: usize,
    pub labels: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub n_test: usize,
    pub pi_in: f64,
    pub pi_out: f64,
    /// Bernoulli means are drawn from Beta(psi_alpha, psi_beta) ...
    pub psi_alpha: f64,
    pub psi_beta: f64,
    /// ... then clipped to [psi_floor, 1 − psi_floor].
    pub psi_floor: f64,
    /// Standard deviation of every true class weight.
    pub lambda_scale: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            features: 30,
            labels: 3,
            n_in: 200,
            n_out: 2000,
            n_test: 1000,
            pi_in: 0.5,
            pi_out: 0.5,
            psi_alpha: 0.5,
            psi_beta: 0.5,
            psi_floor: 0.02,
            lambda_scale: 1.0,
            seed: 1,
        }
    }
}

const SPEC_KEYS: [&str; 12] = [
    "features",
    "labels",
    "n_in",
    "n_out",
    "n_test",
    "pi_in",
    "pi_out",
    "psi_alpha",
    "psi_beta",
    "psi_floor",
    "lambda_scale",
    "seed",
];

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.labels == 0 {
            return Err(Error::invalid("features and labels must be positive"));
        }
        if self.n_in + self.n_out == 0 {
            return Err(Error::invalid("at least one training instance is required"));
        }
        for (name, p) in [("pi_in", self.pi_in), ("pi_out", self.pi_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.psi_alpha > 0.0 && self.psi_beta > 0.0) {
            return Err(Error::invalid("psi_alpha and psi_beta must be positive"));
        }
        if !(self.psi_floor > 0.0 && self.psi_floor < 0.5) {
            return Err(Error::invalid("psi_floor must lie in (0, 0.5)"));
        }
        if !(self.lambda_scale >= 0.0 && self.lambda_scale.is_finite()) {
            return Err(Error::invalid("lambda_scale must be finite and non-negative"));
        }
        Ok(())
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped;
    /// unknown keys are rejected. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<SynthSpec> {
        let mut spec = SynthSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected key=value"))?;
            spec.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::invalid(format!("bad value {v:?} for {key}")))
        }
        match key {
            "features" => self.features = num(key, value)?,
            "labels" => self.labels = num(key, value)?,
            "n_in" => self.n_in = num(key, value)?,
            "n_out" => self.n_out = num(key, value)?,
            "n_test" => self.n_test = num(key, value)?,
            "pi_in" => self.pi_in = num(key, value)?,
            "pi_out" => self.pi_out = num(key, value)?,
            "psi_alpha" => self.psi_alpha = num(key, value)?,
            "psi_beta" => self.psi_beta = num(key, value)?,
            "psi_floor" => self.psi_floor = num(key, value)?,
            "lambda_scale" => self.lambda_scale = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let values = [
            self.features.to_string(),
            self.labels.to_string(),
            self.n_in.to_string(),
            self.n_out.to_string(),
            self.n_test.to_string(),
            self.pi_in.to_string(),
            self.pi_out.to_string(),
            self.psi_alpha.to_string(),
            self.psi_beta.to_string(),
            self.psi_floor.to_string(),
            self.lambda_scale.to_string(),
            self.seed.to_string(),
        ];
        SPEC_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// Generated corpus plus the latent draws and the generating model.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    /// In-domain then out-domain training instances.
    pub train: Dataset,
    /// In-domain test instances.
    pub test: Dataset,
    pub truth: MegaModel,
    /// Whether each training instance came from the general component.
    pub train_general: Vec<bool>,
    pub test_general: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct SyntheticSequences {
    pub train: SequenceDataset,
    pub test: SequenceDataset,
    /// Generating model over the full feature space, previous-tag
    /// indicators included. Those indicators are excluded from its
    /// naive-Bayes mask since they are not drawn from Bernoulli means.
    pub truth: MegaModel,
    /// Component indicator of every token, in corpus order.
    pub train_general: Vec<bool>,
    pub test_general: Vec<bool>,
}

const PARAM_STREAM: u64 = u64::MAX;

fn stream(seed: u64, part: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((part << 48) ^ index as u64);
    rng
}

fn feature_alphabet(features: usize) -> Alphabet {
    let mut a = Alphabet::with_bias();
    for f in 1..=features {
        a.intern(&format!("f{f}"));
    }
    a
}

fn label_alphabet(labels: usize) -> Alphabet {
    Alphabet::from_names((0..labels).map(|y| format!("y{y}")))
}

/// Draws the generating model over `total` features, of which `1..=declared`
/// are Bernoulli-drawn inputs.
fn draw_truth(spec: &SynthSpec, declared: usize, total: usize) -> Result<MegaModel> {
    let mut rng = stream(spec.seed, PARAM_STREAM, 0);
    let beta = Beta::new(spec.psi_alpha, spec.psi_beta).map_err(|e| Error::invalid(e.to_string()))?;
    let normal =
        Normal::new(0.0, spec.lambda_scale).map_err(|e| Error::invalid(e.to_string()))?;
    let mut model = MegaModel::initial(spec.labels, total, MegaHyperparams::default());
    for c in Component::ALL {
        let vals = (0..spec.labels * total).map(|_| normal.sample(&mut rng)).collect();
        model.lambda[c.index()] = MaxentWeights::from_values(spec.labels, total, vals)?;
        for f in 1..=declared {
            let p: f64 = beta.sample(&mut rng);
            model.psi[c.index()][f] = p.clamp(spec.psi_floor, 1.0 - spec.psi_floor);
        }
    }
    for (f, m) in model.nb_mask.iter_mut().enumerate() {
        *m = f != BIAS_INDEX && f <= declared;
    }
    model.pi_in = spec.pi_in;
    model.pi_out = spec.pi_out;
    Ok(model)
}

fn sample_x<R: Rng>(rng: &mut R, psi: &[f64], declared: usize) -> FeatureVector {
    let on = (1..=declared).filter(|&f| rng.random_bool(psi[f]));
    FeatureVector::from_indices(std::iter::once(BIAS_INDEX).chain(on))
}

fn sample_label<R: Rng>(rng: &mut R, weights: &MaxentWeights, x: &FeatureVector) -> usize {
    let p = class_distribution(weights, x);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (y, py) in p.iter().enumerate() {
        acc += py;
        if u < acc {
            return y;
        }
    }
    p.len() - 1
}

fn draw_component<R: Rng>(rng: &mut R, truth: &MegaModel, domain: Domain) -> (bool, Component) {
    let general = rng.random_bool(truth.pi(domain));
    let c = if general { Component::General } else { Component::specific(domain) };
    (general, c)
}

fn draw_instances(
    spec: &SynthSpec,
    truth: &MegaModel,
    part: u64,
    n: usize,
    domain: Domain,
) -> Vec<(Instance, bool)> {
    par::map_indices(n, |i| {
        let mut rng = stream(spec.seed, part, i);
        let (general, c) = draw_component(&mut rng, truth, domain);
        let x = sample_x(&mut rng, truth.psi(c), spec.features);
        let y = sample_label(&mut rng, truth.lambda(c), &x);
        (Instance::new(x, y, domain), general)
    })
}

/// Draws a labeled corpus and its test set from a random generating model.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let total = spec.features + 1;
    let truth = draw_truth(spec, spec.features, total)?;
    let empty = Dataset::new(feature_alphabet(spec.features), label_alphabet(spec.labels));
    let mut train = Vec::new();
    train.extend(draw_instances(spec, &truth, 0, spec.n_in, Domain::In));
    train.extend(draw_instances(spec, &truth, 1, spec.n_out, Domain::Out));
    let test = draw_instances(spec, &truth, 2, spec.n_test, Domain::In);
    let (train, train_general) = train.into_iter().unzip();
    let (test, test_general) = test.into_iter().unzip();
    Ok(SyntheticCorpus {
        train: empty.with_instances(train),
        test: empty.with_instances(test),
        truth,
        train_general,
        test_general,
    })
}

/// Sequence variant: one latent component per token. Each token's label
/// depends on its own features and the previous tag.
pub fn generate_synthetic_sequences(spec: &SynthSpec, seq_len: usize) -> Result<SyntheticSequences> {
    spec.validate()?;
    if seq_len == 0 {
        return Err(Error::invalid("sequence length must be positive"));
    }
    let empty = SequenceDataset::new(feature_alphabet(spec.features), label_alphabet(spec.labels));
    let truth = draw_truth(spec, spec.features, empty.num_features())?;
    let draw = |part: u64, n: usize, domain: Domain| -> Vec<(Sequence, Vec<bool>)> {
        par::map_indices(n.div_ceil(seq_len), |s| {
            let mut rng = stream(spec.seed, part, s);
            let len = seq_len.min(n - s * seq_len);
            let mut seq = Sequence {
                domain,
                tokens: Vec::with_capacity(len),
                tags: Vec::with_capacity(len),
            };
            let mut latent = Vec::with_capacity(len);
            let mut prev = None;
            for _ in 0..len {
                let (general, c) = draw_component(&mut rng, &truth, domain);
                let x = sample_x(&mut rng, truth.psi(c), spec.features);
                let y = sample_label(&mut rng, truth.lambda(c), &x.with(empty.prev_feature(prev)));
                seq.tokens.push(x);
                seq.tags.push(y);
                latent.push(general);
                prev = Some(y);
            }
            (seq, latent)
        })
    };
    let collect = |v: Vec<(Sequence, Vec<bool>)>| -> (Vec<Sequence>, Vec<bool>) {
        let mut seqs = Vec::with_capacity(v.len());
        let mut flags = Vec::new();
        for (s, l) in v {
            seqs.push(s);
            flags.extend(l);
        }
        (seqs, flags)
    };
    let mut train = draw(0, spec.n_in, Domain::In);
    train.extend(draw(1, spec.n_out, Domain::Out));
    let (train, train_general) = collect(train);
    let (test, test_general) = collect(draw(2, spec.n_test, Domain::In));
    Ok(SyntheticSequences {
        train: empty.with_sequences(train),
        test: empty.with_sequences(test),
        truth,
        train_general,
        test_general,
    })
}
