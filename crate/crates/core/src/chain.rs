//! First-order maximum-entropy Markov models.
//!
//! Each token is classified from its own features plus one indicator for
//! the previous tag (a begin marker at the first position). Training uses
//! the gold history; decoding runs Viterbi over the per-token log
//! probabilities. In mixture mode every token gets its own latent
//! component and is treated as an independent instance.

use crate::corpus::{Alphabet, Domain, FeatureVector, Instance, Sequence, SequenceDataset};
use crate::maxent::{self, class_log_distribution, MaxentTrainConfig, MaxentWeights};
use crate::mega::{mixture_log_distribution, train_cem, CemTrace, DomainData, MegaHyperparams, MegaModel};
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainMode {
    Plain,
    Mega,
}

/// Per-token classifier of a chain model.
#[derive(Clone, Debug, PartialEq)]
pub enum TokenClassifier {
    Maxent(MaxentWeights),
    Mega(MegaModel),
}

impl TokenClassifier {
    /// Normalized log distribution over tags for one augmented token.
    pub fn log_distribution(&self, x: &FeatureVector, domain: Domain) -> Vec<f64> {
        match self {
            TokenClassifier::Maxent(w) => class_log_distribution(w, x),
            TokenClassifier::Mega(m) => mixture_log_distribution(m, x, domain),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainModel {
    pub classifier: TokenClassifier,
    /// Full feature alphabet, previous-tag indicators included.
    pub features: Alphabet,
    pub tags: Alphabet,
    /// `prev_features[0]` is the begin marker, `prev_features[1 + t]` tag `t`.
    pub prev_features: Vec<usize>,
}

impl ChainModel {
    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    fn prev_feature(&self, prev: Option<usize>) -> usize {
        prev.map_or(self.prev_features[0], |t| self.prev_features[1 + t])
    }

    /// Log probability of `tag` at one position given the previous tag.
    pub fn token_log_distribution(&self, x: &FeatureVector, prev: Option<usize>, domain: Domain) -> Vec<f64> {
        self.classifier.log_distribution(&x.with(self.prev_feature(prev)), domain)
    }

    /// Log probability of a whole tag path.
    pub fn path_log_score(&self, tokens: &[FeatureVector], path: &[usize], domain: Domain) -> f64 {
        let mut prev = None;
        let mut total = 0.0;
        for (x, &y) in tokens.iter().zip(path) {
            total += self.token_log_distribution(x, prev, domain)[y];
            prev = Some(y);
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    /// Prior variance for plain training.
    pub sigma2: f64,
    pub mega: MegaHyperparams,
    pub lbfgs: crate::optim::LbfgsConfig,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            sigma2: 1.0,
            mega: MegaHyperparams::default(),
            lbfgs: Default::default(),
        }
    }
}

/// Per-token instances of `seq` with previous-tag indicators taken from
/// `history`: the gold tags at training time, a hypothesis at decode time.
pub fn featurize_sequence(
    prev_features: &[usize],
    seq: &Sequence,
    history: &[usize],
) -> Result<Vec<Instance>> {
    if history.len() != seq.len() {
        return Err(Error::Dimension(format!(
            "history of length {} for a sequence of length {}",
            history.len(),
            seq.len()
        )));
    }
    let num_tags = prev_features.len().saturating_sub(1);
    if let Some(bad) = history.iter().chain(&seq.tags).find(|&&t| t >= num_tags) {
        return Err(Error::invalid(format!("unknown tag index {bad}")));
    }
    Ok(seq
        .tokens
        .iter()
        .enumerate()
        .map(|(t, x)| {
            let prev = if t == 0 { prev_features[0] } else { prev_features[1 + history[t - 1]] };
            Instance::new(x.with(prev), seq.tags[t], seq.domain)
        })
        .collect())
}

/// Gold-history instances of every token, in corpus order.
pub fn flatten(data: &SequenceDataset) -> Result<Vec<Instance>> {
    let mut out = Vec::with_capacity(data.num_tokens());
    for s in &data.sequences {
        out.extend(featurize_sequence(&data.prev_features, s, &s.tags)?);
    }
    Ok(out)
}

/// Trains a chain model on every sequence in `data`. Mixture mode also
/// returns the training trace.
pub fn train_memm(
    data: &SequenceDataset,
    mode: ChainMode,
    config: &ChainConfig,
) -> Result<(ChainModel, Option<CemTrace>)> {
    if data.sequences.is_empty() {
        return Err(Error::invalid("no training sequences"));
    }
    let tokens = flatten(data)?;
    let (nl, nf) = (data.num_tags(), data.num_features());
    let (classifier, trace) = match mode {
        ChainMode::Plain => {
            let cfg = MaxentTrainConfig {
                sigma2: config.sigma2,
                prior_mean: None,
                lbfgs: config.lbfgs.clone(),
            };
            (TokenClassifier::Maxent(maxent::train(&tokens, None, nl, nf, &cfg)?), None)
        }
        ChainMode::Mega => {
            let (inn, out) = tokens.into_iter().partition(|i| i.domain == Domain::In);
            let dd = DomainData::new(inn, out, nl, nf);
            let (m, trace) = train_cem(&dd, config.mega.clone())?;
            (TokenClassifier::Mega(m), Some(trace))
        }
    };
    let model = ChainModel {
        classifier,
        features: data.features.clone(),
        tags: data.tags.clone(),
        prev_features: data.prev_features.clone(),
    };
    Ok((model, trace))
}

/// Most probable tag path. Ties go to the lowest previous tag at every
/// backpointer and to the lowest final tag.
pub fn viterbi_decode(model: &ChainModel, tokens: &[FeatureVector], domain: Domain) -> Vec<usize> {
    let k = model.num_tags();
    if tokens.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut delta = model.token_log_distribution(&tokens[0], None, domain);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(tokens.len());
    for x in &tokens[1..] {
        let trans: Vec<Vec<f64>> = (0..k)
            .map(|p| model.token_log_distribution(x, Some(p), domain))
            .collect();
        let mut next = vec![f64::NEG_INFINITY; k];
        let mut ptr = vec![0; k];
        for y in 0..k {
            for p in 0..k {
                let s = delta[p] + trans[p][y];
                if s > next[y] {
                    next[y] = s;
                    ptr[y] = p;
                }
            }
        }
        back.push(ptr);
        delta = next;
    }
    let mut y = crate::argmax(&delta);
    let mut path = vec![y; tokens.len()];
    for (t, ptr) in back.iter().enumerate().rev() {
        y = ptr[y];
        path[t] = y;
    }
    path
}

/// Decodes every sequence of a corpus in parallel.
pub fn decode_all(model: &ChainModel, data: &SequenceDataset) -> Vec<Vec<usize>> {
    par::map_slice(&data.sequences, |s| viterbi_decode(model, &s.tokens, s.domain))
}

/// True when every tag is `O` or has a `B-`/`I-` prefix.
pub fn is_bio(tags: &Alphabet) -> bool {
    tags.names()
        .iter()
        .all(|t| t == "O" || t.starts_with("B-") || t.starts_with("I-"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_chain(seed: u64, k: usize, declared: usize) -> ChainModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tags = Alphabet::from_names((0..k).map(|t| format!("t{t}")));
        let mut feats = Alphabet::with_bias();
        for f in 1..=declared {
            feats.intern(&format!("f{f}"));
        }
        let data = SequenceDataset::new(feats, tags);
        let nf = data.num_features();
        let vals = (0..k * nf).map(|_| rng.random_range(-2.0..2.0)).collect();
        ChainModel {
            classifier: TokenClassifier::Maxent(MaxentWeights::from_values(k, nf, vals).unwrap()),
            features: data.features.clone(),
            tags: data.tags.clone(),
            prev_features: data.prev_features.clone(),
        }
    }

    fn random_tokens(rng: &mut ChaCha8Rng, len: usize, declared: usize) -> Vec<FeatureVector> {
        (0..len)
            .map(|_| {
                FeatureVector::from_indices(
                    std::iter::once(0).chain((1..=declared).filter(|_| rng.random_bool(0.5))),
                )
            })
            .collect()
    }

    fn brute_force(model: &ChainModel, tokens: &[FeatureVector]) -> (Vec<usize>, f64) {
        let k = model.num_tags();
        let n = tokens.len();
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        for code in 0..k.pow(n as u32) {
            let mut c = code;
            let path: Vec<usize> = (0..n)
                .map(|_| {
                    let y = c % k;
                    c /= k;
                    y
                })
                .collect();
            let s = model.path_log_score(tokens, &path, Domain::In);
            if s > best.1 {
                best = (path, s);
            }
        }
        best
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..40 {
            let k = 2 + (seed as usize % 3);
            let model = random_chain(seed, k, 4);
            let len = 1 + rng.random_range(0..6);
            let tokens = random_tokens(&mut rng, len, 4);
            let path = viterbi_decode(&model, &tokens, Domain::In);
            let (_, best) = brute_force(&model, &tokens);
            let got = model.path_log_score(&tokens, &path, Domain::In);
            assert!((got - best).abs() < 1e-9, "{got} vs {best}");
        }
    }

    #[test]
    fn length_one_is_classifier_argmax() {
        let model = random_chain(3, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tokens = random_tokens(&mut rng, 1, 5);
        let TokenClassifier::Maxent(w) = &model.classifier else { unreachable!() };
        let x = tokens[0].with(model.prev_features[0]);
        assert_eq!(viterbi_decode(&model, &tokens, Domain::In), vec![maxent::predict(w, &x)]);
    }

    #[test]
    fn zero_transitions_give_per_token_argmax() {
        let mut model = random_chain(4, 3, 5);
        let TokenClassifier::Maxent(w) = &mut model.classifier else { unreachable!() };
        for y in 0..3 {
            for &f in &model.prev_features {
                w.set(y, f, 0.0);
            }
        }
        let w = w.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tokens = random_tokens(&mut rng, 7, 5);
        let expect: Vec<usize> = tokens.iter().map(|x| maxent::predict(&w, x)).collect();
        assert_eq!(viterbi_decode(&model, &tokens, Domain::In), expect);
    }

    #[test]
    fn forced_gold_path_matches_training_featurization() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = random_chain(9, 3, 4);
        for _ in 0..20 {
            let len = 1 + rng.random_range(0..8);
            let tokens = random_tokens(&mut rng, len, 4);
            let tags: Vec<usize> = (0..len).map(|_| rng.random_range(0..3)).collect();
            let seq = Sequence { domain: Domain::In, tokens: tokens.clone(), tags: tags.clone() };
            let gold = featurize_sequence(&model.prev_features, &seq, &tags).unwrap();
            for (t, inst) in gold.iter().enumerate() {
                let prev = if t == 0 { None } else { Some(tags[t - 1]) };
                assert_eq!(inst.features, tokens[t].with(model.prev_feature(prev)));
            }
            assert!(gold[0].features.contains(model.prev_features[0]));
        }
    }

    #[test]
    fn unknown_tag_is_rejected() {
        let model = random_chain(1, 2, 2);
        let seq = Sequence {
            domain: Domain::In,
            tokens: vec![FeatureVector::from_indices([0])],
            tags: vec![5],
        };
        assert!(featurize_sequence(&model.prev_features, &seq, &[0]).is_err());
    }

    #[test]
    fn length_one_memm_equals_classification() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut feats = Alphabet::with_bias();
        for f in 1..=4 {
            feats.intern(&format!("f{f}"));
        }
        let tags = Alphabet::from_names(["a", "b", "c"]);
        let mut data = SequenceDataset::new(feats, tags);
        for _ in 0..30 {
            let x = random_tokens(&mut rng, 1, 4);
            data.sequences.push(Sequence { domain: Domain::In, tokens: x, tags: vec![rng.random_range(0..3)] });
        }
        let (model, _) = train_memm(&data, ChainMode::Plain, &ChainConfig::default()).unwrap();
        let flat = flatten(&data).unwrap();
        let direct = maxent::train(&flat, None, 3, data.num_features(), &MaxentTrainConfig::default()).unwrap();
        assert_eq!(model.classifier, TokenClassifier::Maxent(direct));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn viterbi_beats_random_paths(seed in 0u64..1000, len in 1usize..9) {
            let model = random_chain(seed, 3, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tokens = random_tokens(&mut rng, len, 3);
            let best = model.path_log_score(&tokens, &viterbi_decode(&model, &tokens, Domain::In), Domain::In);
            for _ in 0..100 {
                let path: Vec<usize> = (0..len).map(|_| rng.random_range(0..3)).collect();
                prop_assert!(model.path_log_score(&tokens, &path, Domain::In) <= best + 1e-12);
            }
            for t in 0..len {
                let prev = if t == 0 { None } else { Some(t % 3) };
                let s: f64 = model.token_log_distribution(&tokens[t], prev, Domain::In).iter().map(|l| l.exp()).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
