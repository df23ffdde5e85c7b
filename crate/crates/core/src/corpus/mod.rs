//! Data model, file formats, splits, synthetic corpora and feature selection.

mod format;
mod select;
mod split;
mod synth;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::Error;

pub use format::{
    parse_dataset, parse_dataset_with, parse_sequences, parse_sequences_with, write_dataset,
    write_sequences,
};
pub use select::{information_gain, information_gain_of, information_gain_select};
pub(crate) use select::rank_top;
pub use split::{dev_split, dev_split_indices, fold_assignment, nested_subsets, split_folds, split_sequence_folds, Fold};
pub use synth::{
    generate_synthetic, generate_synthetic_sequences, SynthSpec, SyntheticCorpus,
    SyntheticSequences,
};

/// Name of the always-on intercept feature. It occupies index 0 of every
/// feature alphabet built by this crate and is never written to data files.
pub const BIAS_FEATURE: &str = "**bias**";
pub const BIAS_INDEX: usize = 0;

/// Name of the begin-of-sequence previous-tag indicator.
pub const BOS_TAG: &str = "<s>";

/// Dense bidirectional map between names and indices `0..len`.
#[derive(Clone, Debug, Default)]
pub struct Alphabet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl Eq for Alphabet {}

impl Alphabet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feature alphabet with the intercept pre-registered at index 0.
    pub fn with_bias() -> Self {
        let mut a = Self::new();
        a.intern(BIAS_FEATURE);
        a
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut a = Self::new();
        for n in names {
            a.intern(n.as_ref());
        }
        a
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Returns the index of `name`, registering it if new.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }
}

/// Sparse binary vector: the sorted indices of the active features.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct FeatureVector(Vec<u32>);

impl FeatureVector {
    /// Builds from arbitrary indices; sorts and removes duplicates.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut v: Vec<u32> = indices.into_iter().map(|i| i as u32).collect();
        v.sort_unstable();
        v.dedup();
        FeatureVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&f| f as usize)
    }

    pub fn contains(&self, f: usize) -> bool {
        self.0.binary_search(&(f as u32)).is_ok()
    }

    /// Largest active index plus one, or 0 when empty.
    pub fn bound(&self) -> usize {
        self.0.last().map_or(0, |&f| f as usize + 1)
    }

    /// Copy with one more active feature.
    pub fn with(&self, f: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&(f as u32)) {
            v.insert(pos, f as u32);
        }
        FeatureVector(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    In,
    Out,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::In => "in",
            Domain::Out => "out",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in" => Ok(Domain::In),
            "out" => Ok(Domain::Out),
            other => Err(Error::invalid(format!("unknown domain tag '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub features: FeatureVector,
    pub label: usize,
    pub domain: Domain,
}

impl Instance {
    pub fn new(features: FeatureVector, label: usize, domain: Domain) -> Self {
        Instance {
            features,
            label,
            domain,
        }
    }
}

/// Labeled classification data from one or both domains, with its alphabets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub features: Alphabet,
    pub labels: Alphabet,
    pub instances: Vec<Instance>,
}

impl Default for Dataset {
    fn default() -> Self {
        Dataset::new(Alphabet::with_bias(), Alphabet::new())
    }
}

impl Dataset {
    pub fn new(features: Alphabet, labels: Alphabet) -> Self {
        Dataset {
            features,
            labels,
            instances: Vec::new(),
        }
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Same alphabets, different instances.
    pub fn with_instances(&self, instances: Vec<Instance>) -> Dataset {
        Dataset {
            features: self.features.clone(),
            labels: self.labels.clone(),
            instances,
        }
    }

    pub fn count(&self, domain: Domain) -> usize {
        self.instances.iter().filter(|i| i.domain == domain).count()
    }

    /// Instances of one domain, in file order.
    pub fn domain_instances(&self, domain: Domain) -> Vec<Instance> {
        self.instances
            .iter()
            .filter(|i| i.domain == domain)
            .cloned()
            .collect()
    }

    /// Subset restricted to one domain.
    pub fn only(&self, domain: Domain) -> Dataset {
        self.with_instances(self.domain_instances(domain))
    }

    pub fn labels_of(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.label).collect()
    }
}

/// One tagged sequence. `tokens[t]` holds the declared features of token `t`
/// (plus the intercept); previous-tag indicators are added by the chain module.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub domain: Domain,
    pub tokens: Vec<FeatureVector>,
    pub tags: Vec<usize>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Sequence corpus. The feature alphabet contains one previous-tag indicator
/// per tag plus a begin-of-sequence marker; `prev_features[0]` is the marker
/// and `prev_features[1 + t]` the indicator for tag `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceDataset {
    pub features: Alphabet,
    pub tags: Alphabet,
    pub sequences: Vec<Sequence>,
    pub prev_features: Vec<usize>,
}

impl SequenceDataset {
    /// Registers the previous-tag indicator features for every tag.
    pub fn new(mut features: Alphabet, tags: Alphabet) -> Self {
        let prev_features = register_prev_features(&mut features, &tags);
        SequenceDataset {
            features,
            tags,
            sequences: Vec::new(),
            prev_features,
        }
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }

    /// Feature index of the previous-tag indicator; `None` is sequence start.
    pub fn prev_feature(&self, prev: Option<usize>) -> usize {
        match prev {
            None => self.prev_features[0],
            Some(t) => self.prev_features[1 + t],
        }
    }

    pub fn with_sequences(&self, sequences: Vec<Sequence>) -> SequenceDataset {
        SequenceDataset {
            features: self.features.clone(),
            tags: self.tags.clone(),
            sequences,
            prev_features: self.prev_features.clone(),
        }
    }
}

pub(crate) fn prev_feature_name(tag: Option<&str>) -> String {
    format!("prev={}", tag.unwrap_or(BOS_TAG))
}

pub(crate) fn register_prev_features(features: &mut Alphabet, tags: &Alphabet) -> Vec<usize> {
    let mut out = Vec::with_capacity(tags.len() + 1);
    out.push(features.intern(&prev_feature_name(None)));
    for t in tags.names() {
        out.push(features.intern(&prev_feature_name(Some(t))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_lookup_roundtrip() {
        let a = Alphabet::from_names(["x", "y", "x", "z"]);
        assert_eq!(a.len(), 3);
        for i in 0..a.len() {
            assert_eq!(a.get(a.name(i)), Some(i));
        }
    }

    #[test]
    fn feature_vector_is_sorted_and_unique() {
        let v = FeatureVector::from_indices([5, 1, 3, 1]);
        assert_eq!(v.iter().collect::<Vec<_>>(), vec![1, 3, 5]);
        assert!(v.contains(3) && !v.contains(2));
        assert_eq!(v.with(2).iter().collect::<Vec<_>>(), vec![1, 2, 3, 5]);
        assert_eq!(v.with(3), v);
        assert_eq!(v.bound(), 6);
    }

    #[test]
    fn domain_tags() {
        assert_eq!("in".parse::<Domain>().unwrap(), Domain::In);
        assert_eq!("out".parse::<Domain>().unwrap(), Domain::Out);
        assert!("both".parse::<Domain>().is_err());
    }

    #[test]
    fn sequence_dataset_registers_prev_features() {
        let tags = Alphabet::from_names(["B", "I", "O"]);
        let ds = SequenceDataset::new(Alphabet::with_bias(), tags);
        assert_eq!(ds.prev_features.len(), 4);
        assert_eq!(ds.features.name(ds.prev_feature(None)), "prev=<s>");
        assert_eq!(ds.features.name(ds.prev_feature(Some(2))), "prev=O");
    }
}
