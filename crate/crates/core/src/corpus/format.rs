//! Line-oriented text formats.
//!
//! Classification: one instance per line, `<domain>\t<label>\t<feat> <feat> ...`.
//! Sequences: blank-line separated blocks, an optional `@domain in|out`
//! header, then one `<tag>\t<feat> <feat> ...` line per token.
//! Lines starting with `#` are comments in both formats.

use std::io::{BufRead, Write};

use super::{
    Alphabet, Dataset, Domain, FeatureVector, Instance, Sequence, SequenceDataset, BIAS_INDEX,
};
use crate::{Error, Result};

enum Names<'a> {
    Grow(&'a mut Alphabet),
    Frozen(&'a Alphabet),
}

impl Names<'_> {
    fn lookup(&mut self, name: &str) -> Option<usize> {
        match self {
            Names::Grow(a) => Some(a.intern(name)),
            Names::Frozen(a) => a.get(name),
        }
    }
}

fn featurize(names: &mut Names<'_>, text: &str) -> FeatureVector {
    // unseen features under a frozen alphabet are dropped
    let idx = text
        .split_whitespace()
        .filter_map(|tok| names.lookup(tok))
        .chain(std::iter::once(BIAS_INDEX));
    FeatureVector::from_indices(idx)
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// Parses the classification format, building alphabets in first-occurrence order.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut features = Alphabet::with_bias();
    let mut labels = Alphabet::new();
    let instances = parse_instances(
        reader,
        &mut Names::Grow(&mut features),
        &mut Names::Grow(&mut labels),
    )?;
    Ok(Dataset {
        features,
        labels,
        instances,
    })
}

/// Parses against fixed alphabets: unseen features are dropped, unseen labels are errors.
pub fn parse_dataset_with<R: BufRead>(
    reader: R,
    features: &Alphabet,
    labels: &Alphabet,
) -> Result<Dataset> {
    let instances = parse_instances(
        reader,
        &mut Names::Frozen(features),
        &mut Names::Frozen(labels),
    )?;
    Ok(Dataset {
        features: features.clone(),
        labels: labels.clone(),
        instances,
    })
}

fn parse_instances<R: BufRead>(
    reader: R,
    features: &mut Names<'_>,
    labels: &mut Names<'_>,
) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if is_skippable(&line) {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let domain = parts.next().unwrap_or_default().trim();
        let label = parts
            .next()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::parse(lineno, "expected '<domain>\\t<label>\\t<features>'"))?;
        let domain: Domain = domain
            .parse()
            .map_err(|_| Error::parse(lineno, format!("unknown domain tag '{domain}'")))?;
        let label = labels
            .lookup(label)
            .ok_or_else(|| Error::parse(lineno, format!("unknown label '{label}'")))?;
        let feats = featurize(features, parts.next().unwrap_or(""));
        out.push(Instance::new(feats, label, domain));
    }
    Ok(out)
}

fn feature_text(features: &Alphabet, x: &FeatureVector) -> String {
    let names: Vec<&str> = x
        .iter()
        .filter(|&f| f != BIAS_INDEX)
        .map(|f| features.name(f))
        .collect();
    names.join(" ")
}

pub fn write_dataset<W: Write>(mut w: W, data: &Dataset) -> std::io::Result<()> {
    for inst in &data.instances {
        writeln!(
            w,
            "{}\t{}\t{}",
            inst.domain,
            data.labels.name(inst.label),
            feature_text(&data.features, &inst.features)
        )?;
    }
    Ok(())
}

struct RawBlock {
    domain: Domain,
    tokens: Vec<(String, String)>,
    first_line: usize,
}

fn read_blocks<R: BufRead>(reader: R) -> Result<Vec<RawBlock>> {
    let mut blocks = Vec::new();
    let mut current: Option<RawBlock> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            if let Some(b) = current.take() {
                if !b.tokens.is_empty() {
                    blocks.push(b);
                }
            }
            continue;
        }
        if line.trim_start().starts_with('#') {
            continue;
        }
        let block = current.get_or_insert_with(|| RawBlock {
            domain: Domain::In,
            tokens: Vec::new(),
            first_line: lineno,
        });
        if let Some(rest) = line.trim().strip_prefix("@domain") {
            if !block.tokens.is_empty() {
                return Err(Error::parse(lineno, "@domain header after tokens"));
            }
            let tag = rest.trim();
            block.domain = tag
                .parse()
                .map_err(|_| Error::parse(lineno, format!("unknown domain tag '{tag}'")))?;
            continue;
        }
        let (tag, feats) = line.split_once('\t').unwrap_or((line.as_str(), ""));
        let tag = tag.trim();
        if tag.is_empty() {
            return Err(Error::parse(lineno, "expected '<tag>\\t<features>'"));
        }
        block.tokens.push((tag.to_string(), feats.to_string()));
    }
    if let Some(b) = current {
        if !b.tokens.is_empty() {
            blocks.push(b);
        }
    }
    Ok(blocks)
}

/// Parses the sequence format, building alphabets in first-occurrence order.
/// Previous-tag indicator features are appended after the declared features.
pub fn parse_sequences<R: BufRead>(reader: R) -> Result<SequenceDataset> {
    let blocks = read_blocks(reader)?;
    let mut features = Alphabet::with_bias();
    let mut tags = Alphabet::new();
    let mut raw = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let mut toks = Vec::with_capacity(b.tokens.len());
        let mut ids = Vec::with_capacity(b.tokens.len());
        for (tag, feats) in &b.tokens {
            ids.push(tags.intern(tag));
            toks.push(featurize(&mut Names::Grow(&mut features), feats));
        }
        raw.push(Sequence {
            domain: b.domain,
            tokens: toks,
            tags: ids,
        });
    }
    let mut ds = SequenceDataset::new(features, tags);
    ds.sequences = raw;
    Ok(ds)
}

/// Parses against fixed alphabets: unseen features are dropped, unseen tags are errors.
pub fn parse_sequences_with<R: BufRead>(
    reader: R,
    features: &Alphabet,
    tags: &Alphabet,
) -> Result<SequenceDataset> {
    let blocks = read_blocks(reader)?;
    let mut ds = SequenceDataset::new(features.clone(), tags.clone());
    if ds.features != *features {
        return Err(Error::Format(
            "feature alphabet lacks previous-tag indicators".into(),
        ));
    }
    for b in &blocks {
        let mut toks = Vec::with_capacity(b.tokens.len());
        let mut ids = Vec::with_capacity(b.tokens.len());
        for (offset, (tag, feats)) in b.tokens.iter().enumerate() {
            let id = tags.get(tag).ok_or_else(|| {
                Error::parse(b.first_line + offset, format!("unknown tag '{tag}'"))
            })?;
            ids.push(id);
            toks.push(featurize(&mut Names::Frozen(features), feats));
        }
        ds.sequences.push(Sequence {
            domain: b.domain,
            tokens: toks,
            tags: ids,
        });
    }
    Ok(ds)
}

/// Writes sequences in block format. When `tags` is given it replaces the
/// gold tags (used for decoder output).
pub fn write_sequences<W: Write>(
    mut w: W,
    data: &SequenceDataset,
    tags: Option<&[Vec<usize>]>,
) -> std::io::Result<()> {
    let prev: std::collections::HashSet<usize> = data.prev_features.iter().copied().collect();
    for (s, seq) in data.sequences.iter().enumerate() {
        if s > 0 {
            writeln!(w)?;
        }
        writeln!(w, "@domain {}", seq.domain)?;
        for (t, x) in seq.tokens.iter().enumerate() {
            let tag = tags.map_or(seq.tags[t], |tg| tg[s][t]);
            let names: Vec<&str> = x
                .iter()
                .filter(|f| *f != BIAS_INDEX && !prev.contains(f))
                .map(|f| data.features.name(f))
                .collect();
            writeln!(w, "{}\t{}", data.tags.name(tag), names.join(" "))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse_str(s: &str) -> Result<Dataset> {
        parse_dataset(s.as_bytes())
    }

    #[test]
    fn empty_stream_gives_empty_dataset() {
        let d = parse_str("").unwrap();
        assert!(d.is_empty());
        // only the intercept is registered
        assert_eq!(d.num_features(), 1);
        assert_eq!(d.num_labels(), 0);
    }

    #[test]
    fn same_feature_names_give_same_vectors() {
        let d = parse_str("in\tA\tx y z\nout\tB\tz y x\n").unwrap();
        assert_eq!(d.instances[0].features, d.instances[1].features);
        assert_eq!(d.instances[1].domain, Domain::Out);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let d = parse_str("# header\n\nin\tA\tx\n  # indented\n").unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_str("in\tA\tx\ngarbage\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
        let err = parse_str("in\tA\tx\nin\tA\tx\nmaybe\tA\tx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn frozen_alphabet_drops_unknown_features() {
        let train = parse_str("in\tA\tx y\n").unwrap();
        let test =
            parse_dataset_with("in\tA\tx q\n".as_bytes(), &train.features, &train.labels).unwrap();
        assert_eq!(test.instances[0].features, FeatureVector::from_indices([0, 1]));
        assert!(
            parse_dataset_with("in\tZ\tx\n".as_bytes(), &train.features, &train.labels).is_err()
        );
    }

    #[test]
    fn sequence_blocks() {
        let text = "@domain out\nB-PER\tw=John cap\nI-PER\tw=Smith cap\n\n@domain in\nO\tw=hi\n";
        let ds = parse_sequences(text.as_bytes()).unwrap();
        assert_eq!(ds.sequences.len(), 2);
        assert_eq!(ds.sequences[0].domain, Domain::Out);
        assert_eq!(ds.sequences[1].tokens.len(), 1);
        assert_eq!(ds.num_tags(), 3);
        let mut buf = Vec::new();
        write_sequences(&mut buf, &ds, None).unwrap();
        let again = parse_sequences(buf.as_slice()).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn sequence_unknown_domain_is_error() {
        assert!(parse_sequences("@domain sideways\nO\tx\n".as_bytes()).is_err());
    }

    fn random_file() -> impl Strategy<Value = String> {
        let line = (
            prop::bool::ANY,
            0usize..4,
            prop::collection::vec(0usize..30, 0..6),
        )
            .prop_map(|(dom, label, feats)| {
                let names: Vec<String> = feats.iter().map(|f| format!("f{f}")).collect();
                format!(
                    "{}\tL{}\t{}",
                    if dom { "in" } else { "out" },
                    label,
                    names.join(" ")
                )
            });
        prop::collection::vec(line, 100).prop_map(|lines| lines.join("\n"))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn parse_serialize_parse_is_identity(text in random_file()) {
            let first = parse_str(&text).unwrap();
            let mut buf = Vec::new();
            write_dataset(&mut buf, &first).unwrap();
            let second = parse_dataset(buf.as_slice()).unwrap();
            prop_assert_eq!(first.len(), 100);
            prop_assert_eq!(&second, &first);
        }
    }
}
