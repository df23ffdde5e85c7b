//! Metrics, significance testing, cross-validation and learning curves.

use std::fmt::Write as _;

use crate::corpus::{nested_subsets, split_folds, split_sequence_folds, Dataset, Domain, SequenceDataset};
use crate::mega::DomainData;
use crate::system::{train_chain_system, train_system, SystemConfig, SystemKind};
use crate::{chain, Error, Result};

/// Fraction of positions where `predicted` equals `gold`. Empty input
/// scores 0.
pub fn accuracy<T: PartialEq>(gold: &[T], predicted: &[T]) -> Result<f64> {
    if gold.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let hits = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// A labeled span `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Chunk {
    pub kind: String,
    pub start: usize,
    pub end: usize,
}

/// Chunks of a BIO tagging. An `I-X` that does not continue an open `X`
/// chunk starts a new one, as if it were `B-X`.
pub fn bio_chunks<S: AsRef<str>>(tags: &[S]) -> Vec<Chunk> {
    let mut out = Vec::new();
    let mut open: Option<Chunk> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (prefix, kind) = match tag.split_once('-') {
            Some((p @ ("B" | "I"), k)) => (p, k),
            _ => ("O", ""),
        };
        let continues = prefix == "I" && open.as_ref().is_some_and(|c| c.kind == kind);
        if continues {
            if let Some(c) = open.as_mut() {
                c.end = i + 1;
            }
            continue;
        }
        out.extend(open.take());
        if prefix != "O" {
            open = Some(Chunk {
                kind: kind.to_string(),
                start: i,
                end: i + 1,
            });
        }
    }
    out.extend(open);
    out
}

/// Chunk precision, recall and F-measure.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChunkScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Running chunk counts across sequences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChunkCounts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl ChunkCounts {
    pub fn add<S: AsRef<str>>(&mut self, gold: &[S], predicted: &[S]) {
        let g = bio_chunks(gold);
        let p = bio_chunks(predicted);
        self.gold += g.len();
        self.predicted += p.len();
        self.correct += p.iter().filter(|c| g.contains(c)).count();
    }

    pub fn scores(&self) -> ChunkScores {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.correct, self.predicted);
        let recall = ratio(self.correct, self.gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ChunkScores {
            precision,
            recall,
            f1,
        }
    }
}

/// Chunk scores of one aligned tagging.
pub fn chunk_f1<S: AsRef<str>>(gold: &[S], predicted: &[S]) -> Result<ChunkScores> {
    if gold.len() != predicted.len() {
        return Err(Error::Dimension("taggings differ in length".into()));
    }
    let mut c = ChunkCounts::default();
    c.add(gold, predicted);
    Ok(c.scores())
}

/// Outcome of McNemar's test on paired correctness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McNemar {
    /// First system right, second wrong.
    pub b: usize,
    /// First system wrong, second right.
    pub c: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// McNemar's test with continuity correction. The statistic is
/// `(|b − c| − 1)² / (b + c)`, taken as 0 when `|b − c| ≤ 1`, and the
/// p-value is its upper tail under one-degree chi-square.
pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<McNemar> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::Dimension("correctness vectors differ in length".into()));
    }
    let b = correct_a.iter().zip(correct_b).filter(|(a, b)| **a && !**b).count();
    let c = correct_a.iter().zip(correct_b).filter(|(a, b)| !**a && **b).count();
    Ok(mcnemar_counts(b, c))
}

/// [`mcnemar`] from the discordant counts alone.
pub fn mcnemar_counts(b: usize, c: usize) -> McNemar {
    let diff = b.abs_diff(c);
    let statistic = if diff <= 1 {
        0.0
    } else {
        let d = (diff - 1) as f64;
        d * d / (b + c) as f64
    };
    McNemar {
        b,
        c,
        statistic,
        p_value: chi2_one_upper_tail(statistic),
    }
}

/// `P(χ²₁ > x) = erfc(√(x/2))`.
fn chi2_one_upper_tail(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        libm::erfc((x / 2.0).sqrt())
    }
}

/// Relative error reduction in percent: `100 (improved − baseline) / (100 − baseline)`,
/// with both accuracies in percent.
pub fn error_reduction(baseline: f64, improved: f64) -> Result<f64> {
    for v in [baseline, improved] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::invalid(format!("accuracy {v} outside [0, 100]")));
        }
    }
    if baseline >= 100.0 {
        return Err(Error::invalid("baseline accuracy is already 100"));
    }
    Ok(100.0 * (improved - baseline) / (100.0 - baseline))
}

/// Scores of one system on one test set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Present for BIO-tagged sequence data.
    pub chunks: Option<ChunkScores>,
    /// Per-instance (or per-token) correctness.
    pub correct: Vec<bool>,
}

impl EvalReport {
    pub fn from_labels(gold: &[usize], predicted: &[usize]) -> Result<EvalReport> {
        let accuracy = accuracy(gold, predicted)?;
        Ok(EvalReport {
            accuracy,
            chunks: None,
            correct: gold.iter().zip(predicted).map(|(g, p)| g == p).collect(),
        })
    }

    /// Headline score: chunk F1 when available, accuracy otherwise.
    pub fn score(&self) -> f64 {
        self.chunks.map_or(self.accuracy, |c| c.f1)
    }
}

/// Token accuracy and, for BIO tag sets, chunk scores of decoded output.
pub fn evaluate_tagging(data: &SequenceDataset, predicted: &[Vec<usize>]) -> Result<EvalReport> {
    if predicted.len() != data.sequences.len() {
        return Err(Error::Dimension("one decoded path per sequence expected".into()));
    }
    let gold: Vec<usize> = data.sequences.iter().flat_map(|s| s.tags.iter().copied()).collect();
    let pred: Vec<usize> = predicted.iter().flatten().copied().collect();
    let mut report = EvalReport::from_labels(&gold, &pred)?;
    if chain::is_bio(&data.tags) {
        let mut counts = ChunkCounts::default();
        for (s, p) in data.sequences.iter().zip(predicted) {
            let names = |v: &[usize]| -> Vec<&str> { v.iter().map(|&t| data.tags.name(t)).collect() };
            counts.add(&names(&s.tags), &names(p));
        }
        report.chunks = Some(counts.scores());
    }
    Ok(report)
}

/// Trains `kind` on `train` and scores it on the in-domain part of `test`.
pub fn train_and_evaluate(
    kind: SystemKind,
    config: &SystemConfig,
    train: &DomainData,
    test: &Dataset,
) -> Result<EvalReport> {
    let model = train_system(kind, config, train)?;
    let pred: Vec<usize> = test
        .instances
        .iter()
        .map(|i| model.predict(&i.features, Domain::In))
        .collect();
    EvalReport::from_labels(&test.labels_of(), &pred)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    /// Mean of the per-fold headline scores.
    pub mean: f64,
}

impl CvReport {
    fn new(folds: Vec<EvalReport>) -> CvReport {
        let mean = folds.iter().map(EvalReport::score).sum::<f64>() / folds.len() as f64;
        CvReport { folds, mean }
    }
}

/// `k`-fold cross-validation over the in-domain data. Out-domain data
/// joins every training split unchanged.
pub fn cross_validate(kind: SystemKind, config: &SystemConfig, data: &Dataset, k: usize, seed: u64) -> Result<CvReport> {
    let mut reports = Vec::with_capacity(k);
    for fold in split_folds(data, k, seed)? {
        let train = DomainData::from_dataset(&fold.train);
        reports.push(train_and_evaluate(kind, config, &train, &fold.test)?);
    }
    Ok(CvReport::new(reports))
}

/// Cross-validation for the chain systems.
pub fn cross_validate_sequences(
    kind: SystemKind,
    config: &SystemConfig,
    data: &SequenceDataset,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    let mut reports = Vec::with_capacity(k);
    for fold in split_sequence_folds(data, k, seed)? {
        let model = train_chain_system(kind, config, &fold.train)?;
        let decoded = chain::decode_all(&model, &fold.test);
        reports.push(evaluate_tagging(&fold.test, &decoded)?);
    }
    Ok(CvReport::new(reports))
}

/// Test accuracy per system at each in-domain training size.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningCurve {
    pub sizes: Vec<usize>,
    /// One row per system; `NaN` where the system cannot train at a size.
    pub rows: Vec<(SystemKind, Vec<f64>)>,
}

impl LearningCurve {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("size");
        for (k, _) in &self.rows {
            let _ = write!(s, "\t{}", k.as_str());
        }
        s.push('\n');
        for (i, n) in self.sizes.iter().enumerate() {
            let _ = write!(s, "{n}");
            for (_, v) in &self.rows {
                let _ = write!(s, "\t{:.4}", v[i]);
            }
            s.push('\n');
        }
        s
    }
}

/// Trains every system on nested in-domain subsets of `train` (all its
/// out-domain data each time) and scores on `test`. Systems that ignore
/// in-domain data are trained once and reported as a flat line.
pub fn learning_curve(
    kinds: &[SystemKind],
    config: &SystemConfig,
    train: &Dataset,
    test: &Dataset,
    sizes: &[usize],
    seed: u64,
) -> Result<LearningCurve> {
    let full = DomainData::from_dataset(train);
    let subsets = nested_subsets(full.in_domain.len(), sizes, seed)?;
    let mut rows = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut row = Vec::with_capacity(sizes.len());
        if kind.ignores_in_domain() {
            let acc = train_and_evaluate(kind, config, &full, test)?.accuracy;
            row.resize(sizes.len(), acc);
        } else {
            for idx in &subsets {
                let mut part = full.clone();
                part.in_domain = idx.iter().map(|&i| full.in_domain[i].clone()).collect();
                if part.in_domain.is_empty() && kind.needs_in_domain() {
                    row.push(f64::NAN);
                    continue;
                }
                row.push(train_and_evaluate(kind, config, &part, test)?.accuracy);
            }
        }
        rows.push((kind, row));
    }
    Ok(LearningCurve {
        sizes: sizes.to_vec(),
        rows,
    })
}

/// Accuracy table with one column per task, plus error-reduction rows of
/// a target system over chosen reference systems.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub tasks: Vec<String>,
    /// `(system, accuracy in percent per task)`.
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ResultsTable {
    fn row(&self, name: &str) -> Result<&[f64]> {
        self.rows
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::invalid(format!("no row named {name:?}")))
    }

    /// Error reduction of `target` over each reference, per task.
    pub fn reductions(&self, target: &str, references: &[&str]) -> Result<Vec<(String, Vec<f64>)>> {
        let t = self.row(target)?;
        references
            .iter()
            .map(|r| {
                let base = self.row(r)?;
                let v = base
                    .iter()
                    .zip(t)
                    .map(|(b, i)| error_reduction(*b, *i))
                    .collect::<Result<Vec<_>>>()?;
                Ok((r.to_string(), v))
            })
            .collect()
    }

    /// TSV with a `section` column of `accuracy` or `reduction`.
    pub fn to_tsv(&self, target: &str, references: &[&str]) -> Result<String> {
        let mut s = format!("section\tsystem\t{}\n", self.tasks.join("\t"));
        let line = |s: &mut String, section: &str, name: &str, v: &[f64]| {
            let cells: Vec<String> = v.iter().map(|x| format!("{x:.1}")).collect();
            let _ = writeln!(s, "{section}\t{name}\t{}", cells.join("\t"));
        };
        for (n, v) in &self.rows {
            line(&mut s, "accuracy", n, v);
        }
        for (n, v) in self.reductions(target, references)? {
            line(&mut s, "reduction", &n, &v);
        }
        Ok(s)
    }

    /// Fixed-width table: an accuracy block, then a reduction block.
    pub fn render(&self, target: &str, references: &[&str]) -> Result<String> {
        let width = self.tasks.iter().map(String::len).max().unwrap_or(0).max(7);
        let name_w = self
            .rows
            .iter()
            .map(|(n, _)| n.len())
            .max()
            .unwrap_or(0)
            .max("% Reduction".len());
        let mut s = format!("{:name_w$}", "");
        for t in &self.tasks {
            let _ = write!(s, "  {t:>width$}");
        }
        s.push('\n');
        let block = |s: &mut String, title: &str, rows: &[(String, Vec<f64>)]| {
            let _ = writeln!(s, "{title}");
            for (n, v) in rows {
                let _ = write!(s, "{n:name_w$}");
                for x in v {
                    let _ = write!(s, "  {x:>width$.1}");
                }
                s.push('\n');
            }
        };
        block(&mut s, "Accuracy", &self.rows);
        block(&mut s, "% Reduction", &self.reductions(target, references)?);
        Ok(s)
    }
}
