//! Subcommand bodies.

use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};

use megadapt::chain::{self, decode_all, featurize_sequence, train_memm, ChainMode, TokenClassifier};
use megadapt::container::{read_model, write_model, SavedModel};
use megadapt::corpus::{
    generate_synthetic, generate_synthetic_sequences, parse_dataset, parse_dataset_with, parse_sequences,
    parse_sequences_with, write_dataset, write_sequences, Dataset, SequenceDataset, SynthSpec,
};
use megadapt::eval::{
    cross_validate, cross_validate_sequences, evaluate_tagging, learning_curve, mcnemar, train_and_evaluate,
    EvalReport, ResultsTable,
};
use megadapt::mega::{predict_mixture, CemTrace, DomainData};
use megadapt::system::{train_chain_system, train_system, SystemKind, TrainedSystem};
use megadapt::baselines::BaselineKind;
use megadapt::Error;

use crate::config::RunConfig;
use crate::Settings;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unknown keys or unsupported combinations.
    Usage(String),
    /// Missing, unreadable or malformed files.
    Data(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Core(Error::Numeric(_)) => 3,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Wraps a core error with the file it came from.
fn in_file(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| match e {
        Error::Numeric(_) | Error::InvalidArgument(_) => CliError::Core(e),
        other => CliError::Data(format!("{}: {other}", path.display())),
    }
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(CliError::Data(format!("{}: no such file", path.display())));
    }
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn check_output(path: &Path) -> Result<()> {
    let dir = parent_dir(path);
    if !dir.is_dir() {
        return Err(CliError::Data(format!(
            "{}: directory {} does not exist",
            path.display(),
            dir.display()
        )));
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Prints `text` and, when asked, also writes it to `out`.
fn report(text: &str, out: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(p) = out {
        write_atomic(p, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    Ok(())
}

fn kind(name: &str) -> Result<SystemKind> {
    name.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn settings(s: &Settings) -> Result<RunConfig> {
    if let Some(p) = &s.config {
        check_input(p)?;
    }
    RunConfig::load(s.config.as_deref(), &s.set).map_err(CliError::Usage)
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(open(path)?).map_err(in_file(path))
}

/// Reads classification data with every out-domain line blanked, so the
/// alphabets come out exactly as if those lines were absent.
fn read_in_domain_only(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let kept: String = text
        .lines()
        .map(|l| if l.split('\t').next().map(str::trim) == Some("out") { "" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    parse_dataset(Cursor::new(kept)).map_err(in_file(path))
}

fn read_sequences(path: &Path) -> Result<SequenceDataset> {
    parse_sequences(open(path)?).map_err(in_file(path))
}

fn load_model(path: &Path) -> Result<SavedModel> {
    check_input(path)?;
    read_model(open(path)?).map_err(in_file(path))
}

fn save_model(path: &Path, model: &SavedModel) -> Result<()> {
    write_atomic(path, |w| Ok(write_model(w, model)?))
}

pub fn synth(spec: Option<&Path>, set: &[String], out: &Path, seq_len: Option<usize>) -> Result<()> {
    let mut s = match spec {
        Some(p) => {
            check_input(p)?;
            let text = fs::read_to_string(p)?;
            SynthSpec::parse(&text).map_err(in_file(p))?
        }
        None => SynthSpec::default(),
    };
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {kv:?}")))?;
        s.set(k.trim(), v.trim()).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    s.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let train_path = out.join("train.tsv");
    let test_path = out.join("test.tsv");
    let truth_path = out.join("truth.model");
    match seq_len {
        None => {
            let corpus = generate_synthetic(&s)?;
            write_atomic(&train_path, |w| Ok(write_dataset(w, &corpus.train)?))?;
            write_atomic(&test_path, |w| Ok(write_dataset(w, &corpus.test)?))?;
            save_model(
                &truth_path,
                &SavedModel::Classifier {
                    system: TrainedSystem::Mega {
                        model: corpus.truth,
                        trace: CemTrace::default(),
                    },
                    features: corpus.train.features,
                    labels: corpus.train.labels,
                },
            )?;
        }
        Some(len) => {
            let corpus = generate_synthetic_sequences(&s, len)?;
            write_atomic(&train_path, |w| Ok(write_sequences(w, &corpus.train, None)?))?;
            write_atomic(&test_path, |w| Ok(write_sequences(w, &corpus.test, None)?))?;
            let model = chain::ChainModel {
                classifier: TokenClassifier::Mega(corpus.truth),
                features: corpus.train.features.clone(),
                tags: corpus.train.tags.clone(),
                prev_features: corpus.train.prev_features.clone(),
            };
            save_model(
                &truth_path,
                &SavedModel::Chain {
                    kind: SystemKind::MegaMemm,
                    model,
                },
            )?;
        }
    }
    Ok(())
}

pub fn train(system: &str, data: &Path, model: &Path, trace: Option<&Path>, s: &Settings) -> Result<()> {
    let kind = kind(system)?;
    let cfg = settings(s)?;
    check_input(data)?;
    check_output(model)?;
    if let Some(t) = trace {
        check_output(t)?;
    }
    let (saved, cem) = if kind.is_sequence() {
        let seqs = read_sequences(data)?;
        let mode = if kind == SystemKind::MegaMemm { ChainMode::Mega } else { ChainMode::Plain };
        let mut chain_cfg = cfg.system.chain.clone();
        chain_cfg.mega = cfg.system.mega.clone();
        let (m, t) = train_memm(&seqs, mode, &chain_cfg)?;
        (SavedModel::Chain { kind, model: m }, t)
    } else {
        let ds = if kind == SystemKind::Baseline(BaselineKind::OnlyI) {
            read_in_domain_only(data)?
        } else {
            read_dataset(data)?
        };
        let sys = train_system(kind, &cfg.system, &DomainData::from_dataset(&ds))?;
        let t = match &sys {
            TrainedSystem::Mega { trace, .. } => Some(trace.clone()),
            TrainedSystem::Baseline(_) => None,
        };
        (
            SavedModel::Classifier {
                system: sys,
                features: ds.features,
                labels: ds.labels,
            },
            t,
        )
    };
    save_model(model, &saved)?;
    if let Some(p) = trace {
        let t = cem.unwrap_or_default();
        write_atomic(p, |w| Ok(t.write_tsv(w)?))?;
    }
    Ok(())
}

/// Model predictions on `data`, as label names, one inner vector per
/// sequence (a single vector for classification data).
fn predictions(model: &SavedModel, data: &Path) -> Result<(Vec<Vec<String>>, EvalReport)> {
    match model {
        SavedModel::Classifier { system, features, labels } => {
            let ds = parse_dataset_with(open(data)?, features, labels).map_err(in_file(data))?;
            let pred: Vec<usize> = ds
                .instances
                .iter()
                .map(|i| system.predict(&i.features, i.domain))
                .collect();
            let report = EvalReport::from_labels(&ds.labels_of(), &pred)?;
            let names = pred.iter().map(|&y| labels.name(y).to_string()).collect();
            Ok((vec![names], report))
        }
        SavedModel::Chain { model, .. } => {
            let ds = parse_sequences_with(open(data)?, &model.features, &model.tags).map_err(in_file(data))?;
            let decoded = decode_all(model, &ds);
            let report = evaluate_tagging(&ds, &decoded)?;
            let names = decoded
                .iter()
                .map(|p| p.iter().map(|&t| model.tags.name(t).to_string()).collect())
                .collect();
            Ok((names, report))
        }
    }
}

pub fn predict(model: &Path, data: &Path, out: &Path) -> Result<()> {
    check_input(data)?;
    check_output(out)?;
    let m = load_model(model)?;
    let (names, _) = predictions(&m, data)?;
    write_atomic(out, |w| {
        for (i, block) in names.iter().enumerate() {
            if i > 0 {
                writeln!(w)?;
            }
            for n in block {
                writeln!(w, "{n}")?;
            }
        }
        Ok(())
    })
}

fn describe(r: &EvalReport) -> String {
    let mut s = String::new();
    let n = r.correct.len();
    let right = r.correct.iter().filter(|c| **c).count();
    let _ = writeln!(s, "items\t{n}");
    let _ = writeln!(s, "correct\t{right}");
    let _ = writeln!(s, "accuracy\t{:.6}", r.accuracy);
    if let Some(c) = r.chunks {
        let _ = writeln!(s, "chunk_precision\t{:.6}", c.precision);
        let _ = writeln!(s, "chunk_recall\t{:.6}", c.recall);
        let _ = writeln!(s, "chunk_f1\t{:.6}", c.f1);
    }
    s
}

pub fn eval_model(model: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    check_input(data)?;
    if let Some(o) = out {
        check_output(o)?;
    }
    let m = load_model(model)?;
    let (_, r) = predictions(&m, data)?;
    report(&describe(&r), out)
}

pub fn eval_systems(
    systems: &[String],
    train: &Path,
    test: &Path,
    target: &str,
    out: Option<&Path>,
    s: &Settings,
) -> Result<()> {
    let kinds = systems.iter().map(|n| kind(n)).collect::<Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(CliError::Usage("--systems is empty".into()));
    }
    let target = kind(target)?;
    let cfg = settings(s)?;
    check_input(train)?;
    check_input(test)?;
    if let Some(o) = out {
        check_output(o)?;
    }
    let sequence = kinds[0].is_sequence();
    if kinds.iter().any(|k| k.is_sequence() != sequence) {
        return Err(CliError::Usage("cannot mix sequence and classification systems".into()));
    }
    let mut rows = Vec::with_capacity(kinds.len());
    if sequence {
        let tr = read_sequences(train)?;
        let te = parse_sequences_with(open(test)?, &tr.features, &tr.tags).map_err(in_file(test))?;
        for &k in &kinds {
            let m = train_chain_system(k, &cfg.system, &tr)?;
            let r = evaluate_tagging(&te, &decode_all(&m, &te))?;
            rows.push((k.title().to_string(), vec![100.0 * r.score()]));
        }
    } else {
        let tr = read_dataset(train)?;
        let te = parse_dataset_with(open(test)?, &tr.features, &tr.labels).map_err(in_file(test))?;
        let dd = DomainData::from_dataset(&tr);
        for &k in &kinds {
            let r = train_and_evaluate(k, &cfg.system, &dd, &te)?;
            rows.push((k.title().to_string(), vec![100.0 * r.score()]));
        }
    }
    let task = test
        .file_stem()
        .map_or_else(|| "test".to_string(), |s| s.to_string_lossy().into_owned());
    let table = ResultsTable {
        tasks: vec![task],
        rows,
    };
    let refs: Vec<&str> = if kinds.contains(&target) {
        kinds.iter().filter(|k| **k != target).map(|k| k.title()).collect()
    } else {
        Vec::new()
    };
    report(&table.render(target.title(), &refs)?, out)
}

pub fn cv(system: &str, data: &Path, folds: usize, out: Option<&Path>, s: &Settings) -> Result<()> {
    let k = kind(system)?;
    let cfg = settings(s)?;
    check_input(data)?;
    if let Some(o) = out {
        check_output(o)?;
    }
    let r = if k.is_sequence() {
        cross_validate_sequences(k, &cfg.system, &read_sequences(data)?, folds, cfg.seed)?
    } else {
        cross_validate(k, &cfg.system, &read_dataset(data)?, folds, cfg.seed)?
    };
    let mut text = String::from("fold\tscore\n");
    for (i, f) in r.folds.iter().enumerate() {
        let _ = writeln!(text, "{}\t{:.6}", i + 1, f.score());
    }
    let _ = writeln!(text, "mean\t{:.6}", r.mean);
    report(&text, out)
}

pub fn curve(
    systems: &[String],
    train: &Path,
    test: &Path,
    sizes: &[usize],
    out: Option<&Path>,
    s: &Settings,
) -> Result<()> {
    let kinds = systems.iter().map(|n| kind(n)).collect::<Result<Vec<_>>>()?;
    if let Some(k) = kinds.iter().find(|k| k.is_sequence()) {
        return Err(CliError::Usage(format!("curve supports classification systems only, not {k}")));
    }
    let cfg = settings(s)?;
    check_input(train)?;
    check_input(test)?;
    if let Some(o) = out {
        check_output(o)?;
    }
    let tr = read_dataset(train)?;
    let te = parse_dataset_with(open(test)?, &tr.features, &tr.labels).map_err(in_file(test))?;
    let c = learning_curve(&kinds, &cfg.system, &tr, &te, sizes, cfg.seed)?;
    report(&c.to_tsv(), out)
}

fn read_labels(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push(t.to_string());
        }
    }
    Ok(out)
}

fn gold_labels(path: &Path, sequences: bool) -> Result<Vec<String>> {
    if sequences {
        let ds = read_sequences(path)?;
        Ok(ds
            .sequences
            .iter()
            .flat_map(|s| s.tags.iter().map(|&t| ds.tags.name(t).to_string()))
            .collect())
    } else {
        let ds = read_dataset(path)?;
        Ok(ds.instances.iter().map(|i| ds.labels.name(i.label).to_string()).collect())
    }
}

pub fn compare_predictions(
    gold: &Path,
    sequences: bool,
    a: Option<&Path>,
    b: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let (a, b) = a
        .zip(b)
        .ok_or_else(|| CliError::Usage("compare needs both --a and --b".into()))?;
    for p in [gold, a, b] {
        check_input(p)?;
    }
    if let Some(o) = out {
        check_output(o)?;
    }
    let g = gold_labels(gold, sequences)?;
    let pa = read_labels(a)?;
    let pb = read_labels(b)?;
    for (p, v) in [(a, &pa), (b, &pb)] {
        if v.len() != g.len() {
            return Err(CliError::Data(format!(
                "{}: {} predictions for {} gold items",
                p.display(),
                v.len(),
                g.len()
            )));
        }
    }
    let ca: Vec<bool> = g.iter().zip(&pa).map(|(x, y)| x == y).collect();
    let cb: Vec<bool> = g.iter().zip(&pb).map(|(x, y)| x == y).collect();
    let m = mcnemar(&ca, &cb)?;
    let acc = |c: &[bool]| c.iter().filter(|x| **x).count() as f64 / c.len().max(1) as f64;
    let mut text = String::new();
    let _ = writeln!(text, "items\t{}", g.len());
    let _ = writeln!(text, "accuracy_a\t{:.6}", acc(&ca));
    let _ = writeln!(text, "accuracy_b\t{:.6}", acc(&cb));
    let _ = writeln!(text, "a_only\t{}", m.b);
    let _ = writeln!(text, "b_only\t{}", m.c);
    let _ = writeln!(text, "statistic\t{:.6}", m.statistic);
    let _ = writeln!(text, "p_value\t{:.6}", m.p_value);
    report(&text, out)
}

fn parse_table(path: &Path) -> Result<ResultsTable> {
    let bad = |line: usize, msg: &str| CliError::Data(format!("{}: line {line}: {msg}", path.display()));
    let mut lines = open(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty() && !l.starts_with('#')));
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty table"))?;
    let tasks: Vec<String> = header?.split('\t').skip(1).map(|t| t.trim().to_string()).collect();
    if tasks.is_empty() {
        return Err(bad(1, "header names no tasks"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let mut cells = line.split('\t');
        let name = cells.next().unwrap_or("").trim().to_string();
        let vals = cells
            .map(|c| c.trim().parse::<f64>().map_err(|_| bad(i + 1, &format!("bad number {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != tasks.len() {
            return Err(bad(i + 1, "row width differs from header"));
        }
        rows.push((name, vals));
    }
    Ok(ResultsTable { tasks, rows })
}

pub fn compare_table(path: &Path, target: Option<&str>, reference: &[String], tsv: bool, out: Option<&Path>) -> Result<()> {
    check_input(path)?;
    if let Some(o) = out {
        check_output(o)?;
    }
    let table = parse_table(path)?;
    let target = target.ok_or_else(|| CliError::Usage("--table needs --target".into()))?;
    let refs: Vec<&str> = if reference.is_empty() {
        table.rows.iter().map(|(n, _)| n.as_str()).filter(|n| *n != target).collect()
    } else {
        reference.iter().map(String::as_str).collect()
    };
    let text = if tsv { table.to_tsv(target, &refs) } else { table.render(target, &refs) };
    let text = text.map_err(|e| CliError::Usage(e.to_string()))?;
    report(&text, out)
}

pub fn introspect(model: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    check_input(data)?;
    if let Some(o) = out {
        check_output(o)?;
    }
    let m = load_model(model)?;
    let mut text = String::from("index\tdomain\tp_specific\tp_general\tpredicted\tgold\n");
    let mut row = |i: usize, d, pg: f64, pred: &str, gold: &str| {
        let _ = writeln!(text, "{i}\t{d}\t{:?}\t{pg:?}\t{pred}\t{gold}", 1.0 - pg);
    };
    match &m {
        SavedModel::Classifier {
            system: TrainedSystem::Mega { model: mm, .. },
            features,
            labels,
        } => {
            let ds = parse_dataset_with(open(data)?, features, labels).map_err(in_file(data))?;
            for (i, inst) in ds.instances.iter().enumerate() {
                let p = predict_mixture(mm, &inst.features, inst.domain);
                row(i, inst.domain, p.p_general, labels.name(p.label), labels.name(inst.label));
            }
        }
        SavedModel::Chain { model: cm, .. } => {
            let TokenClassifier::Mega(mm) = &cm.classifier else {
                return Err(CliError::Usage("introspect needs a mixture model".into()));
            };
            let ds = parse_sequences_with(open(data)?, &cm.features, &cm.tags).map_err(in_file(data))?;
            let decoded = decode_all(cm, &ds);
            let mut i = 0;
            for (seq, path) in ds.sequences.iter().zip(&decoded) {
                for (t, inst) in featurize_sequence(&cm.prev_features, seq, path)?.iter().enumerate() {
                    let p = predict_mixture(mm, &inst.features, inst.domain);
                    row(i, inst.domain, p.p_general, cm.tags.name(path[t]), cm.tags.name(seq.tags[t]));
                    i += 1;
                }
            }
        }
        SavedModel::Classifier { .. } => {
            return Err(CliError::Usage("introspect needs a mixture model".into()));
        }
    }
    report(&text, out)
}
