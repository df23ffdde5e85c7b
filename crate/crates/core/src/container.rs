//! Versioned plain-text model files.
//!
//! ```text
//! megadapt-model 1
//! kind megam
//! alphabet features 3
//! **bias**
//! ...
//! scalar pi_in 0.25
//! vector psi.general 3 0.5 0.1 0.9
//! matrix lambda.in 2 3
//! 0.1 -0.2 0.0
//! 0.4 0.0 1.5
//! end
//! ```
//!
//! Reals are written in shortest round-trip form, so reading a file back
//! reproduces every parameter bit for bit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::baselines::{BaselineKind, BaselinePredictor};
use crate::chain::{ChainModel, TokenClassifier};
use crate::corpus::Alphabet;
use crate::maxent::MaxentWeights;
use crate::mega::{Component, MegaHyperparams, MegaModel};
use crate::optim::LbfgsConfig;
use crate::system::{SystemKind, TrainedSystem};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "megadapt-model";

/// A model with the alphabets needed to read data for it.
#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Classifier {
        system: TrainedSystem,
        features: Alphabet,
        labels: Alphabet,
    },
    Chain {
        kind: SystemKind,
        model: ChainModel,
    },
}

impl SavedModel {
    pub fn kind(&self) -> SystemKind {
        match self {
            SavedModel::Classifier {
                system: TrainedSystem::Mega { .. },
                ..
            } => SystemKind::MegaM,
            SavedModel::Classifier {
                system: TrainedSystem::Baseline(p),
                ..
            } => SystemKind::Baseline(p.kind),
            SavedModel::Chain { kind, .. } => *kind,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Entry {
    Alphabet(Vec<String>),
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(MaxentWeights),
}

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn alphabet(&mut self, name: &str, a: &Alphabet) -> Result<()> {
        writeln!(self.out, "alphabet {name} {}", a.len())?;
        for n in a.names() {
            writeln!(self.out, "{n}")?;
        }
        Ok(())
    }

    fn scalar(&mut self, name: &str, v: f64) -> Result<()> {
        writeln!(self.out, "scalar {name} {v:?}")?;
        Ok(())
    }

    fn vector(&mut self, name: &str, v: &[f64]) -> Result<()> {
        write!(self.out, "vector {name} {}", v.len())?;
        for x in v {
            write!(self.out, " {x:?}")?;
        }
        writeln!(self.out)?;
        Ok(())
    }

    fn matrix(&mut self, name: &str, m: &MaxentWeights) -> Result<()> {
        writeln!(self.out, "matrix {name} {} {}", m.num_labels(), m.num_features())?;
        for y in 0..m.num_labels() {
            let row: Vec<String> = m.row(y).iter().map(|x| format!("{x:?}")).collect();
            writeln!(self.out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    fn mega(&mut self, m: &MegaModel) -> Result<()> {
        let h = &m.hyper;
        self.scalar("sigma2", h.sigma2)?;
        self.scalar("beta_a", h.beta_a)?;
        self.scalar("beta_b", h.beta_b)?;
        self.scalar("max_iterations", h.max_iterations as f64)?;
        self.scalar("convergence_tolerance", h.convergence_tolerance)?;
        self.scalar("psi_max_sweeps", h.psi_max_sweeps as f64)?;
        self.scalar("psi_tolerance", h.psi_tolerance)?;
        self.scalar("nb_top_k", h.nb_top_k.map_or(0.0, |k| k as f64))?;
        self.scalar("pi_in", m.pi_in)?;
        self.scalar("pi_out", m.pi_out)?;
        let mask: Vec<f64> = m.nb_mask.iter().map(|&b| f64::from(u8::from(b))).collect();
        self.vector("nb_mask", &mask)?;
        for c in Component::ALL {
            self.matrix(&format!("lambda.{}", c.name()), m.lambda(c))?;
        }
        for c in Component::ALL {
            self.vector(&format!("psi.{}", c.name()), m.psi(c))?;
        }
        Ok(())
    }
}

/// Writes a model file.
pub fn write_model<W: Write>(out: W, model: &SavedModel) -> Result<()> {
    let mut w = Writer { out };
    writeln!(w.out, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(w.out, "kind {}", model.kind())?;
    match model {
        SavedModel::Classifier {
            system,
            features,
            labels,
        } => {
            w.alphabet("features", features)?;
            w.alphabet("labels", labels)?;
            match system {
                TrainedSystem::Mega { model, .. } => w.mega(model)?,
                TrainedSystem::Baseline(p) => {
                    w.scalar("alpha", p.alpha)?;
                    w.scalar("sigma2", p.sigma2)?;
                    w.matrix("weights", &p.weights)?;
                    if let Some(aux) = &p.aux {
                        w.matrix("aux", aux)?;
                    }
                }
            }
        }
        SavedModel::Chain { model, .. } => {
            w.alphabet("features", &model.features)?;
            w.alphabet("labels", &model.tags)?;
            let prev: Vec<f64> = model.prev_features.iter().map(|&f| f as f64).collect();
            w.vector("prev_features", &prev)?;
            match &model.classifier {
                TokenClassifier::Maxent(m) => w.matrix("weights", m)?,
                TokenClassifier::Mega(m) => w.mega(m)?,
            }
        }
    }
    writeln!(w.out, "end")?;
    Ok(())
}

struct Parsed {
    entries: BTreeMap<String, Entry>,
}

impl Parsed {
    fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing entry {name:?}")))
    }

    fn alphabet(&self, name: &str) -> Result<Alphabet> {
        match self.get(name)? {
            Entry::Alphabet(v) => Ok(Alphabet::from_names(v)),
            _ => Err(Error::Format(format!("{name} is not an alphabet"))),
        }
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        match self.get(name)? {
            Entry::Scalar(v) => Ok(*v),
            _ => Err(Error::Format(format!("{name} is not a scalar"))),
        }
    }

    fn count(&self, name: &str) -> Result<usize> {
        let v = self.scalar(name)?;
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Format(format!("{name} must be a non-negative integer")))
        }
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        match self.get(name)? {
            Entry::Vector(v) => Ok(v.clone()),
            _ => Err(Error::Format(format!("{name} is not a vector"))),
        }
    }

    fn matrix(&self, name: &str) -> Result<MaxentWeights> {
        match self.get(name)? {
            Entry::Matrix(m) => Ok(m.clone()),
            _ => Err(Error::Format(format!("{name} is not a matrix"))),
        }
    }

    fn mega(&self) -> Result<MegaModel> {
        let k = self.count("nb_top_k")?;
        let hyper = MegaHyperparams {
            sigma2: self.scalar("sigma2")?,
            beta_a: self.scalar("beta_a")?,
            beta_b: self.scalar("beta_b")?,
            max_iterations: self.count("max_iterations")?,
            convergence_tolerance: self.scalar("convergence_tolerance")?,
            psi_max_sweeps: self.count("psi_max_sweeps")?,
            psi_tolerance: self.scalar("psi_tolerance")?,
            nb_top_k: (k > 0).then_some(k),
            lbfgs: LbfgsConfig::default(),
        };
        let lambda = [
            self.matrix("lambda.in")?,
            self.matrix("lambda.out")?,
            self.matrix("lambda.general")?,
        ];
        let psi = [
            self.vector("psi.in")?,
            self.vector("psi.out")?,
            self.vector("psi.general")?,
        ];
        let model = MegaModel {
            lambda,
            psi,
            pi_in: self.scalar("pi_in")?,
            pi_out: self.scalar("pi_out")?,
            nb_mask: self.vector("nb_mask")?.iter().map(|&v| v != 0.0).collect(),
            hyper,
        };
        model.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(model)
    }
}

fn parse_reals<'a, I: Iterator<Item = &'a str>>(it: I, line: usize) -> Result<Vec<f64>> {
    it.map(|t| t.parse::<f64>().map_err(|_| Error::parse(line, format!("bad number {t:?}"))))
        .collect()
}

/// Reads a model file written by [`write_model`].
pub fn read_model<R: BufRead>(input: R) -> Result<SavedModel> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(Error::Format(format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, header) = next("header")?;
    match header.split_whitespace().collect::<Vec<_>>()[..] {
        [MAGIC, v] if v == FORMAT_VERSION.to_string() => {}
        [MAGIC, v] => return Err(Error::Format(format!("unsupported model version {v}"))),
        _ => return Err(Error::parse(n, "not a model file")),
    }
    let (n, kind_line) = next("kind")?;
    let kind: SystemKind = kind_line
        .strip_prefix("kind ")
        .ok_or_else(|| Error::parse(n, "expected kind"))?
        .trim()
        .parse()?;
    let mut parsed = Parsed {
        entries: BTreeMap::new(),
    };
    loop {
        let (n, line) = next("entry or end")?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        let entry = match tok.as_slice() {
            ["end"] => break,
            ["alphabet", name, len] => {
                let len: usize = len.parse().map_err(|_| Error::parse(n, "bad alphabet size"))?;
                let names = (0..len)
                    .map(|_| next("alphabet entry").map(|(_, l)| l))
                    .collect::<Result<Vec<_>>>()?;
                (name.to_string(), Entry::Alphabet(names))
            }
            ["scalar", name, v] => (name.to_string(), Entry::Scalar(parse_reals([*v].into_iter(), n)?[0])),
            ["vector", name, len, rest @ ..] => {
                let v = parse_reals(rest.iter().copied(), n)?;
                if len.parse::<usize>().ok() != Some(v.len()) {
                    return Err(Error::parse(n, "vector length mismatch"));
                }
                (name.to_string(), Entry::Vector(v))
            }
            ["matrix", name, rows, cols] => {
                let bad = || Error::parse(n, "bad matrix shape");
                let rows: usize = rows.parse().map_err(|_| bad())?;
                let cols: usize = cols.parse().map_err(|_| bad())?;
                let mut values = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (rn, row) = next("matrix row")?;
                    let r = parse_reals(row.split_whitespace(), rn)?;
                    if r.len() != cols {
                        return Err(Error::parse(rn, "matrix row length mismatch"));
                    }
                    values.extend(r);
                }
                (name.to_string(), Entry::Matrix(MaxentWeights::from_values(rows, cols, values)?))
            }
            _ => return Err(Error::parse(n, format!("unrecognized line {line:?}"))),
        };
        parsed.entries.insert(entry.0, entry.1);
    }
    let features = parsed.alphabet("features")?;
    let labels = parsed.alphabet("labels")?;
    let model = match kind {
        SystemKind::MegaM => SavedModel::Classifier {
            system: TrainedSystem::Mega {
                model: parsed.mega()?,
                trace: Default::default(),
            },
            features,
            labels,
        },
        SystemKind::Baseline(k) => {
            let weights = parsed.matrix("weights")?;
            let aux = match k {
                BaselineKind::LinI | BaselineKind::Feats => Some(parsed.matrix("aux")?),
                _ => None,
            };
            SavedModel::Classifier {
                system: TrainedSystem::Baseline(BaselinePredictor {
                    kind: k,
                    weights,
                    aux,
                    alpha: parsed.scalar("alpha")?,
                    sigma2: parsed.scalar("sigma2")?,
                }),
                features,
                labels,
            }
        }
        SystemKind::Memm | SystemKind::MegaMemm => {
            let classifier = if kind == SystemKind::Memm {
                TokenClassifier::Maxent(parsed.matrix("weights")?)
            } else {
                TokenClassifier::Mega(parsed.mega()?)
            };
            let prev_features = parsed
                .vector("prev_features")?
                .into_iter()
                .map(|v| v as usize)
                .collect();
            SavedModel::Chain {
                kind,
                model: ChainModel {
                    classifier,
                    features,
                    tags: labels,
                    prev_features,
                },
            }
        }
    };
    check_shapes(&model)?;
    Ok(model)
}

fn check_shapes(model: &SavedModel) -> Result<()> {
    let (nf, nl, w) = match model {
        SavedModel::Classifier {
            system,
            features,
            labels,
        } => {
            let w = match system {
                TrainedSystem::Mega { model, .. } => model.lambda(Component::General).clone(),
                TrainedSystem::Baseline(p) => {
                    if p.kind == BaselineKind::Feats {
                        // stacked weights cover the label indicators too
                        let aux = p.aux.as_ref().map_or(0, MaxentWeights::num_features);
                        if p.weights.num_features() != aux + p.weights.num_labels() {
                            return Err(Error::Format("stacked weight width".into()));
                        }
                    }
                    p.aux.clone().unwrap_or_else(|| p.weights.clone())
                }
            };
            (features.len(), labels.len(), w)
        }
        SavedModel::Chain { model, .. } => {
            if model.prev_features.len() != model.tags.len() + 1
                || model.prev_features.iter().any(|&f| f >= model.features.len())
            {
                return Err(Error::Format("previous-tag feature table".into()));
            }
            let w = match &model.classifier {
                TokenClassifier::Maxent(m) => m.clone(),
                TokenClassifier::Mega(m) => m.lambda(Component::General).clone(),
            };
            (model.features.len(), model.tags.len(), w)
        }
    };
    if w.num_features() != nf || w.num_labels() != nl {
        return Err(Error::Format(format!(
            "weights are {}x{} but alphabets give {nl}x{nf}",
            w.num_labels(),
            w.num_features()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{train_baseline, BaselineConfig};
    use crate::mega::testutil::random_state;

    fn alphabets(nl: usize, nf: usize) -> (Alphabet, Alphabet) {
        let mut f = Alphabet::with_bias();
        for i in 1..nf {
            f.intern(&format!("w{i}"));
        }
        (f, Alphabet::from_names((0..nl).map(|y| format!("c{y}"))))
    }

    fn roundtrip(m: &SavedModel) -> SavedModel {
        let mut buf = Vec::new();
        write_model(&mut buf, m).unwrap();
        read_model(buf.as_slice()).unwrap()
    }

    #[test]
    fn mega_model_roundtrips_exactly() {
        let (model, _) = random_state(3, 3, 6, 1, 1);
        let (features, labels) = alphabets(3, 6);
        let saved = SavedModel::Classifier {
            system: TrainedSystem::Mega {
                model,
                trace: Default::default(),
            },
            features,
            labels,
        };
        assert_eq!(roundtrip(&saved), saved);
    }

    #[test]
    fn every_baseline_roundtrips() {
        let (_, data) = random_state(4, 3, 6, 30, 30);
        let (features, labels) = alphabets(3, 6);
        for k in BaselineKind::ALL {
            let p = train_baseline(k, &data, &BaselineConfig::with_sigma2(1.0)).unwrap();
            // Feats keeps the input alphabet; its stacked columns sit past it
            let saved = SavedModel::Classifier {
                system: TrainedSystem::Baseline(p),
                features: features.clone(),
                labels: labels.clone(),
            };
            assert_eq!(roundtrip(&saved), saved);
        }
    }

    #[test]
    fn rejects_bad_headers_and_versions() {
        assert!(read_model("hello\n".as_bytes()).is_err());
        assert!(read_model("megadapt-model 9\nkind onlyi\nend\n".as_bytes()).is_err());
        assert!(read_model("megadapt-model 1\nkind onlyi\nscalar x 1\n".as_bytes()).is_err());
    }
}
