use std::fmt;
use std::io::Write;
use std::time::Instant;

use super::bound::{e_step, log_posterior, neg_conditional_log_likelihood, q_bound};
use super::mstep::{m_step_lambda, m_step_pi, m_step_psi};
use super::{Component, DomainData, MegaHyperparams, MegaModel};
use crate::corpus::{information_gain_of, rank_top, Domain, BIAS_INDEX};
use crate::{Error, Result};

/// Maximization block of one CEM iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Pi,
    Lambda,
    Psi,
}

impl Block {
    pub fn as_str(self) -> &'static str {
        match self {
            Block::Pi => "pi",
            Block::Lambda => "lambda",
            Block::Psi => "psi",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Diagnostics recorded after one maximization block.
#[derive(Clone, Debug, PartialEq)]
pub struct CemRecord {
    /// 1-based CEM iteration.
    pub iteration: usize,
    pub block: Block,
    /// Bound on the change in penalized conditional log-likelihood since
    /// the start of the iteration.
    pub q: f64,
    pub neg_cll: f64,
    pub log_posterior: f64,
    /// Seconds since training started.
    pub elapsed: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CemTrace {
    pub records: Vec<CemRecord>,
    /// Penalized conditional log-posterior before the first iteration and
    /// after each completed one.
    pub objective: Vec<f64>,
    /// Largest parameter change per iteration.
    pub deltas: Vec<f64>,
    pub converged: bool,
}

impl CemTrace {
    pub fn iterations(&self) -> usize {
        self.deltas.len()
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration\tblock\tq\tneg_cll\tlog_posterior\telapsed")?;
        for r in &self.records {
            writeln!(
                w,
                "{}\t{}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.6}",
                r.iteration, r.block, r.q, r.neg_cll, r.log_posterior, r.elapsed
            )?;
        }
        Ok(())
    }
}

/// Trains the mixture from the standard initialization.
pub fn train_cem(data: &DomainData, hyper: MegaHyperparams) -> Result<(MegaModel, CemTrace)> {
    hyper.validate()?;
    let mut model = MegaModel::initial(data.num_labels, data.num_features, hyper);
    if let Some(k) = model.hyper.nb_top_k {
        let mut ig = information_gain_of(data.in_domain.iter().chain(&data.out_domain), data.num_features);
        if let Some(bias) = ig.get_mut(BIAS_INDEX) {
            *bias = f64::NEG_INFINITY;
        }
        let mut mask = vec![false; data.num_features];
        for f in rank_top(&ig, k).into_iter().filter(|&f| f != BIAS_INDEX) {
            mask[f] = true;
        }
        model.nb_mask = mask;
    }
    train_cem_from(data, model)
}

/// Runs CEM iterations starting from `model`.
pub fn train_cem_from(data: &DomainData, mut model: MegaModel) -> Result<(MegaModel, CemTrace)> {
    model.validate()?;
    if data.num_labels != model.num_labels() || data.num_features != model.num_features() {
        return Err(Error::Dimension("model and data shapes differ".into()));
    }
    if data.in_domain.is_empty() && data.out_domain.is_empty() {
        return Err(Error::invalid("no training data"));
    }
    let start = Instant::now();
    let mut trace = CemTrace {
        objective: vec![log_posterior(&model, data)],
        ..Default::default()
    };
    for iteration in 1..=model.hyper.max_iterations {
        let prev = model.clone();
        let resp = e_step(&prev, data);
        let mut record = |m: &MegaModel, block: Block| {
            trace.records.push(CemRecord {
                iteration,
                block,
                q: q_bound(m, &prev, &resp, data),
                neg_cll: neg_conditional_log_likelihood(m, data),
                log_posterior: log_posterior(m, data),
                elapsed: start.elapsed().as_secs_f64(),
            });
        };

        for d in [Domain::In, Domain::Out] {
            let pi = m_step_pi(&model, &resp, data, d);
            model.set_pi(d, pi);
        }
        record(&model, Block::Pi);

        for c in Component::ALL {
            model.lambda[c.index()] = m_step_lambda(&model, &resp, data, c)?;
        }
        record(&model, Block::Lambda);

        for c in Component::ALL {
            model.psi[c.index()] = m_step_psi(&model, &resp, data, c);
        }
        record(&model, Block::Psi);

        if model.lambda.iter().any(|l| l.values().iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric(format!("non-finite weights in iteration {iteration}")));
        }
        let delta = model.max_delta(&prev);
        trace.objective.push(trace.records.last().map_or(f64::NAN, |r| r.log_posterior));
        trace.deltas.push(delta);
        if delta < model.hyper.convergence_tolerance {
            trace.converged = true;
            break;
        }
    }
    Ok((model, trace))
}
