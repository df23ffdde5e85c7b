//! `key=value` run settings. A config file is read first, then `--set`
//! flags are applied on top.

use std::path::Path;

use megadapt::system::SystemConfig;

/// Settings shared by the training subcommands.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub seed: u64,
}

pub const KEYS: &[&str] = &[
    "sigma2",
    "beta_a",
    "beta_b",
    "max_iterations",
    "convergence_tolerance",
    "psi_max_sweeps",
    "psi_tolerance",
    "nb_top_k",
    "baseline_sigma2",
    "baseline_alpha",
    "dev_fraction",
    "lbfgs_max_iterations",
    "lbfgs_tolerance",
    "seed",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("bad value {value:?} for {key}"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let s = &mut self.system;
        match key.trim() {
            "sigma2" => {
                let v = num(key, value)?;
                s.mega.sigma2 = v;
                s.chain.sigma2 = v;
            }
            "beta_a" => s.mega.beta_a = num(key, value)?,
            "beta_b" => s.mega.beta_b = num(key, value)?,
            "max_iterations" => s.mega.max_iterations = num(key, value)?,
            "convergence_tolerance" => s.mega.convergence_tolerance = num(key, value)?,
            "psi_max_sweeps" => s.mega.psi_max_sweeps = num(key, value)?,
            "psi_tolerance" => s.mega.psi_tolerance = num(key, value)?,
            "nb_top_k" => {
                let k: usize = num(key, value)?;
                s.mega.nb_top_k = (k > 0).then_some(k);
            }
            "baseline_sigma2" => s.baseline.sigma2 = Some(num(key, value)?),
            "baseline_alpha" => s.baseline.alpha = Some(num(key, value)?),
            "dev_fraction" => s.baseline.dev_fraction = num(key, value)?,
            "lbfgs_max_iterations" => {
                let v = num(key, value)?;
                s.mega.lbfgs.max_iterations = v;
                s.baseline.lbfgs.max_iterations = v;
                s.chain.lbfgs.max_iterations = v;
            }
            "lbfgs_tolerance" => {
                let v = num(key, value)?;
                s.mega.lbfgs.gradient_tolerance = v;
                s.baseline.lbfgs.gradient_tolerance = v;
                s.chain.lbfgs.gradient_tolerance = v;
            }
            "seed" => {
                self.seed = num(key, value)?;
                s.baseline.seed = self.seed;
            }
            other => {
                return Err(format!(
                    "unknown config key {other:?} (known: {})",
                    KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
            self.set(k, v).map_err(|e| format!("config line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    /// File first, then each `key=value` override.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, String> {
        let mut cfg = RunConfig::default();
        if let Some(p) = file {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| format!("--set expects key=value, got {o:?}"))?;
            cfg.set(k, v)?;
        }
        cfg.system
            .mega
            .validate()
            .map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}
