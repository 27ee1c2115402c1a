//! Run configuration: a flat TOML file of `key = value` lines.
//!
//! `experiment` picks which other keys are allowed. Anything not listed for
//! that experiment is rejected, as is any key the parser does not know.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spiking_nsm::learning::WeightInit;
use spiking_nsm::{
    EarlyStop, Hyperparams, LearningSchedule, ResetRule, Solver, SolverConfig, TrainOptions,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Random per-sample subproblems, spiking and rate solvers vs the oracle.
    Bench,
    /// Feature extraction from an IDX image file or the synthetic digits.
    Features,
    /// Tiling of the synthetic ring manifold.
    Manifold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Idx,
    Stroke,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,

    pub tau_end: Option<f64>,
    pub dtau: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub reset: Option<String>,
    pub early_stop_window: Option<f64>,
    pub early_stop_tol: Option<f64>,

    pub ks: Option<Vec<usize>>,
    pub instances: Option<usize>,
    pub aunn_dtau: Option<f64>,
    pub control: Option<bool>,
    pub max_retries: Option<usize>,
    pub oracle_k: Option<usize>,
    pub oracle_instance: Option<usize>,

    pub alpha: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub k: Option<usize>,
    pub solver: Option<String>,
    pub steps: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub probe_size: Option<usize>,
    pub schedule: Option<Vec<(usize, f64)>>,
    pub final_eta: Option<f64>,
    pub w_init: Option<String>,
    pub w_scale: Option<f64>,

    pub dataset: Option<DatasetKind>,
    pub idx_path: Option<PathBuf>,
    pub images: Option<usize>,
    pub scale: Option<f64>,
    pub patch: Option<usize>,
    pub patches: Option<usize>,
    pub whiten_eps: Option<f64>,

    pub ring_t: Option<usize>,
    pub ring_n: Option<usize>,
    pub ring_width: Option<f64>,

    pub tile_rows: Option<usize>,
    pub tile_cols: Option<usize>,
    pub grid_cols: Option<usize>,
}

const COMMON_KEYS: &[&str] = &[
    "experiment", "seed", "out", "tau_end", "dtau", "max_iters", "tol", "reset",
    "early_stop_window", "early_stop_tol",
];
const BENCH_KEYS: &[&str] = &[
    "ks", "instances", "aunn_dtau", "control", "max_retries", "oracle_k", "oracle_instance",
];
const TRAIN_KEYS: &[&str] = &[
    "alpha", "lambda1", "lambda2", "k", "solver", "steps", "checkpoint_every", "probe_size",
    "schedule", "final_eta", "w_init", "w_scale", "tile_rows", "tile_cols", "grid_cols",
];
const FEATURE_KEYS: &[&str] = &[
    "dataset", "idx_path", "images", "scale", "patch", "patches", "whiten_eps",
];
const MANIFOLD_KEYS: &[&str] = &["ring_t", "ring_n", "ring_width"];
const REQUIRED_TRAIN: &[&str] = &["alpha", "lambda1", "lambda2", "k", "steps"];

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = text.parse().map_err(|e| config_err(format!("{e}")))?;
        let cfg: RunConfig = table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        let experiment = cfg.experiment.ok_or_else(|| config_err("missing key `experiment`"))?;
        let allowed: BTreeSet<&str> = COMMON_KEYS
            .iter()
            .chain(match experiment {
                Experiment::Bench => BENCH_KEYS.iter(),
                Experiment::Features => TRAIN_KEYS.iter(),
                Experiment::Manifold => TRAIN_KEYS.iter(),
            })
            .chain(match experiment {
                Experiment::Bench => [].iter(),
                Experiment::Features => FEATURE_KEYS.iter(),
                Experiment::Manifold => MANIFOLD_KEYS.iter(),
            })
            .copied()
            .collect();
        if let Some(key) = table.keys().find(|k| !allowed.contains(k.as_str())) {
            return Err(config_err(format!(
                "key `{key}` does not apply to experiment `{}`",
                experiment.name()
            )));
        }
        if experiment != Experiment::Bench {
            if let Some(key) = REQUIRED_TRAIN.iter().find(|k| !table.contains_key(**k)) {
                return Err(config_err(format!("missing key `{key}`")));
            }
        }
        if experiment == Experiment::Features {
            match cfg.dataset {
                None => return Err(config_err("missing key `dataset`")),
                Some(DatasetKind::Idx) if cfg.idx_path.is_none() => {
                    return Err(config_err("dataset `idx` needs `idx_path`"))
                }
                Some(DatasetKind::Stroke) if cfg.images.is_none() => {
                    return Err(config_err("dataset `stroke` needs `images`"))
                }
                _ => {}
            }
            if cfg.patch.is_some() != cfg.patches.is_some() {
                return Err(config_err("`patch` and `patches` go together"));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fills every default so the written copy documents the whole run.
    pub fn resolved(&self) -> CliResult<Self> {
        let mut c = self.clone();
        let experiment = self.experiment()?;
        c.seed.get_or_insert(0);
        c.tau_end.get_or_insert(500.0);
        c.dtau.get_or_insert(0.01);
        c.max_iters.get_or_insert(100_000);
        c.tol.get_or_insert(1e-10);
        c.reset.get_or_insert_with(|| "subtract".into());
        match experiment {
            Experiment::Bench => {
                c.ks.get_or_insert_with(|| vec![2, 4, 8, 16, 32]);
                c.instances.get_or_insert(20);
                c.aunn_dtau.get_or_insert(0.001);
                c.control.get_or_insert(true);
                c.max_retries.get_or_insert(100_000);
                let first_k = c.ks.as_ref().and_then(|ks| ks.first().copied()).unwrap_or(2);
                c.oracle_k.get_or_insert(first_k);
                c.oracle_instance.get_or_insert(0);
            }
            Experiment::Features | Experiment::Manifold => {
                c.solver.get_or_insert_with(|| "snn".into());
                c.probe_size.get_or_insert(500);
                let steps = c.steps.unwrap_or(0);
                c.checkpoint_every.get_or_insert((steps / 10).max(1));
                if c.schedule.is_none() {
                    let recipe = LearningSchedule::feature_recipe();
                    c.schedule = Some(recipe.segments);
                    c.final_eta.get_or_insert(recipe.final_eta);
                }
                c.final_eta.get_or_insert(0.5e-5);
                c.w_init.get_or_insert_with(|| "uniform".into());
                if c.w_scale.is_none() {
                    let k = c.k.unwrap_or(1) as f64;
                    c.w_scale = Some(1.0 / k.sqrt());
                }
                if experiment == Experiment::Features {
                    c.scale.get_or_insert(1.0 / 255.0);
                } else {
                    c.ring_t.get_or_insert(71);
                    c.ring_n.get_or_insert(64);
                    c.ring_width.get_or_insert(0.3);
                }
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are all serializable")
    }

    pub fn experiment(&self) -> CliResult<Experiment> {
        self.experiment.ok_or_else(|| config_err("missing key `experiment`"))
    }

    pub fn require(&self, expected: Experiment, command: &str) -> CliResult<()> {
        let got = self.experiment()?;
        if got != expected {
            return Err(config_err(format!(
                "`{command}` needs experiment `{}`, config has `{}`",
                expected.name(),
                got.name()
            )));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn solver_config(&self) -> CliResult<SolverConfig> {
        let d = SolverConfig::default();
        let reset = match self.reset.as_deref().unwrap_or("subtract") {
            "subtract" => ResetRule::Subtract,
            "zero" => ResetRule::Zero,
            other => {
                return Err(config_err(format!(
                    "reset must be `subtract` or `zero`, got `{other}`"
                )))
            }
        };
        let early_stop = match (self.early_stop_window, self.early_stop_tol) {
            (Some(window), Some(tol)) => Some(EarlyStop { window, tol }),
            (None, None) => None,
            _ => return Err(config_err("`early_stop_window` and `early_stop_tol` go together")),
        };
        let cfg = SolverConfig {
            tau_end: self.tau_end.unwrap_or(d.tau_end),
            dtau: self.dtau.unwrap_or(d.dtau),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol.unwrap_or(d.tol),
            seed: self.seed(),
            h_sample_every: d.h_sample_every,
            early_stop,
            reset,
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn hyperparams(&self) -> CliResult<Hyperparams> {
        let get = |name: &str, v: Option<f64>| v.ok_or_else(|| config_err(format!("missing key `{name}`")));
        Hyperparams::new(
            get("alpha", self.alpha)?,
            get("lambda1", self.lambda1)?,
            get("lambda2", self.lambda2)?,
        )
        .map_err(|e| config_err(e.to_string()))
    }

    pub fn solver(&self) -> CliResult<Solver> {
        self.solver
            .as_deref()
            .unwrap_or("snn")
            .parse()
            .map_err(|e: spiking_nsm::NsmError| config_err(e.to_string()))
    }

    pub fn schedule(&self) -> CliResult<LearningSchedule> {
        let r = self.resolved()?;
        LearningSchedule::new(
            r.schedule.expect("resolved"),
            r.final_eta.expect("resolved"),
        )
        .map_err(|e| config_err(e.to_string()))
    }

    pub fn train_options(&self) -> CliResult<TrainOptions> {
        let r = self.resolved()?;
        let steps = r.steps.ok_or_else(|| config_err("missing key `steps`"))?;
        if steps == 0 {
            return Err(config_err("`steps` must be at least 1"));
        }
        Ok(TrainOptions {
            steps,
            checkpoint_every: r.checkpoint_every.expect("resolved"),
            probe_size: r.probe_size.expect("resolved"),
            seed: r.seed(),
        })
    }

    pub fn weight_init(&self) -> CliResult<WeightInit> {
        let r = self.resolved()?;
        let scale = r.w_scale.expect("resolved");
        match r.w_init.as_deref().expect("resolved") {
            "uniform" => Ok(WeightInit::Uniform { max: scale }),
            "normal" => Ok(WeightInit::Normal { std: scale }),
            other => Err(config_err(format!(
                "w_init must be `uniform` or `normal`, got `{other}`"
            ))),
        }
    }

    pub fn k(&self) -> CliResult<usize> {
        match self.k {
            Some(k) if k >= 1 => Ok(k),
            Some(_) => Err(config_err("`k` must be at least 1")),
            None => Err(config_err("missing key `k`")),
        }
    }
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bench => "bench",
            Experiment::Features => "features",
            Experiment::Manifold => "manifold",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_and_misplaced_keys_rejected() {
        assert!(matches!(RunConfig::parse("experiment = \"bench\"\nbogus = 1\n"), Err(CliError::Config(_))));
        let err = RunConfig::parse("experiment = \"bench\"\nalpha = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("alpha"));
        assert!(RunConfig::parse("seed = 1\n").is_err());
        assert!(RunConfig::parse("experiment = \"ring\"\n").is_err());
    }

    #[test]
    fn required_training_keys() {
        let base = "experiment = \"manifold\"\nalpha = 0.8\nlambda1 = 0.0\nlambda2 = 0.0\nk = 16\n";
        let err = RunConfig::parse(base).unwrap_err();
        assert!(err.to_string().contains("steps"));
        let cfg = RunConfig::parse(&format!("{base}steps = 0\n")).unwrap();
        assert!(cfg.train_options().is_err());
        let cfg = RunConfig::parse(&format!("{base}steps = 10\n")).unwrap();
        assert_eq!(cfg.train_options().unwrap().steps, 10);
        let feat = base.replace("manifold", "features") + "steps = 10\n";
        assert!(RunConfig::parse(&feat).is_err());
        assert!(RunConfig::parse(&format!("{feat}dataset = \"idx\"\n")).is_err());
        assert!(RunConfig::parse(&format!("{feat}dataset = \"stroke\"\nimages = 10\n")).is_ok());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::parse("experiment = \"bench\"\nseed = 3\nks = [2, 4]\n").unwrap();
        let r = cfg.resolved().unwrap();
        assert_eq!(r.instances, Some(20));
        assert_eq!(r.oracle_k, Some(2));
        let back = RunConfig::parse(&r.to_toml()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.resolved().unwrap(), r);
    }

    #[test]
    fn solver_settings() {
        let cfg = RunConfig::parse("experiment = \"bench\"\nreset = \"zero\"\ndtau = 0.005\n").unwrap();
        let s = cfg.solver_config().unwrap();
        assert_eq!(s.reset, ResetRule::Zero);
        assert_eq!(s.dtau, 0.005);
        assert!(RunConfig::parse("experiment = \"bench\"\nreset = \"half\"\n").unwrap().solver_config().is_err());
        assert!(RunConfig::parse("experiment = \"bench\"\nearly_stop_tol = 0.1\n").unwrap().solver_config().is_err());
    }
}
