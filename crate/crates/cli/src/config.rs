use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sacf_core::gate::{GateHyper, DEFAULT_TAU};
use sacf_core::{AugConfig, ExpertHyper, GenConfig, Mode, Split};

pub const SEED_ENV: &str = "SACF_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset_dir: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset_dir: "data".into(),
            model_dir: "models".into(),
            report_dir: "reports".into(),
        }
    }
}

/// Everything a run needs, loaded from one JSON file. Missing fields take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub gen: GenConfig,
    pub expert: ExpertHyper,
    pub gate: GateHyper,
    pub aug: AugConfig,
    pub tau: f64,
    pub modes: Vec<Mode>,
    /// Overrides the generator, expert and gate seeds when set.
    pub seed: Option<u64>,
    pub eval_split: Split,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            gen: GenConfig::default(),
            expert: ExpertHyper::default(),
            gate: GateHyper::default(),
            aug: AugConfig::default(),
            tau: DEFAULT_TAU,
            modes: Mode::ALL.to_vec(),
            seed: None,
            eval_split: Split::Test,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> sacf_core::Result<Self> {
        match path {
            Some(p) => sacf_core::io::read_json(p),
            None => Ok(Self::default()),
        }
    }

    /// Seed precedence: config file, then `SACF_SEED`, then the flag.
    pub fn resolve_seed(&mut self, env: Option<&str>, flag: Option<u64>) -> sacf_core::Result<()> {
        if let Some(v) = env {
            let s = v
                .trim()
                .parse()
                .map_err(|_| sacf_core::Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            self.seed = Some(s);
        }
        if flag.is_some() {
            self.seed = flag;
        }
        if let Some(s) = self.seed {
            self.gen.seed = s;
            self.expert.seed = s;
            self.gate.seed = s;
        }
        Ok(())
    }

    pub fn validate(&self) -> sacf_core::Result<()> {
        self.gen.validate()?;
        self.aug.validate()?;
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(sacf_core::Error::Config(format!("tau = {} must lie in [0, 1]", self.tau)));
        }
        if self.modes.is_empty() {
            return Err(sacf_core::Error::Config("modes must not be empty".into()));
        }
        Ok(())
    }
}
