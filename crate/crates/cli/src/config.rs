//! Experiment configuration: one TOML file, environment overrides, and the
//! SHA-256 digest stamped on every artifact.

use std::path::{Path, PathBuf};

use acute::agents::{LearnerConfig, StopCriterion};
use acute::curriculum::{lf_target_for, load_hc, AcuteConfig, BeamConfig, CurriculumSource};
use acute::mapping::{AffineMap, NoiseModel};
use acute::metrics::Threshold;
use acute::params::{
    feasible, target_task_params, Fidelity, ParamRanges, TaskParams, Variant, NUM_PARAMS,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Prefix of the environment variables that override top-level keys.
pub const ENV_PREFIX: &str = "ACUTE_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ac,
    Hc,
    Scratch,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Ac => "ac",
            Mode::Hc => "hc",
            Mode::Scratch => "scratch",
        }
    }
}

/// Per-parameter affine coefficients in `width, height, trees, rocks,
/// tables, wood, stone, fires` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub scale: [f64; NUM_PARAMS],
    pub offset: [f64; NUM_PARAMS],
}

impl Default for MapConfig {
    fn default() -> Self {
        let mut scale = [1.0; NUM_PARAMS];
        scale[0] = 0.4;
        scale[1] = 0.4;
        MapConfig {
            scale,
            offset: [0.0; NUM_PARAMS],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Episodes averaged by the jumpstart metric.
    pub jumpstart_episodes: usize,
    pub threshold: Threshold,
    /// Checkpoints in the aggregate curves.
    pub grid_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            jumpstart_episodes: 100,
            threshold: Threshold::default(),
            grid_points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Method label in CSV outputs; defaults to the mode.
    pub name: Option<String>,
    pub seed: u64,
    pub trials: usize,
    pub out_dir: PathBuf,
    pub variant: Variant,
    pub mode: Mode,
    pub hc_path: Option<PathBuf>,
    pub noise: bool,
    /// Continuous-world target; defaults to the image of the standard grid
    /// target under `map`.
    pub target: Option<TaskParams>,
    pub map: MapConfig,
    pub beam: BeamConfig,
    pub stop_lf: StopCriterion,
    pub stop_hf: StopCriterion,
    pub lf_learner: LearnerConfig,
    pub hf_learner: LearnerConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: None,
            seed: 0,
            trials: 10,
            out_dir: PathBuf::from("runs/default"),
            variant: Variant::Plain,
            mode: Mode::Ac,
            hc_path: None,
            noise: false,
            target: None,
            map: MapConfig::default(),
            beam: BeamConfig::default(),
            stop_lf: StopCriterion::default(),
            stop_hf: StopCriterion::default(),
            lf_learner: LearnerConfig::default(),
            hf_learner: LearnerConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn invalid(path: &str, rule: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.into(),
        rule: rule.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("byte {}", s.start))
                .unwrap_or_else(|| "<file>".into());
            invalid(&path, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(&path.display().to_string(), e.to_string()))?;
        let mut cfg = ExperimentConfig::parse(&text)?;
        // a curriculum file named in a config is found next to it
        if let (Some(hc), Some(dir)) = (&cfg.hc_path, path.parent()) {
            if hc.is_relative() {
                cfg.hc_path = Some(dir.join(hc));
            }
        }
        Ok(cfg)
    }

    /// Applies `ACUTE_<KEY>` overrides for the top-level scalar keys.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), CliError> {
        fn parsed<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
            v.parse()
                .map_err(|_| invalid(key, format!("cannot parse {v:?}")))
        }
        let key = |k: &str| format!("{ENV_PREFIX}{k}");
        if let Some(v) = var(&key("SEED")) {
            self.seed = parsed(&key("SEED"), &v)?;
        }
        if let Some(v) = var(&key("TRIALS")) {
            self.trials = parsed(&key("TRIALS"), &v)?;
        }
        if let Some(v) = var(&key("OUT_DIR")) {
            self.out_dir = PathBuf::from(v);
        }
        if let Some(v) = var(&key("NOISE")) {
            self.noise = parsed(&key("NOISE"), &v)?;
        }
        if let Some(v) = var(&key("NAME")) {
            self.name = Some(v);
        }
        if let Some(v) = var(&key("HC_PATH")) {
            self.hc_path = Some(PathBuf::from(v));
        }
        if let Some(v) = var(&key("MODE")) {
            self.mode = match v.as_str() {
                "ac" => Mode::Ac,
                "hc" => Mode::Hc,
                "scratch" => Mode::Scratch,
                _ => return Err(invalid(&key("MODE"), "expected ac, hc or scratch")),
            };
        }
        Ok(())
    }

    pub fn method(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.mode.label().to_string())
    }

    /// Checks every rule and derives the run inputs.
    pub fn resolve(&self) -> Result<Experiment, CliError> {
        if self
            .name
            .as_deref()
            .is_some_and(|n| n.is_empty() || n.contains([',', '=', '\n', '\r']))
        {
            return Err(invalid(
                "name",
                "must be non-empty without commas, '=' or line breaks",
            ));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        self.beam
            .validate()
            .map_err(|e| invalid("beam", e.to_string()))?;
        self.stop_lf
            .validate()
            .map_err(|e| invalid("stop_lf", e.to_string()))?;
        self.stop_hf
            .validate()
            .map_err(|e| invalid("stop_hf", e.to_string()))?;
        self.lf_learner
            .validate()
            .map_err(|e| invalid("lf_learner", e.to_string()))?;
        self.hf_learner
            .validate()
            .map_err(|e| invalid("hf_learner", e.to_string()))?;
        if self.eval.jumpstart_episodes == 0 {
            return Err(invalid("eval.jumpstart_episodes", "must be at least 1"));
        }
        match self.eval.threshold {
            Threshold::SuccessRate { delta, window } => {
                if !(delta > 0.0 && delta <= 1.0) || window == 0 {
                    return Err(invalid(
                        "eval.threshold",
                        "success rate needs delta in (0, 1] and window >= 1",
                    ));
                }
            }
            Threshold::MeanReturn { delta, window } => {
                if !delta.is_finite() || window == 0 {
                    return Err(invalid(
                        "eval.threshold",
                        "mean return needs a finite delta and window >= 1",
                    ));
                }
            }
        }

        // the inverse map needs no ranges, so a provisional map finds the
        // grid target first and the real ranges follow from it
        let provisional = AffineMap::new(
            self.map.scale,
            self.map.offset,
            ParamRanges::lf_default(self.variant),
        )
        .map_err(|e| invalid("map", e.to_string()))?;
        provisional
            .check_invertible()
            .map_err(|e| invalid("map.scale", e.to_string()))?;
        let hf_target = self
            .target
            .unwrap_or_else(|| provisional.forward(&target_task_params(self.variant)));
        if !feasible(&hf_target, Fidelity::High) {
            return Err(invalid("target", "infeasible in the continuous world"));
        }
        let lf_target = lf_target_for(&hf_target, &provisional)
            .map_err(|e| invalid("target", e.to_string()))?;
        if !feasible(&lf_target, Fidelity::Low) {
            return Err(invalid(
                "target",
                "its grid-world counterpart is infeasible",
            ));
        }
        let map = AffineMap::new(
            self.map.scale,
            self.map.offset,
            ParamRanges::for_target(&lf_target, self.variant),
        )
        .map_err(|e| invalid("map", e.to_string()))?;

        let source = match self.mode {
            Mode::Ac => CurriculumSource::Ac,
            Mode::Scratch => CurriculumSource::Scratch,
            Mode::Hc => {
                let path = self
                    .hc_path
                    .as_ref()
                    .ok_or_else(|| invalid("hc_path", "required when mode = \"hc\""))?;
                CurriculumSource::Hc(
                    load_hc(path, &lf_target).map_err(|e| invalid("hc_path", e.to_string()))?,
                )
            }
        };
        let noise = self.noise.then(|| NoiseModel::from_ranges(&map.hf_ranges));
        let hash = self.digest(&source);
        Ok(Experiment {
            config: self.clone(),
            hf_target,
            lf_target,
            map,
            noise,
            source,
            acute: AcuteConfig {
                beam: self.beam,
                stop_lf: self.stop_lf,
                stop_hf: self.stop_hf,
                lf_learner: self.lf_learner,
                hf_learner: self.hf_learner,
            },
            hash,
        })
    }

    /// SHA-256 over everything that can change an artifact's bytes: the
    /// config without its output directory, plus the curriculum file contents.
    fn digest(&self, source: &CurriculumSource) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        canonical.hc_path = None;
        let body = serde_json::json!({ "config": canonical, "source": source });
        hex::encode(Sha256::digest(
            serde_json::to_vec(&body).expect("serializable"),
        ))
    }
}

/// A validated config with its derived targets, map and digest.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hf_target: TaskParams,
    pub lf_target: TaskParams,
    pub map: AffineMap,
    pub noise: Option<NoiseModel>,
    pub source: CurriculumSource,
    pub acute: AcuteConfig,
    pub hash: String,
}
