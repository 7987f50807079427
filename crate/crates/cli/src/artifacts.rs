//! On-disk formats. Every artifact carries the SHA-256 of the config that
//! produced it and the master seed; equal hashes mean equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use acute::agents::{LearnerConfig, MlpParams, StopCriterion};
use acute::curriculum::{BeamConfig, CurriculumResult, CurriculumTask};
use acute::env::Trajectory;
use acute::mapping::AffineMap;
use acute::metrics::{LearningCurve, TimeToThreshold};
use acute::params::{TaskParams, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Mode;
use crate::error::CliError;

pub const MANIFEST_SCHEMA: &str = "acute.curriculum/1";
pub const RUN_SCHEMA: &str = "acute.run/1";
pub const REPLAY_SCHEMA: &str = "acute.replay/1";
pub const CURVE_SCHEMA: &str = "acute.curve/1";
pub const LF_LOG_SCHEMA: &str = "acute.lf_log/1";
pub const METRICS_SCHEMA: &str = "acute.metrics/1";
pub const AGGREGATE_SCHEMA: &str = "acute.aggregate/1";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ACUTECK1";

/// Printed in every manifest so the x-axis convention travels with the data.
pub const ACCOUNTING_NOTE: &str =
    "sunk cost = every grid-world step of every search node plus continuous-world \
                                   source-task steps, summed 1:1 on one timestep axis";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTask {
    pub lf_params: TaskParams,
    /// Noise-free image under the map; the target entry is the configured
    /// continuous-world target.
    pub hf_params: TaskParams,
    pub episodes: usize,
    pub timesteps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCurriculum {
    pub trial: usize,
    pub seed: u64,
    pub sunk_cost_timesteps: usize,
    pub sunk_cost_episodes: usize,
    pub nodes_trained: usize,
    pub tasks: Vec<ManifestTask>,
}

impl TrialCurriculum {
    pub fn to_result(&self) -> CurriculumResult {
        CurriculumResult {
            tasks: self
                .tasks
                .iter()
                .map(|t| CurriculumTask {
                    params: t.lf_params,
                    episodes: t.episodes,
                    timesteps: t.timesteps,
                    converged: t.converged,
                })
                .collect(),
            sunk_cost_timesteps: self.sunk_cost_timesteps,
            sunk_cost_episodes: self.sunk_cost_episodes,
        }
    }
}

/// Grid-world curricula for every trial of one config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub config_sha256: String,
    pub seed: u64,
    pub mode: Mode,
    pub variant: Variant,
    pub accounting: String,
    pub map: AffineMap,
    pub lf_target: TaskParams,
    pub hf_target: TaskParams,
    pub beam: BeamConfig,
    pub lf_learner: LearnerConfig,
    pub stop_lf: StopCriterion,
    pub trials: Vec<TrialCurriculum>,
}

impl Manifest {
    pub fn parse(bytes: &[u8], path: &Path) -> Result<Manifest, CliError> {
        let m: Manifest = serde_json::from_slice(bytes).map_err(|e| CliError::Schema {
            file: path.display().to_string(),
            line: e.line() as u64,
            detail: e.to_string(),
        })?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(CliError::Schema {
                file: path.display().to_string(),
                line: 1,
                detail: format!("expected schema {MANIFEST_SCHEMA}, found {}", m.schema),
            });
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HfTaskSummary {
    pub index: usize,
    pub lf_params: TaskParams,
    pub hf_params: TaskParams,
    pub is_target: bool,
    pub shaping_enabled: bool,
    pub episodes: usize,
    pub timesteps: usize,
    pub converged: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRun {
    pub trial: usize,
    pub seed: u64,
    pub lf_sunk_cost_timesteps: usize,
    pub hf_source_timesteps: usize,
    pub sunk_cost_timesteps: usize,
    pub total_timesteps: usize,
    pub time_to_threshold: TimeToThreshold,
    pub tasks: Vec<HfTaskSummary>,
}

impl TrialRun {
    pub fn target_converged(&self) -> bool {
        self.tasks.last().is_some_and(|t| t.converged)
    }
}

/// Summary of a continuous-world run over all trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub config_sha256: String,
    /// Digest of the manifest bytes the run consumed, if any.
    pub manifest_sha256: Option<String>,
    pub seed: u64,
    pub method: String,
    pub mode: Mode,
    pub noise: bool,
    pub hf_learner: LearnerConfig,
    pub stop_hf: StopCriterion,
    pub trials: Vec<TrialRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub schema: String,
    pub config_sha256: String,
    pub seed: u64,
    pub trial: usize,
    pub success: bool,
    #[serde(rename = "return")]
    pub ret: f64,
    pub trajectory: Trajectory,
}

/// Binary policy: magic, 64 hex bytes of config digest, then seed, trial,
/// input, hidden and output as u64 and the weights as f64, all little-endian.
pub fn encode_checkpoint(hash: &str, seed: u64, trial: usize, p: &MlpParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 64 + 40 + 8 * p.data.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(hash.as_bytes());
    for v in [
        seed,
        trial as u64,
        p.input as u64,
        p.hidden as u64,
        p.output as u64,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&p.to_le_bytes());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_sha256: String,
    pub seed: u64,
    pub trial: usize,
    pub policy: MlpParams,
}

pub fn decode_checkpoint(bytes: &[u8]) -> Option<Checkpoint> {
    let rest = bytes.strip_prefix(CHECKPOINT_MAGIC)?;
    if rest.len() < 64 + 40 {
        return None;
    }
    let config_sha256 = std::str::from_utf8(&rest[..64]).ok()?.to_string();
    let word =
        |i: usize| u64::from_le_bytes(rest[64 + 8 * i..72 + 8 * i].try_into().expect("8 bytes"));
    let (seed, trial) = (word(0), word(1) as usize);
    let (input, hidden, output) = (word(2) as usize, word(3) as usize, word(4) as usize);
    let policy = MlpParams::from_le_bytes(input, hidden, output, &rest[104..])?;
    Some(Checkpoint {
        config_sha256,
        seed,
        trial,
        policy,
    })
}

/// First line of every CSV: `#<schema>,key=value,...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preamble {
    pub schema: String,
    pub fields: BTreeMap<String, String>,
}

impl Preamble {
    pub fn new(schema: &str, fields: &[(&str, String)]) -> Preamble {
        Preamble {
            schema: schema.to_string(),
            fields: fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    pub fn line(&self) -> String {
        let mut s = format!("#{}", self.schema);
        for (k, v) in &self.fields {
            s.push_str(&format!(",{k}={v}"));
        }
        s.push('\n');
        s
    }

    fn parse(line: &str, file: &str) -> Result<Preamble, CliError> {
        let bad = |detail: String| CliError::Schema {
            file: file.to_string(),
            line: 1,
            detail,
        };
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| bad("missing #schema preamble".into()))?;
        let mut parts = body.trim_end().split(',');
        let schema = parts.next().unwrap_or_default().to_string();
        let mut fields = BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| bad(format!("preamble field {p:?} is not key=value")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        Ok(Preamble { schema, fields })
    }

    pub fn get(&self, key: &str) -> &str {
        self.fields.get(key).map(String::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub trial: usize,
    pub task_index: usize,
    pub episode: usize,
    pub cumulative_timesteps: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub success: bool,
    pub length: usize,
    pub is_target: bool,
}

pub const CURVE_HEADER: [&str; 8] = [
    "trial",
    "task_index",
    "episode",
    "cumulative_timesteps",
    "return",
    "success",
    "length",
    "is_target",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfLogRow {
    pub trial: usize,
    pub node: usize,
    pub level: usize,
    /// Empty for first-level nodes.
    pub parent: Option<usize>,
    pub on_path: bool,
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub success: bool,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub trial: usize,
    pub jumpstart: Option<f64>,
    /// Empty when the threshold was never met.
    pub time_to_threshold: Option<usize>,
    pub sunk_cost: usize,
    pub converged: bool,
    pub baseline_time_to_threshold: Option<usize>,
    /// Baseline minus method; positive when the method is faster.
    pub delta_time_to_threshold: Option<i64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub timesteps: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Serializes rows under a preamble line.
pub fn write_csv<T: Serialize>(preamble: &Preamble, rows: &[T]) -> Vec<u8> {
    let mut out = preamble.line().into_bytes();
    let mut w = csv::Writer::from_writer(&mut out);
    for r in rows {
        w.serialize(r).expect("serializable row");
    }
    w.flush().expect("in-memory writer");
    drop(w);
    out
}

/// Parses a CSV written by [`write_csv`], reporting the 1-based file line of
/// the first offending row.
pub fn read_csv<T: for<'de> Deserialize<'de>>(
    bytes: &[u8],
    file: &str,
    schema: &str,
    header: &[&str],
) -> Result<(Preamble, Vec<T>), CliError> {
    let bad = |line: u64, detail: String| CliError::Schema {
        file: file.to_string(),
        line,
        detail,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| bad(1, e.to_string()))?;
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let preamble = Preamble::parse(first, file)?;
    if preamble.schema != schema {
        return Err(bad(
            1,
            format!("expected schema {schema}, found {}", preamble.schema),
        ));
    }
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let found = r.headers().map_err(|e| bad(2, e.to_string()))?.clone();
    if !found.iter().eq(header.iter().copied()) {
        return Err(bad(2, format!("expected header {}", header.join(","))));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.position().map_or(0, |p| p.line() + 1), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() + 1);
        rows.push(
            rec.deserialize(Some(&found))
                .map_err(|e| bad(line, e.to_string()))?,
        );
    }
    Ok((preamble, rows))
}

/// A parsed learning-curve CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub preamble: Preamble,
    pub rows: Vec<CurveRow>,
}

impl CurveFile {
    pub fn parse(bytes: &[u8], file: &str) -> Result<CurveFile, CliError> {
        let (preamble, rows) = read_csv::<CurveRow>(bytes, file, CURVE_SCHEMA, &CURVE_HEADER)?;
        let mut last: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            if let Some(&prev) = last.get(&r.trial) {
                if r.cumulative_timesteps <= prev {
                    return Err(CliError::Schema {
                        file: file.to_string(),
                        line: i as u64 + 3,
                        detail: "cumulative_timesteps must increase within a trial".into(),
                    });
                }
            }
            last.insert(r.trial, r.cumulative_timesteps);
        }
        Ok(CurveFile { preamble, rows })
    }

    pub fn method(&self) -> &str {
        self.preamble.get("method")
    }

    /// Target-task curve of every trial, keyed by trial index.
    pub fn target_curves(&self) -> BTreeMap<usize, LearningCurve> {
        let mut by_trial: BTreeMap<usize, Vec<&CurveRow>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.is_target) {
            by_trial.entry(r.trial).or_default().push(r);
        }
        by_trial
            .into_iter()
            .map(|(trial, rows)| {
                let sunk = rows[0].cumulative_timesteps - rows[0].length;
                let lengths: Vec<usize> = rows.iter().map(|r| r.length).collect();
                let returns: Vec<f64> = rows.iter().map(|r| r.ret).collect();
                let successes: Vec<bool> = rows.iter().map(|r| r.success).collect();
                (
                    trial,
                    LearningCurve::from_episodes(sunk, &lengths, &returns, &successes),
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use acute::agents::MlpParams;

    fn rows() -> Vec<CurveRow> {
        let row = |task_index, episode, t, is_target| CurveRow {
            trial: 0,
            task_index,
            episode,
            cumulative_timesteps: t,
            ret: -5.5,
            success: false,
            length: 10,
            is_target,
        };
        vec![
            row(0, 0, 110, false),
            row(1, 0, 120, true),
            row(1, 1, 130, true),
        ]
    }

    #[test]
    fn curve_csv_round_trip() {
        let pre = Preamble::new(
            CURVE_SCHEMA,
            &[("method", "ac".into()), ("seed", "4".into())],
        );
        let bytes = write_csv(&pre, &rows());
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("#acute.curve/1,method=ac,seed=4\ntrial,task_index,episode,cumulative_timesteps,return,"));
        let f = CurveFile::parse(&bytes, "c.csv").unwrap();
        assert_eq!(f.rows, rows());
        assert_eq!(f.method(), "ac");
        let c = &f.target_curves()[&0];
        assert_eq!(c.sunk_cost_timesteps, 110);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let pre = Preamble::new(CURVE_SCHEMA, &[]);
        let clean = String::from_utf8(write_csv(&pre, &rows())).unwrap();
        let text = format!("{clean}0,2,2,140,oops,false,10,true\n");
        match CurveFile::parse(text.as_bytes(), "c.csv") {
            Err(CliError::Schema { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
        let decreasing = clean.replace("0,1,1,130", "0,1,1,100");
        assert!(matches!(
            CurveFile::parse(decreasing.as_bytes(), "c.csv"),
            Err(CliError::Schema { line: 5, .. })
        ));
        assert!(matches!(
            CurveFile::parse(b"trial\n", "c.csv"),
            Err(CliError::Schema { line: 1, .. })
        ));
        let wrong_header = "#acute.curve/1\ntrial,episode\n";
        assert!(matches!(
            CurveFile::parse(wrong_header.as_bytes(), "c.csv"),
            Err(CliError::Schema { line: 2, .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = MlpParams {
            input: 2,
            hidden: 1,
            output: 1,
            data: vec![0.5, -1.0, 2.0, 3.0, 4.0],
        };
        let hash = "ab".repeat(32);
        let bytes = encode_checkpoint(&hash, 7, 3, &p);
        let c = decode_checkpoint(&bytes).unwrap();
        assert_eq!(
            (c.config_sha256, c.seed, c.trial, c.policy),
            (hash, 7, 3, p)
        );
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_none());
    }
}
