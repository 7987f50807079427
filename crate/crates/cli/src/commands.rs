//! The five subcommands. Each reads its inputs, computes every artifact in
//! memory, then writes them under the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use acute::agents::record_episode;
use acute::curriculum::{optimize_lf as search_lf, run_hf as train_hf, unpriced, CurriculumSource};
use acute::env::{PlanarWorld, RewardScheme};
use acute::metrics::{jumpstart, time_to_threshold, LearningCurve, TimeToThreshold};
use acute::seed::{derive_seed, stream};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::*;
use crate::config::{EvalConfig, Experiment, ExperimentConfig, Mode};
use crate::error::CliError;
use crate::plot::{curves_svg, replay_svg, MethodCurves};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LF_LOG_FILE: &str = "lf_log.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const CURVES_SVG: &str = "curves.svg";
pub const REPLAY_SVG: &str = "replay.svg";

/// Seed-path tag of the replay episode under a trial seed.
const REPLAY_STREAM: u64 = 3;

/// Loads a config with precedence flag > environment > file > default.
pub fn load_experiment(
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
    env: impl Fn(&str) -> Option<String>,
) -> Result<Experiment, CliError> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env(env)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o.to_path_buf();
    }
    cfg.resolve()
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[trial as u64])
}

/// Finds (or, for fixed curricula, just records) the grid-world curriculum
/// of every trial.
pub fn build_manifest(exp: &Experiment) -> Result<(Manifest, Vec<LfLogRow>), CliError> {
    let cfg = &exp.config;
    let per_trial: Vec<(TrialCurriculum, Vec<LfLogRow>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<_, CliError> {
            let seed = trial_seed(cfg.seed, trial);
            let (result, nodes, log) = match &exp.source {
                CurriculumSource::Ac => {
                    let outcome = search_lf(&exp.lf_target, &exp.map, &exp.acute, seed)?;
                    let mut log = Vec::new();
                    for n in &outcome.nodes {
                        let on_path = outcome.best_path.contains(&n.id);
                        let h = &n.history;
                        for (episode, ((&ret, &success), &length)) in h
                            .returns
                            .iter()
                            .zip(&h.successes)
                            .zip(&h.lengths)
                            .enumerate()
                        {
                            log.push(LfLogRow {
                                trial,
                                node: n.id,
                                level: n.level,
                                parent: n.parent,
                                on_path,
                                episode,
                                ret,
                                success,
                                length,
                            });
                        }
                    }
                    (outcome.result, outcome.nodes.len(), log)
                }
                CurriculumSource::Hc(tasks) => (unpriced(tasks), 0, Vec::new()),
                CurriculumSource::Scratch => (unpriced(&[exp.lf_target]), 0, Vec::new()),
            };
            let last = result.tasks.len() - 1;
            let tasks = result
                .tasks
                .iter()
                .enumerate()
                .map(|(i, t)| ManifestTask {
                    lf_params: t.params,
                    hf_params: if i == last {
                        exp.hf_target
                    } else {
                        exp.map.forward(&t.params)
                    },
                    episodes: t.episodes,
                    timesteps: t.timesteps,
                    converged: t.converged,
                })
                .collect();
            let tc = TrialCurriculum {
                trial,
                seed,
                sunk_cost_timesteps: result.sunk_cost_timesteps,
                sunk_cost_episodes: result.sunk_cost_episodes,
                nodes_trained: nodes,
                tasks,
            };
            Ok((tc, log))
        })
        .collect::<Result<_, _>>()?;
    let (trials, logs): (Vec<_>, Vec<_>) = per_trial.into_iter().unzip();
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        config_sha256: exp.hash.clone(),
        seed: cfg.seed,
        mode: cfg.mode,
        variant: cfg.variant,
        accounting: ACCOUNTING_NOTE.into(),
        map: exp.map.clone(),
        lf_target: exp.lf_target,
        hf_target: exp.hf_target,
        beam: cfg.beam,
        lf_learner: cfg.lf_learner,
        stop_lf: cfg.stop_lf,
        trials,
    };
    Ok((manifest, logs.concat()))
}

fn seed_fields(exp: &Experiment) -> Vec<(&'static str, String)> {
    vec![
        ("config_sha256", exp.hash.clone()),
        ("seed", exp.config.seed.to_string()),
        ("method", exp.config.method()),
    ]
}

/// `optimize-lf`: writes `manifest.json` and `lf_log.csv`.
pub fn optimize_lf(exp: &Experiment) -> Result<Manifest, CliError> {
    let (manifest, log) = build_manifest(exp)?;
    let out = &exp.config.out_dir;
    write_file(&out.join(MANIFEST_FILE), &to_json(&manifest))?;
    write_file(
        &out.join(LF_LOG_FILE),
        &write_csv(&Preamble::new(LF_LOG_SCHEMA, &seed_fields(exp)), &log),
    )?;
    Ok(manifest)
}

/// The curricula `run-hf` trains through, and the digest of the manifest
/// they came from.
fn curricula_for_run(
    exp: &Experiment,
    manifest: Option<&Path>,
) -> Result<(Manifest, Option<String>), CliError> {
    let cfg = &exp.config;
    if manifest.is_some() && cfg.mode != Mode::Ac {
        return Err(CliError::Usage(format!(
            "--manifest only applies to mode \"ac\", not {:?}",
            cfg.mode.label()
        )));
    }
    if cfg.mode != Mode::Ac {
        return Ok((build_manifest(exp)?.0, None));
    }
    let (path, explicit) = match manifest {
        Some(p) => (p.to_path_buf(), true),
        None => (cfg.out_dir.join(MANIFEST_FILE), false),
    };
    if !explicit && !path.exists() {
        let m = optimize_lf(exp)?;
        let digest = sha256_hex(&to_json(&m));
        return Ok((m, Some(digest)));
    }
    let bytes = read_file(&path)?;
    let m = Manifest::parse(&bytes, &path)?;
    if !explicit && m.config_sha256 != exp.hash {
        // stale manifest from an edited config in the same directory
        let m = optimize_lf(exp)?;
        let digest = sha256_hex(&to_json(&m));
        return Ok((m, Some(digest)));
    }
    let file = path.display().to_string();
    if m.lf_target != exp.lf_target {
        return Err(CliError::Schema {
            file,
            line: 1,
            detail: "manifest targets a different grid-world task".into(),
        });
    }
    if m.trials.len() < cfg.trials {
        return Err(CliError::Schema {
            file,
            line: 1,
            detail: format!(
                "manifest has {} trials, config needs {}",
                m.trials.len(),
                cfg.trials
            ),
        });
    }
    Ok((m, Some(sha256_hex(&bytes))))
}

struct TrialOutput {
    run: TrialRun,
    rows: Vec<CurveRow>,
    checkpoint: Vec<u8>,
    replay: Replay,
}

fn run_trial(
    exp: &Experiment,
    tc: &TrialCurriculum,
    trial: usize,
) -> Result<TrialOutput, CliError> {
    let cfg = &exp.config;
    let seed = trial_seed(cfg.seed, trial);
    let run = train_hf(
        tc.to_result(),
        &exp.hf_target,
        &exp.map,
        exp.noise.as_ref(),
        &cfg.hf_learner,
        &cfg.stop_hf,
        seed,
    )?;

    let mut rows = Vec::new();
    let mut t = run.lf.sunk_cost_timesteps;
    for task in &run.hf_tasks {
        let h = &task.history;
        for (episode, ((&ret, &success), &length)) in h
            .returns
            .iter()
            .zip(&h.successes)
            .zip(&h.lengths)
            .enumerate()
        {
            t += length;
            rows.push(CurveRow {
                trial,
                task_index: task.index,
                episode,
                cumulative_timesteps: t,
                ret,
                success,
                length,
                is_target: task.is_target,
            });
        }
    }

    let mut rng = stream(seed, &[REPLAY_STREAM]);
    let (trajectory, log) = record_episode(
        &mut PlanarWorld::new(),
        &exp.hf_target,
        &run.final_policy,
        cfg.hf_learner.greedy(),
        0.0,
        RewardScheme::target(),
        &mut rng,
    )
    .map_err(acute::curriculum::CurriculumError::from)?;
    let replay = Replay {
        schema: REPLAY_SCHEMA.into(),
        config_sha256: exp.hash.clone(),
        seed: cfg.seed,
        trial,
        success: log.success,
        ret: log.rewards().sum(),
        trajectory,
    };

    let curve = run.target_curve();
    let summary = TrialRun {
        trial,
        seed,
        lf_sunk_cost_timesteps: run.lf.sunk_cost_timesteps,
        hf_source_timesteps: run.hf_source_timesteps(),
        sunk_cost_timesteps: run.sunk_cost_timesteps(),
        total_timesteps: run.total_timesteps(),
        time_to_threshold: time_to_threshold(&curve, &cfg.eval.threshold),
        tasks: run
            .hf_tasks
            .iter()
            .map(|t| HfTaskSummary {
                index: t.index,
                lf_params: t.lf_params,
                hf_params: t.hf_params,
                is_target: t.is_target,
                shaping_enabled: t.shaping_enabled,
                episodes: t.episodes,
                timesteps: t.timesteps,
                converged: t.converged,
                seed: t.seed,
            })
            .collect(),
    };
    let checkpoint = encode_checkpoint(&exp.hash, cfg.seed, trial, &run.final_policy);
    Ok(TrialOutput {
        run: summary,
        rows,
        checkpoint,
        replay,
    })
}

/// `run-hf`: trains every trial through its mapped curriculum and writes
/// `curve.csv`, `run.json`, `checkpoints/` and `replays/`.
pub fn run_hf(exp: &Experiment, manifest: Option<&Path>) -> Result<RunSummary, CliError> {
    let cfg = &exp.config;
    let (m, manifest_sha256) = curricula_for_run(exp, manifest)?;
    let outputs: Vec<TrialOutput> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(exp, &m.trials[trial], trial))
        .collect::<Result<_, _>>()?;

    let out = &cfg.out_dir;
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for o in outputs {
        let name = format!("trial_{:03}", o.run.trial);
        write_file(
            &out.join("checkpoints").join(format!("{name}.bin")),
            &o.checkpoint,
        )?;
        write_file(
            &out.join("replays").join(format!("{name}.json")),
            &to_json(&o.replay),
        )?;
        rows.extend(o.rows);
        trials.push(o.run);
    }
    let summary = RunSummary {
        schema: RUN_SCHEMA.into(),
        config_sha256: exp.hash.clone(),
        manifest_sha256,
        seed: cfg.seed,
        method: cfg.method(),
        mode: cfg.mode,
        noise: cfg.noise,
        hf_learner: cfg.hf_learner,
        stop_hf: cfg.stop_hf,
        trials,
    };
    write_file(
        &out.join(CURVE_FILE),
        &write_csv(&Preamble::new(CURVE_SCHEMA, &seed_fields(exp)), &rows),
    )?;
    write_file(&out.join(RUN_FILE), &to_json(&summary))?;
    Ok(summary)
}

/// A finished run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDir {
    pub curves: CurveFile,
    pub summary: RunSummary,
    pub curve_sha256: String,
}

impl RunDir {
    pub fn load(dir: &Path) -> Result<RunDir, CliError> {
        let curve_path = dir.join(CURVE_FILE);
        let bytes = read_file(&curve_path)?;
        let curves = CurveFile::parse(&bytes, &curve_path.display().to_string())?;
        let run_path = dir.join(RUN_FILE);
        let summary: RunSummary =
            serde_json::from_slice(&read_file(&run_path)?).map_err(|e| CliError::Schema {
                file: run_path.display().to_string(),
                line: e.line() as u64,
                detail: e.to_string(),
            })?;
        Ok(RunDir {
            curves,
            summary,
            curve_sha256: sha256_hex(&bytes),
        })
    }

    pub fn method(&self) -> String {
        self.curves.method().to_string()
    }
}

/// Compares one method's trials against the baseline's, trial by trial.
pub fn compare(method: &RunDir, baseline: &RunDir, eval: &EvalConfig) -> Vec<MetricsRow> {
    let ours = method.curves.target_curves();
    let theirs = baseline.curves.target_curves();
    let converged: BTreeMap<usize, bool> = method
        .summary
        .trials
        .iter()
        .map(|t| (t.trial, t.target_converged()))
        .collect();
    let empty = LearningCurve::default();
    ours.iter()
        .map(|(&trial, c)| {
            let b = theirs.get(&trial).unwrap_or(&empty);
            let mut notes = Vec::new();
            let js = match jumpstart(c, b, eval.jumpstart_episodes) {
                Ok(v) => Some(v),
                Err(e) => {
                    notes.push(e.to_string());
                    None
                }
            };
            let mine = time_to_threshold(c, &eval.threshold).timesteps();
            let base = if theirs.contains_key(&trial) {
                time_to_threshold(b, &eval.threshold).timesteps()
            } else {
                notes.push(format!("baseline has no trial {trial}"));
                None
            };
            let delta = match (mine, base) {
                (Some(m), Some(b)) => Some(b as i64 - m as i64),
                _ => None,
            };
            MetricsRow {
                method: method.method(),
                trial,
                jumpstart: js,
                time_to_threshold: mine,
                sunk_cost: c.sunk_cost_timesteps,
                converged: converged.get(&trial).copied().unwrap_or(false),
                baseline_time_to_threshold: base,
                delta_time_to_threshold: delta,
                note: notes.join("; "),
            }
        })
        .collect()
}

fn method_curves(run: &RunDir) -> MethodCurves {
    MethodCurves {
        method: run.method(),
        config_sha256: run.curves.preamble.get("config_sha256").to_string(),
        seed: run.curves.preamble.get("seed").to_string(),
        curves: run.curves.target_curves().into_values().collect(),
    }
}

#[derive(Serialize)]
struct EvalDigest<'a> {
    eval: &'a EvalConfig,
    baseline: &'a str,
    runs: Vec<&'a str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub metrics: Vec<MetricsRow>,
    pub aggregate: Vec<AggregateRow>,
}

/// `eval`: writes `metrics.csv` (one row per trial per compared run) and
/// `aggregate.csv` (mean ± SD of every run on a shared grid).
pub fn eval(
    baseline: &Path,
    runs: &[PathBuf],
    cfg: &EvalConfig,
    out: &Path,
) -> Result<EvalOutput, CliError> {
    if runs.is_empty() {
        return Err(CliError::Usage(
            "eval needs at least one run directory besides the baseline".into(),
        ));
    }
    let base = RunDir::load(baseline)?;
    let others: Vec<RunDir> = runs
        .iter()
        .map(|p| RunDir::load(p))
        .collect::<Result<_, _>>()?;
    let metrics: Vec<MetricsRow> = others.iter().flat_map(|r| compare(r, &base, cfg)).collect();

    let mut all: Vec<&RunDir> = vec![&base];
    all.extend(
        others
            .iter()
            .filter(|r| r.curve_sha256 != base.curve_sha256),
    );
    let methods: Vec<MethodCurves> = all.iter().map(|r| method_curves(r)).collect();
    let end = methods.iter().map(MethodCurves::end).max().unwrap_or(0);
    let aggregate = methods
        .iter()
        .flat_map(|m| {
            let band = m.band(end, cfg.grid_points);
            band.into_iter().map(|p| AggregateRow {
                method: m.method.clone(),
                timesteps: p.timesteps,
                mean: p.mean,
                sd: p.sd,
            })
        })
        .collect::<Vec<_>>();

    let digest = sha256_hex(&to_json(&EvalDigest {
        eval: cfg,
        baseline: &base.curve_sha256,
        runs: others.iter().map(|r| r.curve_sha256.as_str()).collect(),
    }));
    let fields = [
        ("config_sha256", digest),
        ("seed", base.curves.preamble.get("seed").to_string()),
        ("baseline", base.method()),
    ];
    write_file(
        &out.join(METRICS_FILE),
        &write_csv(&Preamble::new(METRICS_SCHEMA, &fields), &metrics),
    )?;
    write_file(
        &out.join(AGGREGATE_FILE),
        &write_csv(&Preamble::new(AGGREGATE_SCHEMA, &fields), &aggregate),
    )?;
    Ok(EvalOutput { metrics, aggregate })
}

/// `plot`: `curves.svg` from curve CSVs, plus `replay.svg` when a replay
/// JSON is given.
pub fn plot(
    csvs: &[PathBuf],
    replay: Option<&Path>,
    grid_points: usize,
    out: &Path,
) -> Result<(), CliError> {
    if csvs.is_empty() && replay.is_none() {
        return Err(CliError::Usage(
            "plot needs at least one curve CSV or --replay".into(),
        ));
    }
    if !csvs.is_empty() {
        let methods = csvs
            .iter()
            .map(|p| {
                let f = CurveFile::parse(&read_file(p)?, &p.display().to_string())?;
                Ok(MethodCurves {
                    method: f.method().to_string(),
                    config_sha256: f.preamble.get("config_sha256").to_string(),
                    seed: f.preamble.get("seed").to_string(),
                    curves: f.target_curves().into_values().collect(),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        write_file(
            &out.join(CURVES_SVG),
            curves_svg(&methods, grid_points).as_bytes(),
        )?;
    }
    if let Some(p) = replay {
        let r: Replay = serde_json::from_slice(&read_file(p)?).map_err(|e| CliError::Schema {
            file: p.display().to_string(),
            line: e.line() as u64,
            detail: e.to_string(),
        })?;
        write_file(&out.join(REPLAY_SVG), replay_svg(&r).as_bytes())?;
    }
    Ok(())
}

/// `validate-config`: one line per derived value.
pub fn describe(exp: &Experiment) -> String {
    let c = &exp.config;
    format!(
        "config_sha256={}\nseed={}\ntrials={}\nmode={}\nmethod={}\nnoise={}\nlf_target={}\nhf_target={}\nout_dir={}\n",
        exp.hash,
        c.seed,
        c.trials,
        c.mode.label(),
        c.method(),
        c.noise,
        exp.lf_target,
        exp.hf_target,
        c.out_dir.display()
    )
}

/// Target-task time to threshold of one trial, for summaries.
pub fn threshold_label(t: TimeToThreshold) -> String {
    match t {
        TimeToThreshold::Reached(n) => n.to_string(),
        TimeToThreshold::NotReached => "not reached".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Cli, Command};
    use clap::Parser;

    const TINY: &str = "seed = 7\ntrials = 2\n\
        [target]\nwidth = 1.6\nheight = 1.6\ntrees_env = 2\nrocks_env = 0\ncrafting_tables = 1\n\
        wood_inv = 0\nstone_inv = 1\ngoal = { kind = \"craft\" }\n\
        [beam]\nwidth_w = 1\nbranch_n = 2\nlength_u = 3\n\
        [stop_lf]\nwindow_s = 10\nbudget_b = 20\n[stop_hf]\nwindow_s = 10\nbudget_b = 20\n\
        [eval]\njumpstart_episodes = 5\n";

    fn tiny(dir: &Path, mode: &str) -> Experiment {
        let path = dir.join(format!("{mode}.toml"));
        std::fs::write(&path, format!("mode = \"{mode}\"\n{TINY}")).unwrap();
        load_experiment(Some(&path), None, Some(&dir.join(mode)), |_| None).unwrap()
    }

    #[test]
    fn scratch_trains_only_the_target() {
        let dir = tempfile::tempdir().unwrap();
        let exp = tiny(dir.path(), "scratch");
        let s = run_hf(&exp, None).unwrap();
        assert!(s
            .trials
            .iter()
            .all(|t| t.sunk_cost_timesteps == 0 && t.tasks.len() == 1));
        let run = RunDir::load(&exp.config.out_dir).unwrap();
        assert!(run
            .curves
            .rows
            .iter()
            .all(|r| r.task_index == 0 && r.is_target));
    }

    #[test]
    fn same_seed_same_bytes_and_self_comparison() {
        let dir = tempfile::tempdir().unwrap();
        let exp = tiny(dir.path(), "ac");
        run_hf(&exp, None).unwrap();
        let first = read_file(&exp.config.out_dir.join(CURVE_FILE)).unwrap();
        let manifest = read_file(&exp.config.out_dir.join(MANIFEST_FILE)).unwrap();
        std::fs::remove_dir_all(&exp.config.out_dir).unwrap();
        run_hf(&exp, None).unwrap();
        assert_eq!(
            read_file(&exp.config.out_dir.join(CURVE_FILE)).unwrap(),
            first
        );
        assert_eq!(
            read_file(&exp.config.out_dir.join(MANIFEST_FILE)).unwrap(),
            manifest
        );

        let run = RunDir::load(&exp.config.out_dir).unwrap();
        let rows = compare(&run, &run, &exp.config.eval);
        assert_eq!(rows.len(), exp.config.trials);
        for r in &rows {
            assert_eq!(r.jumpstart, Some(0.0));
            assert_eq!(r.time_to_threshold, r.baseline_time_to_threshold);
        }
        let sunk: Vec<usize> = run
            .summary
            .trials
            .iter()
            .map(|t| t.sunk_cost_timesteps)
            .collect();
        assert!(sunk.iter().all(|&s| s > 0));
    }

    #[test]
    fn eval_writes_one_row_per_trial_and_run() {
        let dir = tempfile::tempdir().unwrap();
        let ac = tiny(dir.path(), "ac");
        let scratch = tiny(dir.path(), "scratch");
        run_hf(&ac, None).unwrap();
        run_hf(&scratch, None).unwrap();
        let runs = [ac.config.out_dir.clone(), scratch.config.out_dir.clone()];
        let out = dir.path().join("eval");
        let o = eval(&scratch.config.out_dir, &runs, &ac.config.eval, &out).unwrap();
        assert_eq!(o.metrics.len(), 2 * 2);
        let text = String::from_utf8(read_file(&out.join(METRICS_FILE)).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 2 + 4);
        plot(&[ac.config.out_dir.join(CURVE_FILE)], None, 20, &out).unwrap();
        assert!(out.join(CURVES_SVG).exists());
    }

    #[test]
    fn manifest_flag_is_for_ac_only() {
        let dir = tempfile::tempdir().unwrap();
        let exp = tiny(dir.path(), "scratch");
        let err = run_hf(&exp, Some(&dir.path().join("m.json"))).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG);
    }

    #[test]
    fn command_line_errors() {
        assert!(Cli::try_parse_from(["acute", "eval", "runs/ac"]).is_err());
        let cli =
            Cli::try_parse_from(["acute", "--jobs", "4", "eval", "--baseline", "b", "a"]).unwrap();
        assert_eq!(cli.jobs, 4);
        assert!(matches!(cli.command, Command::Eval { ref runs, .. } if runs.len() == 1));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.toml");
        std::fs::write(&path, "[beam]\nlength_u = 2\n").unwrap();
        let cli = Cli::try_parse_from([
            "acute",
            "validate-config",
            "--config",
            path.to_str().unwrap(),
        ])
        .unwrap();
        let err = crate::run(cli).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG);
        let cli = Cli::try_parse_from(["acute", "--jobs", "0", "validate-config"]).unwrap();
        assert!(matches!(crate::run(cli), Err(CliError::Usage(_))));
    }
}
