//! Campaign execution: training, evaluation, controller sweeps and
//! aggregation, writing CSV artifacts and a manifest per run.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::metrics::{
    edge_windows, metrics_rows, peak_window, summarize_episode, window_mean_n_repe, window_mean_v_succ, write_rows,
    EpisodeSummary, MetricsRow, Summarizer, SummaryError,
};
use crate::action::{ActionVector, GroupAction, N_GROUPS};
use crate::config::{kv_entries, ConfigError, SimConfig};
use crate::controllers::{Controller, LeUrc, RandomController, StaticController};
use crate::dqn::{checkpoint, CmaDqn, DqnConfig, DqnError, TrainingRun};
use crate::env::{EnvError, EpisodeStats, Environment};
use crate::rng::{RngStream, Stream};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 1 for configuration problems, 2 for anything that failed at run time.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<EnvError> for RunError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config(c) => c.into(),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<DqnError> for RunError {
    fn from(e: DqnError) -> Self {
        match e {
            DqnError::Config(m) => Self::Config(m),
            DqnError::Env(env) => env.into(),
            DqnError::Io(io) => Self::Io(io),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<SummaryError> for RunError {
    fn from(e: SummaryError) -> Self {
        Self::Runtime(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    CmaDqn,
    LeUrc,
    Static,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Train,
    Eval,
    Sweep,
    Summarize,
}

/// Simulation and learner settings read from one `key = value` file.
pub fn parse_run_config(text: &str) -> Result<(SimConfig, DqnConfig), ConfigError> {
    let mut sim = SimConfig::default();
    let mut dqn = DqnConfig::default();
    for entry in kv_entries(text) {
        let (line, key, value) = entry?;
        let owned = match sim.set(key, value) {
            Ok(false) => dqn.set(key, value),
            other => other,
        };
        match owned {
            Ok(true) => {}
            Ok(false) => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
            Err(message) => {
                return Err(ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    message,
                })
            }
        }
    }
    sim.validate()?;
    Ok((sim, dqn))
}

pub const DESK_CONFIG: &str = include_str!("../../configs/desk.conf");

/// The reduced-scale setup used for comparative runs on one machine.
pub fn desk_config() -> (SimConfig, DqnConfig) {
    parse_run_config(DESK_CONFIG).expect("bundled desk configuration is valid")
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub mode: Mode,
    pub controller: Option<ControllerKind>,
    pub sim: SimConfig,
    pub dqn: DqnConfig,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub le_repe: [u32; N_GROUPS],
    pub checkpoint: Option<PathBuf>,
    /// Metrics files for `Summarize`; empty means every `metrics.csv` under `out`.
    pub inputs: Vec<PathBuf>,
}

impl RunSpec {
    pub fn new(mode: Mode, sim: SimConfig, dqn: DqnConfig, out: PathBuf) -> Self {
        Self {
            mode,
            controller: None,
            sim,
            dqn,
            episodes: 1,
            seeds: vec![1],
            out,
            le_repe: [1, 4, 8],
            checkpoint: None,
            inputs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.sim.validate()?;
        self.dqn.validate().map_err(RunError::from)?;
        if self.mode != Mode::Summarize {
            if self.seeds.is_empty() {
                return Err(RunError::Config("no seeds given".into()));
            }
            if self.episodes == 0 {
                return Err(RunError::Config("episodes must be positive".into()));
            }
        }
        match (self.mode, self.controller) {
            (Mode::Train, Some(ControllerKind::CmaDqn)) => {}
            (Mode::Train, _) => return Err(RunError::Config("train mode needs --controller cma-dqn".into())),
            (Mode::Eval, None) => return Err(RunError::Config("eval mode needs --controller".into())),
            (Mode::Eval, Some(ControllerKind::CmaDqn)) if self.checkpoint.is_none() => {
                return Err(RunError::Config("evaluating cma-dqn needs --checkpoint".into()))
            }
            _ => {}
        }
        let probe = ActionVector {
            groups: std::array::from_fn(|g| GroupAction::new(self.sim.rach_set[0], self.sim.prea_set[0], self.le_repe[g])),
        };
        probe
            .validate(&self.sim)
            .map_err(|e| RunError::Config(format!("--le-repe: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    mode: Mode,
    controller: Option<ControllerKind>,
    episodes: usize,
    seeds: &'a [u64],
    le_repe: [u32; N_GROUPS],
    checkpoint: Option<&'a Path>,
    sim: &'a SimConfig,
    dqn: &'a DqnConfig,
    /// Settings in the `--config` file format.
    config: String,
    partial: bool,
    completed_episodes: &'a BTreeMap<String, usize>,
}

struct ManifestWriter<'a> {
    spec: &'a RunSpec,
    completed: BTreeMap<String, usize>,
}

impl<'a> ManifestWriter<'a> {
    fn new(spec: &'a RunSpec) -> Self {
        Self {
            spec,
            completed: BTreeMap::new(),
        }
    }

    fn write(&self, partial: bool) -> Result<(), RunError> {
        let s = self.spec;
        let m = Manifest {
            version: env!("CARGO_PKG_VERSION"),
            mode: s.mode,
            controller: s.controller,
            episodes: s.episodes,
            seeds: &s.seeds,
            le_repe: s.le_repe,
            checkpoint: s.checkpoint.as_deref(),
            sim: &s.sim,
            dqn: &s.dqn,
            config: format!("{}{}", s.sim.to_kv(), s.dqn.to_kv()),
            partial,
            completed_episodes: &self.completed,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| RunError::Runtime(e.to_string()))?;
        fs::write(s.out.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

/// Plays one episode with `ctl` on traffic drawn from `streams`.
pub fn evaluate_episode(env: &mut Environment, ctl: &mut dyn Controller, streams: &RngStream) -> Result<EpisodeStats, EnvError> {
    ctl.reset();
    env.reset(streams);
    loop {
        let a = ctl.decide();
        let step = env.step(&a)?;
        ctl.observe(&step.obs, &a, step.reward);
        if step.terminal {
            break;
        }
    }
    Ok(env.take_stats())
}

/// Evaluates episodes `first..first + count` of `seed`; episode `e` sees the
/// same traffic as training episode `e` on that seed.
pub fn evaluate<F>(
    sim: &SimConfig,
    ctl: &mut dyn Controller,
    seed: u64,
    episodes: std::ops::Range<usize>,
    mut on_episode: F,
) -> Result<(), RunError>
where
    F: FnMut(usize, EpisodeStats) -> Result<(), RunError>,
{
    let streams = RngStream::new(seed);
    let mut env = Environment::new(sim.clone())?;
    for e in episodes {
        let stats = evaluate_episode(&mut env, ctl, &streams.derive(e as u64))?;
        on_episode(e, stats)?;
    }
    Ok(())
}

/// Streams `metrics.csv` and `summary.csv` into one directory.
struct SeedOutput {
    metrics: csv::Writer<BufWriter<File>>,
    summaries: Vec<EpisodeSummary>,
    dir: PathBuf,
}

impl SeedOutput {
    fn create(dir: PathBuf) -> Result<Self, RunError> {
        fs::create_dir_all(&dir)?;
        let metrics = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("metrics.csv"))?));
        Ok(Self {
            metrics,
            summaries: Vec::new(),
            dir,
        })
    }

    fn push(&mut self, episode: usize, stats: &EpisodeStats, epsilon: Option<f64>) -> Result<(), RunError> {
        for row in metrics_rows(episode, stats) {
            self.metrics.serialize(row)?;
        }
        self.summaries.push(summarize_episode(episode, stats, epsilon));
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf, RunError> {
        self.metrics.flush()?;
        write_rows(&self.summaries, File::create(self.dir.join("summary.csv"))?)?;
        Ok(self.dir)
    }
}

fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

fn build_controller(spec: &RunSpec, kind: ControllerKind, seed: u64) -> Result<Box<dyn Controller>, RunError> {
    let sim = &spec.sim;
    Ok(match kind {
        ControllerKind::LeUrc => Box::new(LeUrc::new(sim, spec.le_repe).map_err(|e| RunError::Config(e.to_string()))?),
        ControllerKind::Static => Box::new(StaticController::new(ActionVector {
            groups: std::array::from_fn(|g| GroupAction::new(sim.rach_set[0], sim.prea_set[0], spec.le_repe[g])),
        })),
        ControllerKind::Random => Box::new(RandomController::new(sim, RngStream::new(seed).substream(Stream::Exploration))),
        ControllerKind::CmaDqn => {
            let path = spec
                .checkpoint
                .as_ref()
                .ok_or_else(|| RunError::Config("cma-dqn evaluation needs a checkpoint".into()))?;
            Box::new(CmaDqn::new(checkpoint::load_file(path, sim, &spec.dqn)?, sim, 0.0))
        }
    })
}

/// Per-seed, per-controller figures compared in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub controller: String,
    /// Episodes averaged over (the last ones of the campaign).
    pub episodes: usize,
    pub peak_v_succ: f64,
    pub overall_v_succ: f64,
    pub peak_n_repe: f64,
    pub edge_n_repe: f64,
}

impl ComparisonRow {
    fn from_stats(seed: u64, controller: &str, stats: &[EpisodeStats], n_tti: usize) -> Self {
        let [first, last] = edge_windows(n_tti);
        let edge = (window_mean_n_repe(stats, &first) + window_mean_n_repe(stats, &last)) / 2.0;
        Self {
            seed,
            controller: controller.to_string(),
            episodes: stats.len(),
            peak_v_succ: window_mean_v_succ(stats, &peak_window(n_tti)),
            overall_v_succ: window_mean_v_succ(stats, &(1..=n_tti)),
            peak_n_repe: window_mean_n_repe(stats, &peak_window(n_tti)),
            edge_n_repe: edge,
        }
    }
}

/// Edge-window `n_repe` means reported separately for the first and last 10%.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionProfile {
    pub first: f64,
    pub peak: f64,
    pub last: f64,
}

pub fn repetition_profile(stats: &[EpisodeStats], n_tti: usize) -> RepetitionProfile {
    let [first, last] = edge_windows(n_tti);
    RepetitionProfile {
        first: window_mean_n_repe(stats, &first),
        peak: window_mean_n_repe(stats, &peak_window(n_tti)),
        last: window_mean_n_repe(stats, &last),
    }
}

/// Results of one seed of a sweep, kept in memory for callers that check
/// trends directly.
#[derive(Debug, Clone)]
pub struct SeedSweep {
    pub seed: u64,
    /// The final training episodes (at most 20) of the learned controller.
    pub dqn_final: Vec<EpisodeStats>,
    /// The trained policy run greedily on fresh episodes.
    pub dqn_greedy: Vec<EpisodeStats>,
    /// `(label, n_repe, stats over the same episodes as dqn_final)`.
    pub baselines: Vec<(String, [u32; N_GROUPS], Vec<EpisodeStats>)>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub seeds: Vec<SeedSweep>,
    pub rows: Vec<ComparisonRow>,
}

pub const SWEEP_FINAL_EPISODES: usize = 20;
pub const SWEEP_BASELINES: [[u32; N_GROUPS]; 2] = [[1, 4, 8], [2, 8, 16]];

fn le_label(r: [u32; N_GROUPS]) -> String {
    format!("le-urc-[{},{},{}]", r[0], r[1], r[2])
}

/// Trains the learned controller and runs both LE-URC baselines on the same
/// episodes for every seed, writing each under its own directory.
pub fn sweep(spec: &RunSpec) -> Result<SweepReport, RunError> {
    spec.validate()?;
    fs::create_dir_all(&spec.out)?;
    let mut manifest = ManifestWriter::new(spec);
    manifest.write(true)?;
    let n_tti = spec.sim.n_tti_per_episode;
    let keep_from = spec.episodes.saturating_sub(SWEEP_FINAL_EPISODES);
    let mut report = SweepReport::default();

    for &seed in &spec.seeds {
        let mut out = SeedOutput::create(seed_dir(&spec.out.join("cma-dqn"), seed))?;
        let mut run = TrainingRun::new(spec.sim.clone(), &spec.dqn, seed, spec.episodes)?;
        let mut dqn_final = Vec::new();
        while !run.is_finished() {
            let stats = run.run_episode()?;
            let e = run.episodes_done() - 1;
            out.push(e, &stats, Some(run.ensemble().epsilon))?;
            if e >= keep_from {
                dqn_final.push(stats);
            }
        }
        let dir = out.finish()?;
        let ensemble = run.into_ensemble();
        checkpoint::save_file(&ensemble, &dir.join("checkpoint.bin"))?;

        let mut greedy_ctl = CmaDqn::new(ensemble, &spec.sim, 0.0);
        let mut greedy_out = SeedOutput::create(seed_dir(&spec.out.join("cma-dqn-greedy"), seed))?;
        let mut dqn_greedy = Vec::new();
        let fresh = spec.episodes..spec.episodes + (spec.episodes - keep_from);
        evaluate(&spec.sim, &mut greedy_ctl, seed, fresh, |e, stats| {
            greedy_out.push(e, &stats, None)?;
            dqn_greedy.push(stats);
            Ok(())
        })?;
        greedy_out.finish()?;

        let mut baselines = Vec::new();
        for repe in SWEEP_BASELINES {
            let label = le_label(repe);
            let mut ctl = LeUrc::new(&spec.sim, repe).map_err(|e| RunError::Config(e.to_string()))?;
            let mut out = SeedOutput::create(seed_dir(&spec.out.join(&label), seed))?;
            let mut kept = Vec::new();
            evaluate(&spec.sim, &mut ctl, seed, 0..spec.episodes, |e, stats| {
                out.push(e, &stats, None)?;
                if e >= keep_from {
                    kept.push(stats);
                }
                Ok(())
            })?;
            out.finish()?;
            baselines.push((label, repe, kept));
        }

        report.rows.push(ComparisonRow::from_stats(seed, "cma-dqn", &dqn_final, n_tti));
        report.rows.push(ComparisonRow::from_stats(seed, "cma-dqn-greedy", &dqn_greedy, n_tti));
        for (label, _, stats) in &baselines {
            report.rows.push(ComparisonRow::from_stats(seed, label, stats, n_tti));
        }
        report.seeds.push(SeedSweep {
            seed,
            dqn_final,
            dqn_greedy,
            baselines,
        });
        manifest.completed.insert(seed.to_string(), spec.episodes);
        manifest.write(true)?;
    }
    write_rows(&report.rows, File::create(spec.out.join("comparison.csv"))?)?;
    manifest.write(false)?;
    Ok(report)
}

fn train(spec: &RunSpec) -> Result<(), RunError> {
    let mut manifest = ManifestWriter::new(spec);
    manifest.write(true)?;
    for &seed in &spec.seeds {
        let mut run = match &spec.checkpoint {
            Some(path) => {
                let ensemble = checkpoint::load_file(path, &spec.sim, &spec.dqn)?;
                let total = ensemble.episodes_done as usize + spec.episodes;
                TrainingRun::resume(spec.sim.clone(), ensemble, seed, total)?
            }
            None => TrainingRun::new(spec.sim.clone(), &spec.dqn, seed, spec.episodes)?,
        };
        let mut out = SeedOutput::create(seed_dir(&spec.out, seed))?;
        while !run.is_finished() {
            let stats = run.run_episode()?;
            out.push(run.episodes_done() - 1, &stats, Some(run.ensemble().epsilon))?;
        }
        let dir = out.finish()?;
        checkpoint::save_file(run.ensemble(), &dir.join("checkpoint.bin"))?;
        manifest.completed.insert(seed.to_string(), spec.episodes);
        manifest.write(true)?;
    }
    manifest.write(false)
}

fn eval(spec: &RunSpec) -> Result<(), RunError> {
    let kind = spec.controller.expect("validated");
    let mut manifest = ManifestWriter::new(spec);
    manifest.write(true)?;
    for &seed in &spec.seeds {
        let mut ctl = build_controller(spec, kind, seed)?;
        let mut out = SeedOutput::create(seed_dir(&spec.out, seed))?;
        evaluate(&spec.sim, ctl.as_mut(), seed, 0..spec.episodes, |e, stats| out.push(e, &stats, None))?;
        out.finish()?;
        manifest.completed.insert(seed.to_string(), spec.episodes);
        manifest.write(true)?;
    }
    manifest.write(false)
}

fn find_metrics(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            find_metrics(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "metrics.csv") {
            found.push(p);
        }
    }
    Ok(())
}

/// Per-TTI means over the given metrics files, written to `tti_summary.csv`.
pub fn summarize(inputs: &[PathBuf], out: &Path) -> Result<PathBuf, RunError> {
    let mut files = inputs.to_vec();
    if files.is_empty() {
        find_metrics(out, &mut files)?;
    }
    if files.is_empty() {
        return Err(RunError::Config(format!("no metrics.csv under {}", out.display())));
    }
    let mut s = Summarizer::new();
    for f in &files {
        s.add_file(f)?;
    }
    let table = s.finish()?;
    fs::create_dir_all(out)?;
    let path = out.join("tti_summary.csv");
    write_rows(&table, File::create(&path)?)?;
    Ok(path)
}

pub fn run(spec: &RunSpec) -> Result<(), RunError> {
    spec.validate()?;
    fs::create_dir_all(&spec.out)?;
    match spec.mode {
        Mode::Train => train(spec),
        Mode::Eval => eval(spec),
        Mode::Sweep => sweep(spec).map(|_| ()),
        Mode::Summarize => summarize(&spec.inputs, &spec.out).map(|_| ()),
    }
}

/// Reads a `metrics.csv` back into rows.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, RunError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
