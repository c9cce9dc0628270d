//! CSV schemas for per-TTI metrics, per-episode summaries and per-TTI
//! aggregates across episodes and seeds.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::N_GROUPS;
use crate::env::EpisodeStats;

/// One row per (episode, tti, group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub tti: usize,
    pub group: usize,
    pub arrivals: u32,
    pub v_cp: u32,
    pub v_sp: u32,
    pub v_ip: u32,
    pub v_succ: u32,
    pub v_unsc: u32,
    pub n_rach: u32,
    pub f_prea: u32,
    pub n_repe: u32,
    pub rao: u32,
    /// Devices served in this TTI over all groups.
    pub reward: u32,
    /// This group's served devices so far in the episode.
    pub cum_served: u64,
    pub drops_rach: u32,
    pub drops_rrc: u32,
}

pub fn metrics_rows(episode: usize, stats: &EpisodeStats) -> Vec<MetricsRow> {
    let mut cum = [0u64; N_GROUPS];
    let mut rows = Vec::with_capacity(stats.records.len() * N_GROUPS);
    for r in &stats.records {
        for g in 0..N_GROUPS {
            let o = &r.obs.groups[g];
            let a = &r.action.groups[g];
            cum[g] += o.v_succ as u64;
            rows.push(MetricsRow {
                episode,
                tti: r.tti,
                group: g,
                arrivals: r.arrivals[g],
                v_cp: o.v_cp,
                v_sp: o.v_sp,
                v_ip: o.v_ip,
                v_succ: o.v_succ,
                v_unsc: o.v_unsc,
                n_rach: a.n_rach,
                f_prea: a.f_prea,
                n_repe: a.n_repe,
                rao: a.rao(),
                reward: r.reward,
                cum_served: cum[g],
                drops_rach: r.drops_rach[g],
                drops_rrc: r.drops_rrc[g],
            });
        }
    }
    rows
}

/// Aggregates of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub arrivals: u64,
    pub served: u64,
    pub drops_rach: u64,
    pub drops_rrc: u64,
    pub mean_v_succ: f64,
    pub mean_rao: f64,
    pub mean_n_repe_g0: f64,
    pub mean_n_repe_g1: f64,
    pub mean_n_repe_g2: f64,
    /// Exploration rate at the end of the episode (training only).
    pub epsilon: Option<f64>,
}

pub fn summarize_episode(episode: usize, stats: &EpisodeStats, epsilon: Option<f64>) -> EpisodeSummary {
    let n = stats.records.len().max(1) as f64;
    let (drops_rach, drops_rrc) = stats.total_drops();
    let repe = |g: usize| stats.records.iter().map(|r| r.action.groups[g].n_repe as f64).sum::<f64>() / n;
    EpisodeSummary {
        episode,
        arrivals: stats.total_arrivals(),
        served: stats.total_served(),
        drops_rach,
        drops_rrc,
        mean_v_succ: stats.total_served() as f64 / n,
        mean_rao: stats
            .records
            .iter()
            .map(|r| r.action.groups.iter().map(|g| g.rao() as f64).sum::<f64>())
            .sum::<f64>()
            / n,
        mean_n_repe_g0: repe(0),
        mean_n_repe_g1: repe(1),
        mean_n_repe_g2: repe(2),
        epsilon,
    }
}

/// Per-TTI means over every episode of every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtiSummary {
    pub tti: usize,
    pub episodes: u64,
    pub mean_v_succ: f64,
    /// New activations, the traffic overlay.
    pub mean_arrivals: f64,
    pub mean_n_repe_g0: f64,
    pub mean_n_repe_g1: f64,
    pub mean_n_repe_g2: f64,
    pub mean_rao_g0: f64,
    pub mean_rao_g1: f64,
    pub mean_rao_g2: f64,
}

#[derive(Debug, Default, Clone)]
struct TtiAccumulator {
    rows: [u64; N_GROUPS],
    v_succ: u64,
    arrivals: u64,
    n_repe: [u64; N_GROUPS],
    rao: [u64; N_GROUPS],
}

#[derive(Debug, thiserror::Error)]
pub enum SummaryError {
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: group {group} out of range at tti {tti}")]
    Group { path: String, tti: usize, group: usize },
    #[error("{path}: tti {tti} does not have one row per group")]
    Incomplete { path: String, tti: usize },
    #[error("no metrics rows to summarize")]
    Empty,
}

/// Folds metrics rows into per-TTI means; `source` names the input in errors.
#[derive(Debug, Default)]
pub struct Summarizer {
    by_tti: BTreeMap<usize, TtiAccumulator>,
}

impl Summarizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_row(&mut self, row: &MetricsRow, source: &str) -> Result<(), SummaryError> {
        if row.group >= N_GROUPS {
            return Err(SummaryError::Group {
                path: source.into(),
                tti: row.tti,
                group: row.group,
            });
        }
        let acc = self.by_tti.entry(row.tti).or_default();
        let g = row.group;
        acc.rows[g] += 1;
        acc.v_succ += row.v_succ as u64;
        acc.arrivals += row.arrivals as u64;
        acc.n_repe[g] += row.n_repe as u64;
        acc.rao[g] += row.rao as u64;
        Ok(())
    }

    pub fn add_reader<R: Read>(&mut self, input: R, source: &str) -> Result<(), SummaryError> {
        let mut reader = csv::Reader::from_reader(input);
        for row in reader.deserialize::<MetricsRow>() {
            let row = row.map_err(|source_err| SummaryError::Csv {
                path: source.into(),
                source: source_err,
            })?;
            self.add_row(&row, source)?;
        }
        Ok(())
    }

    pub fn add_file(&mut self, path: &Path) -> Result<(), SummaryError> {
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| SummaryError::Csv {
            path: name.clone(),
            source: e.into(),
        })?;
        self.add_reader(file, &name)
    }

    pub fn finish(self) -> Result<Vec<TtiSummary>, SummaryError> {
        if self.by_tti.is_empty() {
            return Err(SummaryError::Empty);
        }
        self.by_tti
            .into_iter()
            .map(|(tti, acc)| {
                let episodes = acc.rows[0];
                if acc.rows.iter().any(|&r| r != episodes) {
                    return Err(SummaryError::Incomplete { path: "inputs".into(), tti });
                }
                let e = episodes as f64;
                Ok(TtiSummary {
                    tti,
                    episodes,
                    mean_v_succ: acc.v_succ as f64 / e,
                    mean_arrivals: acc.arrivals as f64 / e,
                    mean_n_repe_g0: acc.n_repe[0] as f64 / e,
                    mean_n_repe_g1: acc.n_repe[1] as f64 / e,
                    mean_n_repe_g2: acc.n_repe[2] as f64 / e,
                    mean_rao_g0: acc.rao[0] as f64 / e,
                    mean_rao_g1: acc.rao[1] as f64 / e,
                    mean_rao_g2: acc.rao[2] as f64 / e,
                })
            })
            .collect()
    }
}

pub fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// TTIs `[0.3 N, 0.7 N]` (1-based, inclusive), where arrivals peak.
pub fn peak_window(n_tti: usize) -> RangeInclusive<usize> {
    let lo = (0.3 * n_tti as f64).round() as usize;
    let hi = (0.7 * n_tti as f64).round() as usize;
    lo.max(1)..=hi.max(1)
}

/// The first and last 10% of TTIs.
pub fn edge_windows(n_tti: usize) -> [RangeInclusive<usize>; 2] {
    let k = ((0.1 * n_tti as f64).round() as usize).max(1);
    [1..=k, n_tti + 1 - k..=n_tti]
}

/// Mean per-TTI served devices over the TTIs in `window`, across episodes.
pub fn window_mean_v_succ(episodes: &[EpisodeStats], window: &RangeInclusive<usize>) -> f64 {
    mean_over(episodes, window, |r| r.reward as f64)
}

/// Mean selected `n_repe` (averaged over the three groups) in `window`.
pub fn window_mean_n_repe(episodes: &[EpisodeStats], window: &RangeInclusive<usize>) -> f64 {
    mean_over(episodes, window, |r| {
        r.action.groups.iter().map(|g| g.n_repe as f64).sum::<f64>() / N_GROUPS as f64
    })
}

fn mean_over<F: Fn(&crate::env::TtiRecord) -> f64>(
    episodes: &[EpisodeStats],
    window: &RangeInclusive<usize>,
    f: F,
) -> f64 {
    let (sum, n) = episodes
        .iter()
        .flat_map(|e| e.records.iter())
        .filter(|r| window.contains(&r.tti))
        .fold((0.0, 0usize), |(s, n), r| (s + f(r), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
