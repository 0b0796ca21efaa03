//! Monte Carlo checks of the process at finite `n`: event frequencies,
//! window and surplus sweeps, simulation against the ODE limit, and the
//! two-giants contrast for non-merging rules.
//!
//! Every experiment is a pure function of its config and master seed. Run
//! `i` of an experiment uses `split_seed(seed, i)`; sweeps over `n` first
//! split by the index of `n`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::engine::{self, par_map, preview_step, split_seed, ColumnStats, Process, RunConfig, Sampling};
use crate::error::{Error, Result};
use crate::forest::ForestState;
use crate::observables::{self, RowMax, WindowMode, WindowRow};
use crate::ode::{self, Kernel, OdeConfig};
use crate::output::{sig9, write_json};
use crate::rules::{RuleRef, RuleSpec};

/// Monte Carlo frequency of an event over conditioned runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEstimate {
    pub runs: usize,
    /// Runs meeting the event's starting condition.
    pub conditioned: usize,
    pub successes: usize,
    pub frequency: f64,
    /// Binomial standard error `sqrt(p (1 - p) / conditioned)`.
    pub stderr: f64,
    /// Set when no run was conditioned; the frequency is then meaningless.
    pub inconclusive: bool,
}

impl EventEstimate {
    pub fn from_outcomes(outcomes: &[Option<bool>]) -> Self {
        let conditioned = outcomes.iter().filter(|o| o.is_some()).count();
        let successes = outcomes.iter().filter(|o| **o == Some(true)).count();
        let frequency = if conditioned > 0 {
            successes as f64 / conditioned as f64
        } else {
            0.0
        };
        let stderr = if conditioned > 0 {
            (frequency * (1.0 - frequency) / conditioned as f64).sqrt()
        } else {
            0.0
        };
        EventEstimate {
            runs: outcomes.len(),
            conditioned,
            successes,
            frequency,
            stderr,
            inconclusive: conditioned == 0,
        }
    }

    /// `frequency - 2 stderr`, the value acceptance thresholds are applied to.
    pub fn lower_bound(&self) -> f64 {
        self.frequency - 2.0 * self.stderr
    }
}

fn default_runs() -> usize {
    100
}

fn default_seed() -> u64 {
    1
}

fn check_runs(runs: usize, min: usize) -> Result<()> {
    if runs < min {
        return Err(Error::config(format!("need runs >= {min}, got {runs}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventCParams {
    pub alpha: f64,
    pub k: usize,
    #[serde(default)]
    pub m_start: u64,
}

impl EventCParams {
    /// `ceil((4 / alpha^{ell-1}) n / k)`.
    pub fn delta_steps(&self, n: usize, ell: usize) -> u64 {
        (4.0 / self.alpha.powi(ell as i32 - 1) * n as f64 / self.k as f64).ceil() as u64
    }

    /// `alpha n / ell^2`.
    pub fn target(&self, n: usize, ell: usize) -> f64 {
        self.alpha * n as f64 / (ell * ell) as f64
    }

    /// Largest admissible `k`: `(alpha / 16) n / ln n`.
    pub fn k_max(&self, n: usize) -> f64 {
        self.alpha / 16.0 * n as f64 / (n as f64).ln()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.k < 1 || self.k as f64 > self.k_max(n) {
            return Err(Error::config(format!(
                "k = {} outside the admissible range 1..={:.3} at n = {n}",
                self.k,
                self.k_max(n)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCConfig {
    pub rule: RuleRef,
    pub n: usize,
    #[serde(flatten)]
    pub params: EventCParams,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Frequency of `L1(m_start + Delta) > alpha n / ell^2` among runs with
/// `N_{>=k}(m_start) >= alpha n`.
pub fn estimate_event_c(config: &EventCConfig, jobs: Option<usize>) -> Result<EventEstimate> {
    let rule = config.rule.resolve()?;
    let (n, p) = (config.n, config.params);
    p.validate(n)?;
    check_runs(config.runs, 30)?;
    let delta = p.delta_steps(n, rule.ell);
    let target = p.target(n, rule.ell);
    let idx: Vec<u64> = (0..config.runs as u64).collect();
    let outcomes = par_map(jobs, &idx, |&i| {
        let mut proc = Process::new(n, rule.clone(), Sampling::IidUniform, split_seed(config.seed, i))?;
        proc.advance_to(p.m_start)?;
        if (proc.forest.n_ge_k(p.k) as f64) < p.alpha * n as f64 {
            return Ok(None);
        }
        if proc.forest.l1() as f64 > target {
            return Ok(Some(true));
        }
        // L1 never decreases, so the first crossing settles the event
        let hit = proc.advance_until(p.m_start + delta, |f, _| f.l1() as f64 > target)?;
        Ok(Some(hit))
    })?;
    Ok(EventEstimate::from_outcomes(&outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventLParams {
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "D")]
    pub d: f64,
    pub k: usize,
    #[serde(default)]
    pub m_start: u64,
}

impl EventLParams {
    /// `(alpha / 2B) exp(-2 ell B D) n`.
    pub fn floor_value(&self, n: usize, ell: usize) -> f64 {
        self.alpha / (2.0 * self.b as f64) * (-2.0 * (ell * self.b) as f64 * self.d).exp() * n as f64
    }

    /// Steps over which the band must stay above the floor: `floor(D n / k)`.
    pub fn horizon(&self, n: usize) -> u64 {
        (self.d * n as f64 / self.k as f64).floor() as u64
    }

    /// `min{(alpha^2 e^{-4 ell B D} / (8 ell^2 B^2 D)) n / ln n, n / (2B)}`.
    pub fn k_max(&self, n: usize, ell: usize) -> f64 {
        let (l, b, nf) = (ell as f64, self.b as f64, n as f64);
        let first = self.alpha.powi(2) * (-4.0 * l * b * self.d).exp() / (8.0 * l * l * b * b * self.d) * nf / nf.ln();
        first.min(nf / (2.0 * b))
    }

    pub fn validate(&self, n: usize, ell: usize) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.b < 2 {
            return Err(Error::config(format!("B must be at least 2, got {}", self.b)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::config(format!("D must be positive, got {}", self.d)));
        }
        if self.k < 1 || self.k as f64 > self.k_max(n, ell) {
            return Err(Error::config(format!(
                "k = {} outside the admissible range 1..={:.3} at n = {n}, ell = {ell}",
                self.k,
                self.k_max(n, ell)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLConfig {
    pub rule: RuleRef,
    pub n: usize,
    #[serde(flatten)]
    pub params: EventLParams,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Frequency, among runs with `M_k^B(m_start) >= alpha n`, that `M_k^B`
/// stays above the floor for the next `D n / k` steps.
pub fn estimate_event_l(config: &EventLConfig, jobs: Option<usize>) -> Result<EventEstimate> {
    let rule = config.rule.resolve()?;
    let (n, p) = (config.n, config.params);
    p.validate(n, rule.ell)?;
    check_runs(config.runs, 30)?;
    let floor = p.floor_value(n, rule.ell);
    let horizon = p.horizon(n);
    let (lo, hi) = (p.k, p.b.saturating_mul(p.k));
    let in_band = |s: usize| if s >= lo && s < hi { s as i64 } else { 0 };
    let idx: Vec<u64> = (0..config.runs as u64).collect();
    let outcomes = par_map(jobs, &idx, |&i| {
        let mut proc = Process::new(n, rule.clone(), Sampling::IidUniform, split_seed(config.seed, i))?;
        proc.advance_to(p.m_start)?;
        let mut band = proc.forest.m_k_b(p.k, p.b)? as i64;
        if (band as f64) < p.alpha * n as f64 {
            return Ok(None);
        }
        if band as f64 <= floor {
            return Ok(Some(false));
        }
        let mut dropped = false;
        proc.advance_until(p.m_start + horizon, |_, report| {
            for j in &report.joins {
                let (a, b) = j.sizes;
                band += in_band(a + b) - in_band(a) - in_band(b);
            }
            dropped = band as f64 <= floor;
            dropped
        })?;
        Ok(Some(!dropped))
    })?;
    Ok(EventEstimate::from_outcomes(&outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceConfig {
    pub rule: RuleRef,
    pub n: usize,
    pub eps: f64,
    pub k: usize,
    #[serde(default)]
    pub m_start: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Largest `n` for which vertex-level snapshots are taken.
pub const SNAPSHOT_MAX_N: usize = 1_000_000;

/// `2 ceil((2^ell / eps^{ell-1}) n / k)`.
pub fn coalescence_delta(ell: usize, eps: f64, n: usize, k: usize) -> u64 {
    2 * ((2f64.powi(ell as i32) / eps.powi(ell as i32 - 1)) * n as f64 / k as f64).ceil() as u64
}

/// Per-root count of snapshot members, carried through later unions.
struct Membership {
    count: Vec<u32>,
    best: u32,
}

impl Membership {
    /// Snapshot of `V_{>=k}`: every vertex in a component of size at least `k`.
    fn snapshot(forest: &ForestState, k: usize) -> Self {
        let n = forest.n();
        let mut count = vec![0u32; n];
        for (root, size) in forest.components_at_least(k) {
            count[root] = size as u32;
        }
        let best = count.iter().copied().max().unwrap_or(0);
        Membership { count, best }
    }

    fn absorb(&mut self, root: usize, absorbed: usize) {
        self.count[root] += self.count[absorbed];
        self.count[absorbed] = 0;
        self.best = self.best.max(self.count[root]);
    }
}

/// Frequency that some component of `G(m_start + Delta)` holds at least
/// `N_{>=k}(m_start) - eps n` vertices of `V_{>=k}(m_start)`.
pub fn estimate_coalescence(config: &CoalescenceConfig, jobs: Option<usize>) -> Result<EventEstimate> {
    let rule = config.rule.resolve()?;
    if !rule.classify().is_merging {
        return Err(Error::Unsupported {
            rule: rule.name().into(),
            what: "the coalescence estimate",
            reason: "rule is not merging: it may leave two offered components both unjoined".into(),
        });
    }
    let n = config.n;
    if n > SNAPSHOT_MAX_N {
        return Err(Error::config(format!("membership snapshots need n <= {SNAPSHOT_MAX_N}")));
    }
    if !(config.eps > 0.0 && config.eps <= 1.0) {
        return Err(Error::config(format!("eps must lie in (0, 1], got {}", config.eps)));
    }
    if config.k < 1 {
        return Err(Error::config("k must be at least 1"));
    }
    check_runs(config.runs, 1)?;
    let delta = coalescence_delta(rule.ell, config.eps, n, config.k);
    let idx: Vec<u64> = (0..config.runs as u64).collect();
    let outcomes = par_map(jobs, &idx, |&i| {
        let mut proc = Process::new(n, rule.clone(), Sampling::IidUniform, split_seed(config.seed, i))?;
        proc.advance_to(config.m_start)?;
        let need = proc.forest.n_ge_k(config.k) as f64 - config.eps * n as f64;
        let mut members = Membership::snapshot(&proc.forest, config.k);
        if members.best as f64 >= need {
            return Ok(Some(true));
        }
        // the best overlap only grows, so stop at the first success
        let hit = proc.advance_until(config.m_start + delta, |_, report| {
            for j in &report.joins {
                members.absorb(j.root, j.absorbed);
            }
            members.best as f64 >= need
        })?;
        Ok(Some(hit))
    })?;
    Ok(EventEstimate::from_outcomes(&outcomes))
}

fn default_t_limit() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepWindowsConfig {
    pub rule: RuleRef,
    pub ns: Vec<usize>,
    #[serde(flatten)]
    pub mode: WindowMode,
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Runs stop at `t_limit n` steps even if the upper threshold was not reached.
    #[serde(default = "default_t_limit")]
    pub t_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub n: usize,
    pub runs: usize,
    /// Runs where a threshold was never attained.
    pub flagged: usize,
    pub delta_norm: Option<ColumnStats>,
    /// `mean delta_norm(n) / mean delta_norm(previous n)`.
    pub ratio_to_previous: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepWindowsReport {
    pub rule: RuleSpec,
    pub mode: WindowMode,
    /// Set when the rule is not merging, where no window bound is claimed.
    pub caveat: Option<String>,
    pub summaries: Vec<WindowSummary>,
    pub rows: Vec<WindowRow>,
}

impl SweepWindowsReport {
    /// `max / min` of the per-`n` mean windows, if every `n` has one.
    pub fn spread(&self) -> Option<f64> {
        let means: Option<Vec<f64>> = self.summaries.iter().map(|s| s.delta_norm.map(|d| d.mean)).collect();
        let means = means?;
        let hi = means.iter().copied().fold(f64::MIN, f64::max);
        let lo = means.iter().copied().fold(f64::MAX, f64::min);
        (lo > 0.0).then(|| hi / lo)
    }
}

fn thresholds(mode: WindowMode, n: usize) -> (f64, f64) {
    match mode {
        WindowMode::FractionThresholds { a, b } => (a * n as f64, b * n as f64),
        WindowMode::JumpThresholds { h_l, delta } => (h_l.eval(n), delta * n as f64),
    }
}

/// Window measured at every step rather than on grid rows.
pub fn exact_window(
    rule: &RuleSpec,
    n: usize,
    seed: u64,
    mode: WindowMode,
    t_limit: f64,
) -> Result<observables::WindowReport> {
    let (lower, upper) = thresholds(mode, n);
    let mut proc = Process::new(n, rule.clone(), Sampling::IidUniform, seed)?;
    let limit = engine::floor_steps(t_limit, n);
    let l1 = proc.forest.l1() as f64;
    let mut m_minus = (l1 <= lower).then_some(0);
    let mut m_plus = (l1 >= upper).then_some(0);
    while m_plus.is_none() && proc.m() < limit {
        proc.step()?;
        let l1 = proc.forest.l1() as f64;
        if l1 <= lower {
            m_minus = Some(proc.m());
        }
        if l1 >= upper {
            m_plus = Some(proc.m());
        }
    }
    let delta_steps = m_minus.zip(m_plus).map(|(lo, hi)| hi - lo);
    Ok(observables::WindowReport {
        mode,
        n,
        m_minus,
        m_plus,
        delta_steps,
        delta_norm: delta_steps.map(|d| d as f64 / n as f64),
    })
}

fn check_ns(ns: &[usize]) -> Result<()> {
    if ns.is_empty() || ns.iter().any(|&n| n < 2) {
        return Err(Error::config("ns must be a nonempty list of sizes >= 2"));
    }
    Ok(())
}

/// Per-`n` ensembles of exact windows, with trend ratios between consecutive `n`.
pub fn sweep_windows(config: &SweepWindowsConfig, jobs: Option<usize>) -> Result<SweepWindowsReport> {
    let rule = config.rule.resolve()?;
    check_ns(&config.ns)?;
    check_runs(config.runs, 1)?;
    if let WindowMode::FractionThresholds { a, b } = config.mode {
        observables::check_fractions(a, b)?;
    }
    let caveat = (!rule.classify().is_merging)
        .then(|| format!("{} is not merging; windows are reported without a scaling claim", rule.name()));
    let tasks: Vec<(usize, usize, u64)> = config
        .ns
        .iter()
        .enumerate()
        .flat_map(|(j, &n)| {
            let base = split_seed(config.seed, j as u64);
            (0..config.runs).map(move |i| (j, n, split_seed(base, i as u64)))
        })
        .collect();
    let reports = par_map(jobs, &tasks, |&(_, n, seed)| exact_window(&rule, n, seed, config.mode, config.t_limit))?;
    let rows: Vec<WindowRow> = tasks
        .iter()
        .zip(&reports)
        .map(|(&(_, n, seed), w)| {
            // jump windows list their thresholds as fractions of this n
            let (lower, upper) = thresholds(config.mode, n);
            WindowRow {
            rule: rule.name().into(),
            n,
            seed,
            a: lower / n as f64,
            b: upper / n as f64,
            m_minus: w.m_minus,
            m_plus: w.m_plus,
            delta: w.delta_steps,
            delta_over_n: w.delta_norm,
        }})
        .collect();
    let mut summaries: Vec<WindowSummary> = Vec::new();
    for (j, &n) in config.ns.iter().enumerate() {
        let norms: Vec<f64> = tasks
            .iter()
            .zip(&reports)
            .filter(|(t, _)| t.0 == j)
            .filter_map(|(_, w)| w.delta_norm)
            .collect();
        let delta_norm = (!norms.is_empty()).then(|| ColumnStats::of(&norms));
        let ratio_to_previous = match (summaries.last().and_then(|s| s.delta_norm), delta_norm) {
            (Some(prev), Some(cur)) if prev.mean > 0.0 => Some(cur.mean / prev.mean),
            _ => None,
        };
        summaries.push(WindowSummary {
            n,
            runs: config.runs,
            flagged: config.runs - norms.len(),
            delta_norm,
            ratio_to_previous,
        });
    }
    Ok(SweepWindowsReport {
        rule,
        mode: config.mode,
        caveat,
        summaries,
        rows,
    })
}

fn default_surplus_ks() -> Vec<usize> {
    vec![100]
}

fn default_surplus_t_max() -> f64 {
    2.0
}

fn default_fine_grid() -> f64 {
    0.002
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSurplusConfig {
    pub rule: RuleRef,
    pub ns: Vec<usize>,
    #[serde(default = "default_surplus_ks")]
    pub ks: Vec<usize>,
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_surplus_t_max")]
    pub t_max: f64,
    #[serde(default = "default_fine_grid")]
    pub grid_dt: f64,
}

/// Maxima over one trajectory's grid rows, normalized by `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusRun {
    pub n: usize,
    pub seed: u64,
    pub l2_max: f64,
    /// `max_m (N_{>=K} - L1) / n` per `K` in config order.
    pub surplus_max: Vec<f64>,
    /// Same with the `ell - 1` largest components in place of `L1`.
    pub surplus_top_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusSummary {
    pub n: usize,
    pub l2_max: ColumnStats,
    pub surplus_max: Vec<ColumnStats>,
    pub surplus_top_max: Vec<ColumnStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSurplusReport {
    pub rule: RuleSpec,
    pub ks: Vec<usize>,
    pub caveat: Option<String>,
    pub summaries: Vec<SurplusSummary>,
    /// `l2_max` mean nonincreasing in `n` within two standard errors.
    pub l2_nonincreasing: bool,
    /// Same for each `K`'s surplus.
    pub surplus_nonincreasing: Vec<bool>,
    pub runs: Vec<SurplusRun>,
}

/// Whether means are nonincreasing along the list, up to two combined
/// standard errors between neighbours.
pub fn nonincreasing_within_noise(stats: &[ColumnStats], runs: usize) -> bool {
    let se = |s: &ColumnStats| s.std / (runs as f64).sqrt();
    stats
        .windows(2)
        .all(|w| w[1].mean <= w[0].mean + 2.0 * (se(&w[0]).powi(2) + se(&w[1]).powi(2)).sqrt())
}

fn surplus_run(rule: &RuleSpec, n: usize, seed: u64, ks: &[usize], t_max: f64, grid_dt: f64) -> Result<SurplusRun> {
    let mut cfg = RunConfig::new(n, rule.clone(), seed, t_max, grid_dt);
    cfg.record_ks = ks.iter().filter(|&&k| k > 1).map(|&k| k - 1).collect();
    cfg.record_ks.sort_unstable();
    cfg.record_ks.dedup();
    if cfg.record_ks.is_empty() {
        cfg.record_ks.push(1);
    }
    cfg.surplus_k = ks[0];
    let traj = engine::run(&cfg)?;
    let norm = |m: RowMax| m.normalized(n);
    let mut surplus_max = Vec::new();
    let mut surplus_top_max = Vec::new();
    for &k in ks {
        surplus_max.push(norm(observables::surplus_max(&traj, k)?));
        surplus_top_max.push(norm(observables::surplus_top_max(&traj, k)?));
    }
    Ok(SurplusRun {
        n,
        seed,
        l2_max: observables::l2_max(&traj).map(norm).unwrap_or(0.0),
        surplus_max,
        surplus_top_max,
    })
}

/// Per-`(n, K)` ensemble maxima of the surplus `N_{>=K} - L1` and of `L2`.
pub fn sweep_surplus(config: &SweepSurplusConfig, jobs: Option<usize>) -> Result<SweepSurplusReport> {
    let rule = config.rule.resolve()?;
    check_ns(&config.ns)?;
    check_runs(config.runs, 1)?;
    if config.ks.is_empty() || config.ks.contains(&0) {
        return Err(Error::config("ks must be a nonempty list of thresholds >= 1"));
    }
    let caveat = (!rule.classify().is_merging)
        .then(|| format!("{} is not merging; no surplus bound is claimed", rule.name()));
    let tasks: Vec<(usize, u64)> = config
        .ns
        .iter()
        .enumerate()
        .flat_map(|(j, &n)| {
            let base = split_seed(config.seed, j as u64);
            (0..config.runs).map(move |i| (n, split_seed(base, i as u64)))
        })
        .collect();
    let runs = par_map(jobs, &tasks, |&(n, seed)| {
        surplus_run(&rule, n, seed, &config.ks, config.t_max, config.grid_dt)
    })?;
    let summaries: Vec<SurplusSummary> = config
        .ns
        .iter()
        .map(|&n| {
            let mine: Vec<&SurplusRun> = runs.iter().filter(|r| r.n == n).collect();
            let col = |f: &dyn Fn(&SurplusRun) -> f64| ColumnStats::of(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            SurplusSummary {
                n,
                l2_max: col(&|r| r.l2_max),
                surplus_max: (0..config.ks.len()).map(|i| col(&|r| r.surplus_max[i])).collect(),
                surplus_top_max: (0..config.ks.len()).map(|i| col(&|r| r.surplus_top_max[i])).collect(),
            }
        })
        .collect();
    let l2: Vec<ColumnStats> = summaries.iter().map(|s| s.l2_max).collect();
    let surplus_nonincreasing = (0..config.ks.len())
        .map(|i| {
            let col: Vec<ColumnStats> = summaries.iter().map(|s| s.surplus_max[i]).collect();
            nonincreasing_within_noise(&col, config.runs)
        })
        .collect();
    Ok(SweepSurplusReport {
        rule,
        ks: config.ks.clone(),
        caveat,
        l2_nonincreasing: nonincreasing_within_noise(&l2, config.runs),
        surplus_nonincreasing,
        summaries,
        runs,
    })
}

fn default_kmax() -> usize {
    1000
}

fn default_h() -> f64 {
    1e-4
}

fn default_compare_t_max() -> f64 {
    1.5
}

fn default_grid() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub rule: RuleRef,
    pub n: usize,
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_compare_t_max")]
    pub t_max: f64,
    #[serde(default = "default_grid")]
    pub grid_dt: f64,
}

/// One grid time of a simulation/ODE overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub t: f64,
    pub sim_l1_mean: f64,
    pub sim_l1_std: f64,
    pub ode_giant: f64,
    pub ode_rho_inf: f64,
    /// Ensemble mean `N_k / n` for `k = 1..=10`.
    pub sim_rho: Vec<f64>,
    pub ode_rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rule: RuleSpec,
    pub n: usize,
    pub runs: usize,
    /// `sup_t |mean L1/n - giant(t)|` with the tail-corrected giant estimate.
    pub sup_gap_rho: f64,
    pub sup_gap_at_t: f64,
    /// The same against the raw `rho_inf = 1 - sum_{k <= Kmax} rho_k`.
    pub sup_gap_rho_inf: f64,
    /// `sup_t |mean N_k/n - rho_k(t)|` for `k = 1..=10`.
    pub per_k: Vec<f64>,
    pub ode_t_c: Option<f64>,
    pub rows: Vec<OverlayRow>,
}

pub const COMPARE_KS: usize = 10;

const DE_CHUNKS: usize = 64;

/// Ensemble means against the ODE limit on the simulation grid.
pub fn compare_sim_ode(config: &CompareConfig, jobs: Option<usize>) -> Result<CompareReport> {
    let rule = config.rule.resolve()?;
    let kernel = Kernel::for_rule(&rule)?;
    check_runs(config.runs, 1)?;
    let mut run_cfg = RunConfig::new(config.n, rule.clone(), config.seed, config.t_max, config.grid_dt);
    run_cfg.record_ks = (1..=COMPARE_KS).collect();
    run_cfg.validate()?;
    let sol = ode::integrate_kernel(&kernel, OdeConfig::new(config.kmax, config.h, config.t_max, config.grid_dt))?;
    let summary = engine::ensemble(&run_cfg, config.runs, jobs)?;
    let n = config.n as f64;
    let l1 = summary.column("l1").expect("l1 column");
    let n_le: Vec<Vec<ColumnStats>> = (1..=COMPARE_KS)
        .map(|k| summary.column(&format!("n_le_{k}")).expect("recorded k"))
        .collect();
    let mut rows = Vec::with_capacity(summary.rows.len());
    let (mut sup, mut sup_t, mut sup_inf) = (0.0f64, 0.0, 0.0f64);
    let mut per_k = vec![0.0f64; COMPARE_KS];
    for (i, r) in summary.rows.iter().enumerate() {
        let state = sol.state_near(r.t);
        let sim_rho: Vec<f64> = (0..COMPARE_KS)
            .map(|k| (n_le[k][i].mean - if k == 0 { 0.0 } else { n_le[k - 1][i].mean }) / n)
            .collect();
        let ode_rho: Vec<f64> = (1..=COMPARE_KS).map(|k| state.rho_k(k)).collect();
        let row = OverlayRow {
            t: r.t,
            sim_l1_mean: l1[i].mean / n,
            sim_l1_std: l1[i].std / n,
            ode_giant: sol.giant_at(r.t),
            ode_rho_inf: sol.rho_inf_at(r.t),
            sim_rho,
            ode_rho,
        };
        let gap = (row.sim_l1_mean - row.ode_giant).abs();
        if gap > sup {
            sup = gap;
            sup_t = r.t;
        }
        sup_inf = sup_inf.max((row.sim_l1_mean - row.ode_rho_inf).abs());
        for k in 0..COMPARE_KS {
            per_k[k] = per_k[k].max((row.sim_rho[k] - row.ode_rho[k]).abs());
        }
        rows.push(row);
    }
    Ok(CompareReport {
        rule,
        n: config.n,
        runs: config.runs,
        sup_gap_rho: sup,
        sup_gap_at_t: sup_t,
        sup_gap_rho_inf: sup_inf,
        per_k,
        ode_t_c: sol.critical_time(ode::CRITICAL_LEVEL),
        rows,
    })
}

pub const OVERLAY_CSV_HEADER: &str = "t,sim_l1_mean,sim_l1_std,ode_giant,ode_rho_inf";

pub fn write_overlay_csv<W: std::io::Write>(mut w: W, rows: &[OverlayRow]) -> Result<()> {
    let mut header = OVERLAY_CSV_HEADER.to_string();
    for k in 1..=COMPARE_KS {
        header.push_str(&format!(",sim_rho_{k},ode_rho_{k}"));
    }
    writeln!(w, "{header}")?;
    for r in rows {
        write!(
            w,
            "{},{},{},{},{}",
            sig9(r.t),
            sig9(r.sim_l1_mean),
            sig9(r.sim_l1_std),
            sig9(r.ode_giant),
            sig9(r.ode_rho_inf)
        )?;
        for (s, o) in r.sim_rho.iter().zip(&r.ode_rho) {
            write!(w, ",{},{}", sig9(*s), sig9(*o))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn default_de_times() -> Vec<f64> {
    vec![0.2, 0.4, 0.55, 0.7, 0.9]
}

fn default_replays() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOracleConfig {
    pub rule: RuleRef,
    pub n: usize,
    #[serde(default = "default_de_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_replays")]
    pub replays: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeComparison {
    pub k: usize,
    /// Mean of `Delta N_k` over replayed steps.
    pub mc_mean: f64,
    pub mc_stderr: f64,
    /// ODE right-hand side at the empirical state.
    pub rhs: f64,
    /// `(mc_mean - rhs) / mc_stderr`. Zero when no change of `N_k` was
    /// seen and the drift is within the rule-of-three bound `6k / replays`.
    pub z: f64,
    /// Whether any replay changed `N_k`.
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeState {
    pub t: f64,
    pub m: u64,
    pub l1: usize,
    pub comparisons: Vec<DeComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOracleReport {
    pub rule: RuleSpec,
    pub n: usize,
    pub replays: usize,
    pub states: Vec<DeState>,
    /// Largest `|z|` over all states and `k`.
    pub max_abs_z: f64,
}

impl DeOracleReport {
    pub fn within(&self, z: f64) -> bool {
        self.max_abs_z <= z
    }
}

/// Replays `replays` independent steps from the state at each time, without
/// advancing it, and compares the mean change of `N_k` with the ODE drift at
/// the empirical `rho`.
pub fn de_oracle(config: &DeOracleConfig, jobs: Option<usize>) -> Result<DeOracleReport> {
    let rule = config.rule.resolve()?;
    let kernel = Kernel::for_rule(&rule)?;
    if config.kmax < kernel.min_kmax() || config.kmax < COMPARE_KS {
        return Err(Error::config(format!("kmax = {} too small", config.kmax)));
    }
    check_runs(config.replays, 2)?;
    let mut times = config.times.clone();
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::config("times must be finite and nonnegative"));
    }
    times.sort_by(f64::total_cmp);
    let n = config.n;
    let mut proc = Process::new(n, rule.clone(), Sampling::IidUniform, config.seed)?;
    let mut states = Vec::new();
    let mut max_abs_z = 0.0f64;
    for (si, &t) in times.iter().enumerate() {
        proc.advance_to(engine::floor_steps(t, n))?;
        let forest = &proc.forest;
        let rho: Vec<f64> = (1..=config.kmax)
            .map(|k| (forest.count_of_size(k) * k) as f64 / n as f64)
            .collect();
        let rho_inf = 1.0 - rho.iter().sum::<f64>();
        let drift = kernel.rhs(&rho, rho_inf);
        let base = split_seed(config.seed ^ 0xDE00_0000, si as u64);
        // a fixed chunking keeps the replay streams independent of the thread count
        let chunks = DE_CHUNKS;
        let spans: Vec<(u64, usize)> = (0..chunks)
            .map(|c| {
                let lo = config.replays * c / chunks;
                let hi = config.replays * (c + 1) / chunks;
                (split_seed(base, c as u64), hi - lo)
            })
            .collect();
        let sums = par_map(jobs, &spans, |&(seed, count)| {
            let mut local = forest.clone();
            let mut rng = engine::ProcessRng::seed_from_u64(seed);
            let mut acc = vec![(0.0f64, 0.0f64); COMPARE_KS];
            let mut delta = [0i64; COMPARE_KS + 1];
            for _ in 0..count {
                delta.iter_mut().for_each(|d| *d = 0);
                for (a, b) in preview_step(&mut local, &rule, &mut rng, Sampling::IidUniform)? {
                    for (s, sign) in [(a, -1), (b, -1), (a + b, 1)] {
                        if s <= COMPARE_KS {
                            delta[s] += sign * s as i64;
                        }
                    }
                }
                for k in 1..=COMPARE_KS {
                    let d = delta[k] as f64;
                    acc[k - 1].0 += d;
                    acc[k - 1].1 += d * d;
                }
            }
            Ok(acc)
        })?;
        let r = config.replays as f64;
        let comparisons: Vec<DeComparison> = (1..=COMPARE_KS)
            .map(|k| {
                let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, c| (acc.0 + c[k - 1].0, acc.1 + c[k - 1].1));
                let mean = s / r;
                let var = ((s2 - r * mean * mean) / (r - 1.0)).max(0.0);
                let se = (var / r).sqrt();
                let diff = mean - drift[k - 1];
                let resolved = se > 0.0;
                // with no event seen, the event rate is below 3/R at 95%
                // and each event moves N_k by at most 2k
                let z = if resolved {
                    diff / se
                } else if diff.abs() <= 6.0 * k as f64 / r {
                    0.0
                } else {
                    f64::INFINITY
                };
                max_abs_z = max_abs_z.max(z.abs());
                DeComparison { k, mc_mean: mean, mc_stderr: se, rhs: drift[k - 1], z, resolved }
            })
            .collect();
        states.push(DeState { t, m: proc.m(), l1: proc.forest.l1(), comparisons });
    }
    Ok(DeOracleReport { rule, n, replays: config.replays, states, max_abs_z })
}

fn default_demo_t() -> f64 {
    5.0
}

fn default_demo_rule() -> RuleRef {
    RuleRef::Name(crate::rules::RuleKind::ForcedOnlySmallest)
}

fn default_demo_k() -> usize {
    100
}

fn default_demo_grid() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGiantsConfig {
    #[serde(default = "default_demo_rule")]
    pub rule: RuleRef,
    pub n: usize,
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_demo_t")]
    pub t: f64,
    /// `K` of the surplus statistics.
    #[serde(default = "default_demo_k")]
    pub k: usize,
    #[serde(default = "default_demo_grid")]
    pub grid_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGiantsRun {
    pub seed: u64,
    pub l1: f64,
    pub l2: f64,
    pub l2_over_l1: f64,
    /// `max_m (N_{>=K} - L1) / n`.
    pub surplus_max: f64,
    /// `max_m (N_{>=K} - L) / n` with `L` the `ell - 1` largest components.
    pub surplus_top_max: f64,
    /// `L2 / n >= 0.2` and `L2 / L1 >= 0.5` at `t`.
    pub two_giants: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGiantsReport {
    pub rule: RuleSpec,
    pub n: usize,
    pub t: f64,
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub mean_l2_over_l1: f64,
    /// Runs with two giants at `t`.
    pub flagged: usize,
    pub max_surplus_top: f64,
    pub max_surplus: f64,
    pub runs: Vec<TwoGiantsRun>,
}

/// Thresholds for calling a state "two giants".
pub const TWO_GIANTS_L2_FRACTION: f64 = 0.2;
pub const TWO_GIANTS_RATIO: f64 = 0.5;

/// State at `t` of a run of (by default) `forced_only_smallest`, where the
/// `ell - 1` largest components grow together.
pub fn two_giants_demo(config: &TwoGiantsConfig, jobs: Option<usize>) -> Result<TwoGiantsReport> {
    let rule = config.rule.resolve()?;
    check_runs(config.runs, 1)?;
    let mut base = RunConfig::new(config.n, rule.clone(), config.seed, config.t, config.grid_dt);
    base.surplus_k = config.k;
    base.validate()?;
    let seeds: Vec<u64> = (0..config.runs as u64).map(|i| split_seed(config.seed, i)).collect();
    let n = config.n as f64;
    let runs = par_map(jobs, &seeds, |&seed| {
        let traj = engine::run(&RunConfig { seed, ..base.clone() })?;
        let last = traj.rows.last().expect("grid has rows");
        let (l1, l2) = (last.l1 as f64 / n, last.l2 as f64 / n);
        let ratio = if l1 > 0.0 { l2 / l1 } else { 0.0 };
        Ok(TwoGiantsRun {
            seed,
            l1,
            l2,
            l2_over_l1: ratio,
            surplus_max: observables::surplus_max(&traj, config.k)?.normalized(config.n),
            surplus_top_max: observables::surplus_top_max(&traj, config.k)?.normalized(config.n),
            two_giants: l2 >= TWO_GIANTS_L2_FRACTION && ratio >= TWO_GIANTS_RATIO,
        })
    })?;
    let mean = |f: fn(&TwoGiantsRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let max = |f: fn(&TwoGiantsRun) -> f64| runs.iter().map(f).fold(f64::MIN, f64::max);
    Ok(TwoGiantsReport {
        rule,
        n: config.n,
        t: config.t,
        mean_l1: mean(|r| r.l1),
        mean_l2: mean(|r| r.l2),
        mean_l2_over_l1: mean(|r| r.l2_over_l1),
        flagged: runs.iter().filter(|r| r.two_giants).count(),
        max_surplus_top: max(|r| r.surplus_top_max),
        max_surplus: max(|r| r.surplus_max),
        runs,
    })
}

/// An experiment config file: `{"operation": "<name>", ...parameters}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operation", rename_all = "snake_case")]
pub enum ExperimentConfig {
    EventC(EventCConfig),
    EventL(EventLConfig),
    Coalescence(CoalescenceConfig),
    SweepWindows(SweepWindowsConfig),
    SweepSurplus(SweepSurplusConfig),
    CompareSimOde(CompareConfig),
    DeOracle(DeOracleConfig),
    TwoGiants(TwoGiantsConfig),
}

pub const EXPERIMENT_NAMES: [&str; 8] = [
    "event_c",
    "event_l",
    "coalescence",
    "sweep_windows",
    "sweep_surplus",
    "compare_sim_ode",
    "de_oracle",
    "two_giants",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operation", content = "report", rename_all = "snake_case")]
pub enum ExperimentReport {
    EventC(EventEstimate),
    EventL(EventEstimate),
    Coalescence(EventEstimate),
    SweepWindows(SweepWindowsReport),
    SweepSurplus(SweepSurplusReport),
    CompareSimOde(CompareReport),
    DeOracle(DeOracleReport),
    TwoGiants(TwoGiantsReport),
}

impl ExperimentConfig {
    /// Parses a config for the named experiment. A missing `operation`
    /// field is filled from `name`; a different one is an error.
    pub fn from_json(name: &str, text: &str) -> Result<Self> {
        if !EXPERIMENT_NAMES.contains(&name) {
            return Err(Error::config(format!(
                "unknown experiment {name:?} (expected one of {})",
                EXPERIMENT_NAMES.join(", ")
            )));
        }
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::config("experiment config must be a JSON object"))?;
        match obj.get("operation").and_then(|v| v.as_str()) {
            Some(op) if op != name => {
                return Err(Error::config(format!("config is for {op:?}, not {name:?}")));
            }
            Some(_) => {}
            None => {
                obj.insert("operation".into(), name.into());
            }
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::EventC(_) => "event_c",
            ExperimentConfig::EventL(_) => "event_l",
            ExperimentConfig::Coalescence(_) => "coalescence",
            ExperimentConfig::SweepWindows(_) => "sweep_windows",
            ExperimentConfig::SweepSurplus(_) => "sweep_surplus",
            ExperimentConfig::CompareSimOde(_) => "compare_sim_ode",
            ExperimentConfig::DeOracle(_) => "de_oracle",
            ExperimentConfig::TwoGiants(_) => "two_giants",
        }
    }

    pub fn run(&self, jobs: Option<usize>) -> Result<ExperimentReport> {
        Ok(match self {
            ExperimentConfig::EventC(c) => ExperimentReport::EventC(estimate_event_c(c, jobs)?),
            ExperimentConfig::EventL(c) => ExperimentReport::EventL(estimate_event_l(c, jobs)?),
            ExperimentConfig::Coalescence(c) => ExperimentReport::Coalescence(estimate_coalescence(c, jobs)?),
            ExperimentConfig::SweepWindows(c) => ExperimentReport::SweepWindows(sweep_windows(c, jobs)?),
            ExperimentConfig::SweepSurplus(c) => ExperimentReport::SweepSurplus(sweep_surplus(c, jobs)?),
            ExperimentConfig::CompareSimOde(c) => ExperimentReport::CompareSimOde(compare_sim_ode(c, jobs)?),
            ExperimentConfig::DeOracle(c) => ExperimentReport::DeOracle(de_oracle(c, jobs)?),
            ExperimentConfig::TwoGiants(c) => ExperimentReport::TwoGiants(two_giants_demo(c, jobs)?),
        })
    }
}

impl ExperimentReport {
    /// Short human-readable lines for the headline numbers.
    pub fn summary_lines(&self) -> Vec<String> {
        let est = |e: &EventEstimate| {
            format!(
                "frequency {} +- {} over {} conditioned of {} runs{}",
                sig9(e.frequency),
                sig9(e.stderr),
                e.conditioned,
                e.runs,
                if e.inconclusive { " (inconclusive)" } else { "" }
            )
        };
        match self {
            ExperimentReport::EventC(e) | ExperimentReport::EventL(e) | ExperimentReport::Coalescence(e) => {
                vec![est(e)]
            }
            ExperimentReport::SweepWindows(r) => {
                let mut out: Vec<String> = r
                    .summaries
                    .iter()
                    .map(|s| match s.delta_norm {
                        Some(d) => format!(
                            "n={} delta/n mean {} std {} flagged {}{}",
                            s.n,
                            sig9(d.mean),
                            sig9(d.std),
                            s.flagged,
                            s.ratio_to_previous.map(|x| format!(" ratio {}", sig9(x))).unwrap_or_default()
                        ),
                        None => format!("n={} no attained windows ({} flagged)", s.n, s.flagged),
                    })
                    .collect();
                out.extend(r.caveat.clone());
                out
            }
            ExperimentReport::SweepSurplus(r) => {
                let mut out: Vec<String> = r
                    .summaries
                    .iter()
                    .map(|s| {
                        let sur: Vec<String> = r
                            .ks
                            .iter()
                            .zip(&s.surplus_max)
                            .map(|(k, c)| format!("surplus_K{k} {}", sig9(c.mean)))
                            .collect();
                        format!("n={} l2_max/n {} {}", s.n, sig9(s.l2_max.mean), sur.join(" "))
                    })
                    .collect();
                out.push(format!(
                    "nonincreasing: l2 {} surplus {:?}",
                    r.l2_nonincreasing, r.surplus_nonincreasing
                ));
                out.extend(r.caveat.clone());
                out
            }
            ExperimentReport::CompareSimOde(r) => vec![format!(
                "sup gap {} at t={} (raw rho_inf {}), max per-k gap {}",
                sig9(r.sup_gap_rho),
                sig9(r.sup_gap_at_t),
                sig9(r.sup_gap_rho_inf),
                sig9(r.per_k.iter().copied().fold(0.0, f64::max))
            )],
            ExperimentReport::DeOracle(r) => vec![format!(
                "{} states, {} replays each, max |z| {}",
                r.states.len(),
                r.replays,
                sig9(r.max_abs_z)
            )],
            ExperimentReport::TwoGiants(r) => vec![format!(
                "t={} mean l1/n {} l2/n {} l2/l1 {}; two giants in {}/{} runs; max top surplus {}",
                sig9(r.t),
                sig9(r.mean_l1),
                sig9(r.mean_l2),
                sig9(r.mean_l2_over_l1),
                r.flagged,
                r.runs.len(),
                sig9(r.max_surplus_top)
            )],
        }
    }
}

/// Record of one experiment's outputs in a results directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    pub crate_version: String,
    pub wall_time_s: f64,
}

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

/// Runs `config` and writes `<name>.json`, any CSV tables and
/// `<name>.manifest.json` under `dir`.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path, jobs: Option<usize>) -> Result<(ExperimentReport, Manifest)> {
    let start = Instant::now();
    let report = config.run(jobs)?;
    fs::create_dir_all(dir)?;
    let name = config.name();
    let mut files = vec![format!("{name}.json")];
    write_json(&dir.join(&files[0]), &report)?;
    let csv = |file: &str| -> Result<(BufWriter<fs::File>, String)> {
        Ok((BufWriter::new(fs::File::create(dir.join(file))?), file.to_string()))
    };
    match &report {
        ExperimentReport::SweepWindows(r) => {
            let (w, f) = csv(&format!("{name}.csv"))?;
            observables::write_window_csv(w, &r.rows)?;
            files.push(f);
        }
        ExperimentReport::CompareSimOde(r) => {
            let (w, f) = csv(&format!("{name}.csv"))?;
            write_overlay_csv(w, &r.rows)?;
            files.push(f);
        }
        ExperimentReport::SweepSurplus(r) => {
            let (mut w, f) = csv(&format!("{name}.csv"))?;
            write_surplus_csv(&mut w, r)?;
            files.push(f);
        }
        _ => {}
    }
    let manifest = Manifest {
        experiment: name.into(),
        config: config.clone(),
        files,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path(dir, name), &manifest)?;
    Ok((report, manifest))
}

pub fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}{MANIFEST_SUFFIX}"))
}

fn write_surplus_csv<W: std::io::Write>(mut w: W, r: &SweepSurplusReport) -> Result<()> {
    let mut header = vec!["rule".to_string(), "n".into(), "seed".into(), "l2_max".into()];
    for k in &r.ks {
        header.push(format!("surplus_max_{k}"));
        header.push(format!("surplus_top_max_{k}"));
    }
    writeln!(w, "{}", header.join(","))?;
    for run in &r.runs {
        write!(w, "{},{},{},{}", r.rule.name(), run.n, run.seed, sig9(run.l2_max))?;
        for (a, b) in run.surplus_max.iter().zip(&run.surplus_top_max) {
            write!(w, ",{},{}", sig9(*a), sig9(*b))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Manifests found directly under `dir`, sorted by file name.
pub fn read_manifests(dir: &Path) -> Result<Vec<(Manifest, ExperimentReport)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(MANIFEST_SUFFIX))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let manifest: Manifest = serde_json::from_reader(fs::File::open(&p)?)?;
        let report_path = dir.join(&manifest.files[0]);
        let report: ExperimentReport = serde_json::from_reader(fs::File::open(report_path)?)?;
        out.push((manifest, report));
    }
    Ok(out)
}
