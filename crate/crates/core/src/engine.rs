//! Runs of the process: tuple sampling, single steps, recorded trajectories
//! and seeded ensembles.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use arrayvec::ArrayVec;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{ForestState, Join, SizeProfile};
use crate::output::sig9;
use crate::rules::{OfferedTuple, RuleDecision, RuleSpec, MAX_EDGES, MAX_ELL};

/// Generator used for every run.
pub type ProcessRng = Xoshiro256PlusPlus;

/// Identifier recorded in metadata so a run can be replayed elsewhere.
pub const PRNG_ID: &str = "xoshiro256++ seeded via rand_core seed_from_u64 (rand_xoshiro 0.7)";
/// How per-run seeds are derived from a master seed.
pub const SEED_DERIVATION: &str =
    "seed_i = splitmix64_mix(master ^ splitmix64_mix(i + 0x9E3779B97F4A7C15))";

fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `index` in an ensemble with the given master seed.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64_mix(master ^ splitmix64_mix(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

pub fn rng_from_seed(seed: u64) -> ProcessRng {
    ProcessRng::seed_from_u64(seed)
}

/// `floor(t * n)`, snapping products that are integral up to rounding
/// (`0.535 * 10^6`) onto the integer.
pub fn floor_steps(t: f64, n: usize) -> u64 {
    let x = t * n as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r.max(0.0) as u64
    } else {
        x.floor().max(0.0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// `ell` independent uniform vertices, repeats allowed.
    #[default]
    IidUniform,
    /// A uniformly random ordered `ell`-tuple of distinct vertices.
    DistinctVertices,
    /// `ell / 2` pairs of distinct vertices, each redrawn while both
    /// endpoints lie in one component.
    DistinctNewPairs,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid_uniform" => Ok(Sampling::IidUniform),
            "distinct_vertices" => Ok(Sampling::DistinctVertices),
            "distinct_new_pairs" => Ok(Sampling::DistinctNewPairs),
            _ => Err(Error::config(format!("unknown sampling mode `{s}`"))),
        }
    }
}

pub type Vertices = ArrayVec<usize, MAX_ELL>;

pub fn sample_tuple<R: Rng + ?Sized>(
    rng: &mut R,
    ell: usize,
    sampling: Sampling,
    state: &mut ForestState,
) -> Result<Vertices> {
    let n = state.n();
    if ell > MAX_ELL {
        return Err(Error::config(format!("ell = {ell} exceeds {MAX_ELL}")));
    }
    if sampling != Sampling::IidUniform && n < ell {
        return Err(Error::config(format!(
            "sampling without repeats needs n >= ell, got n = {n}, ell = {ell}"
        )));
    }
    let mut out = Vertices::new();
    match sampling {
        Sampling::IidUniform => {
            for _ in 0..ell {
                out.push(rng.random_range(0..n));
            }
        }
        Sampling::DistinctVertices => {
            while out.len() < ell {
                let v = rng.random_range(0..n);
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        Sampling::DistinctNewPairs => {
            if ell % 2 != 0 {
                return Err(Error::config("distinct_new_pairs sampling needs an even ell"));
            }
            // with a single component every pair is internal; accept it
            let can_cross = state.comp_count() > 1;
            for _ in 0..ell / 2 {
                loop {
                    let u = rng.random_range(0..n);
                    let v = rng.random_range(0..n);
                    if u == v {
                        continue;
                    }
                    if can_cross && state.root(u) == state.root(v) {
                        continue;
                    }
                    out.push(u);
                    out.push(v);
                    break;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub tuple: OfferedTuple,
    pub decision: RuleDecision,
    /// Unions of distinct components performed, in order.
    pub joins: ArrayVec<Join, MAX_EDGES>,
}

impl StepReport {
    pub fn merges_applied(&self) -> usize {
        self.joins.len()
    }
}

/// One step: draw a tuple, let the rule choose `E_m`, add the edges.
pub fn step<R: Rng + ?Sized>(
    state: &mut ForestState,
    rule: &RuleSpec,
    rng: &mut R,
    sampling: Sampling,
    m: u64,
) -> Result<StepReport> {
    let vertices = sample_tuple(rng, rule.ell, sampling, state)?;
    let tuple = OfferedTuple::observe(state, &vertices, m)?;
    let decision = rule.decide(&tuple, rng)?;
    let mut joins = ArrayVec::new();
    for (i, p) in decision.edges.iter().enumerate() {
        let (u, v) = (tuple.vertices[p.a as usize], tuple.vertices[p.b as usize]);
        let (ru, rv) = if i == 0 {
            (tuple.roots[p.a as usize], tuple.roots[p.b as usize])
        } else {
            (state.root(u), state.root(v))
        };
        if let Some(j) = state.merge_roots(ru, rv).join {
            joins.push(j);
        }
    }
    #[cfg(feature = "strict-invariants")]
    if let Err(e) = state.check_invariants() {
        panic!("forest invariant violated after step {m}: {e}");
    }
    Ok(StepReport {
        tuple,
        decision,
        joins,
    })
}

/// Sizes `(a, b)` of the component pairs one step would join, without
/// touching the forest. Consumes the same randomness as [`step`].
pub fn preview_step<R: Rng + ?Sized>(
    state: &mut ForestState,
    rule: &RuleSpec,
    rng: &mut R,
    sampling: Sampling,
) -> Result<ArrayVec<(usize, usize), MAX_EDGES>> {
    let vertices = sample_tuple(rng, rule.ell, sampling, state)?;
    let tuple = OfferedTuple::observe(state, &vertices, 0)?;
    let decision = rule.decide(&tuple, rng)?;
    // local union-find over the tuple's roots
    let mut parent: ArrayVec<usize, MAX_ELL> = tuple.groups.iter().map(|&g| g as usize).collect();
    let mut size: ArrayVec<usize, MAX_ELL> = tuple.sizes.iter().copied().collect();
    fn top(parent: &[usize], mut x: usize) -> usize {
        while parent[x] != x {
            x = parent[x];
        }
        x
    }
    let mut out = ArrayVec::new();
    for p in &decision.edges {
        let (a, b) = (top(&parent, p.a as usize), top(&parent, p.b as usize));
        if a != b {
            out.push((size[a], size[b]));
            parent[b] = a;
            size[a] += size[b];
        }
    }
    Ok(out)
}

/// A process in flight: forest, rule, sampler and generator.
#[derive(Debug, Clone)]
pub struct Process {
    pub forest: ForestState,
    pub rule: RuleSpec,
    pub sampling: Sampling,
    pub rng: ProcessRng,
    m: u64,
}

impl Process {
    pub fn new(n: usize, rule: RuleSpec, sampling: Sampling, seed: u64) -> Result<Self> {
        rule.validate()?;
        if sampling != Sampling::IidUniform && n < rule.ell {
            return Err(Error::config(format!(
                "n = {n} is smaller than ell = {} for sampling without repeats",
                rule.ell
            )));
        }
        if sampling == Sampling::DistinctNewPairs && rule.ell % 2 != 0 {
            return Err(Error::config("distinct_new_pairs sampling needs an even ell"));
        }
        Ok(Process {
            forest: ForestState::new(n)?,
            rule,
            sampling,
            rng: rng_from_seed(seed),
            m: 0,
        })
    }

    /// Steps taken so far.
    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn n(&self) -> usize {
        self.forest.n()
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let report = step(&mut self.forest, &self.rule, &mut self.rng, self.sampling, self.m)?;
        self.m += 1;
        Ok(report)
    }

    /// Advances until `m == target` (no-op if already past).
    pub fn advance_to(&mut self, target: u64) -> Result<()> {
        while self.m < target {
            self.step()?;
        }
        Ok(())
    }

    /// Steps until `stop` returns true after a step or `limit` steps were
    /// taken in total; returns whether `stop` fired.
    pub fn advance_until(
        &mut self,
        limit: u64,
        mut stop: impl FnMut(&ForestState, &StepReport) -> bool,
    ) -> Result<bool> {
        while self.m < limit {
            let report = self.step()?;
            if stop(&self.forest, &report) {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn default_record_ks() -> Vec<usize> {
    (1..=10).collect()
}

fn default_bins_b() -> usize {
    2
}

fn default_surplus_k() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub rule: RuleSpec,
    pub seed: u64,
    pub t_max: f64,
    pub grid_dt: f64,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default = "default_record_ks")]
    pub record_ks: Vec<usize>,
    #[serde(default = "default_bins_b")]
    pub bins_b: usize,
    #[serde(default = "default_surplus_k")]
    pub surplus_k: usize,
}

impl RunConfig {
    pub fn new(n: usize, rule: RuleSpec, seed: u64, t_max: f64, grid_dt: f64) -> Self {
        RunConfig {
            n,
            rule,
            seed,
            t_max,
            grid_dt,
            sampling: Sampling::IidUniform,
            record_ks: default_record_ks(),
            bins_b: default_bins_b(),
            surplus_k: default_surplus_k(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        if self.n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::config(format!("t_max must be positive, got {}", self.t_max)));
        }
        if !(self.grid_dt > 0.0 && self.grid_dt.is_finite()) {
            return Err(Error::config(format!("grid_dt must be positive, got {}", self.grid_dt)));
        }
        if self.sampling != Sampling::IidUniform && self.n < self.rule.ell {
            return Err(Error::config(format!(
                "n = {} is smaller than ell = {} for {:?} sampling",
                self.n, self.rule.ell, self.sampling
            )));
        }
        if self.record_ks.contains(&0) {
            return Err(Error::config("record_ks entries must be at least 1"));
        }
        if self.bins_b < 2 {
            return Err(Error::config("bins_b must be at least 2"));
        }
        if self.surplus_k < 1 {
            return Err(Error::config("surplus_k must be at least 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        floor_steps(self.t_max, self.n)
    }

    /// Recording steps `floor(i * grid_dt * n)` for grid times up to `t_max`,
    /// deduplicated.
    pub fn grid_steps(&self) -> Vec<u64> {
        let last = self.steps();
        let count = (self.t_max / self.grid_dt * (1.0 + 1e-12)).floor() as u64;
        let mut out: Vec<u64> = Vec::with_capacity(count as usize + 1);
        for i in 0..=count {
            let m = floor_steps(i as f64 * self.grid_dt, self.n).min(last);
            if out.last() != Some(&m) {
                out.push(m);
            }
        }
        out
    }

    /// Column names of the trajectory CSV.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = ["m", "t", "l1", "l2", "ltop", "comp_count", "edges"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend(self.record_ks.iter().map(|k| format!("n_le_{k}")));
        cols.extend(self.record_ks.iter().map(|k| format!("m_{k}_{}", self.bins_b)));
        cols.extend((0..sigma_bins(self.n)).map(|j| format!("sigma_{j}")));
        cols.push("surplus".into());
        cols.push("susceptibility".into());
        cols
    }
}

/// Number of dyadic bins `floor(log2 n) + 1`.
pub fn sigma_bins(n: usize) -> usize {
    (usize::BITS - n.leading_zeros()) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub m: u64,
    pub t: f64,
    pub l1: usize,
    pub l2: usize,
    /// Sum of the `ell - 1` largest component sizes.
    pub ltop: usize,
    pub comp_count: usize,
    pub edges: u64,
    /// `N_{<=k}` for each recorded `k`.
    pub n_le: Vec<usize>,
    /// `M_k^B` for each recorded `k` and the configured `B`.
    pub m_kb: Vec<usize>,
    /// Vertex counts per dyadic bin.
    pub sigma: Vec<usize>,
    /// `N_{>=K} - L1`.
    pub surplus: i64,
    pub susceptibility: f64,
}

impl TrajectoryRow {
    pub fn record(forest: &ForestState, config: &RunConfig, m: u64) -> Self {
        let p = forest.profile();
        Self::from_profile(&p, forest.edges_accepted(), config, m)
    }

    fn from_profile(p: &SizeProfile, edges: u64, config: &RunConfig, m: u64) -> Self {
        let n = p.n();
        TrajectoryRow {
            m,
            t: m as f64 / n as f64,
            l1: p.l1(),
            l2: p.l2(),
            ltop: p.l_top(config.rule.ell - 1),
            comp_count: p.comp_count(),
            edges,
            n_le: config.record_ks.iter().map(|&k| p.n_le_k(k)).collect(),
            m_kb: config
                .record_ks
                .iter()
                .map(|&k| p.m_k_b(k, config.bins_b).expect("validated bins_b"))
                .collect(),
            sigma: p.dyadic_bins(),
            surplus: p.n_ge_k(config.surplus_k) as i64 - p.l1() as i64,
            susceptibility: p.susceptibility(),
        }
    }

    /// Values in [`RunConfig::columns`] order, with `sigma` normalized by `n`.
    pub fn values(&self, n: usize) -> Vec<f64> {
        let mut v = vec![
            self.m as f64,
            self.t,
            self.l1 as f64,
            self.l2 as f64,
            self.ltop as f64,
            self.comp_count as f64,
            self.edges as f64,
        ];
        v.extend(self.n_le.iter().map(|&x| x as f64));
        v.extend(self.m_kb.iter().map(|&x| x as f64));
        v.extend(self.sigma.iter().map(|&x| x as f64 / n as f64));
        v.push(self.surplus as f64);
        v.push(self.susceptibility);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub steps: u64,
    pub l1: usize,
    pub l2: usize,
    pub comp_count: usize,
    pub edges_accepted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: RunConfig,
    pub rows: Vec<TrajectoryRow>,
    pub summary: FinalSummary,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.config.n
    }

    /// Index of `k` in the recorded thresholds.
    pub fn k_index(&self, k: usize) -> Option<usize> {
        self.config.record_ks.iter().position(|&x| x == k)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.config.columns().join(","))?;
        let n = self.n();
        for row in &self.rows {
            write!(
                w,
                "{},{},{},{},{},{},{}",
                row.m,
                sig9(row.t),
                row.l1,
                row.l2,
                row.ltop,
                row.comp_count,
                row.edges
            )?;
            for x in row.n_le.iter().chain(&row.m_kb) {
                write!(w, ",{x}")?;
            }
            for &s in &row.sigma {
                write!(w, ",{}", sig9(s as f64 / n as f64))?;
            }
            writeln!(w, ",{},{}", row.surplus, sig9(row.susceptibility))?;
        }
        Ok(())
    }
}

/// Replayable description of one run, written next to its CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: RunConfig,
    pub seed: u64,
    pub prng: String,
    pub seed_derivation: String,
    pub steps: u64,
    pub rows: usize,
    pub crate_version: String,
    /// Wall-clock seconds; the only field that varies between replays.
    pub wall_time_s: f64,
}

impl RunMetadata {
    pub fn new(traj: &Trajectory, wall_time_s: f64) -> Self {
        RunMetadata {
            config: traj.config.clone(),
            seed: traj.config.seed,
            prng: PRNG_ID.into(),
            seed_derivation: SEED_DERIVATION.into(),
            steps: traj.summary.steps,
            rows: traj.rows.len(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s,
        }
    }
}

/// Executes `floor(t_max * n)` steps, recording a row at every grid step.
pub fn run(config: &RunConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut process = Process::new(config.n, config.rule.clone(), config.sampling, config.seed)?;
    let grid = config.grid_steps();
    let mut rows = Vec::new();
    rows.try_reserve_exact(grid.len())
        .map_err(|_| Error::Allocation(config.n))?;
    for &m in &grid {
        process.advance_to(m)?;
        rows.push(TrajectoryRow::record(&process.forest, config, m));
    }
    let steps = config.steps();
    process.advance_to(steps)?;
    let f = &process.forest;
    Ok(Trajectory {
        config: config.clone(),
        rows,
        summary: FinalSummary {
            steps,
            l1: f.l1(),
            l2: f.l2(),
            comp_count: f.comp_count(),
            edges_accepted: f.edges_accepted(),
        },
    })
}

/// Runs and times a single configuration.
pub fn run_timed(config: &RunConfig) -> Result<(Trajectory, RunMetadata)> {
    let start = Instant::now();
    let traj = run(config)?;
    let meta = RunMetadata::new(&traj, start.elapsed().as_secs_f64());
    Ok((traj, meta))
}

/// Runs `runs` copies of `config` with seeds `split_seed(config.seed, i)`.
/// Results are in run-index order regardless of scheduling.
pub fn run_ensemble(config: &RunConfig, runs: usize, jobs: Option<usize>) -> Result<Vec<Trajectory>> {
    if runs == 0 {
        return Err(Error::config("ensemble needs at least one run"));
    }
    config.validate()?;
    let configs: Vec<RunConfig> = (0..runs)
        .map(|i| RunConfig {
            seed: split_seed(config.seed, i as u64),
            ..config.clone()
        })
        .collect();
    par_map(jobs, &configs, run)
}

/// Applies `f` to every item on a pool of `jobs` threads (default: all
/// cores), preserving input order.
pub fn par_map<T, U, F>(jobs: Option<usize>, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ColumnStats {
    /// Statistics of a sample; the sample standard deviation is 0 for one value.
    /// Values are sorted first so the result does not depend on input order.
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let len = v.len() as f64;
        let mean = v.iter().sum::<f64>() / len;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (len - 1.0)
        } else {
            0.0
        };
        ColumnStats {
            mean,
            std: var.sqrt(),
            min: v[0],
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub m: u64,
    pub t: f64,
    pub stats: Vec<ColumnStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub config: RunConfig,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub columns: Vec<String>,
    pub rows: Vec<EnsembleRow>,
}

impl EnsembleSummary {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Per-row statistic of a named column.
    pub fn column(&self, name: &str) -> Option<Vec<ColumnStats>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r.stats[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["m".to_string(), "t".to_string()];
        for c in self.columns.iter().skip(2) {
            for s in ["mean", "std", "min", "max"] {
                header.push(format!("{c}_{s}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            write!(w, "{},{}", row.m, sig9(row.t))?;
            for s in row.stats.iter().skip(2) {
                write!(w, ",{},{},{},{}", sig9(s.mean), sig9(s.std), sig9(s.min), sig9(s.max))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Aggregates trajectories that share one grid.
pub fn summarize(trajs: &[Trajectory]) -> Result<EnsembleSummary> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::config("cannot summarize an empty ensemble"))?;
    let n = first.n();
    if trajs.iter().any(|t| t.rows.len() != first.rows.len() || t.n() != n) {
        return Err(Error::config("trajectories do not share a grid"));
    }
    let columns = first.config.columns();
    let values: Vec<Vec<Vec<f64>>> = trajs
        .iter()
        .map(|t| t.rows.iter().map(|r| r.values(n)).collect())
        .collect();
    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| EnsembleRow {
            m: r.m,
            t: r.t,
            stats: (0..columns.len())
                .map(|c| {
                    let col: Vec<f64> = values.iter().map(|v| v[i][c]).collect();
                    ColumnStats::of(&col)
                })
                .collect(),
        })
        .collect();
    Ok(EnsembleSummary {
        config: first.config.clone(),
        runs: trajs.len(),
        seeds: trajs.iter().map(|t| t.config.seed).collect(),
        columns,
        rows,
    })
}

/// Ensemble run followed by aggregation.
pub fn ensemble(config: &RunConfig, runs: usize, jobs: Option<usize>) -> Result<EnsembleSummary> {
    summarize(&run_ensemble(config, runs, jobs)?)
}
