//! Post-run analysis of trajectories: transition windows, critical-time
//! estimates, second-giant and surplus statistics.
//!
//! Everything here works on recorded grid rows, so step positions are exact
//! only up to one grid interval (`ceil(grid_dt * n)` steps).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{EnsembleSummary, Trajectory};
use crate::error::{Error, Result};
use crate::output::sig9;

/// Scale of the lower threshold in [`jump_window`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HlTag {
    Sqrt,
    TwoThirds,
    NOverLog,
}

impl HlTag {
    pub fn eval(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            HlTag::Sqrt => n.sqrt(),
            HlTag::TwoThirds => n.powf(2.0 / 3.0),
            HlTag::NOverLog => n / n.ln(),
        }
    }
}

impl std::str::FromStr for HlTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(HlTag::Sqrt),
            "two_thirds" => Ok(HlTag::TwoThirds),
            "n_over_log" => Ok(HlTag::NOverLog),
            _ => Err(Error::config(format!(
                "unknown h_L tag {s:?} (expected sqrt, two_thirds, n_over_log)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WindowMode {
    FractionThresholds { a: f64, b: f64 },
    JumpThresholds { h_l: HlTag, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    #[serde(flatten)]
    pub mode: WindowMode,
    pub n: usize,
    /// Last step with `L1 <= lower`.
    pub m_minus: Option<u64>,
    /// First step with `L1 >= upper`.
    pub m_plus: Option<u64>,
    pub delta_steps: Option<u64>,
    pub delta_norm: Option<f64>,
}

impl WindowReport {
    pub fn attained(&self) -> bool {
        self.delta_steps.is_some()
    }
}

/// Window between thresholds `lower` and `upper` over `(m, l1)` points in
/// increasing `m`.
pub fn window_of_points(
    mode: WindowMode,
    n: usize,
    points: impl IntoIterator<Item = (u64, usize)>,
    lower: f64,
    upper: f64,
) -> WindowReport {
    let mut m_minus = None;
    let mut m_plus = None;
    for (m, l1) in points {
        let l1 = l1 as f64;
        if l1 <= lower {
            m_minus = Some(m);
        }
        if m_plus.is_none() && l1 >= upper {
            m_plus = Some(m);
        }
    }
    let delta_steps = match (m_minus, m_plus) {
        (Some(lo), Some(hi)) if hi > lo => Some(hi - lo),
        _ => None,
    };
    WindowReport {
        mode,
        n,
        m_minus,
        m_plus,
        delta_steps,
        delta_norm: delta_steps.map(|d| d as f64 / n as f64),
    }
}

fn points(traj: &Trajectory) -> impl Iterator<Item = (u64, usize)> + '_ {
    traj.rows.iter().map(|r| (r.m, r.l1))
}

/// `m_minus = max{m: L1 <= a n}`, `m_plus = min{m: L1 >= b n}` over grid rows.
pub fn window(traj: &Trajectory, a: f64, b: f64) -> Result<WindowReport> {
    check_fractions(a, b)?;
    let n = traj.n();
    let mode = WindowMode::FractionThresholds { a, b };
    Ok(window_of_points(mode, n, points(traj), a * n as f64, b * n as f64))
}

pub(crate) fn check_fractions(a: f64, b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a >= b {
        return Err(Error::config(format!("window needs 0 <= a < b <= 1, got a = {a}, b = {b}")));
    }
    Ok(())
}

/// Window from `L1 <= h_L(n)` to `L1 >= delta n`.
pub fn jump_window(traj: &Trajectory, h_l: HlTag, delta: f64) -> Result<WindowReport> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::config(format!("delta must lie in (0, 1], got {delta}")));
    }
    let n = traj.n();
    let mode = WindowMode::JumpThresholds { h_l, delta };
    Ok(window_of_points(mode, n, points(traj), h_l.eval(n), delta * n as f64))
}

/// A maximum over rows and the step where it is first attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowMax {
    pub value: i64,
    pub at_m: u64,
}

impl RowMax {
    fn over(values: impl IntoIterator<Item = (u64, i64)>) -> Option<Self> {
        values.into_iter().fold(None, |best: Option<RowMax>, (m, v)| match best {
            Some(b) if b.value >= v => Some(b),
            _ => Some(RowMax { value: v, at_m: m }),
        })
    }

    pub fn normalized(&self, n: usize) -> f64 {
        self.value as f64 / n as f64
    }
}

/// `N_{>=K}` per row, when it is recorded or derivable.
fn n_ge_series(traj: &Trajectory, k: usize) -> Result<Vec<i64>> {
    let n = traj.n() as i64;
    if k == 0 {
        return Err(Error::config("K must be at least 1"));
    }
    if k == traj.config.surplus_k {
        return Ok(traj.rows.iter().map(|r| r.surplus + r.l1 as i64).collect());
    }
    if k == 1 {
        return Ok(vec![n; traj.rows.len()]);
    }
    match traj.k_index(k - 1) {
        Some(i) => Ok(traj.rows.iter().map(|r| n - r.n_le[i] as i64).collect()),
        None => Err(Error::config(format!(
            "N_>={k} is neither the recorded surplus K ({}) nor derivable from record_ks",
            traj.config.surplus_k
        ))),
    }
}

/// `max_m (N_{>=K} - L1)`.
pub fn surplus_max(traj: &Trajectory, k: usize) -> Result<RowMax> {
    let ge = n_ge_series(traj, k)?;
    RowMax::over(traj.rows.iter().zip(ge).map(|(r, g)| (r.m, g - r.l1 as i64)))
        .ok_or_else(|| Error::Inconclusive("trajectory has no rows".into()))
}

/// `max_m (N_{>=K} - L)` with `L` the sum of the `ell - 1` largest components.
pub fn surplus_top_max(traj: &Trajectory, k: usize) -> Result<RowMax> {
    let ge = n_ge_series(traj, k)?;
    RowMax::over(traj.rows.iter().zip(ge).map(|(r, g)| (r.m, g - r.ltop as i64)))
        .ok_or_else(|| Error::Inconclusive("trajectory has no rows".into()))
}

pub fn l2_max(traj: &Trajectory) -> Option<RowMax> {
    RowMax::over(traj.rows.iter().map(|r| (r.m, r.l2 as i64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TcMethod {
    #[default]
    L1Crossing,
    SusceptibilityPeak,
}

impl std::str::FromStr for TcMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1_crossing" => Ok(TcMethod::L1Crossing),
            "susceptibility_peak" => Ok(TcMethod::SusceptibilityPeak),
            _ => Err(Error::config(format!("unknown t_c method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalEstimate {
    pub method: TcMethod,
    pub t_c: f64,
    /// Crossing level (vertices) or peak susceptibility.
    pub detail: f64,
}

/// Critical time from `(t, l1, susceptibility)` series.
pub fn tc_from_series(n: usize, series: &[(f64, f64, f64)], method: TcMethod) -> Option<CriticalEstimate> {
    match method {
        TcMethod::L1Crossing => {
            let level = (n as f64).powf(2.0 / 3.0);
            let i = series.iter().position(|s| s.1 >= level)?;
            let t_c = if i == 0 {
                series[0].0
            } else {
                let (a, b) = (series[i - 1], series[i]);
                a.0 + (level - a.1) / (b.1 - a.1) * (b.0 - a.0)
            };
            Some(CriticalEstimate { method, t_c, detail: level })
        }
        TcMethod::SusceptibilityPeak => {
            let (i, peak) = series
                .iter()
                .enumerate()
                .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
                    Some((_, v)) if v >= s.2 => best,
                    _ => Some((i, s.2)),
                })?;
            if i == 0 || i + 1 == series.len() {
                return None;
            }
            Some(CriticalEstimate { method, t_c: series[i].0, detail: peak })
        }
    }
}

pub fn tc_estimate(traj: &Trajectory, method: TcMethod) -> Option<CriticalEstimate> {
    let series: Vec<_> = traj.rows.iter().map(|r| (r.t, r.l1 as f64, r.susceptibility)).collect();
    tc_from_series(traj.n(), &series, method)
}

/// Same estimators on ensemble means.
pub fn tc_estimate_ensemble(summary: &EnsembleSummary, method: TcMethod) -> Option<CriticalEstimate> {
    let l1 = summary.column("l1")?;
    let sus = summary.column("susceptibility")?;
    let series: Vec<_> = summary
        .rows
        .iter()
        .zip(l1.iter().zip(&sus))
        .map(|(r, (a, b))| (r.t, a.mean, b.mean))
        .collect();
    tc_from_series(summary.config.n, &series, method)
}

/// Normalized dyadic occupancies at the grid row nearest to `t`.
pub fn sigma_profile(traj: &Trajectory, t: f64) -> Result<Vec<f64>> {
    if t > traj.config.t_max + 1e-12 {
        return Err(Error::config(format!("t = {t} beyond t_max = {}", traj.config.t_max)));
    }
    let row = traj
        .rows
        .iter()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .ok_or_else(|| Error::Inconclusive("trajectory has no rows".into()))?;
    let n = traj.n() as f64;
    Ok(row.sigma.iter().map(|&c| c as f64 / n).collect())
}

/// One row of a window sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub rule: String,
    pub n: usize,
    pub seed: u64,
    pub a: f64,
    pub b: f64,
    pub m_minus: Option<u64>,
    pub m_plus: Option<u64>,
    pub delta: Option<u64>,
    pub delta_over_n: Option<f64>,
}

pub const WINDOW_CSV_HEADER: &str = "rule,n,seed,a,b,m_minus,m_plus,delta,delta_over_n";

/// Writes sweep rows; unattained values are left empty.
pub fn write_window_csv<W: Write>(mut w: W, rows: &[WindowRow]) -> Result<()> {
    fn opt<T: ToString>(v: Option<T>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    writeln!(w, "{WINDOW_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.rule,
            r.n,
            r.seed,
            sig9(r.a),
            sig9(r.b),
            opt(r.m_minus),
            opt(r.m_plus),
            opt(r.delta),
            r.delta_over_n.map(sig9).unwrap_or_default()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, RunConfig};
    use crate::rules::RuleSpec;

    fn frac() -> WindowMode {
        WindowMode::FractionThresholds { a: 0.2, b: 0.4 }
    }

    #[test]
    fn synthetic_window() {
        let pts = [(10, 10), (20, 30), (30, 50)];
        let w = window_of_points(frac(), 100, pts, 20.0, 40.0);
        assert_eq!(w.m_minus, Some(10));
        assert_eq!(w.m_plus, Some(30));
        assert_eq!(w.delta_steps, Some(20));
        assert_eq!(w.delta_norm, Some(0.2));
        let w = window_of_points(frac(), 100, [(10, 10), (20, 30)], 20.0, 40.0);
        assert_eq!(w.m_plus, None);
        assert!(!w.attained());
        let w = window_of_points(frac(), 100, [(10, 25), (20, 45)], 20.0, 40.0);
        assert_eq!(w.m_minus, None);
    }

    #[test]
    fn bad_fractions() {
        let traj = run(&RunConfig::new(100, RuleSpec::erdos_renyi(), 1, 1.0, 0.1)).unwrap();
        assert!(window(&traj, 0.4, 0.2).unwrap_err().is_config());
        assert!(window(&traj, 0.3, 0.3).is_err());
        assert!(jump_window(&traj, HlTag::Sqrt, 0.0).is_err());
    }

    #[test]
    fn jump_levels() {
        assert!((HlTag::Sqrt.eval(10_000) - 100.0).abs() < 1e-9);
        assert!((HlTag::TwoThirds.eval(1_000_000) - 10_000.0).abs() < 1e-6);
        assert!((HlTag::NOverLog.eval(100) - 100.0 / 100f64.ln()).abs() < 1e-12);
        assert_eq!("two_thirds".parse::<HlTag>().unwrap(), HlTag::TwoThirds);
        assert!("cube".parse::<HlTag>().is_err());
    }

    #[test]
    fn crossing_interpolates() {
        // level n^{2/3} = 100 for n = 1000
        let s = [(0.1, 0.0, 1.0), (0.2, 50.0, 3.0), (0.3, 150.0, 2.0), (0.4, 400.0, 1.0)];
        let est = tc_from_series(1000, &s, TcMethod::L1Crossing).unwrap();
        assert!((est.t_c - 0.25).abs() < 1e-12);
        assert!((est.detail - 100.0).abs() < 1e-9);
        let peak = tc_from_series(1000, &s, TcMethod::SusceptibilityPeak).unwrap();
        assert_eq!(peak.t_c, 0.2);
        assert_eq!(peak.detail, 3.0);
        let edge = [(0.1, 0.0, 5.0), (0.2, 1.0, 3.0)];
        assert!(tc_from_series(1000, &edge, TcMethod::SusceptibilityPeak).is_none());
        assert!(tc_from_series(1000, &edge, TcMethod::L1Crossing).is_none());
    }

    #[test]
    fn fresh_state_statistics() {
        let mut cfg = RunConfig::new(64, RuleSpec::erdos_renyi(), 3, 0.01, 0.01);
        cfg.surplus_k = 2;
        let traj = run(&cfg).unwrap();
        let first = &traj.rows[0];
        assert_eq!(first.m, 0);
        assert_eq!(first.surplus, -1);
        assert_eq!(sigma_profile(&traj, 0.0).unwrap()[0], 1.0);
        assert_eq!(l2_max(&traj).unwrap().value, 1);
        assert!(sigma_profile(&traj, 1.0).is_err());
    }

    #[test]
    fn surplus_derivation() {
        let mut cfg = RunConfig::new(2000, RuleSpec::erdos_renyi(), 5, 1.2, 0.05);
        cfg.surplus_k = 7;
        let traj = run(&cfg).unwrap();
        let direct = surplus_max(&traj, 7).unwrap();
        // N_{>=7} = n - N_{<=6}
        let derived_value = traj
            .rows
            .iter()
            .map(|r| 2000 - r.n_le[5] as i64 - r.l1 as i64)
            .max()
            .unwrap();
        assert_eq!(direct.value, derived_value);
        assert!(surplus_max(&traj, 11).is_ok());
        assert!(surplus_max(&traj, 50).unwrap_err().is_config());
        let top = surplus_top_max(&traj, 7).unwrap();
        assert!(top.value <= direct.value);
        for r in &traj.rows {
            assert!(r.surplus + r.l1 as i64 >= 0);
            let s: f64 = r.sigma.iter().sum::<usize>() as f64;
            assert_eq!(s as usize, 2000);
        }
    }

    #[test]
    fn window_nesting_on_run() {
        let traj = run(&RunConfig::new(5000, RuleSpec::bohman_frieze(), 9, 1.5, 0.002)).unwrap();
        let inner = window(&traj, 0.1, 0.3).unwrap();
        let outer = window(&traj, 0.05, 0.5).unwrap();
        assert!(outer.delta_steps.unwrap() >= inner.delta_steps.unwrap());
        assert!(inner.m_minus.unwrap() < inner.m_plus.unwrap());
    }

    #[test]
    fn window_csv() {
        let rows = vec![WindowRow {
            rule: "erdos_renyi".into(),
            n: 100,
            seed: 1,
            a: 0.05,
            b: 0.3,
            m_minus: Some(40),
            m_plus: None,
            delta: None,
            delta_over_n: None,
        }];
        let mut buf = Vec::new();
        write_window_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{WINDOW_CSV_HEADER}\nerdos_renyi,100,1,0.05,0.3,40,,,\n"));
    }
}
