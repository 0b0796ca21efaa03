//! Fluid limit of size rules.
//!
//! In the limit each step offers `ell` vertices whose component sizes are
//! i.i.d. from the size-biased law `(rho_1, rho_2, ..., rho_inf)`, where
//! `rho_inf` collects every vertex in a component larger than the
//! truncation `Kmax`. A rule turns that law into a law for the ordered pair
//! `(X, Y)` of endpoint sizes of the applied edge, and one step moves
//!
//! ```text
//! d rho_k / dt = k * sum_{i + j = k} P(X = i, Y = j) - k * (P(X = k) + P(Y = k))
//! ```
//!
//! Joins of two positions inside one finite component are `O(1/n)` and
//! dropped. Everything a rule compares against `k <= Kmax` is either a
//! finite `rho_j` or the lump `rho_inf` (which is larger than any finite
//! size), so the truncated system is exact for `rho_1..rho_Kmax`; only the
//! split of `rho_inf` into the giant and the finite tail beyond `Kmax`
//! has to be estimated, see [`tail_beyond`].

use std::io::Write;

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::sig9;
use crate::rules::{OfferedTuple, RuleKind, RuleSpec, MAX_ELL};

/// An endpoint size class in the fluid limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Finite(usize),
    /// Components larger than `Kmax`, including the giant.
    Escaped,
}

#[derive(Debug, Clone)]
struct ProfileEntry {
    classes: ArrayVec<u8, MAX_ELL>,
    /// `(position a, position b, probability)` of each possible decision.
    picks: Vec<(u8, u8, f64)>,
}

/// Decision table of a bounded-size rule over all truncated profiles.
#[derive(Debug, Clone)]
pub struct KernelTable {
    bound: usize,
    entries: Vec<ProfileEntry>,
}

impl KernelTable {
    fn build(rule: &RuleSpec, bound: usize) -> Result<Self> {
        let ell = rule.ell;
        let radix = bound + 1;
        let count = radix
            .checked_pow(ell as u32)
            .filter(|&c| c <= 1 << 22)
            .ok_or_else(|| Error::config("truncated profile space too large"))?;
        let mut entries = Vec::with_capacity(count);
        let mut sizes = vec![1usize; ell];
        for idx in 0..count {
            let mut rem = idx;
            for slot in sizes.iter_mut().rev() {
                *slot = rem % radix + 1;
                rem /= radix;
            }
            let law = rule.decision_law(&OfferedTuple::distinct(&sizes))?;
            let mut picks = Vec::new();
            for (decision, w) in law {
                match decision.edges.as_slice() {
                    [p] => picks.push((p.a, p.b, w)),
                    _ => {
                        return Err(Error::Unsupported {
                            rule: rule.name().into(),
                            what: "the ODE kernel",
                            reason: "decisions must add exactly one edge".into(),
                        })
                    }
                }
            }
            entries.push(ProfileEntry {
                classes: sizes.iter().map(|&c| (c - 1) as u8).collect(),
                picks,
            });
        }
        Ok(KernelTable { bound, entries })
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    /// Truncated-class marginals `rho_hat_c`, `c = 1..=B+1`.
    pub fn marginals(&self, rho: &[f64], rho_inf: f64) -> Vec<f64> {
        let b = self.bound;
        let mut hat: Vec<f64> = (1..=b).map(|k| rho.get(k - 1).copied().unwrap_or(0.0)).collect();
        let tail: f64 = rho.iter().skip(b).sum::<f64>() + rho_inf;
        hat.push(tail);
        hat
    }

    /// `A[c1][c2]`: probability that the decision falls on positions with
    /// classes `(c1, c2)`, divided by `rho_hat_c1 * rho_hat_c2`.
    fn class_weights(&self, hat: &[f64]) -> Vec<Vec<f64>> {
        let nb = hat.len();
        let mut a = vec![vec![0.0; nb]; nb];
        for e in &self.entries {
            for &(pa, pb, w) in &e.picks {
                let mut prod = w;
                for (i, &c) in e.classes.iter().enumerate() {
                    if i != pa as usize && i != pb as usize {
                        prod *= hat[c as usize];
                    }
                }
                a[e.classes[pa as usize] as usize][e.classes[pb as usize] as usize] += prod;
            }
        }
        a
    }
}

#[derive(Debug, Clone)]
enum KernelKind {
    Bounded(KernelTable),
    Dcdgm,
    TwoSmallest { ell: usize },
}

/// Endpoint-pair law of a supported rule.
#[derive(Debug, Clone)]
pub struct Kernel {
    kind: KernelKind,
    rule: RuleSpec,
}

/// Per-size creation and destruction probabilities for one state:
/// `create[k] = sum_{i+j=k} P(i, j)`, `destroy[k] = P(X=k) + P(Y=k)`
/// (index `k - 1`).
#[derive(Debug, Clone, Default)]
pub struct Flows {
    pub create: Vec<f64>,
    pub destroy: Vec<f64>,
}

fn pow_diff(x: f64, y: f64, diff: f64, n: usize) -> f64 {
    // x^n - y^n with x - y = diff given exactly
    let mut s = 0.0;
    let mut xp = 1.0;
    for i in 0..n {
        s += xp * y.powi((n - 1 - i) as i32);
        xp *= x;
    }
    diff * s
}

/// `S_j = sum_{i >= j} rho_i + rho_inf` for `j = 1..=K+1` (index `j - 1`).
fn tail_sums(rho: &[f64], rho_inf: f64) -> Vec<f64> {
    let k = rho.len();
    let mut s = vec![0.0; k + 1];
    s[k] = rho_inf;
    for j in (0..k).rev() {
        s[j] = s[j + 1] + rho[j];
    }
    s
}

/// `out[i + j] += scale * v[i] v[j]` over ordered pairs with `i, j >= lo`
/// (1-based sizes, index `size - 1`), `i + j <= len`.
fn self_convolve_into(v: &[f64], lo: usize, scale: f64, out: &mut [f64]) {
    let kmax = v.len();
    for i in lo..=kmax {
        let vi = v[i - 1];
        if vi == 0.0 || 2 * i > kmax {
            if 2 * i > kmax {
                break;
            }
            continue;
        }
        out[2 * i - 1] += scale * vi * vi;
        let c = 2.0 * scale * vi;
        let hi = kmax - i;
        // sizes j in i+1..=hi land in i+j
        let (src, dst) = (&v[i..hi], &mut out[2 * i..i + hi]);
        for (o, &vj) in dst.iter_mut().zip(src) {
            *o += c * vj;
        }
    }
}

impl Kernel {
    /// Kernel for bounded-size rules (through their truncated decision
    /// table), `dcdgm`, and `join_two_smallest`.
    pub fn for_rule(rule: &RuleSpec) -> Result<Self> {
        rule.validate()?;
        let kind = if let Some(bound) = rule.size_bound() {
            KernelKind::Bounded(KernelTable::build(rule, bound)?)
        } else {
            match rule.kind {
                RuleKind::Dcdgm => KernelKind::Dcdgm,
                RuleKind::JoinTwoSmallest => KernelKind::TwoSmallest { ell: rule.ell },
                _ => {
                    return Err(Error::Unsupported {
                        rule: rule.name().into(),
                        what: "the ODE limit",
                        reason: "no finite description of its size dynamics is known; \
                                 supported: bounded-size rules, dcdgm, join_two_smallest"
                            .into(),
                    })
                }
            }
        };
        Ok(Kernel {
            kind,
            rule: rule.clone(),
        })
    }

    pub fn rule(&self) -> &RuleSpec {
        &self.rule
    }

    /// Smallest truncation the kernel accepts.
    pub fn min_kmax(&self) -> usize {
        match &self.kind {
            KernelKind::Bounded(t) => 2 * t.bound + 2,
            _ => 4,
        }
    }

    pub fn table(&self) -> Option<&KernelTable> {
        match &self.kind {
            KernelKind::Bounded(t) => Some(t),
            _ => None,
        }
    }

    /// Ordered endpoint-pair probability `P(X = i, Y = j)`.
    pub fn pair_prob(&self, rho: &[f64], rho_inf: f64, i: Endpoint, j: Endpoint) -> f64 {
        let kmax = rho.len();
        let nu = |e: Endpoint| match e {
            Endpoint::Finite(k) if k >= 1 && k <= kmax => rho[k - 1],
            Endpoint::Finite(_) => 0.0,
            Endpoint::Escaped => rho_inf,
        };
        match &self.kind {
            KernelKind::Bounded(t) => {
                let hat = t.marginals(rho, rho_inf);
                let a = t.class_weights(&hat);
                let cls = |e: Endpoint| match e {
                    Endpoint::Finite(k) => k.min(t.bound + 1) - 1,
                    Endpoint::Escaped => t.bound,
                };
                a[cls(i)][cls(j)] * nu(i) * nu(j)
            }
            KernelKind::Dcdgm => {
                let s = tail_sums(rho, rho_inf);
                let p = |e: Endpoint| match e {
                    Endpoint::Finite(k) if k >= 1 && k <= kmax => rho[k - 1] * (s[k - 1] + s[k]),
                    Endpoint::Finite(_) => 0.0,
                    Endpoint::Escaped => rho_inf * rho_inf,
                };
                p(i) * p(j)
            }
            KernelKind::TwoSmallest { ell } => {
                let ell = *ell;
                let s = tail_sums(rho, rho_inf);
                let upper = |e: Endpoint| match e {
                    Endpoint::Finite(k) => (s[k - 1], s[k]),
                    Endpoint::Escaped => (rho_inf, 0.0),
                };
                match (i, j) {
                    (Endpoint::Finite(a), Endpoint::Finite(b)) if a > b => 0.0,
                    (Endpoint::Escaped, Endpoint::Finite(_)) => 0.0,
                    _ if i == j => {
                        let (sa, sa1) = upper(i);
                        let x = nu(i);
                        // at least two of the ell draws at this size, the rest above
                        pow_diff(sa, sa1, x, ell) - ell as f64 * x * sa1.powi(ell as i32 - 1)
                    }
                    _ => {
                        let (sb, sb1) = upper(j);
                        ell as f64 * nu(i) * pow_diff(sb, sb1, nu(j), ell - 1)
                    }
                }
            }
        }
    }

    /// `kappa(j1, j2)`: probability per step that the applied edge joins a
    /// size-`j1` component to a distinct size-`j2` component, both orders summed.
    pub fn join_rate(&self, rho: &[f64], j1: usize, j2: usize) -> f64 {
        let rho_inf = (1.0 - rho.iter().sum::<f64>()).max(0.0);
        let (a, b) = (Endpoint::Finite(j1), Endpoint::Finite(j2));
        if j1 == j2 {
            self.pair_prob(rho, rho_inf, a, a)
        } else {
            self.pair_prob(rho, rho_inf, a, b) + self.pair_prob(rho, rho_inf, b, a)
        }
    }

    /// Creation and destruction probabilities for `k = 1..=rho.len()`.
    pub fn flows(&self, rho: &[f64], rho_inf: f64, out: &mut Flows) {
        let kmax = rho.len();
        out.create.clear();
        out.create.resize(kmax, 0.0);
        out.destroy.clear();
        out.destroy.resize(kmax, 0.0);
        let rho_inf = rho_inf.max(0.0);
        match &self.kind {
            KernelKind::Bounded(t) => {
                let b = t.bound;
                let hat = t.marginals(rho, rho_inf);
                let a = t.class_weights(&hat);
                let nb = hat.len();
                let row: Vec<f64> = (0..nb).map(|c| (0..nb).map(|d| a[c][d] * hat[d]).sum()).collect();
                let col: Vec<f64> = (0..nb).map(|c| (0..nb).map(|d| a[d][c] * hat[d]).sum()).collect();
                let cls = |k: usize| k.min(b + 1) - 1;
                for k in 1..=kmax {
                    out.destroy[k - 1] = rho[k - 1] * (row[cls(k)] + col[cls(k)]);
                }
                // first endpoint at an exact small size
                for i in 1..=b.min(kmax) {
                    let ri = rho[i - 1];
                    for j in 1..=kmax.saturating_sub(i) {
                        out.create[i + j - 1] += ri * a[i - 1][cls(j)] * rho[j - 1];
                    }
                }
                // first endpoint in the top class, second small
                for j in 1..=b.min(kmax) {
                    let w = a[b][j - 1] * rho[j - 1];
                    for i in b + 1..=kmax.saturating_sub(j) {
                        out.create[i + j - 1] += w * rho[i - 1];
                    }
                }
                let mut tail = rho.to_vec();
                for x in tail.iter_mut().take(b) {
                    *x = 0.0;
                }
                self_convolve_into(&tail, b + 1, a[b][b], &mut out.create);
            }
            KernelKind::Dcdgm => {
                let s = tail_sums(rho, rho_inf);
                let p: Vec<f64> = (0..kmax).map(|i| rho[i] * (s[i] + s[i + 1])).collect();
                for k in 0..kmax {
                    out.destroy[k] = 2.0 * p[k];
                }
                self_convolve_into(&p, 1, 1.0, &mut out.create);
            }
            KernelKind::TwoSmallest { ell } => {
                let ell = *ell;
                let s = tail_sums(rho, rho_inf);
                let g: Vec<f64> = (0..kmax).map(|i| pow_diff(s[i], s[i + 1], rho[i], ell - 1)).collect();
                let diag: Vec<f64> = (0..kmax)
                    .map(|i| pow_diff(s[i], s[i + 1], rho[i], ell) - ell as f64 * rho[i] * s[i + 1].powi(ell as i32 - 1))
                    .collect();
                let fl = ell as f64;
                let mut below = 0.0;
                for k in 1..=kmax {
                    let i = k - 1;
                    let p_min = pow_diff(s[i], s[i + 1], rho[i], ell);
                    let p_second = fl * below * g[i] + diag[i];
                    out.destroy[i] = p_min + p_second;
                    below += rho[i];
                }
                for a in 1..=kmax {
                    let ra = fl * rho[a - 1];
                    if 2 * a <= kmax {
                        out.create[2 * a - 1] += diag[a - 1];
                    }
                    if ra == 0.0 {
                        continue;
                    }
                    for b in a + 1..=kmax.saturating_sub(a) {
                        out.create[a + b - 1] += ra * g[b - 1];
                    }
                }
            }
        }
    }

    /// Right-hand side `d rho_k / dt`, `k = 1..=rho.len()`.
    pub fn rhs(&self, rho: &[f64], rho_inf: f64) -> Vec<f64> {
        let mut flows = Flows::default();
        let mut out = vec![0.0; rho.len()];
        self.rhs_into(rho, rho_inf, &mut flows, &mut out);
        out
    }

    fn rhs_into(&self, rho: &[f64], rho_inf: f64, flows: &mut Flows, out: &mut [f64]) {
        self.flows(rho, rho_inf, flows);
        for (k, o) in out.iter_mut().enumerate() {
            *o = (k + 1) as f64 * (flows.create[k] - flows.destroy[k]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub kmax: usize,
    pub h: f64,
    pub t_max: f64,
    /// Spacing of the stored full states; rounded to a multiple of `h`.
    pub grid_dt: f64,
}

impl OdeConfig {
    pub fn new(kmax: usize, h: f64, t_max: f64, grid_dt: f64) -> Self {
        OdeConfig { kmax, h, t_max, grid_dt }
    }

    fn steps(&self) -> usize {
        (self.t_max / self.h).round() as usize
    }

    fn grid_every(&self) -> usize {
        ((self.grid_dt / self.h).round() as usize).max(1)
    }
}

/// Negative components down to this magnitude are roundoff and clamped.
pub const NEG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    pub t: f64,
    /// `rho_1..rho_Kmax` (index `k - 1`).
    pub rho: Vec<f64>,
    /// `1 - sum_k rho_k`: mass in components larger than `Kmax`.
    pub rho_inf: f64,
    /// `rho_inf` minus the extrapolated finite tail beyond `Kmax`: the
    /// estimate of the giant-component fraction.
    pub giant: f64,
}

impl OdeState {
    fn new(t: f64, rho: Vec<f64>) -> Self {
        let rho_inf = 1.0 - rho.iter().sum::<f64>();
        let giant = (rho_inf - tail_beyond(&rho)).max(0.0);
        OdeState { t, rho, rho_inf, giant }
    }

    /// `rho_k`, 0 beyond the truncation.
    pub fn rho_k(&self, k: usize) -> f64 {
        if k >= 1 && k <= self.rho.len() {
            self.rho[k - 1]
        } else {
            0.0
        }
    }

    /// `rho_{<=k}`.
    pub fn rho_le(&self, k: usize) -> f64 {
        self.rho.iter().take(k).sum()
    }
}

/// Scalars recorded at every integration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinePoint {
    pub t: f64,
    pub rho_inf: f64,
    pub giant: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeSolution {
    pub rule: RuleSpec,
    pub config: OdeConfig,
    /// Full states every `grid_dt`.
    pub grid: Vec<OdeState>,
    /// `rho_inf` and the giant estimate at every step of size `h`.
    pub fine: Vec<FinePoint>,
}

/// Fixed-step RK4 from `rho(0) = (1, 0, ...)`.
pub fn integrate(rule: &RuleSpec, config: OdeConfig) -> Result<OdeSolution> {
    let kernel = Kernel::for_rule(rule)?;
    integrate_kernel(&kernel, config)
}

pub fn integrate_kernel(kernel: &Kernel, config: OdeConfig) -> Result<OdeSolution> {
    let kmax = config.kmax;
    if kmax < kernel.min_kmax() {
        return Err(Error::config(format!(
            "Kmax = {kmax} below the minimum {} for rule {}",
            kernel.min_kmax(),
            kernel.rule().name()
        )));
    }
    if !(config.h > 0.0 && config.h.is_finite()) {
        return Err(Error::config("step size h must be positive"));
    }
    if !(config.t_max > 0.0 && config.t_max.is_finite()) {
        return Err(Error::config("t_max must be positive"));
    }
    if !(config.grid_dt > 0.0) {
        return Err(Error::config("grid_dt must be positive"));
    }
    let steps = config.steps();
    let every = config.grid_every();
    let h = config.h;

    let mut y = vec![0.0; kmax];
    y[0] = 1.0;
    let mut flows = Flows::default();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; kmax], vec![0.0; kmax], vec![0.0; kmax], vec![0.0; kmax]);
    let mut tmp = vec![0.0; kmax];
    let mass_inf = |v: &[f64]| 1.0 - v.iter().sum::<f64>();

    let first = OdeState::new(0.0, y.clone());
    let mut fine = Vec::with_capacity(steps + 1);
    fine.push(FinePoint { t: 0.0, rho_inf: first.rho_inf, giant: first.giant });
    let mut grid = vec![first];

    for step in 1..=steps {
        let t = step as f64 * h;
        kernel.rhs_into(&y, mass_inf(&y), &mut flows, &mut k1);
        for i in 0..kmax {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        kernel.rhs_into(&tmp, mass_inf(&tmp), &mut flows, &mut k2);
        for i in 0..kmax {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        kernel.rhs_into(&tmp, mass_inf(&tmp), &mut flows, &mut k3);
        for i in 0..kmax {
            tmp[i] = y[i] + h * k3[i];
        }
        kernel.rhs_into(&tmp, mass_inf(&tmp), &mut flows, &mut k4);
        for i in 0..kmax {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for (i, v) in y.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -NEG_CLAMP {
                    return Err(Error::Instability {
                        t,
                        detail: format!("rho_{} = {:e} below -{NEG_CLAMP:e}", i + 1, *v),
                    });
                }
                *v = 0.0;
            } else if *v > 1.0 + 1e-6 {
                return Err(Error::Instability {
                    t,
                    detail: format!("rho_{} = {} exceeds 1", i + 1, *v),
                });
            }
        }
        let rho_inf = mass_inf(&y);
        if !(rho_inf.is_finite() && rho_inf.abs() <= 1.0 + 1e-6) {
            return Err(Error::Instability { t, detail: format!("rho_inf = {rho_inf}") });
        }
        if step % every == 0 || step == steps {
            let state = OdeState::new(t, y.clone());
            fine.push(FinePoint { t, rho_inf: state.rho_inf, giant: state.giant });
            grid.push(state);
        } else {
            let giant = (rho_inf - tail_beyond(&y)).max(0.0);
            fine.push(FinePoint { t, rho_inf, giant });
        }
    }
    Ok(OdeSolution {
        rule: kernel.rule().clone(),
        config,
        grid,
        fine,
    })
}

impl OdeSolution {
    fn interp(&self, t: f64, f: impl Fn(&FinePoint) -> f64) -> f64 {
        let h = self.config.h;
        let x = (t / h).clamp(0.0, (self.fine.len() - 1) as f64);
        let i = x.floor() as usize;
        if i + 1 >= self.fine.len() {
            return f(&self.fine[self.fine.len() - 1]);
        }
        let w = x - i as f64;
        (1.0 - w) * f(&self.fine[i]) + w * f(&self.fine[i + 1])
    }

    /// Giant-fraction estimate at `t`, linearly interpolated between steps.
    pub fn giant_at(&self, t: f64) -> f64 {
        self.interp(t, |p| p.giant)
    }

    pub fn rho_inf_at(&self, t: f64) -> f64 {
        self.interp(t, |p| p.rho_inf)
    }

    /// Stored full state nearest to `t`.
    pub fn state_near(&self, t: f64) -> &OdeState {
        self.grid
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("solution has at least the initial state")
    }

    /// First step time where the giant estimate exceeds `level`.
    pub fn critical_time(&self, level: f64) -> Option<f64> {
        let i = self.fine.iter().position(|p| p.giant > level)?;
        if i == 0 {
            return Some(0.0);
        }
        let (a, b) = (self.fine[i - 1], self.fine[i]);
        Some(a.t + (level - a.giant) / (b.giant - a.giant) * (b.t - a.t))
    }

    /// `(rho(t_c + h_fd) - rho(t_c)) / h_fd` on the giant estimate.
    pub fn right_derivative(&self, t_c: f64, h_fd: f64) -> f64 {
        (self.giant_at(t_c + h_fd) - self.giant_at(t_c)) / h_fd
    }

    pub fn write_csv<W: Write>(&self, mut w: W, kprint: usize) -> Result<()> {
        let kprint = kprint.min(self.config.kmax);
        let mut header = vec!["t".to_string(), "rho_inf".to_string()];
        header.extend((1..=kprint).map(|k| format!("rho_{k}")));
        header.push("giant".into());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.grid {
            write!(w, "{},{}", sig9(s.t), sig9(s.rho_inf))?;
            for k in 1..=kprint {
                write!(w, ",{}", sig9(s.rho_k(k)))?;
            }
            writeln!(w, ",{}", sig9(s.giant))?;
        }
        Ok(())
    }
}

/// Default level for locating the critical time on the giant estimate.
pub const CRITICAL_LEVEL: f64 = 1e-4;

/// Metadata written next to an ODE CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeMetadata {
    pub rule: RuleSpec,
    pub kmax: usize,
    pub h: f64,
    pub t_max: f64,
    pub grid_dt: f64,
    pub critical_level: f64,
    pub t_c: Option<f64>,
    /// `rho_inf - giant` at `t_c`: mass beyond `Kmax` that is not giant.
    pub leakage_at_tc: Option<f64>,
    pub crate_version: String,
    pub wall_time_s: f64,
}

impl OdeMetadata {
    pub fn new(sol: &OdeSolution, wall_time_s: f64) -> Self {
        let t_c = sol.critical_time(CRITICAL_LEVEL);
        OdeMetadata {
            rule: sol.rule.clone(),
            kmax: sol.config.kmax,
            h: sol.config.h,
            t_max: sol.config.t_max,
            grid_dt: sol.config.grid_dt,
            critical_level: CRITICAL_LEVEL,
            t_c,
            leakage_at_tc: t_c.map(|t| sol.rho_inf_at(t) - sol.giant_at(t)),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s,
        }
    }
}

/// Estimated `sum_{k > Kmax} rho_k` from the last half of the computed
/// sizes, modelled as a power law with an exponential cutoff and summed to
/// infinity.
pub fn tail_beyond(rho: &[f64]) -> f64 {
    let kmax = rho.len();
    if kmax < 16 {
        return 0.0;
    }
    // sizes scaled by Kmax keep the basis columns of comparable magnitude
    let kf = kmax as f64;
    let pts: Vec<(f64, f64)> = (kmax / 2..=kmax)
        .filter(|&k| rho[k - 1] > 1e-280)
        .map(|k| (k as f64 / kf, rho[k - 1].ln()))
        .collect();
    if pts.len() < 8 {
        return 0.0;
    }
    // ln rho = a + b ln x + c x + d / x; drop the exponential factor when
    // the free fit wants growth
    let full = least_squares(&pts, |x| [1.0, x.ln(), x, 1.0 / x]).filter(|p| p[2] <= 0.0);
    let coef = match full {
        Some(p) => p,
        None => match least_squares(&pts, |x| [1.0, x.ln(), 1.0 / x]) {
            Some([a, b, d]) => [a, b, 0.0, d],
            None => return 0.0,
        },
    };
    let [a, b, c, d] = coef;
    let term = |k: f64| {
        let x = k / kf;
        (a + b * x.ln() + c * x + d / x).exp()
    };
    let direct_end = 4 * kmax;
    let mut sum = 0.0;
    for k in kmax + 1..=direct_end {
        sum += term(k as f64);
    }
    // remainder as an integral of u^{-tau} e^{-mu u} (u = k / Kmax), with the
    // 1/k correction frozen at its value at the cutoff
    let (tau, mu) = (-b, -c);
    let m = (direct_end as f64 + 0.5) / kf;
    let scale = (a + d / m).exp() * kf;
    let rest = if mu > 0.0 {
        match upper_gamma(1.0 - tau, mu * m) {
            Some(g) => scale * mu.powf(tau - 1.0) * g,
            None => return f64::INFINITY,
        }
    } else if tau > 1.0 {
        scale * m.powf(1.0 - tau) / (tau - 1.0)
    } else {
        return f64::INFINITY;
    };
    sum + rest
}

/// Upper incomplete gamma `Gamma(s, z)` for any real `s` and `z > 0`.
fn upper_gamma(s: f64, z: f64) -> Option<f64> {
    use statrs::function::gamma::{gamma, gamma_ur};
    if !(z > 0.0) {
        return None;
    }
    if s > 0.0 {
        return Some(gamma_ur(s, z) * gamma(s));
    }
    // Gamma(s, z) = (Gamma(s + 1, z) - z^s e^{-z}) / s, stepped down from s + n > 0
    let n = (-s).floor() as usize + 1;
    let mut a = s + n as f64;
    if a == 0.0 {
        return None;
    }
    let mut g = gamma_ur(a, z) * gamma(a);
    for _ in 0..n {
        a -= 1.0;
        if a == 0.0 {
            return None;
        }
        g = (g - z.powf(a) * (-z).exp()) / a;
    }
    Some(g)
}

/// Least squares fit of `y` on the basis `f(x)`. The basis columns are
/// nearly collinear, so this orthogonalizes them (modified Gram-Schmidt)
/// instead of forming normal equations.
fn least_squares<const N: usize>(pts: &[(f64, f64)], f: impl Fn(f64) -> [f64; N]) -> Option<[f64; N]> {
    let mut q: Vec<Vec<f64>> = (0..N).map(|j| pts.iter().map(|&(x, _)| f(x)[j]).collect()).collect();
    let mut r = [[0.0; N]; N];
    for j in 0..N {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let (qi, qj) = (q[i].clone(), &mut q[j]);
            for (v, u) in qj.iter_mut().zip(&qi) {
                *v -= dot * u;
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-13) {
            return None;
        }
        r[j][j] = norm;
        for v in q[j].iter_mut() {
            *v /= norm;
        }
    }
    let qty: Vec<f64> = q
        .iter()
        .map(|col| col.iter().zip(pts).map(|(a, &(_, y))| a * y).sum())
        .collect();
    let mut out = [0.0; N];
    for i in (0..N).rev() {
        let s: f64 = (i + 1..N).map(|j| r[i][j] * out[j]).sum();
        out[i] = (qty[i] - s) / r[i][i];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Giant fraction of the classical random graph process at `t = m/n`:
/// the largest root of `rho = 1 - exp(-2 t rho)`, zero for `t <= 1/2`.
pub fn er_rho(t: f64) -> f64 {
    if t <= 0.5 {
        return 0.0;
    }
    // g(x) = (1 - e^{-2tx})/x - 1 decreases from 2t - 1 > 0 to g(1) < 0
    let g = |x: f64| -(-2.0 * t * x).exp_m1() / x - 1.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        let val = if mid == 0.0 { 2.0 * t - 1.0 } else { g(mid) };
        if val > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `rho_k(t) = k^{k-1} (2t)^{k-1} e^{-2kt} / k!` for the classical process.
pub fn er_rho_k(t: f64, k: usize) -> f64 {
    assert!(k >= 1);
    if t == 0.0 {
        return if k == 1 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    let ln = (kf - 1.0) * kf.ln() + (kf - 1.0) * (2.0 * t).ln() - 2.0 * kf * t
        - statrs::function::gamma::ln_gamma(kf + 1.0);
    ln.exp()
}
