//! Bounded truncations `Phi_n(rho) = Tr_E V P_n rho P_n V^*` of a map given by
//! a representing operator `V`, with the tail and distance bounds they obey,
//! and decay profiles of E-norms.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{kraus_from_stinespring, Dilation, KrausMap};
use crate::distance::{ecd_distance, ecd_norm_cp, DistanceConfig};
use crate::energy::{spectral_projector, EnergyObservable};
use crate::enorm::e_norm;
use crate::error::{dim_err, Error, Result};
use crate::matcore::{eigvalsh, CMat};

/// `V P_n` with `P_n` the projector on levels `<= cutoff`.
pub fn truncate_map(v: &Dilation, g: &EnergyObservable, cutoff: f64) -> Result<Dilation> {
    if !(cutoff >= 0.0) {
        return Err(Error::Precondition(format!("cutoff must be nonnegative, got {cutoff}")));
    }
    if v.d_in() != g.dim() {
        return Err(dim_err(format!("dilation input {} vs observable {}", v.d_in(), g.dim())));
    }
    Dilation::new(v.operator() * &spectral_projector(g, cutoff), v.d_out(), v.env_dim())
}

fn check_schedule_point(budget: f64, cutoff: f64) -> Result<()> {
    if !(budget > 0.0) {
        return Err(Error::Precondition(format!("energy budget must be positive, got {budget}")));
    }
    if !(cutoff >= budget) {
        return Err(Error::Precondition(format!(
            "cutoff E_n = {cutoff} is below the budget E = {budget}; the truncation bound needs E_n >= E"
        )));
    }
    Ok(())
}

/// `(||V - V P_n||_E, sqrt(E / E_n) ||V||_{E_n})`; both sides exact.
pub fn tail_norm_check(v: &Dilation, g: &EnergyObservable, budget: f64, cutoff: f64) -> Result<(f64, f64)> {
    check_schedule_point(budget, cutoff)?;
    let vn = truncate_map(v, g, cutoff)?;
    let lhs = e_norm(&(v.operator() - vn.operator()), g, budget)?.value;
    let rhs = (budget / cutoff).sqrt() * e_norm(v.operator(), g, cutoff)?.value;
    Ok((lhs, rhs))
}

/// One row of a truncation study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub cutoff: f64,
    /// Ascent estimate of `D_E(Phi_n, Phi)`, a lower bound of the distance.
    pub lhs_estimate: f64,
    /// `2 sqrt(E / E_n) ||V||_{E_n} ||V||_E`.
    pub rhs_bound: f64,
    pub tail_lhs: f64,
    pub tail_rhs: f64,
    pub enorm_at_cutoff: f64,
    pub converged: bool,
}

impl StudyRow {
    pub fn tail_holds(&self) -> bool {
        self.tail_lhs <= self.tail_rhs + 1e-8
    }

    pub fn bound_holds(&self) -> bool {
        self.lhs_estimate <= self.rhs_bound + 1e-6
    }
}

/// Estimated `D_E(Phi_n, Phi)` against its exact upper bound.
pub fn bound30_check(
    v: &Dilation,
    g: &EnergyObservable,
    budget: f64,
    cutoff: f64,
    cfg: &DistanceConfig,
) -> Result<StudyRow> {
    check_schedule_point(budget, cutoff)?;
    let vn = truncate_map(v, g, cutoff)?;
    let phi = kraus_from_stinespring(v, None)?;
    let phi_n = kraus_from_stinespring(&vn, None)?;
    let cfg = DistanceConfig { dilation_upper: false, ..cfg.clone() };
    let dist = ecd_distance(&phi_n, &phi, g, budget, &cfg)?;
    let at_cutoff = e_norm(v.operator(), g, cutoff)?.value;
    let at_budget = e_norm(v.operator(), g, budget)?.value;
    let (tail_lhs, tail_rhs) = tail_norm_check(v, g, budget, cutoff)?;
    Ok(StudyRow {
        cutoff,
        lhs_estimate: dist.estimate,
        rhs_bound: 2.0 * (budget / cutoff).sqrt() * at_cutoff * at_budget,
        tail_lhs,
        tail_rhs,
        enorm_at_cutoff: at_cutoff,
        converged: dist.converged,
    })
}

/// Cutoffs `2E, 4E, ...` up to the first one at or above the top level.
pub fn default_schedule(g: &EnergyObservable, budget: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut e = 2.0 * budget;
    loop {
        out.push(e);
        if e >= g.top() || out.len() >= 64 {
            break;
        }
        e *= 2.0;
    }
    out
}

#[derive(Clone, Debug)]
pub struct TruncationStudy {
    pub dilation: Dilation,
    pub observable: EnergyObservable,
    pub budget: f64,
    pub schedule: Vec<f64>,
    pub config: DistanceConfig,
}

impl TruncationStudy {
    pub fn new(
        dilation: Dilation,
        observable: EnergyObservable,
        budget: f64,
        schedule: Option<Vec<f64>>,
        config: DistanceConfig,
    ) -> Result<Self> {
        if dilation.d_in() != observable.dim() {
            return Err(dim_err("dilation input and observable dimensions differ"));
        }
        let schedule = schedule.unwrap_or_else(|| default_schedule(&observable, budget));
        if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("schedule must be nonempty and strictly ascending".into()));
        }
        for &c in &schedule {
            check_schedule_point(budget, c)?;
        }
        config.validate()?;
        Ok(TruncationStudy { dilation, observable, budget, schedule, config })
    }

    /// Rows in schedule order; rows are independent and computed in parallel.
    pub fn run(&self) -> Result<Vec<StudyRow>> {
        self.schedule
            .par_iter()
            .map(|&c| bound30_check(&self.dilation, &self.observable, self.budget, c, &self.config))
            .collect()
    }
}

pub const CSV_HEADER: &str = "E_n,lhs_estimate,rhs_bound,tail_lhs,tail_rhs,enorm_V_at_En,converged";

/// Decimal rendering with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - exp).clamp(0, 60) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may carry into a new leading digit
    let sig = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|&c| c == '0').count();
    if sig > digits && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let cells = [r.cutoff, r.lhs_estimate, r.rhs_bound, r.tail_lhs, r.tail_rhs, r.enorm_at_cutoff];
        let mut line: Vec<String> = cells.iter().map(|&v| format_sig(v, 12)).collect();
        line.push(r.converged.to_string());
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Operator or CP map whose growth in `E` is profiled.
#[derive(Clone, Debug)]
pub enum ScalingTarget {
    /// Profile `||A||_E / sqrt E`.
    Operator(CMat),
    /// Profile `||Phi||_{diamond,E} / E`.
    Map(KrausMap),
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingProfile {
    pub rows: Vec<(f64, f64)>,
    /// Largest grid energy whose ratio is at least 0.99 of the maximum.
    pub knee: f64,
}

pub fn scaling_profile(target: &ScalingTarget, g: &EnergyObservable, grid: &[f64]) -> Result<ScalingProfile> {
    if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("energy grid must be ascending and positive".into()));
    }
    let rows: Vec<(f64, f64)> = grid
        .iter()
        .map(|&e| {
            let r = match target {
                ScalingTarget::Operator(a) => e_norm(a, g, e)?.value / e.sqrt(),
                ScalingTarget::Map(phi) => ecd_norm_cp(phi, g, e)?.value / e,
            };
            Ok((e, r))
        })
        .collect::<Result<_>>()?;
    let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let knee = rows.iter().filter(|r| r.1 >= 0.99 * max).map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingProfile { rows, knee })
}

pub fn scaling_csv(profile: &ScalingProfile) -> String {
    let mut out = String::from("E,ratio\n");
    for (e, r) in &profile.rows {
        out.push_str(&format!("{},{}\n", format_sig(*e, 12), format_sig(*r, 12)));
    }
    out
}

/// Whether `sum_k V_k^* V_k <= I` up to `1e-12`.
pub fn is_trace_nonincreasing(phi: &KrausMap) -> bool {
    eigvalsh(&phi.gram()).last().is_none_or(|&l| l <= 1.0 + 1e-12)
}
