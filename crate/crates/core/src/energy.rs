//! Discrete energy observables stored in their own eigenbasis, states with an
//! energy annotation, a seeded sampler for energy-constrained states, and the
//! energy-cutoff (pinching) channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{apply, extend, KrausMap, MapKind};
use crate::error::{dim_err, Error, Result};
use crate::matcore::{c64, eigvalsh, partial_trace, record_clamp, trace_norm, CMat, DimSplit, C64};

/// Tolerance on state traces.
pub const TRACE_TOL: f64 = 1e-12;

/// `G = sum_k E_k |tau_k><tau_k|` with nondecreasing levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObservableRepr", into = "ObservableRepr")]
pub struct EnergyObservable {
    levels: Vec<f64>,
    grounded: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservableRepr {
    levels: Vec<f64>,
    #[serde(default)]
    grounded: bool,
}

impl TryFrom<ObservableRepr> for EnergyObservable {
    type Error = Error;
    fn try_from(r: ObservableRepr) -> Result<Self> {
        EnergyObservable::new(r.levels, r.grounded)
    }
}

impl From<EnergyObservable> for ObservableRepr {
    fn from(g: EnergyObservable) -> Self {
        ObservableRepr { levels: g.levels, grounded: g.grounded }
    }
}

impl EnergyObservable {
    /// `grounded` asserts that the lowest level is exactly zero.
    pub fn new(levels: Vec<f64>, grounded: bool) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Invalid("observable needs at least one level".into()));
        }
        if levels.iter().any(|e| !e.is_finite()) {
            return Err(Error::Invalid("observable levels must be finite".into()));
        }
        if levels[0] < 0.0 {
            return Err(Error::Invalid(format!("negative ground level {}", levels[0])));
        }
        if let Some(w) = levels.windows(2).find(|w| w[1] < w[0]) {
            return Err(Error::Invalid(format!("levels not nondecreasing at {} > {}", w[0], w[1])));
        }
        if grounded && levels[0] != 0.0 {
            return Err(Error::Invalid(format!("grounded flag set but E_0 = {}", levels[0])));
        }
        Ok(EnergyObservable { levels, grounded })
    }

    /// Levels `0, 1, ..., d-1`.
    pub fn number(d: usize) -> Self {
        EnergyObservable { levels: (0..d).map(|n| n as f64).collect(), grounded: true }
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn ground(&self) -> f64 {
        self.levels[0]
    }

    pub fn top(&self) -> f64 {
        *self.levels.last().expect("nonempty")
    }

    pub fn is_grounded(&self) -> bool {
        self.grounded
    }

    pub fn matrix(&self) -> CMat {
        CMat::from_real_diag(&self.levels)
    }

    /// `G (x) I_R`, still diagonal and nondecreasing in the product basis.
    pub fn tensor_identity(&self, d_r: usize) -> EnergyObservable {
        let levels = self.levels.iter().flat_map(|&e| std::iter::repeat_n(e, d_r)).collect();
        EnergyObservable { levels, grounded: self.grounded }
    }

    /// `<psi|G|psi>`.
    pub fn expectation(&self, psi: &[C64]) -> f64 {
        psi.iter().zip(&self.levels).map(|(a, e)| e * a.norm_sqr()).sum()
    }

    /// `Tr(G X X^*)` for `X` with rows indexed by levels.
    pub fn row_energy(&self, x: &CMat) -> f64 {
        (0..x.rows()).map(|i| self.levels[i] * (0..x.cols()).map(|j| x.get(i, j).norm_sqr()).sum::<f64>()).sum()
    }
}

/// Positive semidefinite operator with trace in `(0, 1]`, optionally
/// annotated with its energy.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    mat: CMat,
    energy: Option<f64>,
}

impl DensityOperator {
    pub fn new(mat: CMat) -> Result<Self> {
        if !mat.is_square() {
            return Err(dim_err("density operator must be square"));
        }
        if !mat.is_hermitian() {
            return Err(Error::NotHermitian { deviation: mat.hermitian_deviation() });
        }
        let vals = eigvalsh(&mat);
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if vals[0] < -1e-12 * scale.max(1.0) {
            return Err(Error::NotPsd { min_eigenvalue: vals[0] });
        }
        if vals[0] < 0.0 {
            record_clamp();
        }
        let tr = mat.trace().re;
        if !(tr > 0.0 && tr <= 1.0 + TRACE_TOL) {
            return Err(Error::Invalid(format!("state trace {tr} outside (0, 1]")));
        }
        Ok(DensityOperator { mat: mat.hermitian_part(), energy: None })
    }

    /// `|psi><psi|`; `psi` must have norm at most one.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        DensityOperator::new(CMat::projector(psi))
    }

    pub fn with_observable(mut self, g: &EnergyObservable) -> Result<Self> {
        self.energy = Some(energy_of(&self, g)?);
        Ok(self)
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn cached_energy(&self) -> Option<f64> {
        self.energy
    }

    /// Membership in `{Tr rho <= 1, Tr G rho <= E}`.
    pub fn is_constrained(&self, g: &EnergyObservable, budget: f64, tol: f64) -> bool {
        match energy_of(self, g) {
            Ok(e) => e <= budget + tol && self.trace() <= 1.0 + TRACE_TOL,
            Err(_) => false,
        }
    }
}

/// Diagonal 0/1 projector on the levels in the closed interval `[0, cutoff]`.
pub fn spectral_projector(g: &EnergyObservable, cutoff: f64) -> CMat {
    let d: Vec<f64> = g.levels.iter().map(|&e| if e <= cutoff { 1.0 } else { 0.0 }).collect();
    CMat::from_real_diag(&d)
}

pub fn energy_of(rho: &DensityOperator, g: &EnergyObservable) -> Result<f64> {
    if rho.dim() != g.dim() {
        return Err(dim_err(format!("state of dimension {} vs observable {}", rho.dim(), g.dim())));
    }
    let e: f64 = rho.mat.diag_re().iter().zip(&g.levels).map(|(p, e)| p * e).sum();
    Ok(e.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Pure,
    Mixed,
}

/// Seeded sampler of normalized states with `Tr G rho <= E`.
///
/// A Haar-random direction is rescaled toward the ground space until its
/// energy hits a target; one draw in three targets the budget itself so the
/// boundary of the constraint set is exercised.
pub struct ConstrainedSampler<'a> {
    g: &'a EnergyObservable,
    budget: f64,
    rng: ChaCha8Rng,
}

impl<'a> ConstrainedSampler<'a> {
    pub fn new(g: &'a EnergyObservable, budget: f64, seed: u64) -> Result<Self> {
        if !(budget >= g.ground()) || !budget.is_finite() {
            return Err(Error::Infeasible { budget, ground: g.ground() });
        }
        Ok(ConstrainedSampler { g, budget, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn haar(&mut self, n: usize) -> Vec<C64> {
        let mut v: Vec<C64> =
            (0..n).map(|_| c64(self.rng.sample(StandardNormal), self.rng.sample(StandardNormal))).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= norm);
        v
    }

    fn draw_target(&mut self) -> f64 {
        let hi = self.budget.min(self.g.top());
        let lo = self.g.ground();
        if self.rng.random_range(0..3) == 0 {
            hi
        } else {
            lo + (hi - lo) * self.rng.random::<f64>()
        }
    }

    /// Unit vector whose energy equals `target` (clipped to the top level).
    pub fn pure_vector_at(&mut self, target: f64) -> Vec<C64> {
        let levels = self.g.levels.clone();
        let e0 = levels[0];
        let top = *levels.last().expect("nonempty");
        let mut phi = self.haar(levels.len());
        if top == e0 {
            return phi;
        }
        let target = target.clamp(e0, top);
        let is_ground = |i: usize| levels[i] == e0;
        let w_exc: f64 = (0..phi.len()).filter(|&i| !is_ground(i)).map(|i| phi[i].norm_sqr()).sum();
        if w_exc == 0.0 {
            return phi;
        }
        let mut avg: f64 =
            (0..phi.len()).filter(|&i| !is_ground(i)).map(|i| levels[i] * phi[i].norm_sqr()).sum::<f64>() / w_exc;

        // excited part normalized to unit weight
        let mut exc: Vec<C64> =
            (0..phi.len()).map(|i| if is_ground(i) { C64::default() } else { phi[i] / w_exc.sqrt() }).collect();
        if avg < target {
            // shift excited weight onto the top level until the mean reaches target
            let t_idx = levels.len() - 1;
            let lam = (target - avg) / (top - avg);
            for z in exc.iter_mut() {
                *z *= (1.0 - lam).sqrt();
            }
            let old = exc[t_idx];
            let mag = (old.norm_sqr() + lam).sqrt();
            let phase = if old.norm() > 0.0 { old / old.norm() } else { c64(1.0, 0.0) };
            exc[t_idx] = phase * mag;
            avg = target;
        }
        let q = if avg > e0 { ((target - e0) / (avg - e0)).clamp(0.0, 1.0) } else { 1.0 };
        let w_g: f64 = (0..phi.len()).filter(|&i| is_ground(i)).map(|i| phi[i].norm_sqr()).sum();
        for i in 0..phi.len() {
            if is_ground(i) {
                phi[i] = if w_g > 0.0 { phi[i] * ((1.0 - q) / w_g).sqrt() } else { C64::default() };
            } else {
                phi[i] = exc[i] * q.sqrt();
            }
        }
        if w_g == 0.0 {
            phi[0] = c64((1.0 - q).sqrt(), 0.0);
        }
        let norm = phi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        phi.iter_mut().for_each(|z| *z /= norm);
        phi
    }

    pub fn pure_vector(&mut self) -> Vec<C64> {
        let t = self.draw_target();
        self.pure_vector_at(t)
    }

    /// Mixture of 2 to 4 pure draws sharing one target energy.
    pub fn mixed_matrix(&mut self) -> CMat {
        let k = self.rng.random_range(2..=4);
        let t = self.draw_target();
        let w: Vec<f64> = (0..k).map(|_| -self.rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = w.iter().sum();
        let n = self.g.dim();
        let mut m = CMat::zeros(n, n);
        for wi in w {
            let v = self.pure_vector_at(t);
            m += &CMat::projector(&v).scale(wi / total);
        }
        m.hermitian_part()
    }

    pub fn state(&mut self, mode: SampleMode) -> DensityOperator {
        let mat = match mode {
            SampleMode::Pure => CMat::projector(&self.pure_vector()),
            SampleMode::Mixed => self.mixed_matrix(),
        };
        let energy = Some(mat.diag_re().iter().zip(&self.g.levels).map(|(p, e)| p * e).sum());
        DensityOperator { mat: mat.hermitian_part(), energy }
    }
}

/// One constrained state, deterministic in `seed`.
pub fn sample_constrained(g: &EnergyObservable, budget: f64, mode: SampleMode, seed: u64) -> Result<DensityOperator> {
    Ok(ConstrainedSampler::new(g, budget, seed)?.state(mode))
}

/// `Pi(rho) = P rho P + Tr(P_bar rho) |tau_0><tau_0|`.
pub fn pinch_channel(g: &EnergyObservable, cutoff: f64) -> Result<KrausMap> {
    if !g.grounded {
        return Err(Error::Precondition("pinching channel needs a grounded observable".into()));
    }
    let d = g.dim();
    let mut ops = vec![spectral_projector(g, cutoff)];
    for (k, &e) in g.levels.iter().enumerate() {
        if e > cutoff {
            ops.push(CMat::outer(&CMat::ket(d, 0), &CMat::ket(d, k)));
        }
    }
    KrausMap::new(ops, MapKind::Channel)
}

/// `(||omega - (Pi (x) Id_R)(omega)||_1, 4 sqrt(E / E_n))` for a state on
/// `A (x) R` with `Tr G omega_A <= E`.
pub fn pinch_deviation(omega: &DensityOperator, g: &EnergyObservable, cutoff: f64, budget: f64) -> Result<(f64, f64)> {
    if cutoff <= 0.0 {
        return Err(Error::Precondition(format!("cutoff must be positive, got {cutoff}")));
    }
    let d_a = g.dim();
    if !omega.dim().is_multiple_of(d_a) {
        return Err(dim_err(format!("state dimension {} not a multiple of {d_a}", omega.dim())));
    }
    let d_r = omega.dim() / d_a;
    let omega_a = partial_trace(omega.matrix(), &DimSplit::bipartite(d_a, d_r)?, &[0])?;
    let e_a: f64 = omega_a.diag_re().iter().zip(g.levels()).map(|(p, e)| p * e).sum();
    if e_a > budget + 1e-9 {
        return Err(Error::Precondition(format!("marginal energy {e_a} exceeds budget {budget}")));
    }
    let pinch = extend(&pinch_channel(g, cutoff)?, d_r);
    let out = apply(&pinch, omega.matrix())?;
    let lhs = trace_norm(&(omega.matrix() - &out));
    Ok((lhs, 4.0 * (budget / cutoff).sqrt()))
}
