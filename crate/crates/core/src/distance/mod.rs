//! Fidelity, Bures distance, energy-constrained diamond norm and distance,
//! energy-constrained Bures distance, and the bounds relating them.
//!
//! Suprema over input states are realized over pure states on `A (x) R` with
//! `d_R = d_A`, which suffices by purification and monotonicity of the trace
//! norm and the Bures distance under partial trace. Ascent results are lower
//! bounds; upper bounds come from inequalities with exactly computable sides.

mod ascent;
mod dilation;
mod objective;
mod saddle;

pub use dilation::{common_dilation_optimize, doubled_phi, doubled_psi, CommonDilation};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{apply, extend, stinespring_from_kraus, Dilation, KrausMap};
use crate::energy::{ConstrainedSampler, DensityOperator, EnergyObservable, SampleMode};
use crate::enorm::{e_norm, form_certificate, ENormCertificate};
use crate::error::{dim_err, Error, Result};
use crate::matcore::{c64, eigvalsh, psd_sqrt, trace_norm, CMat, C64};
use objective::{BuresSquared, Objective, SignedOutputNorm};

/// Fidelity below which inputs are flagged as ill-conditioned.
pub const CONDITIONING_FLOOR: f64 = 1e-10;

fn check_pair(rho: &CMat, sigma: &CMat) -> Result<()> {
    if !rho.is_square() || rho.rows() != sigma.rows() || rho.cols() != sigma.cols() {
        return Err(dim_err("fidelity needs two square operators of the same size"));
    }
    Ok(())
}

/// `F(rho, sigma) = ||sqrt(rho) sqrt(sigma)||_1^2`.
pub fn fidelity(rho: &CMat, sigma: &CMat) -> Result<f64> {
    check_pair(rho, sigma)?;
    let n = trace_norm(&(&psd_sqrt(rho)? * &psd_sqrt(sigma)?));
    Ok(n * n)
}

/// Fidelity together with a flag set when either input has smallest
/// eigenvalue below [`CONDITIONING_FLOOR`].
pub fn fidelity_conditioned(rho: &CMat, sigma: &CMat) -> Result<(f64, bool)> {
    let f = fidelity(rho, sigma)?;
    let ill = [rho, sigma].iter().any(|m| eigvalsh(m)[0] < CONDITIONING_FLOOR);
    Ok((f, ill))
}

/// `beta(rho, sigma) = sqrt(Tr rho + Tr sigma - 2 sqrt F)`.
pub fn bures(rho: &CMat, sigma: &CMat) -> Result<f64> {
    let f = fidelity(rho, sigma)?;
    Ok((rho.trace().re + sigma.trace().re - 2.0 * f.sqrt()).max(0.0).sqrt())
}

/// Search and certification parameters for the distance estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Accepted excess of the common-dilation value over the Bures estimate.
    pub match_tol: f64,
    /// Cap on Newton steps of the common-dilation saddle solver.
    pub dilation_iter: usize,
    /// Tighten the distance upper bound with an optimized common dilation.
    pub dilation_upper: bool,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            restarts: 32,
            max_iter: 500,
            tol: 1e-12,
            seed: 0,
            match_tol: 1e-3,
            dilation_iter: 1000,
            dilation_upper: true,
        }
    }
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Precondition("restarts must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.match_tol > 0.0) {
            return Err(Error::Precondition("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Which inequality produced [`DistanceReport::upper`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperProvenance {
    /// `||Phi||_E + ||Psi||_E`.
    Triangle,
    /// `||V_Phi - V_Psi||_E (||V_Phi||_E + ||V_Psi||_E)` for the canonical
    /// dilations on a common environment.
    DilationDifference,
    /// Same bound for the optimized doubled-environment dilations.
    CommonDilation,
    /// `beta <= sqrt(D)` with `D` bounded as above.
    SqrtDistance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub upper_provenance: UpperProvenance,
    /// Unit vector on `A (x) R`, index `a * d_r + r`.
    pub witness: Vec<C64>,
    pub d_a: usize,
    pub d_r: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl DistanceReport {
    pub fn witness_state(&self) -> Result<DensityOperator> {
        DensityOperator::pure(&self.witness)
    }

    /// Reduced witness on `A`.
    pub fn witness_marginal(&self) -> Result<CMat> {
        let x = CMat::unvec(&self.witness, self.d_a, self.d_r)?;
        Ok(&x * &x.adjoint())
    }
}

/// Exact `||Phi||_{diamond,E}` of a CP map: `sup Tr(W rho)` with
/// `W = sum_k V_k^* V_k`; the certificate value is the supremum itself.
pub fn ecd_norm_cp(phi: &KrausMap, g: &EnergyObservable, budget: f64) -> Result<ENormCertificate> {
    if phi.d_in() != g.dim() {
        return Err(dim_err(format!("map input {} vs observable {}", phi.d_in(), g.dim())));
    }
    form_certificate(&phi.gram().hermitian_part(), g, budget)
}

fn check_maps(phi: &KrausMap, psi: &KrausMap, g: &EnergyObservable, budget: f64) -> Result<()> {
    if phi.d_in() != psi.d_in() || phi.d_out() != psi.d_out() {
        return Err(dim_err("maps act between different spaces"));
    }
    if phi.d_in() != g.dim() {
        return Err(dim_err(format!("map input {} vs observable {}", phi.d_in(), g.dim())));
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::Precondition(format!("energy budget must be positive, got {budget}")));
    }
    if budget < g.ground() {
        return Err(Error::Infeasible { budget, ground: g.ground() });
    }
    Ok(())
}

fn same_family(phi: &KrausMap, psi: &KrausMap) -> bool {
    phi.ops().len() == psi.ops().len() && phi.ops().iter().zip(psi.ops()).all(|(a, b)| a == b)
}

fn ground_witness(d: usize) -> Vec<C64> {
    let mut v = vec![C64::default(); d * d];
    v[0] = c64(1.0, 0.0);
    v
}

struct Search {
    value: f64,
    witness: Vec<C64>,
    restarts: usize,
    iterations: usize,
    converged: bool,
}

fn search(
    obj: &dyn Objective,
    phi: &KrausMap,
    psi: &KrausMap,
    g: &EnergyObservable,
    budget: f64,
    cfg: &DistanceConfig,
) -> Result<Search> {
    cfg.validate()?;
    let d = phi.d_in();
    if same_family(phi, psi) {
        return Ok(Search { value: 0.0, witness: ground_witness(d), restarts: 0, iterations: 0, converged: true });
    }
    let ms = ascent::multi_start(obj, g, budget, d, cfg.restarts, cfg.max_iter, cfg.tol, cfg.seed)?;
    Ok(Search {
        value: obj.value(&ms.best.x),
        witness: ms.best.x.vec(),
        restarts: ms.restarts,
        iterations: ms.iterations,
        converged: ms.converged,
    })
}

/// Canonical dilations of both maps on a common environment.
fn canonical_pair(phi: &KrausMap, psi: &KrausMap) -> Result<(Dilation, Dilation)> {
    let (a, b) = (stinespring_from_kraus(phi), stinespring_from_kraus(psi));
    let d_e = a.env_dim().max(b.env_dim());
    Ok((a.padded(d_e)?, b.padded(d_e)?))
}

/// Certified upper bound on `D_E(Phi, Psi)` and its provenance.
fn distance_upper(
    phi: &KrausMap,
    psi: &KrausMap,
    g: &EnergyObservable,
    budget: f64,
    cfg: &DistanceConfig,
    refine: bool,
) -> Result<(f64, UpperProvenance)> {
    let a = ecd_norm_cp(phi, g, budget)?.value;
    let b = ecd_norm_cp(psi, g, budget)?.value;
    let roots = a.sqrt() + b.sqrt();
    let mut best = (a + b, UpperProvenance::Triangle);
    let (va, vb) = canonical_pair(phi, psi)?;
    let diff = e_norm(&(va.operator() - vb.operator()), g, budget)?.value;
    if roots * diff < best.0 {
        best = (roots * diff, UpperProvenance::DilationDifference);
    }
    if refine && best.0 > 0.0 {
        let cd = common_dilation_optimize(&va, &vb, g, budget, cfg)?;
        if roots * cd.achieved < best.0 {
            best = (roots * cd.achieved, UpperProvenance::CommonDilation);
        }
    }
    Ok(best)
}

/// Estimate of `D_E(Phi, Psi) = ||Phi - Psi||_{diamond,E}` by multi-start
/// projected ascent, bracketed by a certified upper bound.
pub fn ecd_distance(
    phi: &KrausMap,
    psi: &KrausMap,
    g: &EnergyObservable,
    budget: f64,
    cfg: &DistanceConfig,
) -> Result<DistanceReport> {
    check_maps(phi, psi, g, budget)?;
    let obj = SignedOutputNorm::difference(phi.ops(), psi.ops());
    let s = search(&obj, phi, psi, g, budget, cfg)?;
    let (upper, upper_provenance) = distance_upper(phi, psi, g, budget, cfg, cfg.dilation_upper)?;
    let d = phi.d_in();
    Ok(DistanceReport {
        estimate: s.value,
        lower: s.value,
        upper,
        upper_provenance,
        witness: s.witness,
        d_a: d,
        d_r: d,
        restarts: s.restarts,
        iterations: s.iterations,
        converged: s.converged,
    })
}

/// Estimate of the energy-constrained Bures distance `beta_E(Phi, Psi)`.
///
/// The ascent over pure witnesses is refined by the common-dilation saddle
/// iteration, whose best state is purified into a second witness; the
/// better witness is reported. The contraction found there also gives a
/// certified upper bound.
pub fn bures_e_distance(
    phi: &KrausMap,
    psi: &KrausMap,
    g: &EnergyObservable,
    budget: f64,
    cfg: &DistanceConfig,
) -> Result<DistanceReport> {
    check_maps(phi, psi, g, budget)?;
    let (va, vb) = canonical_pair(phi, psi)?;
    Ok(bures_with_saddle(phi, psi, &va, &vb, g, budget, cfg)?.0)
}

/// Bounds from the ascent marginal `rho0`, improved by the barrier solver
/// where it applies.
fn refine_saddle(
    vphi: &Dilation,
    vpsi: &Dilation,
    g: &EnergyObservable,
    budget: f64,
    rho0: &CMat,
    max_steps: usize,
) -> saddle::Saddle {
    let cp = saddle::Coupling::new(vphi, vpsi);
    let mut sp = cp.evaluate(rho0, g, budget);
    if let Some(b) = saddle::solve(&cp, g, budget, max_steps) {
        if b.lower > sp.lower {
            (sp.rho, sp.lower) = (b.rho, b.lower);
        }
        if b.upper < sp.upper {
            (sp.contraction, sp.upper) = (b.contraction, b.upper);
        }
        sp.iterations = b.iterations;
    }
    sp.converged = sp.upper - sp.lower <= 1e-7 * (1.0 + sp.upper);
    sp
}

fn bures_with_saddle(
    phi: &KrausMap,
    psi: &KrausMap,
    vphi: &Dilation,
    vpsi: &Dilation,
    g: &EnergyObservable,
    budget: f64,
    cfg: &DistanceConfig,
) -> Result<(DistanceReport, saddle::Saddle)> {
    check_maps(phi, psi, g, budget)?;
    let obj = BuresSquared::new(phi.ops(), psi.ops());
    let s = search(&obj, phi, psi, g, budget, cfg)?;
    let d = phi.d_in();
    let x = CMat::unvec(&s.witness, d, d)?;
    let sp = refine_saddle(vphi, vpsi, g, budget, &(&x * &x.adjoint()), cfg.dilation_iter);
    let purified = psd_sqrt(&sp.rho)?;
    let (mut value, mut witness) = (s.value, s.witness);
    let refined = obj.value(&purified);
    if refined > value {
        (value, witness) = (refined, purified.vec());
    }
    let estimate = value.max(0.0).sqrt();
    let (d_upper, _) = distance_upper(phi, psi, g, budget, cfg, false)?;
    let (mut upper, mut upper_provenance) = (d_upper.sqrt(), UpperProvenance::SqrtDistance);
    let coupled = sp.upper.max(0.0).sqrt();
    if coupled < upper {
        (upper, upper_provenance) = (coupled, UpperProvenance::CommonDilation);
    }
    let report = DistanceReport {
        estimate,
        lower: estimate,
        upper,
        upper_provenance,
        witness,
        d_a: d,
        d_r: d,
        restarts: s.restarts,
        iterations: s.iterations + sp.iterations,
        converged: s.converged,
    };
    Ok((report, sp))
}

/// Direct evaluation of `||((Phi - Psi) (x) Id)(|psi><psi|)||_1` through the
/// full output operators.
pub fn ecd_objective(phi: &KrausMap, psi: &KrausMap, witness: &[C64]) -> Result<f64> {
    let d_r = phi.d_in();
    if witness.len() != d_r * d_r {
        return Err(dim_err("witness must live on A (x) R with d_R = d_A"));
    }
    let w = CMat::projector(witness);
    let out = &apply(&extend(phi, d_r), &w)? - &apply(&extend(psi, d_r), &w)?;
    Ok(trace_norm(&out))
}

/// Direct evaluation of the Bures distance between the two outputs on a
/// pure input, through [`bures`].
pub fn bures_objective(phi: &KrausMap, psi: &KrausMap, witness: &[C64]) -> Result<f64> {
    let d_r = phi.d_in();
    if witness.len() != d_r * d_r {
        return Err(dim_err("witness must live on A (x) R with d_R = d_A"));
    }
    let w = CMat::projector(witness);
    bures(&apply(&extend(phi, d_r), &w)?, &apply(&extend(psi, d_r), &w)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct DilationBound {
    pub lhs_estimate: f64,
    pub rhs: f64,
    pub difference_norm: f64,
    pub norm_phi: f64,
    pub norm_psi: f64,
}

/// `D_E(Phi, Psi) <= ||V_Phi - V_Psi||_E (||V_Phi||_E + ||V_Psi||_E)` with the
/// right side exact and the left side estimated.
pub fn dilation_difference_bound(
    vphi: &Dilation,
    vpsi: &Dilation,
    g: &EnergyObservable,
    budget: f64,
    cfg: &DistanceConfig,
) -> Result<DilationBound> {
    if vphi.env_dim() != vpsi.env_dim()
        || vphi.operator().rows() != vpsi.operator().rows()
        || vphi.d_in() != vpsi.d_in()
    {
        return Err(dim_err("dilations must have identical shapes"));
    }
    let difference_norm = e_norm(&(vphi.operator() - vpsi.operator()), g, budget)?.value;
    let norm_phi = e_norm(vphi.operator(), g, budget)?.value;
    let norm_psi = e_norm(vpsi.operator(), g, budget)?.value;
    let kphi = crate::channel::kraus_from_stinespring(vphi, None)?;
    let kpsi = crate::channel::kraus_from_stinespring(vpsi, None)?;
    let quick = DistanceConfig { dilation_upper: false, ..cfg.clone() };
    let lhs = ecd_distance(&kphi, &kpsi, g, budget, &quick)?;
    Ok(DilationBound {
        lhs_estimate: lhs.estimate,
        rhs: difference_norm * (norm_phi + norm_psi),
        difference_norm,
        norm_phi,
        norm_psi,
    })
}

/// The four quantities
/// `D / (sqrt||Phi|| + sqrt||Psi||) <= inf ||V_Phi - V_Psi||_E <= beta_E <= sqrt D`.
#[derive(Clone, Debug, Serialize)]
pub struct KswChain {
    /// Ascent estimate of `D` over the root-norm sum.
    pub scaled_distance: f64,
    /// Common-dilation value standing in for the infimum over dilations.
    pub dilation_infimum: f64,
    /// Ascent estimate of `beta_E`.
    pub bures: f64,
    /// Square root of the ascent estimate of `D`.
    pub sqrt_distance: f64,
    /// Largest violation `max(t_k - t_{k+1}, 0)` along the chain.
    pub slack: f64,
    pub distance: DistanceReport,
    pub dilation: CommonDilation,
}

impl KswChain {
    pub fn terms(&self) -> [f64; 4] {
        [self.scaled_distance, self.dilation_infimum, self.bures, self.sqrt_distance]
    }

    pub fn ordered(&self, tol: f64) -> bool {
        self.slack <= tol
    }
}

pub fn ksw_chain(
    phi: &KrausMap,
    psi: &KrausMap,
    g: &EnergyObservable,
    budget: f64,
    cfg: &DistanceConfig,
) -> Result<KswChain> {
    let quick = DistanceConfig { dilation_upper: false, ..cfg.clone() };
    let distance = ecd_distance(phi, psi, g, budget, &quick)?;
    let a = ecd_norm_cp(phi, g, budget)?.value;
    let b = ecd_norm_cp(psi, g, budget)?.value;
    let (va, vb) = canonical_pair(phi, psi)?;
    let dilation = common_dilation_optimize(&va, &vb, g, budget, cfg)?;
    let roots = a.sqrt() + b.sqrt();
    let scaled_distance = if roots > 0.0 { distance.estimate / roots } else { 0.0 };
    let terms = [scaled_distance, dilation.achieved, dilation.beta_reference, distance.estimate.sqrt()];
    let slack = terms.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max);
    Ok(KswChain {
        scaled_distance,
        dilation_infimum: dilation.achieved,
        bures: dilation.beta_reference,
        sqrt_distance: distance.estimate.sqrt(),
        slack,
        distance,
        dilation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    pub trials: usize,
    pub violations: usize,
    /// Right-hand side `2 sqrt(eps ||Phi||_E ||Phi||_{4E/eps})`.
    pub rhs: f64,
    pub max_lhs: f64,
}

impl ContinuityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Samples pairs `omega_1, omega_2` of constrained states on `A (x) R` with
/// `||omega_1 - omega_2||_1 <= eps` and checks
/// `||(Phi (x) Id)(omega_1 - omega_2)||_1 <= 2 sqrt(eps ||Phi||_E ||Phi||_{4E/eps})`.
pub fn continuity_bound_check(
    phi: &KrausMap,
    g: &EnergyObservable,
    budget: f64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<ContinuityReport> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps must be positive, got {eps}")));
    }
    let rhs = 2.0 * (eps * ecd_norm_cp(phi, g, budget)?.value * ecd_norm_cp(phi, g, 4.0 * budget / eps)?.value).sqrt();
    let d = phi.d_in();
    let big = g.tensor_identity(d);
    let ext = extend(phi, d);
    let mut sampler = ConstrainedSampler::new(&big, budget, seed)?;
    let mut coin = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut violations = 0;
    let mut max_lhs: f64 = 0.0;
    for _ in 0..trials {
        let mode = |c: &mut ChaCha8Rng| if c.random::<bool>() { SampleMode::Pure } else { SampleMode::Mixed };
        let w1 = sampler.state(mode(&mut coin));
        let s = sampler.state(mode(&mut coin));
        let delta = w1.matrix() - s.matrix();
        let dist = trace_norm(&delta);
        let t = if dist > 0.0 { (eps / dist).min(1.0) } else { 0.0 };
        let diff = delta.scale(t);
        let lhs = trace_norm(&apply(&ext, &diff)?);
        max_lhs = max_lhs.max(lhs);
        if lhs > rhs + 1e-9 {
            violations += 1;
        }
    }
    Ok(ContinuityReport { trials, violations, rhs, max_lhs })
}

#[cfg(test)]
mod tests;
