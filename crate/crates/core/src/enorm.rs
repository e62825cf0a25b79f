//! Operator E-norms relative to a discrete energy observable.
//!
//! For `G` diagonal the constrained norm
//! `||A||_E = sup { sqrt Tr(A rho A^*) : rho >= 0, Tr rho <= 1, Tr G rho <= E }`
//! is a maximization of one Hermitian form under two linear constraints, so
//! Lagrangian duality is exact:
//!
//! ```text
//! ||A||_E^2 = min_{mu >= 0} [lambda_max(A^*A - mu G)]_+ + mu E
//! ```
//!
//! The dual is a convex function of one variable; it is minimized by golden
//! section and a primal state of rank at most two is rebuilt from the top
//! eigenspace at the optimal multiplier, which certifies the value.

use crate::energy::{ConstrainedSampler, DensityOperator, EnergyObservable};
use crate::error::{dim_err, Error, Result};
use crate::matcore::{c64, eigh, eigvalsh, operator_norm, CMat, C64};

/// Solution of `sup Tr(M rho)` over `{rho >= 0, Tr rho <= 1, Tr G rho <= E}`.
#[derive(Clone, Debug)]
pub struct ENormCertificate {
    /// The norm `||A||_E` (for the CP-map variant: the supremum itself).
    pub value: f64,
    /// Optimal dual multiplier of the energy constraint.
    pub mu: f64,
    /// State achieving `primal_value`; rank at most two, trace at most one.
    pub primal_state: DensityOperator,
    /// `Tr(M rho)` at `primal_state`.
    pub primal_value: f64,
    /// `[lambda_max(M - mu G)]_+ + mu E` at `mu`.
    pub dual_value: f64,
    /// `|dual_value - primal_value|`.
    pub gap: f64,
}

impl ENormCertificate {
    /// Energy of the primal state.
    pub fn primal_energy(&self, g: &EnergyObservable) -> f64 {
        self.primal_state.matrix().diag_re().iter().zip(g.levels()).map(|(p, e)| p * e).sum()
    }
}

/// Weighted rank-one terms `sum_i w_i v_i v_i^*`.
pub(crate) type Mixture = Vec<(f64, Vec<C64>)>;

pub(crate) struct FormSolution {
    pub mu: f64,
    pub dual: f64,
    pub primal: f64,
    pub state: Mixture,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn shift_diag(m: &CMat, levels: &[f64], s: f64) -> CMat {
    let mut out = m.clone();
    for (i, &e) in levels.iter().enumerate() {
        out.set(i, i, out.get(i, i) + c64(s * e, 0.0));
    }
    out
}

fn quad(m: &CMat, v: &[C64]) -> f64 {
    let col = CMat::column(v);
    (&(&col.adjoint() * m) * &col).get(0, 0).re
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn top_vector(m: &CMat, levels: &[f64], mu: f64) -> Vec<C64> {
    let e = eigh(&shift_diag(m, levels, -mu));
    e.vector(levels.len() - 1)
}

/// Maximizes `Tr(M rho)` for Hermitian PSD `M` under the trace and energy
/// constraints. `budget` must be positive.
pub(crate) fn solve_form(m: &CMat, g: &EnergyObservable, budget: f64) -> FormSolution {
    let levels = g.levels();
    let n = levels.len();
    let top = eigvalsh(m).last().copied().unwrap_or(0.0);
    let ground: Mixture = {
        let t = if g.ground() > 0.0 { (budget / g.ground()).min(1.0) } else { 1.0 };
        vec![(t, CMat::ket(n, 0).column_entries())]
    };
    if top <= 0.0 {
        let primal = mixture_value(m, &ground).max(0.0);
        return FormSolution { mu: 0.0, dual: 0.0, primal, state: ground };
    }

    // h(mu) >= mu E, so mu > h(0) / E cannot beat mu = 0
    let mu_hi = top / budget;
    let width_tol = 1e-12 * (1.0 + mu_hi);
    let h = |mu: f64| {
        let shifted = shift_diag(m, levels, -mu);
        eigvalsh(&shifted).last().copied().unwrap_or(0.0).max(0.0) + mu * budget
    };
    let (mut a, mut b) = (0.0, mu_hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut hc, mut hd) = (h(c), h(d));
    while b - a > width_tol {
        if hc <= hd {
            b = d;
            d = c;
            hd = hc;
            c = b - GOLDEN * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + GOLDEN * (b - a);
            hd = h(d);
        }
    }
    let mut best = (0.0, h(0.0));
    for mu in [a, b, c, d, 0.5 * (a + b)] {
        let v = h(mu);
        if v < best.1 {
            best = (mu, v);
        }
    }
    let (mu, dual) = best;

    let mut primal = (mixture_value(m, &ground), ground);
    let target = 1e-11 * (1.0 + dual);
    // Top eigenvectors just left and right of mu straddle the energy budget;
    // mixing them saturates it.
    for delta in [2.0 * width_tol, 1e-10 * (1.0 + mu), 1e-8 * (1.0 + mu), 1e-6 * (1.0 + mu)] {
        let left = top_vector(m, levels, (mu - delta).max(0.0));
        let right = top_vector(m, levels, mu + delta);
        for cand in straddle_candidates(&left, &right, g, budget) {
            primal = consider(primal, m, g, budget, cand);
        }
        if dual - primal.0 <= target {
            break;
        }
    }
    if dual - primal.0 > target {
        let eig = eigh(&shift_diag(m, levels, -mu));
        let lam = eig.max();
        let scale = 1.0 + lam.abs() + mu * g.top();
        for tol in [1e-11, 1e-9, 1e-7, 1e-5] {
            let cluster: Vec<usize> = (0..n).filter(|&k| eig.values[k] >= lam - tol * scale).collect();
            for cand in cluster_candidates(&eig.vectors, &cluster, m, g, budget) {
                primal = consider(primal, m, g, budget, cand);
            }
            if dual - primal.0 <= target {
                break;
            }
        }
    }
    FormSolution { mu, dual, primal: primal.0, state: primal.1 }
}

pub(crate) fn mixture_value(m: &CMat, mix: &Mixture) -> f64 {
    mix.iter().map(|(w, v)| w * quad(m, v)).sum()
}

fn consider(best: (f64, Mixture), m: &CMat, g: &EnergyObservable, budget: f64, mix: Mixture) -> (f64, Mixture) {
    let trace: f64 = mix.iter().map(|(w, v)| w * norm_sqr(v)).sum();
    let energy: f64 = mix.iter().map(|(w, v)| w * g.expectation(v)).sum();
    if trace > 1.0 + 1e-12 || energy > budget + 1e-10 * (1.0 + budget) {
        return best;
    }
    let val = mixture_value(m, &mix);
    if val > best.0 {
        (val, mix)
    } else {
        best
    }
}

/// Feasible states from two unit vectors, one on each side of the budget
/// when possible.
fn straddle_candidates(u: &[C64], w: &[C64], g: &EnergyObservable, budget: f64) -> Vec<Mixture> {
    let (eu, ew) = (g.expectation(u), g.expectation(w));
    let mut out = Vec::new();
    for (v, e) in [(u, eu), (w, ew)] {
        let t = if e > 0.0 { (budget / e).min(1.0) } else { 1.0 };
        out.push(vec![(t, v.to_vec())]);
    }
    let (lo, hi, elo, ehi) = if eu <= ew { (u, w, eu, ew) } else { (w, u, ew, eu) };
    if elo <= budget && budget < ehi {
        let p = ((ehi - budget) / (ehi - elo)).clamp(0.0, 1.0);
        out.push(vec![(p, lo.to_vec()), (1.0 - p, hi.to_vec())]);
    }
    out
}

/// Candidate optimizers built from the lowest- and highest-energy vectors of
/// the top eigenspace cluster.
fn cluster_candidates(vectors: &CMat, cluster: &[usize], m: &CMat, g: &EnergyObservable, budget: f64) -> Vec<Mixture> {
    let n = vectors.rows();
    let q = CMat::from_fn(n, cluster.len(), |i, j| vectors.get(i, cluster[j]));
    let gc = &(&q.adjoint() * &g.matrix()) * &q;
    let ce = eigh(&gc);
    let lo = (&q * &CMat::column(&ce.vector(0))).column_entries();
    let hi = (&q * &CMat::column(&ce.vector(cluster.len() - 1))).column_entries();
    let e_lo = g.expectation(&lo);
    let e_hi = g.expectation(&hi);
    let mut out = straddle_candidates(&lo, &hi, g, budget);
    if e_lo <= budget && budget < e_hi {
        // the compressed energy form is diagonal in (lo, hi), so a coherent
        // superposition also hits the budget
        let p = ((e_hi - budget) / (e_hi - e_lo)).clamp(0.0, 1.0);
        let cross = quad_cross(m, &lo, &hi);
        let phase = if cross.norm() > 0.0 { cross.conj() / cross.norm() } else { c64(1.0, 0.0) };
        let v: Vec<C64> = lo.iter().zip(&hi).map(|(a, b)| a * p.sqrt() + b * phase * (1.0 - p).sqrt()).collect();
        let e = g.expectation(&v);
        let t = if e > budget { budget / e } else { 1.0 };
        out.push(vec![(t, v)]);
    }
    out
}

fn quad_cross(m: &CMat, u: &[C64], v: &[C64]) -> C64 {
    let cu = CMat::column(u);
    let cv = CMat::column(v);
    (&(&cu.adjoint() * m) * &cv).get(0, 0)
}

fn check_budget(budget: f64) -> Result<()> {
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::Precondition(format!("energy budget must be positive, got {budget}")));
    }
    Ok(())
}

fn check_dims(a: &CMat, g: &EnergyObservable) -> Result<()> {
    if a.cols() != g.dim() {
        return Err(dim_err(format!("operator has {} columns, observable dimension {}", a.cols(), g.dim())));
    }
    Ok(())
}

pub(crate) fn mixture_matrix(mix: &Mixture, n: usize) -> CMat {
    let mut rho = CMat::zeros(n, n);
    for (w, v) in mix {
        rho += &CMat::projector(v).scale(*w);
    }
    rho
}

pub(crate) fn certificate(sol: FormSolution, value: f64) -> Result<ENormCertificate> {
    let n = sol.state[0].1.len();
    let mut rho = mixture_matrix(&sol.state, n);
    if rho.trace().re <= 0.0 {
        rho = CMat::projector(&CMat::ket(n, 0).column_entries());
    }
    Ok(ENormCertificate {
        value,
        mu: sol.mu,
        primal_state: DensityOperator::new(rho)?,
        primal_value: sol.primal,
        dual_value: sol.dual,
        gap: (sol.dual - sol.primal).abs(),
    })
}

/// `sup Tr(M rho)` for a PSD form `M`; the certificate value is the
/// supremum itself.
pub(crate) fn form_certificate(m: &CMat, g: &EnergyObservable, budget: f64) -> Result<ENormCertificate> {
    check_budget(budget)?;
    if !m.is_square() || m.rows() != g.dim() {
        return Err(dim_err("form and observable dimensions differ"));
    }
    let sol = solve_form(m, g, budget);
    let v = sol.dual;
    certificate(sol, v)
}

/// `||A||_E^G` with its dual certificate.
pub fn e_norm(a: &CMat, g: &EnergyObservable, budget: f64) -> Result<ENormCertificate> {
    check_budget(budget)?;
    check_dims(a, g)?;
    let m = (&a.adjoint() * a).hermitian_part();
    let sol = solve_form(&m, g, budget);
    let v = sol.dual.max(0.0).sqrt();
    certificate(sol, v)
}

/// Value of `||A||_E^G`, allowing `E = 0` (then the supremum runs over the
/// ground space of `G`).
pub fn e_norm_value(a: &CMat, g: &EnergyObservable, budget: f64) -> Result<f64> {
    check_dims(a, g)?;
    if budget < 0.0 || !budget.is_finite() {
        return Err(Error::Precondition(format!("energy budget must be nonnegative, got {budget}")));
    }
    if budget == 0.0 {
        let zero: Vec<usize> = (0..g.dim()).filter(|&k| g.levels()[k] == 0.0).collect();
        if zero.is_empty() {
            return Ok(0.0);
        }
        let sub = CMat::from_fn(a.rows(), zero.len(), |i, j| a.get(i, zero[j]));
        return Ok(operator_norm(&sub));
    }
    Ok(e_norm(a, g, budget)?.value)
}

/// `|||A|||_E`: largest singular value of `A (I + G/E)^{-1/2}`.
pub fn e_norm_graded(a: &CMat, g: &EnergyObservable, budget: f64) -> Result<f64> {
    check_budget(budget)?;
    check_dims(a, g)?;
    let w: Vec<f64> = g.levels().iter().map(|&e| 1.0 / (1.0 + e / budget).sqrt()).collect();
    Ok(operator_norm(&a.scale_cols(&w)))
}

/// Log-spaced grid of scale factors `t` used by the norm interconversions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for TGrid {
    fn default() -> Self {
        TGrid { lo: 1e-3, hi: 1e3, points: 400 }
    }
}

/// Minimum grid size accepted by the interconversions.
pub const MIN_GRID_POINTS: usize = 50;

impl TGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points < MIN_GRID_POINTS {
            return Err(Error::Precondition(format!(
                "t-grid has {} points, at least {MIN_GRID_POINTS} required",
                self.points
            )));
        }
        if !(self.lo > 0.0 && self.hi > self.lo) {
            return Err(Error::Precondition(format!("bad t-range [{}, {}]", self.lo, self.hi)));
        }
        let (l, h) = (self.lo.ln(), self.hi.ln());
        let n = self.points - 1;
        Ok((0..self.points).map(|i| (l + (h - l) * i as f64 / n as f64).exp()).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridOptimum {
    pub value: f64,
    pub t: f64,
}

/// Maximizes `f` over the grid, then refines by golden section in `ln t`
/// between the neighbours of the best grid point.
fn grid_maximize(f: impl Fn(f64) -> Result<f64>, grid: &TGrid) -> Result<GridOptimum> {
    let ts = grid.values()?;
    let vals: Vec<f64> = ts.iter().map(|&t| f(t)).collect::<Result<_>>()?;
    let k = (0..ts.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    let mut best = GridOptimum { value: vals[k], t: ts[k] };
    let (mut a, mut b) = (ts[k.saturating_sub(1)].ln(), ts[(k + 1).min(ts.len() - 1)].ln());
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c.exp())?, f(d.exp())?);
    for _ in 0..40 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d.exp())?;
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.value {
            best = GridOptimum { value: v, t: x.exp() };
        }
    }
    Ok(best)
}

/// `|||A|||_E = sup_t ||A||_{tE} / sqrt(1 + t)` over the grid.
pub fn transform_graded_from_enorm(
    enorm_at: impl Fn(f64) -> Result<f64>,
    budget: f64,
    grid: &TGrid,
) -> Result<GridOptimum> {
    check_budget(budget)?;
    grid_maximize(|t| Ok(enorm_at(t * budget)? / (1.0 + t).sqrt()), grid)
}

/// `||A||_E = inf_t |||A|||_{tE} sqrt(1 + 1/t)` over the grid.
pub fn transform_enorm_from_graded(
    graded_at: impl Fn(f64) -> Result<f64>,
    budget: f64,
    grid: &TGrid,
) -> Result<GridOptimum> {
    check_budget(budget)?;
    let opt = grid_maximize(|t| Ok(-graded_at(t * budget)? * (1.0 + 1.0 / t).sqrt()), grid)?;
    Ok(GridOptimum { value: -opt.value, t: opt.t })
}

/// Euclidean projection onto `{||phi|| <= 1, <phi|G|phi> <= E}`. The KKT
/// conditions give `phi_k = v_k / (1 + alpha + beta E_k)`; both multipliers
/// are found by nested bisection.
fn project_constrained(v: &mut [C64], levels: &[f64], budget: f64) {
    let shrink = |alpha: f64, beta: f64| -> (f64, f64) {
        let (mut n2, mut e) = (0.0, 0.0);
        for (z, &l) in v.iter().zip(levels) {
            let w = z.norm_sqr() / (1.0 + alpha + beta * l).powi(2);
            n2 += w;
            e += w * l;
        }
        (n2, e)
    };
    let alpha_for = |beta: f64| -> f64 {
        if shrink(0.0, beta).0 <= 1.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        while shrink(hi, beta).0 > 1.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if shrink(mid, beta).0 > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let mut beta = 0.0;
    let mut alpha = alpha_for(0.0);
    if shrink(alpha, 0.0).1 > budget {
        let mut hi = 1.0;
        while shrink(alpha_for(hi), hi).1 > budget {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if shrink(alpha_for(mid), mid).1 > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        beta = hi;
        alpha = alpha_for(hi);
    }
    for (z, &l) in v.iter_mut().zip(levels) {
        *z /= 1.0 + alpha + beta * l;
    }
}

/// Result of [`sampled_search`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSearch {
    /// Largest `||A phi||` over every sampled constrained vector.
    pub best: f64,
    pub samples: usize,
}

/// Lower estimate of `||A||_E` from `samples` constrained vectors. Fresh
/// draws from the constrained sampler alternate with random perturbations and
/// projected ascent steps from the incumbent; candidates are projected back
/// into the constraint set and kept only if they improve it.
pub fn sampled_search(a: &CMat, g: &EnergyObservable, budget: f64, samples: usize, seed: u64) -> Result<SampleSearch> {
    use rand_distr::{Distribution, StandardNormal};
    check_dims(a, g)?;
    let mut sampler = ConstrainedSampler::new(g, budget, seed)?;
    let gram = &a.adjoint() * a;
    let scale = gram.max_abs().max(f64::MIN_POSITIVE);
    let value = |v: &[C64]| (a * &CMat::column(v)).frobenius();
    let mut inc = sampler.pure_vector();
    let mut inc_val = value(&inc);
    let mut best = inc_val;
    let mut sigma = 0.3;
    let mut eta: f64 = 1.0 / scale;
    for i in 1..samples {
        let fresh = i % 16 == 0;
        let ascent = i % 4 == 2;
        let cand = if fresh {
            sampler.pure_vector()
        } else if ascent {
            let step = (&gram * &CMat::column(&inc)).column_entries();
            let mut v: Vec<C64> = inc.iter().zip(&step).map(|(z, s)| z + s * eta).collect();
            project_constrained(&mut v, g.levels(), budget);
            v
        } else {
            let rng = sampler.rng();
            let mut v: Vec<C64> = inc
                .iter()
                .map(|z| {
                    let (x, y): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
                    z + c64(x, y) * sigma
                })
                .collect();
            project_constrained(&mut v, g.levels(), budget);
            v
        };
        let val = value(&cand);
        best = best.max(val);
        let improved = val > inc_val;
        if improved {
            inc = cand;
            inc_val = val;
        }
        if ascent {
            eta = if improved { (eta * 2.0).min(1e6 / scale) } else { (eta * 0.5).max(1e-6 / scale) };
        } else if !fresh {
            sigma = if improved { (sigma * 2.0).min(1.0) } else { (sigma * 0.98).max(1e-12) };
        }
    }
    Ok(SampleSearch { best, samples })
}

/// Rows `(E, ||A||_E / sqrt E)` over an ascending grid; the infimum of the
/// ratio estimates the relative bound of `A` with respect to `sqrt G`.
pub fn g_bound(a: &CMat, g: &EnergyObservable, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.first().is_some_and(|&e| e <= 0.0) {
        return Err(Error::Precondition("energy grid must be ascending and positive".into()));
    }
    grid.iter().map(|&e| Ok((e, e_norm(a, g, e)?.value / e.sqrt()))).collect()
}

/// `f_A(E, eps) = eps ||A||_{4E/eps^2}`.
pub fn modulus_f(a: &CMat, g: &EnergyObservable, budget: f64, eps: f64) -> Result<f64> {
    check_budget(budget)?;
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(Error::Precondition(format!("eps must lie in (0, 2], got {eps}")));
    }
    Ok(eps * e_norm(a, g, 4.0 * budget / (eps * eps))?.value)
}

/// `(||A rho B^*||_1, ||A||_{E_rho} ||B||_{E_rho})` with `E_rho = Tr G rho`.
pub fn sandwich_product_bound(a: &CMat, b: &CMat, rho: &DensityOperator, g: &EnergyObservable) -> Result<(f64, f64)> {
    check_dims(a, g)?;
    check_dims(b, g)?;
    if a.rows() != b.rows() {
        return Err(dim_err("A and B have different codomains"));
    }
    let e_rho = crate::energy::energy_of(rho, g)?;
    let lhs = crate::matcore::trace_norm(&(&(a * rho.matrix()) * &b.adjoint()));
    let rhs = e_norm_value(a, g, e_rho)? * e_norm_value(b, g, e_rho)?;
    Ok((lhs, rhs))
}

/// Truncated annihilation operator `a|n> = sqrt(n) |n-1>`.
pub fn annihilation(d: usize) -> CMat {
    CMat::from_fn(d, d, |i, j| if j == i + 1 { c64((j as f64).sqrt(), 0.0) } else { C64::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::SampleMode;
    use crate::matcore::tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_levels(n: usize, rng: &mut impl Rng) -> EnergyObservable {
        let mut l: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        l.sort_by(f64::total_cmp);
        l[0] = 0.0;
        EnergyObservable::new(l, true).unwrap()
    }

    fn assert_certificate(c: &ENormCertificate, a: &CMat, g: &EnergyObservable, budget: f64) {
        assert!(c.gap <= 1e-8 * (1.0 + c.value * c.value), "gap {}", c.gap);
        assert!(c.primal_state.trace() <= 1.0 + 1e-12);
        assert!(c.primal_energy(g) <= budget + 1e-9);
        let achieved = (&(a * c.primal_state.matrix()) * &a.adjoint()).trace().re;
        assert!((achieved - c.value * c.value).abs() <= 1e-8 * (1.0 + c.value * c.value));
    }

    #[test]
    fn identity_has_unit_norm() {
        let g = EnergyObservable::number(5);
        for e in [0.01, 0.5, 2.0, 100.0] {
            let c = e_norm(&CMat::identity(5), &g, e).unwrap();
            assert!((c.value - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn annihilation_closed_form() {
        let d = 16;
        let g = EnergyObservable::number(d);
        let a = annihilation(d);
        for e in [0.3, 1.0, 2.5, 7.0, 15.0, 40.0] {
            let c = e_norm(&a, &g, e).unwrap();
            assert!((c.value - e.min((d - 1) as f64).sqrt()).abs() < 1e-8, "E={e}: {}", c.value);
            assert_certificate(&c, &a, &g, e);
        }
    }

    #[test]
    fn rank_one_closed_form() {
        let g = EnergyObservable::new(vec![0.0, 0.7, 1.5, 4.0], true).unwrap();
        for k in 1..4 {
            let a = CMat::outer(&CMat::ket(4, 0), &CMat::ket(4, k));
            for e in [0.1, 0.7, 1.0, 3.0, 6.0] {
                let want = (e / g.levels()[k]).sqrt().min(1.0);
                let c = e_norm(&a, &g, e).unwrap();
                assert!((c.value - want).abs() < 1e-8);
                assert_certificate(&c, &a, &g, e);
            }
        }
    }

    #[test]
    fn errors() {
        let g = EnergyObservable::number(3);
        assert!(e_norm(&CMat::identity(3), &g, 0.0).is_err());
        assert!(e_norm(&CMat::identity(3), &g, -1.0).is_err());
        assert!(e_norm(&CMat::identity(4), &g, 1.0).is_err());
        assert!(e_norm_graded(&CMat::identity(3), &g, 0.0).is_err());
    }

    #[test]
    fn random_certificates() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let n = rng.random_range(2..8);
            let a = random(rng.random_range(1..6), n, &mut rng);
            let g = random_levels(n, &mut rng);
            let e = rng.random_range(0.05..6.0);
            let c = e_norm(&a, &g, e).unwrap();
            assert_certificate(&c, &a, &g, e);
        }
    }

    #[test]
    fn degenerate_levels_and_ungrounded() {
        let g = EnergyObservable::new(vec![0.5, 1.0, 1.0, 2.0], false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let a = random(3, 4, &mut rng);
        for e in [0.2, 0.5, 1.0, 1.7] {
            let c = e_norm(&a, &g, e).unwrap();
            assert_certificate(&c, &a, &g, e);
        }
    }

    #[test]
    fn graded_cases() {
        let g = EnergyObservable::number(6);
        assert!((e_norm_graded(&CMat::identity(6), &g, 1.3).unwrap() - 1.0).abs() < 1e-12);
        let a = annihilation(6);
        for e in [0.5, 2.0, 9.0] {
            let want = (0..6).map(|n| (n as f64 / (1.0 + n as f64 / e)).sqrt()).fold(0.0, f64::max);
            assert!((e_norm_graded(&a, &g, e).unwrap() - want).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let a = random(3, 5, &mut rng);
            let g = random_levels(5, &mut rng);
            let e = rng.random_range(0.05..6.0);
            let n = e_norm(&a, &g, e).unwrap().value;
            let gr = e_norm_graded(&a, &g, e).unwrap();
            assert!(0.5f64.sqrt() * n <= gr + 1e-8 && gr <= n + 1e-8);
        }
    }

    #[test]
    fn transforms_on_constant_and_annihilation() {
        let grid = TGrid::default();
        let c = 1.7;
        let opt = transform_graded_from_enorm(|_| Ok(c), 1.0, &grid).unwrap();
        assert!((opt.value - c).abs() < 1e-3 * c);

        let d = 10;
        let g = EnergyObservable::number(d);
        let a = annihilation(d);
        for e in [0.5, 2.0, 6.0] {
            let via = transform_graded_from_enorm(|x| Ok(x.min((d - 1) as f64).sqrt()), e, &grid).unwrap();
            let direct = e_norm_graded(&a, &g, e).unwrap();
            assert!((via.value - direct).abs() < 1e-3, "{} vs {direct}", via.value);
        }
        assert!(transform_graded_from_enorm(|_| Ok(1.0), 1.0, &TGrid { points: 20, ..grid }).is_err());
    }

    #[test]
    fn transform_round_trip() {
        let grid = TGrid::default();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let a = random(2, 4, &mut rng);
        let g = random_levels(4, &mut rng);
        let graded = |x: f64| e_norm_graded(&a, &g, x);
        for e in [0.5, 2.0] {
            let enorm_direct = e_norm(&a, &g, e).unwrap().value;
            let enorm_via = transform_enorm_from_graded(graded, e, &grid).unwrap().value;
            assert!((enorm_via - enorm_direct).abs() <= 2e-3, "{enorm_via} vs {enorm_direct}");
            let back = transform_graded_from_enorm(
                |x| transform_enorm_from_graded(graded, x, &grid).map(|o| o.value),
                e,
                &grid,
            )
            .unwrap();
            assert!((back.value - graded(e).unwrap()).abs() <= 2e-3);
        }
    }

    #[test]
    fn g_bound_profiles() {
        let d = 64;
        let g = EnergyObservable::number(d);
        let a = annihilation(d);
        let grid: Vec<f64> = (0..12).map(|k| 2f64.powi(k - 2)).collect();
        let rows = g_bound(&a, &g, &grid).unwrap();
        for (e, r) in &rows {
            let want = (e.min(63.0) / e).sqrt();
            assert!((r - want).abs() < 1e-8);
        }
        assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-10));
        let rows = g_bound(&CMat::identity(d), &g, &grid).unwrap();
        for (e, r) in rows {
            assert!((r - 1.0 / e.sqrt()).abs() < 1e-10);
        }
        assert!(g_bound(&a, &g, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn modulus_cases() {
        let g = EnergyObservable::number(5);
        assert!((modulus_f(&CMat::identity(5), &g, 1.0, 2.0).unwrap() - 2.0).abs() < 1e-10);
        let a = annihilation(5);
        let mut prev = 0.0;
        for k in 1..=20 {
            let eps = 0.1 * k as f64;
            let f = modulus_f(&a, &g, 1.0, eps).unwrap();
            assert!(f >= prev - 1e-10);
            prev = f;
        }
        assert!(modulus_f(&a, &g, 1.0, 0.0).is_err());
        assert!(modulus_f(&a, &g, 1.0, 2.5).is_err());
    }

    #[test]
    fn modulus_bounds_sampled_differences() {
        let d = 4;
        let k = 2;
        let g = EnergyObservable::number(d);
        let big = g.tensor_identity(k);
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let a = random(3, d, &mut rng);
        let ak = tensor(&a, &CMat::identity(k));
        let budget = 1.5;
        let mut s = ConstrainedSampler::new(&big, budget, 36).unwrap();
        for _ in 0..500 {
            let eta = s.pure_vector();
            let other = s.pure_vector();
            let t: f64 = s.rng().random_range(0.0..1.0);
            // points of V_E: mixtures and scalings of constrained vectors stay in V_E
            let theta: Vec<C64> = eta.iter().zip(&other).map(|(x, y)| x * (1.0 - t) + y * t).collect();
            let diff: Vec<C64> = eta.iter().zip(&theta).map(|(x, y)| x - y).collect();
            let eps = diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().clamp(1e-6, 2.0);
            assert!(big.expectation(&theta) <= budget + 1e-9);
            let lhs = (&ak * &CMat::column(&diff)).frobenius();
            let rhs = modulus_f(&a, &g, budget, eps).unwrap();
            assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn sandwich_bound() {
        let d = 5;
        let g = EnergyObservable::number(d);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut s = ConstrainedSampler::new(&g, 2.5, 38).unwrap();
        for _ in 0..200 {
            let a = random(3, d, &mut rng);
            let b = random(3, d, &mut rng);
            let rho = s.state(if rng.random() { SampleMode::Pure } else { SampleMode::Mixed });
            let (lhs, rhs) = sandwich_product_bound(&a, &b, &rho, &g).unwrap();
            assert!(lhs <= rhs + 1e-9);
        }
        let rho = s.state(SampleMode::Mixed);
        let z = CMat::zeros(3, d);
        let (lhs, rhs) = sandwich_product_bound(&z, &random(3, d, &mut rng), &rho, &g).unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));
    }

    #[test]
    fn sandwich_tight_at_optimal_state() {
        let d = 6;
        let g = EnergyObservable::number(d);
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        for _ in 0..10 {
            let a = random(4, d, &mut rng);
            let c = e_norm(&a, &g, 1.7).unwrap();
            let rho = &c.primal_state;
            let (lhs, rhs) = sandwich_product_bound(&a, &a, rho, &g).unwrap();
            assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn tensor_stability() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let g = random_levels(4, &mut rng);
        let a = random(3, 4, &mut rng);
        for k in [2, 3] {
            let ak = tensor(&a, &CMat::identity(k));
            let gk = g.tensor_identity(k);
            for e in [0.3, 1.0, 3.0] {
                let x = e_norm(&a, &g, e).unwrap().value;
                let y = e_norm(&ak, &gk, e).unwrap().value;
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn sampled_states_never_exceed_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let d = rng.random_range(2..=16);
            let g = random_levels(d, &mut rng);
            let a = random(rng.random_range(1..6), d, &mut rng);
            let e = rng.random_range(0.1..4.0);
            let c = e_norm(&a, &g, e).unwrap();
            let s = sampled_search(&a, &g, e, 10_000, rng.random()).unwrap();
            assert!(s.best <= c.value + 1e-8);
            assert!(s.best >= c.value - 1e-3, "d={d}: {} vs {}", s.best, c.value);
        }
    }
}
