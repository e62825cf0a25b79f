//! Saddle problem behind the energy-constrained Bures distance.
//!
//! For dilations `V_Phi`, `V_Psi` on a common environment and
//! `T(rho) = Tr_B V_Psi rho V_Phi^*`,
//!
//! ```text
//! beta_E^2 = max_rho min_{||C|| <= 1} Tr(M rho) - 2 Re Tr(C T(rho))
//!          = max_rho Tr(M rho) - 2 ||T(rho)||_1,
//! ```
//!
//! `M = V_Phi^* V_Phi + V_Psi^* V_Psi`, over states with `Tr G rho <= E`.
//! The maximum typically sits where `T` is rank deficient, so first-order
//! ascent stalls short of it. The lifted form
//!
//! ```text
//! max Tr(M rho) - Tr P - Tr Q   s.t.  [[P, T(rho)], [T(rho)^*, Q]] >= 0
//! ```
//!
//! is solved by log-barrier path following; at a central point with
//! parameter `t` the contraction is `C = -(Z^{-1})_{21} / t`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::channel::Dilation;
use crate::energy::EnergyObservable;
use crate::enorm::solve_form;
use crate::matcore::{c64, clip_to_contraction, partial_trace, polar_unitary, tensor, trace_norm, CMat, DimSplit};

/// Values are squared distances.
pub(super) struct Saddle {
    /// Feasible state; `lower = h(rho)` bounds `beta^2` from below.
    pub rho: CMat,
    pub lower: f64,
    /// Contraction; `upper = max_rho Tr(K_C rho)` bounds `beta^2` from above.
    pub contraction: CMat,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(super) struct Coupling<'a> {
    vphi: &'a Dilation,
    vpsi: &'a Dilation,
    m: CMat,
}

impl<'a> Coupling<'a> {
    pub fn new(vphi: &'a Dilation, vpsi: &'a Dilation) -> Self {
        let m = (&(&vphi.operator().adjoint() * vphi.operator()) + &(&vpsi.operator().adjoint() * vpsi.operator()))
            .hermitian_part();
        Coupling { vphi, vpsi, m }
    }

    /// `Tr_B V_Psi rho V_Phi^*`.
    fn cross(&self, rho: &CMat) -> CMat {
        let m = &(self.vpsi.operator() * rho) * &self.vphi.operator().adjoint();
        let split = DimSplit::bipartite(self.vphi.d_out(), self.vphi.env_dim()).expect("nonzero factors");
        partial_trace(&m, &split, &[1]).expect("matching split")
    }

    /// `(C, h(rho))` with `C` the adjoint polar factor of `T(rho)`.
    pub fn respond(&self, rho: &CMat) -> (CMat, f64) {
        let t = self.cross(rho);
        let h = self.m.inner(rho).re - 2.0 * trace_norm(&t);
        (polar_unitary(&t).adjoint(), h)
    }

    /// `K_C = (V~_Phi - V~_Psi^C)^* (V~_Phi - V~_Psi^C)`.
    pub fn form(&self, c: &CMat) -> CMat {
        let lifted = tensor(&CMat::identity(self.vphi.d_out()), c);
        let cross = &(&self.vphi.operator().adjoint() * &lifted) * self.vpsi.operator();
        (&self.m - &(&cross + &cross.adjoint())).hermitian_part()
    }

    fn upper(&self, c: &CMat, g: &EnergyObservable, budget: f64) -> f64 {
        solve_form(&self.form(c), g, budget).dual
    }

    /// Bounds at a given state, with the best-response contraction.
    pub fn evaluate(&self, rho: &CMat, g: &EnergyObservable, budget: f64) -> Saddle {
        let (c, h) = self.respond(rho);
        let upper = self.upper(&c, g, budget);
        Saddle { rho: rho.clone(), lower: h, contraction: c, upper, iterations: 0, converged: false }
    }
}

/// Basis of the Hermitian `n x n` matrices, or of the traceless ones.
fn hermitian_basis(n: usize, traceless: bool) -> Vec<CMat> {
    let unit = |i: usize, j: usize, z| {
        let mut m = CMat::zeros(n, n);
        m.set(i, j, z);
        m
    };
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        if !traceless {
            out.push(unit(i, i, c64(1.0, 0.0)));
        } else if i + 1 < n {
            out.push(&unit(i, i, c64(1.0, 0.0)) - &unit(n - 1, n - 1, c64(1.0, 0.0)));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(&unit(i, j, c64(1.0, 0.0)) + &unit(j, i, c64(1.0, 0.0)));
            out.push(&unit(i, j, c64(0.0, 1.0)) + &unit(j, i, c64(0.0, -1.0)));
        }
    }
    out
}

fn block(p: &CMat, t: &CMat, q: &CMat) -> CMat {
    let k = p.rows();
    CMat::from_fn(2 * k, 2 * k, |i, j| match (i < k, j < k) {
        (true, true) => p.get(i, j),
        (true, false) => t.get(i, j - k),
        (false, true) => t.get(j, i - k).conj(),
        (false, false) => q.get(i - k, j - k),
    })
}

/// `(log det, inverse)` of a Hermitian positive definite matrix, `None` if
/// it is not positive definite.
fn logdet_inverse(m: &CMat) -> Option<(f64, CMat)> {
    let ch = Cholesky::new(m.hermitian_part().into_dmatrix())?;
    // complex square roots never fail, so an indefinite pivot shows up as a
    // mostly imaginary diagonal entry instead of an error
    if ch.l_dirty().diagonal().iter().any(|z| !(z.re > 0.0 && z.im.abs() < z.re)) {
        return None;
    }
    let logdet = 2.0 * ch.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>();
    Some((logdet, CMat::from_dmatrix(ch.inverse())))
}

fn real_trace_product(a: &CMat, b: &CMat) -> f64 {
    // Re Tr(AB) without forming the product
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            s += (a.get(i, k) * b.get(k, i)).re;
        }
    }
    s
}

struct Point {
    rho: CMat,
    p: CMat,
    q: CMat,
}

struct Barrier<'a> {
    cp: &'a Coupling<'a>,
    levels: &'a [f64],
    budget: f64,
    /// Directions `(d rho, d Z)` and objective slopes, one per coordinate.
    dirs: Vec<(CMat, CMat, f64)>,
}

impl Barrier<'_> {
    fn z(&self, x: &Point) -> CMat {
        block(&x.p, &self.cp.cross(&x.rho), &x.q)
    }

    fn slack(&self, rho: &CMat) -> f64 {
        self.budget - rho.diag_re().iter().zip(self.levels).map(|(p, e)| p * e).sum::<f64>()
    }

    fn objective(&self, x: &Point) -> f64 {
        self.cp.m.inner(&x.rho).re - x.p.trace().re - x.q.trace().re
    }

    /// `-t f - log det rho - log det Z - log(E - Tr G rho)`, or `None`
    /// outside the interior.
    fn value(&self, x: &Point, t: f64) -> Option<f64> {
        let s = self.slack(&x.rho);
        if s <= 0.0 {
            return None;
        }
        let (lr, _) = logdet_inverse(&x.rho)?;
        let (lz, _) = logdet_inverse(&self.z(x))?;
        Some(-t * self.objective(x) - lr - lz - s.ln())
    }

    fn step(&self, x: &Point, delta: &DVector<f64>, s: f64) -> Point {
        let mut rho = x.rho.clone();
        let mut z = CMat::zeros(x.p.rows() * 2, x.p.rows() * 2);
        for ((dr, dz, _), &v) in self.dirs.iter().zip(delta.iter()) {
            if v != 0.0 {
                rho += &dr.scale(s * v);
                z += &dz.scale(s * v);
            }
        }
        let k = x.p.rows();
        let p = CMat::from_fn(k, k, |i, j| x.p.get(i, j) + z.get(i, j));
        let q = CMat::from_fn(k, k, |i, j| x.q.get(i, j) + z.get(k + i, k + j));
        Point { rho: rho.hermitian_part(), p: p.hermitian_part(), q: q.hermitian_part() }
    }

    /// Damped Newton centering at parameter `t`; returns the step count.
    fn center(&self, x: &mut Point, t: f64) -> usize {
        let n = self.dirs.len();
        for it in 0..60 {
            let Some((_, rho_inv)) = logdet_inverse(&x.rho) else { return it };
            let Some((_, z_inv)) = logdet_inverse(&self.z(x)) else { return it };
            let s = self.slack(&x.rho);
            let mut a = Vec::with_capacity(n);
            let mut b = Vec::with_capacity(n);
            let mut e = Vec::with_capacity(n);
            let mut grad = DVector::zeros(n);
            for (i, (dr, dz, c)) in self.dirs.iter().enumerate() {
                let ai = &rho_inv * dr;
                let bi = &z_inv * dz;
                let ei: f64 = dr.diag_re().iter().zip(self.levels).map(|(p, l)| p * l).sum();
                grad[i] = -t * c - ai.trace().re - bi.trace().re + ei / s;
                a.push(ai);
                b.push(bi);
                e.push(ei);
            }
            let mut hess = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = real_trace_product(&a[i], &a[j]) + real_trace_product(&b[i], &b[j]) + e[i] * e[j] / (s * s);
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                }
            }
            let scale = (0..n).map(|i| hess[(i, i)]).fold(0.0f64, f64::max);
            let Some(ch) = Cholesky::new(hess.clone()).or_else(|| {
                let mut h = hess.clone();
                for i in 0..n {
                    h[(i, i)] += 1e-12 * scale;
                }
                Cholesky::new(h)
            }) else {
                return it;
            };
            let delta = -ch.solve(&grad);
            let decrement = -grad.dot(&delta);
            if decrement <= 1e-12 {
                return it;
            }
            let Some(v0) = self.value(x, t) else { return it };
            let mut s = 1.0;
            loop {
                let cand = self.step(x, &delta, s);
                if let Some(v) = self.value(&cand, t) {
                    if v <= v0 - 0.25 * s * decrement {
                        *x = cand;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-12 {
                    return it;
                }
            }
        }
        60
    }
}

/// Path-following solution of the lifted problem. Needs a strictly feasible
/// energy budget (`E` above the ground level); otherwise returns `None`.
pub(super) fn solve(cp: &Coupling<'_>, g: &EnergyObservable, budget: f64, max_steps: usize) -> Option<Saddle> {
    let levels = g.levels();
    let d = levels.len();
    let d_e = cp.vphi.env_dim();
    let e0 = g.ground();
    let mean = levels.iter().sum::<f64>() / d as f64;
    if budget <= e0 + 1e-12 * (1.0 + e0.abs()) {
        return None;
    }
    let mix = if mean > e0 { (0.5f64).min((budget - e0) / (2.0 * (mean - e0))) } else { 0.5 };
    let mut rho = CMat::identity(d).scale(mix / d as f64);
    rho.set(0, 0, rho.get(0, 0) + c64(1.0 - mix, 0.0));
    let t0 = cp.cross(&rho);
    let pad = crate::matcore::operator_norm(&t0) + 1.0;
    let mut x = Point { rho, p: CMat::identity(d_e).scale(pad), q: CMat::identity(d_e).scale(pad) };

    let mut dirs = Vec::new();
    for b in hermitian_basis(d, true) {
        let t = cp.cross(&b);
        let z = block(&CMat::zeros(d_e, d_e), &t, &CMat::zeros(d_e, d_e));
        let c = cp.m.inner(&b).re;
        dirs.push((b, z, c));
    }
    for h in hermitian_basis(d_e, false) {
        let zero = CMat::zeros(d_e, d_e);
        dirs.push((CMat::zeros(d, d), block(&h, &zero, &zero), -h.trace().re));
        dirs.push((CMat::zeros(d, d), block(&zero, &zero, &h), -h.trace().re));
    }
    let barrier = Barrier { cp, levels, budget, dirs };

    let cones = (d + 2 * d_e + 1) as f64;
    let scale = 1.0 + cp.m.max_abs();
    let mut t = 1.0 / scale;
    let mut iterations = 0;
    let mut best: Option<Saddle> = None;
    loop {
        iterations += barrier.center(&mut x, t);
        let z_inv = logdet_inverse(&barrier.z(&x)).map(|(_, zi)| zi)?;
        let c = clip_to_contraction(&CMat::from_fn(d_e, d_e, |i, j| -z_inv.get(d_e + i, j) / t));
        let (_, lower) = cp.respond(&x.rho);
        let upper = cp.upper(&c, g, budget);
        let better = best.as_ref().is_none_or(|b| upper - lower < b.upper - b.lower);
        if better {
            best = Some(Saddle { rho: x.rho.clone(), lower, contraction: c, upper, iterations, converged: false });
        }
        if cones / t <= 1e-11 * scale || iterations >= max_steps {
            break;
        }
        t *= 10.0;
    }
    let mut out = best?;
    out.iterations = iterations;
    out.converged = out.upper - out.lower <= 1e-7 * (1.0 + out.upper);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{stinespring_from_kraus, KrausMap};

    #[test]
    fn indefinite_matrices_have_no_log_det() {
        let indefinite = CMat::from_real_diag(&[1.6, -0.6]);
        assert!(logdet_inverse(&indefinite).is_none());
        let mut m = CMat::identity(2);
        m.set(0, 1, c64(0.0, 2.0));
        m.set(1, 0, c64(0.0, -2.0));
        assert!(logdet_inverse(&m).is_none());
        let (ld, inv) = logdet_inverse(&CMat::from_real_diag(&[2.0, 0.5])).unwrap();
        assert!(ld.abs() < 1e-15);
        assert!((inv.get(0, 0).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hermitian_bases_have_the_right_size() {
        assert_eq!(hermitian_basis(3, true).len(), 8);
        assert_eq!(hermitian_basis(2, false).len(), 4);
        for b in hermitian_basis(3, true) {
            assert!(b.is_hermitian());
            assert!(b.trace().norm() < 1e-15);
        }
    }

    #[test]
    fn bracket_closes_for_identity_versus_dephasing() {
        let g = EnergyObservable::number(2);
        let (a, b) = (stinespring_from_kraus(&KrausMap::identity(2)), stinespring_from_kraus(&KrausMap::dephasing(2)));
        let b = b.padded(2).unwrap();
        let a = a.padded(2).unwrap();
        let cp = Coupling::new(&a, &b);
        for e in [0.3, 0.5, 1.0] {
            let s = solve(&cp, &g, e, 1000).unwrap();
            assert!(s.lower <= s.upper + 1e-12);
            assert!(s.upper - s.lower < 1e-7, "E={e}: [{}, {}]", s.lower, s.upper);
        }
    }
}
