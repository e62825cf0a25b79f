//! Projected gradient ascent over unit vectors `psi = vec X` with
//! `<psi|G (x) I|psi> <= E`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::objective::Objective;
use crate::energy::{ConstrainedSampler, EnergyObservable};
use crate::error::Result;
use crate::matcore::{c64, CMat};

#[derive(Clone, Debug)]
pub(crate) struct AscentOutcome {
    pub value: f64,
    pub x: CMat,
    pub iterations: usize,
    pub converged: bool,
}

fn row_energy(x: &CMat, levels: &[f64]) -> f64 {
    (0..x.rows()).map(|i| levels[i] * (0..x.cols()).map(|j| x.get(i, j).norm_sqr()).sum::<f64>()).sum()
}

fn scale_rows_by(x: &CMat, f: impl Fn(f64) -> f64, levels: &[f64]) -> CMat {
    let w: Vec<f64> = levels.iter().map(|&e| f(e)).collect();
    x.scale_rows(&w)
}

fn normalized(x: &CMat) -> CMat {
    let n = x.frobenius();
    x.scale(1.0 / n)
}

/// Maps `X` to a unit vector inside the energy budget: normalization, then
/// `normalize((I + mu G)^{-1} X)` with `mu` found by bisection. If `X` has no
/// weight on levels below the budget, it is mixed with the ground level.
pub(crate) fn retract(x: &CMat, levels: &[f64], budget: f64) -> CMat {
    let tol = 1e-12 * (1.0 + budget);
    let y = normalized(x);
    if row_energy(&y, levels) <= budget + tol {
        return y;
    }
    let damped = |mu: f64| normalized(&scale_rows_by(x, |e| 1.0 / (1.0 + mu * e), levels));
    let floor = (0..x.rows())
        .filter(|&i| (0..x.cols()).any(|j| x.get(i, j).norm_sqr() > 0.0))
        .map(|i| levels[i])
        .fold(f64::INFINITY, f64::min);
    if floor < budget {
        let mut hi = 1.0;
        while row_energy(&damped(hi), levels) > budget {
            hi *= 4.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if row_energy(&damped(mid), levels) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        return damped(hi);
    }
    // all weight sits at or above the budget: blend with a ground-level row
    let mut ground = CMat::zeros(x.rows(), x.cols());
    let row0: f64 = (0..x.cols()).map(|j| y.get(0, j).norm_sqr()).sum();
    if row0 > 0.0 {
        for j in 0..x.cols() {
            ground.set(0, j, y.get(0, j) / row0.sqrt());
        }
    } else {
        ground.set(0, 0, c64(1.0, 0.0));
    }
    let e_top = row_energy(&y, levels);
    let q = ((e_top - budget) / (e_top - levels[0])).clamp(0.0, 1.0);
    let mut mixed = &y.scale((1.0 - q).sqrt()) + &ground.scale(q.sqrt());
    mixed = normalized(&mixed);
    if row_energy(&mixed, levels) > budget + tol {
        ground
    } else {
        mixed
    }
}

/// Riemannian gradient on the unit sphere, with the outward component along
/// the energy normal removed when the budget is active.
fn tangent(x: &CMat, g: &CMat, levels: &[f64], budget: f64) -> CMat {
    let r = x.inner(g).re;
    let mut d = g - &x.scale(r);
    let e = row_energy(x, levels);
    if e >= budget - 1e-10 * (1.0 + budget) {
        let gx = x.scale_rows(levels);
        let n = &gx - &x.scale(e);
        let nn = n.inner(&n).re;
        let dn = n.inner(&d).re;
        if nn > 1e-28 && dn > 0.0 {
            d = &d - &n.scale(dn / nn);
        }
    }
    d
}

pub(crate) fn ascend(
    obj: &dyn Objective,
    levels: &[f64],
    budget: f64,
    x0: &CMat,
    max_iter: usize,
    tol: f64,
) -> AscentOutcome {
    let mut x = retract(x0, levels, budget);
    let (mut f, g) = obj.eval(&x, true);
    let mut g = g.expect("gradient requested");
    let mut step: f64 = 0.1;
    let mut quiet = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let d = tangent(&x, &g, levels, budget);
        let dn = d.frobenius();
        if dn <= 1e-14 * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        let dir = d.scale(1.0 / dn);
        let mut gain = None;
        while step >= 1e-15 {
            let y = retract(&(&x + &dir.scale(step)), levels, budget);
            let fy = obj.value(&y);
            if fy > f {
                gain = Some(fy - f);
                x = y;
                f = fy;
                step = (step * 1.5).min(1.0);
                break;
            }
            step *= 0.5;
        }
        let Some(gain) = gain else {
            converged = true;
            break;
        };
        g = obj.eval(&x, true).1.expect("gradient requested");
        if gain <= tol * (1.0 + f.abs()) {
            quiet += 1;
            if quiet >= 3 {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    AscentOutcome { value: f, x, iterations, converged }
}

pub(crate) struct MultiStart {
    pub best: AscentOutcome,
    pub restarts: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs `restarts` independent ascents from constrained random starts and
/// keeps the best (ties go to the lower restart index).
#[allow(clippy::too_many_arguments)]
pub(crate) fn multi_start(
    obj: &dyn Objective,
    g: &EnergyObservable,
    budget: f64,
    d_r: usize,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<MultiStart> {
    let big = g.tensor_identity(d_r);
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..restarts.max(1)).map(|_| seeder.random()).collect();
    let starts: Vec<CMat> = seeds
        .iter()
        .map(|&s| {
            let v = ConstrainedSampler::new(&big, budget, s)?.pure_vector();
            CMat::unvec(&v, g.dim(), d_r)
        })
        .collect::<Result<_>>()?;
    let outcomes: Vec<AscentOutcome> =
        starts.par_iter().map(|x0| ascend(obj, g.levels(), budget, x0, max_iter, tol)).collect();
    let iterations = outcomes.iter().map(|o| o.iterations).sum();
    let converged = outcomes.iter().all(|o| o.converged);
    let n = outcomes.len();
    let best = outcomes.into_iter().reduce(|a, b| if b.value > a.value { b } else { a }).expect("at least one restart");
    Ok(MultiStart { best, restarts: n, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn retraction_lands_in_the_feasible_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let levels = [0.0, 1.0, 2.0, 5.0];
        for _ in 0..200 {
            let x = CMat::from_fn(4, 3, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let budget = rng.random_range(0.0..3.0);
            let y = retract(&x, &levels, budget);
            assert!((y.frobenius() - 1.0).abs() < 1e-12);
            assert!(row_energy(&y, &levels) <= budget + 1e-10);
        }
        // no ground weight at all
        let mut x = CMat::zeros(4, 2);
        x.set(3, 1, c64(1.0, 0.0));
        let y = retract(&x, &levels, 0.5);
        assert!((y.frobenius() - 1.0).abs() < 1e-12 && row_energy(&y, &levels) <= 0.5 + 1e-10);
        let y = retract(&x, &levels, 0.0);
        assert!(row_energy(&y, &levels) <= 1e-12);
    }

    #[test]
    fn feasible_points_are_fixed() {
        let levels = [0.0, 1.0];
        let x = CMat::from_fn(2, 2, |i, j| c64(if i == j { 0.5f64.sqrt() } else { 0.0 }, 0.0));
        let y = retract(&x, &levels, 1.0);
        assert!((&y - &x).max_abs() < 1e-15);
    }
}
