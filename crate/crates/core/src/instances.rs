//! Random problem instances for the verification suites and tests. Every
//! generator is a pure function of the RNG state.

use rand::Rng;

use crate::channel::{Dilation, KrausMap, MapKind};
use crate::energy::EnergyObservable;
use crate::matcore::{c64, eigh, polar_unitary, CMat};

/// Entries with real and imaginary parts uniform on `[-1, 1)`.
pub fn matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn unitary(n: usize, rng: &mut impl Rng) -> CMat {
    polar_unitary(&matrix(n, n, rng))
}

/// Positive semidefinite with trace uniform on `[0.1, 1)`.
pub fn psd(n: usize, rng: &mut impl Rng) -> CMat {
    let a = matrix(n, n, rng);
    let m = &a * &a.adjoint();
    m.scale(rng.random_range(0.1..1.0) / m.trace().re)
}

/// Unit-trace positive matrix, full rank almost surely.
pub fn density(n: usize, rng: &mut impl Rng) -> CMat {
    let a = matrix(n, n, rng);
    let m = &a * &a.adjoint();
    m.scale(1.0 / m.trace().re)
}

/// Grounded observable: a zero level and `n - 1` sorted levels on `[0, top)`.
pub fn levels(n: usize, top: f64, rng: &mut impl Rng) -> EnergyObservable {
    let mut l: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..top)).collect();
    l.sort_by(f64::total_cmp);
    l[0] = 0.0;
    EnergyObservable::new(l, true).expect("sorted nonnegative levels")
}

/// CP map with `k` Kraus operators of entry scale 1/2.
pub fn cp_map(d_in: usize, d_out: usize, k: usize, rng: &mut impl Rng) -> KrausMap {
    KrausMap::cp((0..k).map(|_| matrix(d_out, d_in, rng).scale(0.5)).collect()).expect("consistent shapes")
}

/// `W = sum_k K_k^* K_k`. Needs `k * d_out >= d_in` so that `W` is invertible.
/// `W = sum_k K_k^* K_k`.
pub fn channel(d_in: usize, d_out: usize, k: usize, rng: &mut impl Rng) -> KrausMap {
    let raw: Vec<CMat> = (0..k).map(|_| matrix(d_out, d_in, rng)).collect();
    let w = raw.iter().fold(CMat::zeros(d_in, d_in), |acc, v| &acc + &(&v.adjoint() * v));
    let inv = eigh(&w).reconstruct_with(|l| 1.0 / l.sqrt());
    KrausMap::new(raw.iter().map(|v| v * &inv).collect(), MapKind::Channel).expect("normalized family")
}

/// Dilation with arbitrary (non-isometric) operator of entry scale 1/2.
pub fn dilation(d_in: usize, d_out: usize, env_dim: usize, rng: &mut impl Rng) -> Dilation {
    Dilation::new(matrix(d_out * env_dim, d_in, rng).scale(0.5), d_out, env_dim).expect("consistent shape")
}

/// Isometric dilation; needs `d_out * env_dim >= d_in`.
pub fn isometry(d_in: usize, d_out: usize, env_dim: usize, rng: &mut impl Rng) -> Dilation {
    Dilation::new(polar_unitary(&matrix(d_out * env_dim, d_in, rng)), d_out, env_dim).expect("consistent shape")
}
