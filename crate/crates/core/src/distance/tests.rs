use super::*;
use crate::channel::MapKind;
use crate::enorm::annihilation;
use crate::matcore::{eigh, partial_trace, DimSplit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_psd(n: usize, rng: &mut impl Rng) -> CMat {
    let a = random(n, n, rng);
    let m = &a * &a.adjoint();
    m.scale(rng.random_range(0.1..1.0) / m.trace().re)
}

fn random_cp(d_in: usize, d_out: usize, k: usize, rng: &mut impl Rng) -> KrausMap {
    KrausMap::cp((0..k).map(|_| random(d_out, d_in, rng).scale(0.5)).collect()).unwrap()
}

fn random_channel(d_in: usize, d_out: usize, k: usize, rng: &mut impl Rng) -> KrausMap {
    let raw: Vec<CMat> = (0..k).map(|_| random(d_out, d_in, rng)).collect();
    let w = raw.iter().fold(CMat::zeros(d_in, d_in), |acc, v| &acc + &(&v.adjoint() * v));
    let inv = eigh(&w).reconstruct_with(|l| 1.0 / l.sqrt());
    KrausMap::new(raw.iter().map(|v| v * &inv).collect(), MapKind::Channel).unwrap()
}

fn quick(restarts: usize) -> DistanceConfig {
    DistanceConfig { restarts, ..Default::default() }
}

#[test]
fn fidelity_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let rho = random_psd(3, &mut rng);
    let rho1 = rho.scale(1.0 / rho.trace().re);
    assert!((fidelity(&rho1, &rho1).unwrap() - 1.0).abs() < 1e-10);
    let p0 = CMat::projector(&CMat::ket(2, 0).column_entries());
    let p1 = CMat::projector(&CMat::ket(2, 1).column_entries());
    assert!(fidelity(&p0, &p1).unwrap().abs() < 1e-14);
    let p: [f64; 3] = [0.5, 0.3, 0.2];
    let q: [f64; 3] = [0.1, 0.6, 0.3];
    let want: f64 = p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).sum::<f64>().powi(2);
    let f = fidelity(&CMat::from_real_diag(&p), &CMat::from_real_diag(&q)).unwrap();
    assert!((f - want).abs() < 1e-12);
    let sigma = random_psd(3, &mut rng);
    assert!((fidelity(&rho, &sigma).unwrap() - fidelity(&sigma, &rho).unwrap()).abs() < 1e-10);
    assert!(fidelity(&CMat::from_real_diag(&[1.0, -0.5]), &p0).is_err());
    let (_, ill) = fidelity_conditioned(&p0, &p1).unwrap();
    assert!(ill);
}

#[test]
fn bures_cases_and_sandwich() {
    let p0 = CMat::projector(&CMat::ket(2, 0).column_entries());
    let p1 = CMat::projector(&CMat::ket(2, 1).column_entries());
    assert!(bures(&p0, &p0).unwrap() < 1e-7);
    assert!((bures(&p0, &p1).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    for _ in 0..500 {
        let n = rng.random_range(1..5);
        let (r, s) = (random_psd(n, &mut rng), random_psd(n, &mut rng));
        let b = bures(&r, &s).unwrap();
        let t = trace_norm(&(&r - &s));
        let lo = t / (r.trace().re.sqrt() + s.trace().re.sqrt());
        assert!(lo <= b + 1e-9 && b <= t.sqrt() + 1e-9, "{lo} {b} {}", t.sqrt());
    }
}

#[test]
fn bures_monotone_under_partial_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let split = DimSplit::bipartite(2, 3).unwrap();
    for _ in 0..100 {
        let (r, s) = (random_psd(6, &mut rng), random_psd(6, &mut rng));
        let (ra, sa) = (partial_trace(&r, &split, &[0]).unwrap(), partial_trace(&s, &split, &[0]).unwrap());
        assert!(bures(&r, &s).unwrap() >= bures(&ra, &sa).unwrap() - 1e-9);
    }
}

#[test]
fn cp_norm_cases() {
    let g = EnergyObservable::number(4);
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let ch = random_channel(4, 3, 3, &mut rng);
    for e in [0.1, 1.0, 2.5, 10.0] {
        assert!((ecd_norm_cp(&KrausMap::identity(4), &g, e).unwrap().value - 1.0).abs() < 1e-10);
        assert!((ecd_norm_cp(&ch, &g, e).unwrap().value - 1.0).abs() < 1e-10);
    }
    let d = 8;
    let g = EnergyObservable::number(d);
    let phi = KrausMap::cp(vec![annihilation(d)]).unwrap();
    for e in [0.5, 3.0, 7.0, 12.0] {
        let v = ecd_norm_cp(&phi, &g, e).unwrap().value;
        assert!((v - e.min((d - 1) as f64)).abs() < 1e-8);
    }
    assert!(ecd_norm_cp(&phi, &EnergyObservable::number(3), 1.0).is_err());
}

#[test]
fn cp_norm_is_squared_dilation_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(84);
    for _ in 0..30 {
        let d = rng.random_range(2..6);
        let phi = random_cp(d, rng.random_range(1..4), rng.random_range(1..4), &mut rng);
        let g = EnergyObservable::number(d);
        let e = rng.random_range(0.1..4.0);
        let v = stinespring_from_kraus(&phi);
        let lhs = ecd_norm_cp(&phi, &g, e).unwrap().value;
        let rhs = e_norm(v.operator(), &g, e).unwrap().value.powi(2);
        assert!((lhs - rhs).abs() < 1e-8);
    }
}

#[test]
fn cp_norm_scaling_and_concavity() {
    let mut rng = ChaCha8Rng::seed_from_u64(85);
    for _ in 0..20 {
        let phi = random_cp(3, 2, 2, &mut rng);
        let g = EnergyObservable::new(vec![0.0, 0.8, 2.1], true).unwrap();
        let grid: Vec<f64> = (1..=12).map(|k| 0.25 * k as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&e| ecd_norm_cp(&phi, &g, e).unwrap().value).collect();
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                assert!(vals[i] <= vals[j] + 1e-8);
                assert!(vals[j] <= grid[j] / grid[i] * vals[i] + 1e-8);
            }
        }
        for i in 0..grid.len() - 2 {
            assert!(vals[i + 1] >= 0.5 * (vals[i] + vals[i + 2]) - 1e-8);
        }
    }
}

#[test]
fn equal_maps_are_at_distance_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(86);
    let phi = random_cp(3, 2, 2, &mut rng);
    let g = EnergyObservable::number(3);
    let r = ecd_distance(&phi, &phi, &g, 1.0, &quick(4)).unwrap();
    assert_eq!(r.estimate, 0.0);
    assert!(r.upper.abs() < 1e-12);
    let b = bures_e_distance(&phi, &phi, &g, 1.0, &quick(4)).unwrap();
    assert_eq!(b.estimate, 0.0);
}

fn sampled_max(phi: &KrausMap, psi: &KrausMap, g: &EnergyObservable, e: f64, n: usize, seed: u64) -> f64 {
    let d = phi.d_in();
    let big = g.tensor_identity(d);
    let obj = SignedOutputNorm::difference(phi.ops(), psi.ops());
    let mut s = ConstrainedSampler::new(&big, e, seed).unwrap();
    (0..n).map(|_| obj.value(&CMat::unvec(&s.pure_vector(), d, d).unwrap())).fold(0.0, f64::max)
}

#[test]
fn identity_versus_dephasing_against_sampling() {
    let g = EnergyObservable::number(2);
    let (id, deph) = (KrausMap::identity(2), KrausMap::dephasing(2));
    for e in [0.3, 1.0] {
        let r = ecd_distance(&id, &deph, &g, e, &quick(8)).unwrap();
        let best = sampled_max(&id, &deph, &g, e, 100_000, 7);
        assert!(r.estimate >= best - 1e-6, "{} < {best}", r.estimate);
        assert!(best >= r.estimate - 1e-2);
        assert!(r.lower <= r.upper + 1e-7);
        let direct = ecd_objective(&id, &deph, &r.witness).unwrap();
        assert!((direct - r.estimate).abs() < 1e-8);
        let w = r.witness_state().unwrap();
        assert!(w.is_constrained(&g.tensor_identity(2), e, 1e-9));
    }
}

#[test]
fn distance_is_monotone_in_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(87);
    let g = EnergyObservable::number(3);
    for _ in 0..3 {
        let (phi, psi) = (random_channel(3, 2, 2, &mut rng), random_channel(3, 2, 2, &mut rng));
        let cfg = DistanceConfig { dilation_upper: false, ..quick(8) };
        let lo = ecd_distance(&phi, &psi, &g, 0.5, &cfg).unwrap();
        let hi = ecd_distance(&phi, &psi, &g, 1.5, &cfg).unwrap();
        assert!(lo.estimate <= hi.estimate + 1e-6);
        assert!(hi.lower <= hi.upper + 1e-7);
    }
}

#[test]
fn bures_estimates_reevaluate_and_sit_in_the_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let g = EnergyObservable::number(2);
    let (phi, psi) = (KrausMap::amplitude_damping(0.4), random_channel(2, 2, 2, &mut rng));
    let b = bures_e_distance(&phi, &psi, &g, 0.6, &quick(8)).unwrap();
    let direct = bures_objective(&phi, &psi, &b.witness).unwrap();
    assert!((direct - b.estimate).abs() < 1e-7);
    assert!(b.lower <= b.upper + 1e-7);
    let d = ecd_distance(&phi, &psi, &g, 0.6, &quick(8)).unwrap();
    let roots = 2.0;
    assert!(d.estimate / roots <= b.estimate + 1e-4);
    assert!(b.estimate <= d.estimate.sqrt() + 1e-4);
}

#[test]
fn dilation_difference_cases() {
    let g = EnergyObservable::number(3);
    let mut rng = ChaCha8Rng::seed_from_u64(89);
    let v = stinespring_from_kraus(&random_channel(3, 2, 2, &mut rng));
    let cfg = quick(4);
    let r = dilation_difference_bound(&v, &v, &g, 1.0, &cfg).unwrap();
    assert_eq!((r.lhs_estimate, r.rhs), (0.0, 0.0));

    let theta = random(v.operator().rows(), 1, &mut rng);
    let tau0 = CMat::ket(3, 0).adjoint();
    let bump = &theta * &tau0;
    let rhs_at = |eps: f64| {
        let w = Dilation::new(v.operator() + &bump.scale(eps), 2, 2).unwrap();
        dilation_difference_bound(&v, &w, &g, 1.0, &cfg).unwrap()
    };
    let (r1, r2) = (rhs_at(1e-4), rhs_at(2e-4));
    assert!((r2.rhs / r1.rhs - 2.0).abs() < 1e-3);
    assert!(r1.lhs_estimate <= r1.rhs + 1e-6);

    for _ in 0..10 {
        let a = Dilation::new(random(4, 3, &mut rng).scale(0.5), 2, 2).unwrap();
        let b = Dilation::new(random(4, 3, &mut rng).scale(0.5), 2, 2).unwrap();
        let r = dilation_difference_bound(&a, &b, &g, 1.2, &cfg).unwrap();
        assert!(r.lhs_estimate <= r.rhs + 1e-6);
    }
}

#[test]
fn chain_for_identity_versus_dephasing() {
    let g = EnergyObservable::number(2);
    let c = ksw_chain(&KrausMap::identity(2), &KrausMap::dephasing(2), &g, 1.0, &quick(8)).unwrap();
    assert!(c.ordered(1e-4), "{:?} slack {}", c.terms(), c.slack);
    let z = ksw_chain(&KrausMap::identity(2), &KrausMap::identity(2), &g, 1.0, &quick(4)).unwrap();
    assert!(z.terms().iter().all(|t| t.abs() < 1e-6), "{:?}", z.terms());
}

#[test]
fn continuity_bound_holds_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let g = EnergyObservable::number(3);
    let phi = random_cp(3, 2, 2, &mut rng);
    for eps in [0.05, 0.5, 2.0] {
        let r = continuity_bound_check(&phi, &g, 1.0, eps, 100, 91).unwrap();
        assert!(r.passed(), "eps={eps}: {} > {}", r.max_lhs, r.rhs);
    }
}
