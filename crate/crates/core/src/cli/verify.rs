//! Property suites run by `ecdkit verify`. Every check draws its instances
//! from an RNG seeded by `(seed, check name, trial index)`, so a failing
//! trial is reproduced by rerunning any suite that contains it.

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::channel::{apply, extend, kraus_from_stinespring, stinespring_from_kraus, KrausMap, MapKind};
use crate::distance::{
    bures, continuity_bound_check, dilation_difference_bound, ecd_distance, ecd_norm_cp, ecd_objective, ksw_chain,
    DistanceConfig,
};
use crate::energy::{
    energy_of, pinch_channel, pinch_deviation, spectral_projector, ConstrainedSampler, DensityOperator,
    EnergyObservable, SampleMode,
};
use crate::enorm::{e_norm, e_norm_graded, sampled_search, sandwich_product_bound};
use crate::error::Error;
use crate::instances as inst;
use crate::io::{dilation_to_repr, kraus_to_repr, MatrixRepr};
use crate::matcore::{herm_eig, partial_trace, tensor, trace_norm, CMat, DimSplit};
use crate::truncate::{bound30_check, is_trace_nonincreasing, tail_norm_check, truncate_map};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Matcore,
    Energy,
    Enorm,
    Channel,
    Distance,
    Truncate,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Matcore => "matcore",
            Suite::Energy => "energy",
            Suite::Enorm => "enorm",
            Suite::Channel => "channel",
            Suite::Distance => "distance",
            Suite::Truncate => "truncate",
            Suite::All => "all",
        }
    }
}

/// Deliberate defects used to confirm that the suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Flips the sign of the right side of the truncation distance bound.
    Bound30,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    /// First failing instance, as reproducible JSON.
    pub instance: Option<Value>,
}

type Trial = Result<(), Value>;

struct Ctx {
    fault: Option<Fault>,
}

struct Check {
    suite: Suite,
    name: &'static str,
    run: fn(&mut ChaCha8Rng, &Ctx) -> Trial,
}

const CHECKS: &[Check] = &[
    Check { suite: Suite::Matcore, name: "matcore.tensor_associative", run: tensor_associative },
    Check { suite: Suite::Matcore, name: "matcore.partial_trace_product", run: partial_trace_product },
    Check { suite: Suite::Matcore, name: "matcore.trace_norm_triangle_unitary", run: trace_norm_triangle_unitary },
    Check { suite: Suite::Matcore, name: "matcore.eigvec_orthonormal", run: eigvec_orthonormal },
    Check { suite: Suite::Energy, name: "energy.projector_commutes", run: projector_commutes },
    Check { suite: Suite::Energy, name: "energy.sampled_states_feasible", run: sampled_states_feasible },
    Check { suite: Suite::Energy, name: "energy.pinch_trace_preserving", run: pinch_trace_preserving },
    Check { suite: Suite::Energy, name: "energy.pinch_deviation_bound", run: pinch_deviation_bound },
    Check { suite: Suite::Energy, name: "energy.pinch_energy_cap", run: pinch_energy_cap },
    Check { suite: Suite::Enorm, name: "enorm.duality_gap", run: duality_gap },
    Check { suite: Suite::Enorm, name: "enorm.graded_sandwich", run: graded_sandwich },
    Check { suite: Suite::Enorm, name: "enorm.energy_scaling", run: energy_scaling },
    Check { suite: Suite::Enorm, name: "enorm.midpoint_concavity", run: midpoint_concavity },
    Check { suite: Suite::Enorm, name: "enorm.ensemble_lower_bound", run: ensemble_lower_bound },
    Check { suite: Suite::Enorm, name: "enorm.ancilla_lower_bound", run: ancilla_lower_bound },
    Check { suite: Suite::Enorm, name: "enorm.tensor_stable", run: tensor_stable },
    Check { suite: Suite::Enorm, name: "enorm.sampled_sup", run: sampled_sup },
    Check { suite: Suite::Channel, name: "channel.round_trip", run: round_trip },
    Check { suite: Suite::Channel, name: "channel.trace_flags", run: trace_flags },
    Check { suite: Suite::Channel, name: "channel.extend_commutes", run: extend_commutes },
    Check { suite: Suite::Channel, name: "channel.pure_trace_identity", run: pure_trace_identity },
    Check { suite: Suite::Channel, name: "channel.slice_norms", run: slice_norms },
    Check { suite: Suite::Distance, name: "distance.tp_norm_one", run: tp_norm_one },
    Check { suite: Suite::Distance, name: "distance.representing_identity", run: representing_identity },
    Check { suite: Suite::Distance, name: "distance.cp_scaling", run: cp_scaling },
    Check { suite: Suite::Distance, name: "distance.cp_concavity", run: cp_concavity },
    Check { suite: Suite::Distance, name: "distance.ksw_chain", run: ksw_ordering },
    Check { suite: Suite::Distance, name: "distance.witness_reevaluates", run: witness_reevaluates },
    Check { suite: Suite::Distance, name: "distance.bures_partial_trace", run: bures_partial_trace },
    Check { suite: Suite::Distance, name: "distance.bures_trace_sandwich", run: bures_trace_sandwich },
    Check { suite: Suite::Distance, name: "distance.continuity", run: continuity },
    Check { suite: Suite::Distance, name: "distance.product_bound", run: product_bound },
    Check { suite: Suite::Distance, name: "distance.dilation_difference", run: dilation_difference },
    Check { suite: Suite::Truncate, name: "truncate.tail_bound", run: tail_bound },
    Check { suite: Suite::Truncate, name: "truncate.bound30", run: bound30 },
    Check { suite: Suite::Truncate, name: "truncate.cauchy", run: cauchy },
    Check { suite: Suite::Truncate, name: "truncate.isometry_nonincreasing", run: isometry_nonincreasing },
];

/// Names of the checks in `suite`, in output order.
pub fn check_names(suite: Suite) -> Vec<&'static str> {
    CHECKS.iter().filter(|c| suite == Suite::All || c.suite == suite).map(|c| c.name).collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn trial_seed(seed: u64, name: &str, trial: usize) -> u64 {
    let tag = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    splitmix(splitmix(seed ^ tag) ^ trial as u64)
}

/// Runs every check of `suite` for `trials` sampled instances each. Results
/// are in check order and independent of the thread count.
pub fn run_suites(suite: Suite, seed: u64, trials: usize, fault: Option<Fault>) -> Vec<CheckOutcome> {
    let ctx = Ctx { fault };
    let checks: Vec<&Check> = CHECKS.iter().filter(|c| suite == Suite::All || c.suite == suite).collect();
    let jobs: Vec<(usize, usize)> = (0..checks.len()).flat_map(|c| (0..trials).map(move |t| (c, t))).collect();
    let results: Vec<Trial> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let check = checks[c];
            let s = trial_seed(seed, check.name, t);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (check.run)(&mut rng, &ctx)
                .map_err(|data| json!({ "check": check.name, "seed": seed, "trial": t, "trial_seed": s, "data": data }))
        })
        .collect();
    checks
        .iter()
        .zip(results.chunks(trials.max(1)))
        .map(|(check, rs)| CheckOutcome {
            name: check.name,
            trials,
            failures: rs.iter().filter(|r| r.is_err()).count(),
            instance: rs.iter().find_map(|r| r.clone().err()),
        })
        .collect()
}

fn ensure(ok: bool, data: impl FnOnce() -> Value) -> Trial {
    if ok {
        Ok(())
    } else {
        Err(data())
    }
}

fn lib(e: Error) -> Value {
    json!({ "error": e.to_string() })
}

fn mat(m: &CMat) -> Value {
    serde_json::to_value(MatrixRepr::from_cmat(m)).expect("matrix json")
}

fn map(k: &KrausMap) -> Value {
    serde_json::to_value(kraus_to_repr(k)).expect("kraus json")
}

fn obs(g: &EnergyObservable) -> Value {
    serde_json::to_value(g).expect("observable json")
}

fn dist_cfg(rng: &mut ChaCha8Rng) -> DistanceConfig {
    DistanceConfig { restarts: 8, seed: rng.random(), ..Default::default() }
}

/// Budget strictly above the ground level and below the top.
fn budget(g: &EnergyObservable, rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.05..0.95) * g.top().max(0.1)
}

fn tensor_associative(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let dims: Vec<usize> = (0..6).map(|_| rng.random_range(1..=3)).collect();
    let a = inst::matrix(dims[0], dims[1], rng);
    let b = inst::matrix(dims[2], dims[3], rng);
    let c = inst::matrix(dims[4], dims[5], rng);
    let diff = (&tensor(&tensor(&a, &b), &c) - &tensor(&a, &tensor(&b, &c))).max_abs();
    ensure(diff <= 1e-13, || json!({ "a": mat(&a), "b": mat(&b), "c": mat(&c), "max_diff": diff }))
}

fn partial_trace_product(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (n, m) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let a = inst::matrix(n, n, rng);
    let b = inst::matrix(m, m, rng);
    let split = DimSplit::bipartite(n, m).map_err(lib)?;
    let got = partial_trace(&tensor(&a, &b), &split, &[0]).map_err(lib)?;
    let diff = (&got - &a.scale_c(b.trace())).max_abs();
    ensure(diff <= 1e-12, || json!({ "a": mat(&a), "b": mat(&b), "max_diff": diff }))
}

fn trace_norm_triangle_unitary(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let n = rng.random_range(1..=5);
    let a = inst::matrix(n, n, rng);
    let b = inst::matrix(n, n, rng);
    let (u, w) = (inst::unitary(n, rng), inst::unitary(n, rng));
    let (ta, tb) = (trace_norm(&a), trace_norm(&b));
    let sum = trace_norm(&(&a + &b));
    let rotated = trace_norm(&(&(&u * &a) * &w));
    ensure(
        sum <= ta + tb + 1e-12 && (rotated - ta).abs() <= 1e-10 * (1.0 + ta),
        || json!({ "a": mat(&a), "b": mat(&b), "u": mat(&u), "w": mat(&w), "sum": sum, "rotated": rotated }),
    )
}

fn eigvec_orthonormal(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let n = rng.random_range(1..=8);
    let m = inst::matrix(n, n, rng).hermitian_part();
    let e = herm_eig(&m).map_err(lib)?;
    let dev = (&(&e.vectors.adjoint() * &e.vectors) - &CMat::identity(n)).frobenius();
    let sorted = e.values.windows(2).all(|w| w[0] <= w[1]);
    ensure(dev <= 1e-10 * n as f64 && sorted, || json!({ "m": mat(&m), "deviation": dev }))
}

fn projector_commutes(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let g = inst::levels(rng.random_range(1..=8), 5.0, rng);
    let cutoff = rng.random_range(0.0..6.0);
    let p = spectral_projector(&g, cutoff);
    let h = g.matrix();
    ensure(&p * &h == &h * &p, || json!({ "observable": obs(&g), "cutoff": cutoff }))
}

fn sampled_states_feasible(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let g = inst::levels(rng.random_range(2..=8), 5.0, rng);
    let e = budget(&g, rng);
    let mut sampler = ConstrainedSampler::new(&g, e, rng.random()).map_err(lib)?;
    for mode in [SampleMode::Pure, SampleMode::Mixed] {
        let rho = sampler.state(mode);
        let energy = energy_of(&rho, &g).map_err(lib)?;
        let tr = rho.trace();
        ensure(
            energy <= e + 1e-9 && (tr - 1.0).abs() <= 1e-12,
            || json!({ "observable": obs(&g), "energy": e, "mode": mode, "state_energy": energy, "trace": tr }),
        )?;
    }
    Ok(())
}

fn pinch_trace_preserving(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let g = inst::levels(rng.random_range(1..=8), 5.0, rng);
    let cutoff = rng.random_range(0.0..6.0);
    let pi = pinch_channel(&g, cutoff).map_err(lib)?;
    let dev = (&pi.gram() - &CMat::identity(g.dim())).max_abs();
    ensure(dev <= 1e-12, || json!({ "observable": obs(&g), "cutoff": cutoff, "deviation": dev }))
}

fn pinch_deviation_bound(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let g = inst::levels(rng.random_range(2..=5), 5.0, rng);
    let d_r = rng.random_range(1..=3);
    let e = budget(&g, rng);
    let cutoff = rng.random_range(e..2.0 * g.top().max(e) + 1.0);
    let mode = if rng.random() { SampleMode::Pure } else { SampleMode::Mixed };
    let omega = ConstrainedSampler::new(&g.tensor_identity(d_r), e, rng.random()).map_err(lib)?.state(mode);
    let (lhs, rhs) = pinch_deviation(&omega, &g, cutoff, e).map_err(lib)?;
    ensure(
        lhs <= rhs + 1e-9,
        || json!({ "observable": obs(&g), "energy": e, "cutoff": cutoff, "omega": mat(omega.matrix()), "lhs": lhs, "rhs": rhs }),
    )
}

fn pinch_energy_cap(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let g = inst::levels(rng.random_range(1..=8), 5.0, rng);
    let cutoff = rng.random_range(0.0..6.0);
    let rho = inst::density(g.dim(), rng);
    let out = apply(&pinch_channel(&g, cutoff).map_err(lib)?, &rho).map_err(lib)?;
    let energy: f64 = out.diag_re().iter().zip(g.levels()).map(|(p, e)| p * e).sum();
    ensure(
        energy <= cutoff + 1e-12,
        || json!({ "observable": obs(&g), "cutoff": cutoff, "rho": mat(&rho), "output_energy": energy }),
    )
}

/// Random operator, observable and budget for the E-norm checks.
fn enorm_instance(rng: &mut ChaCha8Rng) -> (CMat, EnergyObservable, f64) {
    let d = rng.random_range(2..=6);
    let a = inst::matrix(rng.random_range(1..=d), d, rng);
    let g = inst::levels(d, 6.0, rng);
    let e = budget(&g, rng);
    (a, g, e)
}

fn enorm_data(a: &CMat, g: &EnergyObservable, e: f64) -> Value {
    json!({ "a": mat(a), "observable": obs(g), "energy": e })
}

fn duality_gap(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (a, g, e) = enorm_instance(rng);
    let c = e_norm(&a, &g, e).map_err(lib)?;
    let tr = c.primal_state.trace();
    let energy = c.primal_energy(&g);
    ensure(
        c.gap <= 1e-8 && tr <= 1.0 + 1e-9 && energy <= e + 1e-9,
        || json!({ "instance": enorm_data(&a, &g, e), "gap": c.gap, "primal_trace": tr, "primal_energy": energy }),
    )
}

fn graded_sandwich(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (a, g, e) = enorm_instance(rng);
    let n = e_norm(&a, &g, e).map_err(lib)?.value;
    let graded = e_norm_graded(&a, &g, e).map_err(lib)?;
    ensure(
        0.5f64.sqrt() * n <= graded + 1e-8 && graded <= n + 1e-8,
        || json!({ "instance": enorm_data(&a, &g, e), "norm": n, "graded": graded }),
    )
}

fn energy_scaling(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (a, g, e1) = enorm_instance(rng);
    let e2 = e1 * rng.random_range(1.0..4.0);
    let n1 = e_norm(&a, &g, e1).map_err(lib)?.value;
    let n2 = e_norm(&a, &g, e2).map_err(lib)?.value;
    ensure(
        n1 <= n2 + 1e-8 && n2 <= (e2 / e1).sqrt() * n1 + 1e-8,
        || json!({ "instance": enorm_data(&a, &g, e1), "e2": e2, "n1": n1, "n2": n2 }),
    )
}

fn midpoint_concavity(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (a, g, e1) = enorm_instance(rng);
    let e2 = rng.random_range(0.01..1.5) * g.top();
    let sq = |e: f64| e_norm(&a, &g, e).map(|c| c.value * c.value);
    let mid = sq(0.5 * (e1 + e2)).map_err(lib)?;
    let avg = 0.5 * (sq(e1).map_err(lib)? + sq(e2).map_err(lib)?);
    ensure(mid >= avg - 1e-7, || json!({ "instance": enorm_data(&a, &g, e1), "e2": e2, "mid": mid, "avg": avg }))
}

fn ensemble_lower_bound(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (a, g, e) = enorm_instance(rng);
    let rho = ConstrainedSampler::new(&g, e, rng.random()).map_err(lib)?.mixed_matrix();
    // vectors sqrt(p_i) v_i from the spectral decomposition of a constrained state
    let eig = herm_eig(&rho).map_err(lib)?;
    let mut total = 0.0;
    for (k, &p) in eig.values.iter().enumerate() {
        let v = CMat::from_fn(g.dim(), 1, |i, _| eig.vectors.get(i, k)).scale(p.max(0.0).sqrt());
        total += (&a * &v).frobenius().powi(2);
    }
    let n = e_norm(&a, &g, e).map_err(lib)?.value;
    ensure(
        total.sqrt() <= n + 1e-8,
        || json!({ "instance": enorm_data(&a, &g, e), "rho": mat(&rho), "lhs": total.sqrt(), "norm": n }),
    )
}

fn ancilla_lower_bound(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (a, g, e) = enorm_instance(rng);
    let k = rng.random_range(1..=4);
    let phi = ConstrainedSampler::new(&g.tensor_identity(k), e, rng.random()).map_err(lib)?.pure_vector();
    let lhs = (&tensor(&a, &CMat::identity(k)) * &CMat::column(&phi)).frobenius();
    let n = e_norm(&a, &g, e).map_err(lib)?.value;
    ensure(lhs <= n + 1e-8, || json!({ "instance": enorm_data(&a, &g, e), "ancilla": k, "lhs": lhs, "norm": n }))
}

fn tensor_stable(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (a, g, e) = enorm_instance(rng);
    let k = rng.random_range(1..=3);
    let big = e_norm(&tensor(&a, &CMat::identity(k)), &g.tensor_identity(k), e).map_err(lib)?.value;
    let n = e_norm(&a, &g, e).map_err(lib)?.value;
    ensure(
        (big - n).abs() <= 1e-8,
        || json!({ "instance": enorm_data(&a, &g, e), "ancilla": k, "extended": big, "norm": n }),
    )
}

fn sampled_sup(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (a, g, e) = enorm_instance(rng);
    let n = e_norm(&a, &g, e).map_err(lib)?.value;
    let s = sampled_search(&a, &g, e, 10_000, rng.random()).map_err(lib)?;
    ensure(
        s.best <= n + 1e-8 && s.best >= n - 1e-3,
        || json!({ "instance": enorm_data(&a, &g, e), "best": s.best, "norm": n }),
    )
}

fn round_trip(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (d_in, d_out) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let phi = inst::cp_map(d_in, d_out, rng.random_range(1..=4), rng);
    let back = kraus_from_stinespring(&stinespring_from_kraus(&phi), None).map_err(lib)?;
    for i in 0..d_in {
        for j in 0..d_in {
            let unit = CMat::outer(&CMat::ket(d_in, i), &CMat::ket(d_in, j));
            let diff = (&apply(&phi, &unit).map_err(lib)? - &apply(&back, &unit).map_err(lib)?).max_abs();
            ensure(diff <= 1e-12, || json!({ "phi": map(&phi), "unit": [i, j], "max_diff": diff }))?;
        }
    }
    Ok(())
}

fn trace_flags(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (d_in, d_out): (usize, usize) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let k = d_in.div_ceil(d_out).max(rng.random_range(1..=4));
    let ch = inst::channel(d_in, d_out, k, rng);
    let s = rng.random_range(0.1..1.0f64);
    let op = KrausMap::new(ch.ops().iter().map(|k| k.scale(s.sqrt())).collect(), MapKind::Operation).map_err(lib)?;
    let rho = inst::density(d_in, rng);
    let t_ch = apply(&ch, &rho).map_err(lib)?.trace().re;
    let t_op = apply(&op, &rho).map_err(lib)?.trace().re;
    let ok = ch.kind() == MapKind::Channel && (t_ch - 1.0).abs() <= 1e-12 && t_op <= 1.0 + 1e-12;
    ensure(
        ok,
        || json!({ "channel": map(&ch), "scale": s, "rho": mat(&rho), "channel_trace": t_ch, "operation_trace": t_op }),
    )
}

fn extend_commutes(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (d_in, d_out, d_r) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3));
    let phi = inst::cp_map(d_in, d_out, rng.random_range(1..=3), rng);
    let omega = inst::density(d_in * d_r, rng);
    let out = apply(&extend(&phi, d_r), &omega).map_err(lib)?;
    let lhs = partial_trace(&out, &DimSplit::bipartite(d_out, d_r).map_err(lib)?, &[0]).map_err(lib)?;
    let marginal = partial_trace(&omega, &DimSplit::bipartite(d_in, d_r).map_err(lib)?, &[0]).map_err(lib)?;
    let rhs = apply(&phi, &marginal).map_err(lib)?;
    let diff = (&lhs - &rhs).max_abs();
    ensure(diff <= 1e-11, || json!({ "phi": map(&phi), "d_r": d_r, "omega": mat(&omega), "max_diff": diff }))
}

fn pure_trace_identity(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (d_in, d_out) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let phi = inst::cp_map(d_in, d_out, rng.random_range(1..=4), rng);
    let v = stinespring_from_kraus(&phi);
    let x = inst::matrix(d_in, 1, rng);
    let x = x.scale(1.0 / x.frobenius());
    let t = apply(&phi, &(&x * &x.adjoint())).map_err(lib)?.trace().re;
    let n = (v.operator() * &x).frobenius().powi(2);
    ensure(
        (t - n).abs() <= 1e-12 * (1.0 + n),
        || json!({ "phi": map(&phi), "phi_vector": mat(&x), "trace": t, "norm_sq": n }),
    )
}

fn slice_norms(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (d_in, d_out, env) = (rng.random_range(2..=4), rng.random_range(1..=3), rng.random_range(1..=3));
    let v = inst::dilation(d_in, d_out, env, rng);
    let g = inst::levels(d_in, 6.0, rng);
    let e = budget(&g, rng);
    let u = inst::unitary(env, rng);
    let basis: Vec<Vec<_>> = (0..env).map(|k| (0..env).map(|i| u.get(i, k)).collect()).collect();
    let slices = kraus_from_stinespring(&v, Some(&basis)).map_err(lib)?;
    let whole = e_norm(v.operator(), &g, e).map_err(lib)?.value;
    for (k, s) in slices.ops().iter().enumerate() {
        let n = e_norm(s, &g, e).map_err(lib)?.value;
        ensure(
            n <= whole + 1e-9,
            || json!({ "dilation": dilation_to_repr(&v), "observable": obs(&g), "energy": e, "env_basis": mat(&u), "slice": k, "slice_norm": n, "norm": whole }),
        )?;
    }
    Ok(())
}

/// Random CP map on a random observable with a budget.
fn cp_instance(rng: &mut ChaCha8Rng, d_max: usize) -> (KrausMap, EnergyObservable, f64) {
    let d = rng.random_range(2..=d_max);
    let phi = inst::cp_map(d, rng.random_range(1..=3), rng.random_range(1..=3), rng);
    let g = inst::levels(d, 6.0, rng);
    let e = budget(&g, rng);
    (phi, g, e)
}

fn cp_data(phi: &KrausMap, g: &EnergyObservable, e: f64) -> Value {
    json!({ "phi": map(phi), "observable": obs(g), "energy": e })
}

fn tp_norm_one(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let d: usize = rng.random_range(1..=5);
    let d_out = rng.random_range(1..=3);
    let k = d.div_ceil(d_out).max(rng.random_range(1..=3));
    let ch = inst::channel(d, d_out, k, rng);
    let g = inst::levels(d, 6.0, rng);
    let e = rng.random_range(0.01..8.0);
    let v = ecd_norm_cp(&ch, &g, e).map_err(lib)?.value;
    ensure((v - 1.0).abs() <= 1e-10, || json!({ "instance": cp_data(&ch, &g, e), "norm": v }))
}

fn representing_identity(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (phi, g, e) = cp_instance(rng, 6);
    let n = ecd_norm_cp(&phi, &g, e).map_err(lib)?.value;
    let v = e_norm(stinespring_from_kraus(&phi).operator(), &g, e).map_err(lib)?.value;
    ensure((n - v * v).abs() <= 1e-8, || json!({ "instance": cp_data(&phi, &g, e), "cp_norm": n, "v_norm_sq": v * v }))
}

fn cp_scaling(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (phi, g, e1) = cp_instance(rng, 6);
    let e2 = e1 * rng.random_range(1.0..4.0);
    let n1 = ecd_norm_cp(&phi, &g, e1).map_err(lib)?.value;
    let n2 = ecd_norm_cp(&phi, &g, e2).map_err(lib)?.value;
    ensure(
        n1 <= n2 + 1e-8 && n2 <= e2 / e1 * n1 + 1e-8,
        || json!({ "instance": cp_data(&phi, &g, e1), "e2": e2, "n1": n1, "n2": n2 }),
    )
}

fn cp_concavity(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (phi, g, e1) = cp_instance(rng, 6);
    let e2 = rng.random_range(0.01..1.5) * g.top();
    let n = |e: f64| ecd_norm_cp(&phi, &g, e).map(|c| c.value);
    let mid = n(0.5 * (e1 + e2)).map_err(lib)?;
    let avg = 0.5 * (n(e1).map_err(lib)? + n(e2).map_err(lib)?);
    ensure(mid >= avg - 1e-8, || json!({ "instance": cp_data(&phi, &g, e1), "e2": e2, "mid": mid, "avg": avg }))
}

fn cp_pair(rng: &mut ChaCha8Rng) -> (KrausMap, KrausMap, EnergyObservable, f64) {
    let d = 2;
    let d_out = rng.random_range(1..=2);
    let phi = inst::cp_map(d, d_out, rng.random_range(1..=2), rng);
    let psi = inst::cp_map(d, d_out, rng.random_range(1..=2), rng);
    let g = inst::levels(d, 3.0, rng);
    let e = budget(&g, rng);
    (phi, psi, g, e)
}

fn pair_data(phi: &KrausMap, psi: &KrausMap, g: &EnergyObservable, e: f64) -> Value {
    json!({ "phi": map(phi), "psi": map(psi), "observable": obs(g), "energy": e })
}

fn ksw_ordering(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (phi, psi, g, e) = cp_pair(rng);
    let cfg = dist_cfg(rng);
    let chain = ksw_chain(&phi, &psi, &g, e, &cfg).map_err(lib)?;
    ensure(
        chain.ordered(1e-4),
        || json!({ "instance": pair_data(&phi, &psi, &g, e), "config": cfg, "terms": chain.terms(), "slack": chain.slack }),
    )
}

fn witness_reevaluates(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (phi, psi, g, e) = cp_pair(rng);
    let cfg = DistanceConfig { dilation_upper: false, ..dist_cfg(rng) };
    let r = ecd_distance(&phi, &psi, &g, e, &cfg).map_err(lib)?;
    let again = ecd_objective(&phi, &psi, &r.witness).map_err(lib)?;
    let marginal = r.witness_marginal().map_err(lib)?;
    let energy: f64 = marginal.diag_re().iter().zip(g.levels()).map(|(p, l)| p * l).sum();
    ensure(
        (again - r.estimate).abs() <= 1e-8 && energy <= e + 1e-9,
        || json!({ "instance": pair_data(&phi, &psi, &g, e), "config": cfg, "estimate": r.estimate, "reevaluated": again, "witness_energy": energy }),
    )
}

fn bures_partial_trace(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (a, b) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let rho = inst::psd(a * b, rng);
    let sigma = inst::psd(a * b, rng);
    let split = DimSplit::bipartite(a, b).map_err(lib)?;
    let full = bures(&rho, &sigma).map_err(lib)?;
    let reduced =
        bures(&partial_trace(&rho, &split, &[0]).map_err(lib)?, &partial_trace(&sigma, &split, &[0]).map_err(lib)?)
            .map_err(lib)?;
    ensure(
        full >= reduced - 1e-9,
        || json!({ "rho": mat(&rho), "sigma": mat(&sigma), "dims": [a, b], "full": full, "reduced": reduced }),
    )
}

fn bures_trace_sandwich(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let n = rng.random_range(1..=5);
    let rho = inst::psd(n, rng);
    let sigma = inst::psd(n, rng);
    let b = bures(&rho, &sigma).map_err(lib)?;
    let t = trace_norm(&(&rho - &sigma));
    let lower = t / (rho.trace().re.sqrt() + sigma.trace().re.sqrt());
    ensure(
        lower <= b + 1e-9 && b <= t.sqrt() + 1e-9,
        || json!({ "rho": mat(&rho), "sigma": mat(&sigma), "bures": b, "trace_distance": t }),
    )
}

fn continuity(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (phi, g, e) = cp_instance(rng, 4);
    let eps = rng.random_range(0.01..1.0);
    let seed = rng.random();
    let r = continuity_bound_check(&phi, &g, e, eps, 10, seed).map_err(lib)?;
    ensure(r.passed(), || json!({ "instance": cp_data(&phi, &g, e), "eps": eps, "seed": seed, "report": r }))
}

fn product_bound(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let d = rng.random_range(2..=5);
    let rows = rng.random_range(1..=4);
    let a = inst::matrix(rows, d, rng);
    let b = inst::matrix(rows, d, rng);
    let g = inst::levels(d, 6.0, rng);
    let rho = DensityOperator::new(inst::density(d, rng)).map_err(lib)?;
    let (lhs, rhs) = sandwich_product_bound(&a, &b, &rho, &g).map_err(lib)?;
    ensure(
        lhs <= rhs + 1e-8,
        || json!({ "a": mat(&a), "b": mat(&b), "rho": mat(rho.matrix()), "observable": obs(&g), "lhs": lhs, "rhs": rhs }),
    )
}

fn dilation_difference(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let (d_out, env) = (rng.random_range(1..=2), rng.random_range(1..=2));
    let vphi = inst::dilation(2, d_out, env, rng);
    let vpsi = inst::dilation(2, d_out, env, rng);
    let g = inst::levels(2, 3.0, rng);
    let e = budget(&g, rng);
    let cfg = dist_cfg(rng);
    let b = dilation_difference_bound(&vphi, &vpsi, &g, e, &cfg).map_err(lib)?;
    ensure(
        b.lhs_estimate <= b.rhs + 1e-8,
        || json!({ "vphi": dilation_to_repr(&vphi), "vpsi": dilation_to_repr(&vpsi), "observable": obs(&g), "energy": e, "config": cfg, "bound": b }),
    )
}

fn tail_bound(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let d = rng.random_range(2..=6);
    let v = inst::dilation(d, rng.random_range(1..=3), rng.random_range(1..=3), rng);
    let g = inst::levels(d, 6.0, rng);
    let e = budget(&g, rng);
    let cutoff = rng.random_range(e..g.top() + 1.0);
    let (lhs, rhs) = tail_norm_check(&v, &g, e, cutoff).map_err(lib)?;
    ensure(
        lhs <= rhs + 1e-9,
        || json!({ "dilation": dilation_to_repr(&v), "observable": obs(&g), "energy": e, "cutoff": cutoff, "lhs": lhs, "rhs": rhs }),
    )
}

fn bound30(rng: &mut ChaCha8Rng, ctx: &Ctx) -> Trial {
    let d = rng.random_range(2..=3);
    let v = inst::dilation(d, rng.random_range(1..=2), rng.random_range(1..=2), rng);
    let g = inst::levels(d, 6.0, rng);
    let e = budget(&g, rng);
    let cutoff = rng.random_range(e..g.top() + 1.0);
    let cfg = dist_cfg(rng);
    let mut row = bound30_check(&v, &g, e, cutoff, &cfg).map_err(lib)?;
    if ctx.fault == Some(Fault::Bound30) {
        row.rhs_bound = -row.rhs_bound;
    }
    ensure(
        row.bound_holds() && row.tail_holds(),
        || json!({ "dilation": dilation_to_repr(&v), "observable": obs(&g), "energy": e, "cutoff": cutoff, "config": cfg, "row": row }),
    )
}

fn cauchy(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let d = rng.random_range(2..=3);
    let v = inst::dilation(d, rng.random_range(1..=2), rng.random_range(1..=2), rng);
    let g = inst::levels(d, 6.0, rng);
    let e = budget(&g, rng);
    let m = rng.random_range(e..g.top().max(e) + 0.5);
    let n = m + rng.random_range(0.0..3.0);
    let cfg = DistanceConfig { dilation_upper: false, ..dist_cfg(rng) };
    let k = |c: f64| truncate_map(&v, &g, c).and_then(|t| kraus_from_stinespring(&t, None));
    let full = kraus_from_stinespring(&v, None).map_err(lib)?;
    let (phi_m, phi_n, phi_top) = (k(m).map_err(lib)?, k(n).map_err(lib)?, k(g.top()).map_err(lib)?);
    let d_est = |a: &KrausMap, b: &KrausMap| ecd_distance(a, b, &g, e, &cfg).map(|r| r.estimate);
    let mn = d_est(&phi_m, &phi_n).map_err(lib)?;
    let m_full = d_est(&phi_m, &full).map_err(lib)?;
    let n_full = d_est(&phi_n, &full).map_err(lib)?;
    let tail = d_est(&phi_top, &full).map_err(lib)?;
    ensure(
        mn <= m_full + n_full + 1e-6 && tail <= 1e-10,
        || json!({ "dilation": dilation_to_repr(&v), "observable": obs(&g), "energy": e, "cutoffs": [m, n], "config": cfg, "d_mn": mn, "d_m": m_full, "d_n": n_full, "d_top": tail }),
    )
}

fn isometry_nonincreasing(rng: &mut ChaCha8Rng, _: &Ctx) -> Trial {
    let d: usize = rng.random_range(1..=5);
    let d_out = rng.random_range(1..=3);
    let env = d.div_ceil(d_out).max(rng.random_range(1..=3));
    let v = inst::isometry(d, d_out, env, rng);
    let g = inst::levels(d, 6.0, rng);
    let cutoff = rng.random_range(0.0..7.0);
    let phi_n = kraus_from_stinespring(&truncate_map(&v, &g, cutoff).map_err(lib)?, None).map_err(lib)?;
    ensure(
        is_trace_nonincreasing(&phi_n),
        || json!({ "dilation": dilation_to_repr(&v), "observable": obs(&g), "cutoff": cutoff }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_prefixed() {
        let all = check_names(Suite::All);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), all.len());
        for s in [Suite::Matcore, Suite::Energy, Suite::Enorm, Suite::Channel, Suite::Distance, Suite::Truncate] {
            let names = check_names(s);
            assert!(!names.is_empty());
            assert!(names.iter().all(|n| n.starts_with(&format!("{}.", s.name()))));
        }
    }

    #[test]
    fn trial_seeds_depend_on_every_coordinate() {
        let base = trial_seed(1, "a.b", 0);
        assert_ne!(base, trial_seed(2, "a.b", 0));
        assert_ne!(base, trial_seed(1, "a.c", 0));
        assert_ne!(base, trial_seed(1, "a.b", 1));
        assert_eq!(base, trial_seed(1, "a.b", 0));
    }

    #[test]
    fn fault_is_detected() {
        let out = run_suites(Suite::Truncate, 3, 2, Some(Fault::Bound30));
        let b = out.iter().find(|o| o.name == "truncate.bound30").unwrap();
        assert_eq!(b.failures, 2);
        let inst = b.instance.as_ref().unwrap();
        assert_eq!(inst["check"], "truncate.bound30");
        assert!(inst["data"]["row"]["rhs_bound"].as_f64().unwrap() < 0.0);
    }
}
