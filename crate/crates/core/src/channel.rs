//! Kraus, Stinespring and two-operator representations of maps between
//! truncated spaces, with the conversions between them.
//!
//! Dilation rows are indexed `i_B * d_E + i_E`: the environment is the fast
//! index. Every conversion in this module relies on that layout.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::matcore::{c64, eigvalsh, partial_trace, tensor, CMat, DimSplit, C64};

/// Tolerance for the channel / operation / isometry flags.
pub const FLAG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    /// Trace preserving: `sum V_k^* V_k = I`.
    Channel,
    /// Trace non-increasing: `sum V_k^* V_k <= I`.
    Operation,
    /// Completely positive, no trace condition.
    Cp,
}

/// `Phi(rho) = sum_k V_k rho V_k^*`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausMap {
    ops: Vec<CMat>,
    d_in: usize,
    d_out: usize,
    kind: MapKind,
}

impl KrausMap {
    pub fn new(ops: Vec<CMat>, kind: MapKind) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::Invalid("empty Kraus list".into()))?;
        let (d_out, d_in) = (first.rows(), first.cols());
        if let Some(bad) = ops.iter().find(|k| k.rows() != d_out || k.cols() != d_in) {
            return Err(dim_err(format!("Kraus operator {}x{} differs from {d_out}x{d_in}", bad.rows(), bad.cols())));
        }
        let map = KrausMap { ops, d_in, d_out, kind };
        map.check_kind()?;
        Ok(map)
    }

    /// A CP map with no trace condition asserted.
    pub fn cp(ops: Vec<CMat>) -> Result<Self> {
        KrausMap::new(ops, MapKind::Cp)
    }

    pub fn identity(d: usize) -> Self {
        KrausMap { ops: vec![CMat::identity(d)], d_in: d, d_out: d, kind: MapKind::Channel }
    }

    /// Completely dephasing channel in the standard basis.
    pub fn dephasing(d: usize) -> Self {
        let ops = (0..d).map(|k| CMat::outer(&CMat::ket(d, k), &CMat::ket(d, k))).collect();
        KrausMap { ops, d_in: d, d_out: d, kind: MapKind::Channel }
    }

    /// Replaces every input by `Tr(rho) |0><0|`.
    pub fn reset_to_ground(d: usize) -> Self {
        let ops = (0..d).map(|k| CMat::outer(&CMat::ket(d, 0), &CMat::ket(d, k))).collect();
        KrausMap { ops, d_in: d, d_out: d, kind: MapKind::Channel }
    }

    /// Qubit amplitude damping with decay probability `gamma`.
    pub fn amplitude_damping(gamma: f64) -> Self {
        let g = gamma.clamp(0.0, 1.0);
        let k0 = CMat::from_real_diag(&[1.0, (1.0 - g).sqrt()]);
        let mut k1 = CMat::zeros(2, 2);
        k1.set(0, 1, c64(g.sqrt(), 0.0));
        KrausMap { ops: vec![k0, k1], d_in: 2, d_out: 2, kind: MapKind::Channel }
    }

    fn check_kind(&self) -> Result<()> {
        let w = self.gram();
        match self.kind {
            MapKind::Cp => Ok(()),
            MapKind::Channel => {
                let dev = (&w - &CMat::identity(self.d_in)).max_abs();
                if dev > FLAG_TOL {
                    return Err(Error::Invalid(format!(
                        "channel flag set but sum V_k^*V_k deviates from I by {dev:.3e}"
                    )));
                }
                Ok(())
            }
            MapKind::Operation => {
                let top = *eigvalsh(&w).last().expect("nonempty");
                if top > 1.0 + FLAG_TOL {
                    return Err(Error::Invalid(format!("operation flag set but sum V_k^*V_k has eigenvalue {top}")));
                }
                Ok(())
            }
        }
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    /// `W = sum_k V_k^* V_k`; `Tr Phi(rho) = Tr(W rho)`.
    pub fn gram(&self) -> CMat {
        let mut w = CMat::zeros(self.d_in, self.d_in);
        for k in &self.ops {
            w += &(&k.adjoint() * k);
        }
        w.hermitian_part()
    }

    /// Pads the Kraus list with zero operators up to `n` entries.
    pub fn padded(&self, n: usize) -> KrausMap {
        let mut ops = self.ops.clone();
        while ops.len() < n {
            ops.push(CMat::zeros(self.d_out, self.d_in));
        }
        KrausMap { ops, ..self.clone() }
    }
}

/// `Phi(rho) = Tr_E V rho V^*` with `V : A -> B (x) E`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dilation {
    v: CMat,
    env_dim: usize,
    d_in: usize,
    d_out: usize,
}

impl Dilation {
    pub fn new(v: CMat, d_out: usize, env_dim: usize) -> Result<Self> {
        if d_out == 0 || env_dim == 0 || d_out.checked_mul(env_dim) != Some(v.rows()) {
            return Err(dim_err(format!("dilation with {} rows cannot split as {d_out} x {env_dim}", v.rows())));
        }
        let d_in = v.cols();
        Ok(Dilation { v, env_dim, d_in, d_out })
    }

    pub fn operator(&self) -> &CMat {
        &self.v
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn is_isometry(&self) -> bool {
        let g = &self.v.adjoint() * &self.v;
        (&g - &CMat::identity(self.d_in)).max_abs() <= FLAG_TOL
    }

    /// Same map with the environment enlarged by zero rows.
    pub fn padded(&self, env_dim: usize) -> Result<Dilation> {
        if env_dim < self.env_dim {
            return Err(dim_err(format!("cannot shrink environment {} to {env_dim}", self.env_dim)));
        }
        let v = CMat::from_fn(self.d_out * env_dim, self.d_in, |r, c| {
            let (b, e) = (r / env_dim, r % env_dim);
            if e < self.env_dim {
                self.v.get(b * self.env_dim + e, c)
            } else {
                C64::default()
            }
        });
        Dilation::new(v, self.d_out, env_dim)
    }

    /// Right-composes the representing operator: `V -> V * m`.
    pub fn compose_input(&self, m: &CMat) -> Result<Dilation> {
        if m.rows() != self.d_in {
            return Err(dim_err("input operator does not match dilation domain"));
        }
        Dilation::new(&self.v * m, self.d_out, self.env_dim)
    }
}

/// `Psi(rho) = Tr_E V_1 rho V_2^*`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoOperatorMap {
    v1: CMat,
    v2: CMat,
    env_dim: usize,
    d_out: usize,
}

impl TwoOperatorMap {
    pub fn new(v1: CMat, v2: CMat, d_out: usize, env_dim: usize) -> Result<Self> {
        if v1.rows() != v2.rows() || v1.cols() != v2.cols() {
            return Err(dim_err("two-operator map with mismatched operators"));
        }
        Dilation::new(v1.clone(), d_out, env_dim)?;
        Ok(TwoOperatorMap { v1, v2, env_dim, d_out })
    }

    pub fn v1(&self) -> &CMat {
        &self.v1
    }

    pub fn v2(&self) -> &CMat {
        &self.v2
    }

    pub fn d_in(&self) -> usize {
        self.v1.cols()
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }
}

/// Anything that can be viewed as a Kraus family.
pub trait AsKraus {
    fn to_kraus(&self) -> KrausMap;
}

impl AsKraus for KrausMap {
    fn to_kraus(&self) -> KrausMap {
        self.clone()
    }
}

impl AsKraus for Dilation {
    fn to_kraus(&self) -> KrausMap {
        kraus_from_stinespring(self, None).expect("standard basis is orthonormal")
    }
}

fn check_input(d_in: usize, rho: &CMat) -> Result<()> {
    if rho.rows() != d_in || rho.cols() != d_in {
        return Err(dim_err(format!("map expects {d_in}x{d_in} input, got {}x{}", rho.rows(), rho.cols())));
    }
    Ok(())
}

pub fn apply(phi: &KrausMap, rho: &CMat) -> Result<CMat> {
    check_input(phi.d_in, rho)?;
    let mut out = CMat::zeros(phi.d_out, phi.d_out);
    for k in &phi.ops {
        out += &(&(k * rho) * &k.adjoint());
    }
    Ok(out)
}

pub fn apply_dilation(d: &Dilation, rho: &CMat) -> Result<CMat> {
    check_input(d.d_in, rho)?;
    let big = &(&d.v * rho) * &d.v.adjoint();
    partial_trace(&big, &DimSplit::bipartite(d.d_out, d.env_dim)?, &[0])
}

/// `V |phi> = sum_k V_k |phi> (x) |tau_k>`.
pub fn stinespring_from_kraus(k: &KrausMap) -> Dilation {
    let env = k.ops.len();
    let v = CMat::from_fn(k.d_out * env, k.d_in, |r, c| k.ops[r % env].get(r / env, c));
    Dilation { v, env_dim: env, d_in: k.d_in, d_out: k.d_out }
}

/// Slices `V_k = (I_B (x) <e_k|) V` for an orthonormal environment basis
/// `{e_k}` (standard basis when `None`).
pub fn kraus_from_stinespring(d: &Dilation, env_basis: Option<&[Vec<C64>]>) -> Result<KrausMap> {
    let env = d.env_dim;
    let basis: Vec<Vec<C64>> = match env_basis {
        None => (0..env).map(|k| CMat::ket(env, k).column_entries()).collect(),
        Some(b) => {
            if b.len() != env || b.iter().any(|v| v.len() != env) {
                return Err(dim_err(format!("environment basis must have {env} vectors of length {env}")));
            }
            for (i, u) in b.iter().enumerate() {
                for (j, w) in b.iter().enumerate() {
                    let ip: C64 = u.iter().zip(w).map(|(a, b)| a.conj() * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (ip - c64(want, 0.0)).norm() > FLAG_TOL {
                        return Err(Error::Invalid("environment basis is not orthonormal".into()));
                    }
                }
            }
            b.to_vec()
        }
    };
    let ops = basis
        .iter()
        .map(|e| CMat::from_fn(d.d_out, d.d_in, |b, c| (0..env).map(|j| e[j].conj() * d.v.get(b * env + j, c)).sum()))
        .collect();
    Ok(KrausMap { ops, d_in: d.d_in, d_out: d.d_out, kind: MapKind::Cp })
}

/// Kraus family of `Phi (x) Id_R`.
pub fn extend<M: AsKraus>(phi: &M, d_r: usize) -> KrausMap {
    let k = phi.to_kraus();
    let id = CMat::identity(d_r);
    KrausMap {
        ops: k.ops.iter().map(|v| tensor(v, &id)).collect(),
        d_in: k.d_in * d_r,
        d_out: k.d_out * d_r,
        kind: k.kind,
    }
}

/// `Tr_E V_1 rho V_2^*`, linear in `rho`.
pub fn two_op_apply(t: &TwoOperatorMap, rho: &CMat) -> Result<CMat> {
    check_input(t.d_in(), rho)?;
    let big = &(&t.v1 * rho) * &t.v2.adjoint();
    partial_trace(&big, &DimSplit::bipartite(t.d_out, t.env_dim)?, &[0])
}

/// The four CP maps `V_1 + V_2`, `V_1 - V_2`, `V_1 + iV_2`, `V_1 - iV_2` with
/// `Psi = (Phi_1 - Phi_2 + i Phi_3 - i Phi_4) / 4`.
pub fn polarize(t: &TwoOperatorMap) -> [Dilation; 4] {
    let iv2 = t.v2.scale_c(c64(0.0, 1.0));
    let mk = |v: CMat| Dilation { v, env_dim: t.env_dim, d_in: t.d_in(), d_out: t.d_out };
    [mk(&t.v1 + &t.v2), mk(&t.v1 - &t.v2), mk(&t.v1 + &iv2), mk(&t.v1 - &iv2)]
}

/// Recombines the output of [`polarize`] on `rho`.
pub fn depolarize_apply(parts: &[Dilation; 4], rho: &CMat) -> Result<CMat> {
    let o: Vec<CMat> = parts.iter().map(|d| apply_dilation(d, rho)).collect::<Result<_>>()?;
    let i = c64(0.0, 1.0);
    let sum = &(&(&o[0] - &o[1]) + &o[2].scale_c(i)) - &o[3].scale_c(i);
    Ok(sum.scale(0.25))
}
