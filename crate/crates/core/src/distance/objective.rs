//! Objectives over pure inputs `psi = vec X` on `A (x) R`, written through the
//! Gram matrix of the Kraus images so that no `d_B d_R`-sized output operator
//! is ever formed.

use crate::matcore::{eigh, polar_unitary, singular_values, CMat, C64};

pub(crate) trait Objective: Sync {
    /// Value at `X` and, if requested, the gradient `G` with
    /// `d f = Re Tr(G^* dX)`.
    fn eval(&self, x: &CMat, grad: bool) -> (f64, Option<CMat>);

    fn value(&self, x: &CMat) -> f64 {
        self.eval(x, false).0
    }
}

fn images(ops: &[CMat], x: &CMat) -> Vec<CMat> {
    ops.iter().map(|k| k * x).collect()
}

/// `|| sum_i s_i (K_i (x) I) |psi><psi| (K_i (x) I)^* ||_1`.
pub(crate) struct SignedOutputNorm {
    ops: Vec<CMat>,
    signs: Vec<f64>,
}

impl SignedOutputNorm {
    pub fn difference(phi: &[CMat], psi: &[CMat]) -> Self {
        let ops = phi.iter().chain(psi).cloned().collect();
        let signs = phi.iter().map(|_| 1.0).chain(psi.iter().map(|_| -1.0)).collect();
        SignedOutputNorm { ops, signs }
    }
}

impl Objective for SignedOutputNorm {
    fn eval(&self, x: &CMat, grad: bool) -> (f64, Option<CMat>) {
        let m = self.ops.len();
        let ys = images(&self.ops, x);
        let gamma = CMat::from_fn(m, m, |i, j| ys[i].inner(&ys[j]));
        let eig = eigh(&gamma);
        let lmax = eig.max();
        if lmax <= 0.0 {
            return (0.0, grad.then(|| CMat::zeros(x.rows(), x.cols())));
        }
        // Gamma = R R^*, and the nonzero spectrum of the output is that of R^* S R
        let keep: Vec<usize> = (0..m).filter(|&k| eig.values[k] > 1e-13 * lmax).collect();
        let r = keep.len();
        let root = CMat::from_fn(m, r, |i, k| eig.vectors.get(i, keep[k]) * eig.values[keep[k]].sqrt());
        let signed = CMat::from_fn(m, r, |i, k| root.get(i, k) * self.signs[i]);
        let h = &root.adjoint() * &signed;
        let he = eigh(&h);
        let value: f64 = he.values.iter().map(|v| v.abs()).sum();
        if !grad {
            return (value, None);
        }
        let hmax = he.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sgn = he.reconstruct_with(|v| if v.abs() <= 1e-14 * hmax { 0.0 } else { v.signum() });
        let inv = CMat::from_fn(m, r, |i, k| eig.vectors.get(i, keep[k]) / eig.values[keep[k]].sqrt());
        let p = &(&inv * &sgn) * &root.adjoint();
        let mut g = CMat::zeros(x.rows(), x.cols());
        for i in 0..m {
            let mut z = CMat::zeros(ys[0].rows(), ys[0].cols());
            for (l, y) in ys.iter().enumerate() {
                let w = p.get(l, i);
                if w != C64::default() {
                    z += &y.scale_c(w);
                }
            }
            g += &(&self.ops[i].adjoint() * &z).scale(2.0 * self.signs[i]);
        }
        (value, Some(g))
    }
}

/// Squared Bures distance between `(Phi (x) Id)(|psi><psi|)` and
/// `(Psi (x) Id)(|psi><psi|)`; the root fidelity of `Y Y^*` and `Z Z^*` is
/// `||Y^* Z||_1`.
pub(crate) struct BuresSquared {
    phi: Vec<CMat>,
    psi: Vec<CMat>,
}

impl BuresSquared {
    pub fn new(phi: &[CMat], psi: &[CMat]) -> Self {
        BuresSquared { phi: phi.to_vec(), psi: psi.to_vec() }
    }
}

impl Objective for BuresSquared {
    fn eval(&self, x: &CMat, grad: bool) -> (f64, Option<CMat>) {
        let ys = images(&self.phi, x);
        let zs = images(&self.psi, x);
        let t = CMat::from_fn(ys.len(), zs.len(), |i, j| ys[i].inner(&zs[j]));
        let tr: f64 = ys.iter().chain(&zs).map(|y| y.inner(y).re).sum();
        let value = tr - 2.0 * singular_values(&t).iter().sum::<f64>();
        if !grad {
            return (value, None);
        }
        let u = polar_unitary(&t);
        let mut g = CMat::zeros(x.rows(), x.cols());
        for (v, y) in self.phi.iter().zip(&ys) {
            g += &(&v.adjoint() * y).scale(2.0);
        }
        for (w, z) in self.psi.iter().zip(&zs) {
            g += &(&w.adjoint() * z).scale(2.0);
        }
        for (i, v) in self.phi.iter().enumerate() {
            let mut acc = CMat::zeros(zs[0].rows(), zs[0].cols());
            for (j, z) in zs.iter().enumerate() {
                acc += &z.scale_c(u.get(i, j).conj());
            }
            g += &(&v.adjoint() * &acc).scale(-2.0);
        }
        for (j, w) in self.psi.iter().enumerate() {
            let mut acc = CMat::zeros(ys[0].rows(), ys[0].cols());
            for (i, y) in ys.iter().enumerate() {
                acc += &y.scale_c(u.get(i, j));
            }
            g += &(&w.adjoint() * &acc).scale(-2.0);
        }
        (value, Some(g))
    }
}
