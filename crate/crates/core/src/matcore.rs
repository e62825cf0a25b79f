//! Dense complex matrix kernel.
//!
//! [`CMat`] wraps a column-major `nalgebra` matrix of `Complex<f64>`; the
//! row-major layout used on the wire is produced only at serialization time.
//! Tensor products use the index convention `(i_a, i_b) -> i_a * dim(b) + i_b`,
//! so the first factor is the slow index everywhere in the crate.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{dim_err, Error, Result};

pub type C64 = Complex64;

/// Relative tolerance for the Hermiticity check.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative tolerance below which negative eigenvalues are clamped to zero.
pub const PSD_TOL: f64 = 1e-12;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of times a slightly negative eigenvalue has been clamped to zero
/// anywhere in the process.
pub fn clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

pub(crate) fn record_clamp() {
    CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
}

pub const fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CMat(DMatrix<C64>);

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        CMat(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        CMat(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(dim_err(format!("empty matrix shape {rows}x{cols}")));
        }
        if rows.checked_mul(cols) != Some(entries.len()) {
            return Err(dim_err(format!("{} entries for a {rows}x{cols} matrix", entries.len())));
        }
        Ok(CMat(DMatrix::from_row_slice(rows, cols, entries)))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        CMat::from_fn(n, n, |i, j| if i == j { c64(diag[i], 0.0) } else { C64::default() })
    }

    /// Column vector with the given entries.
    pub fn column(entries: &[C64]) -> Self {
        CMat(DMatrix::from_column_slice(entries.len(), 1, entries))
    }

    /// Standard basis ket `|k>` in dimension `n`.
    pub fn ket(n: usize, k: usize) -> Self {
        CMat::from_fn(n, 1, |i, _| if i == k { c64(1.0, 0.0) } else { C64::default() })
    }

    /// `|phi><psi|` for column vectors `phi`, `psi`.
    pub fn outer(phi: &CMat, psi: &CMat) -> Self {
        CMat(&phi.0 * psi.0.adjoint())
    }

    /// Rank-one projector onto the (unnormalized) vector `v`.
    pub fn projector(v: &[C64]) -> Self {
        let col = CMat::column(v);
        CMat::outer(&col, &col)
    }

    pub fn from_dmatrix(m: DMatrix<C64>) -> Self {
        CMat(m)
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.0[(i, j)] = v;
    }

    pub fn row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    /// Entries of a column vector (or the first column).
    pub fn column_entries(&self) -> Vec<C64> {
        self.0.column(0).iter().copied().collect()
    }

    pub fn adjoint(&self) -> CMat {
        CMat(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Frobenius inner product `Tr(self^* other)`.
    pub fn inner(&self, other: &CMat) -> C64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scale(&self, s: f64) -> CMat {
        CMat(self.0.map(|z| z * s))
    }

    pub fn scale_c(&self, s: C64) -> CMat {
        CMat(self.0.map(|z| z * s))
    }

    pub fn diag_re(&self) -> Vec<f64> {
        (0..self.rows().min(self.cols())).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL * (1.0 + self.max_abs())
    }

    /// `(M + M^*) / 2`.
    pub fn hermitian_part(&self) -> CMat {
        CMat((&self.0 + self.0.adjoint()) * c64(0.5, 0.0))
    }

    /// Multiplies every row `i` by `w[i]`.
    pub fn scale_rows(&self, w: &[f64]) -> CMat {
        let mut m = self.0.clone();
        for (i, mut row) in m.row_iter_mut().enumerate() {
            row *= c64(w[i], 0.0);
        }
        CMat(m)
    }

    /// Multiplies every column `j` by `w[j]`.
    pub fn scale_cols(&self, w: &[f64]) -> CMat {
        let mut m = self.0.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= c64(w[j], 0.0);
        }
        CMat(m)
    }

    /// Reinterprets a column vector of length `r * c` as an `r x c` matrix
    /// (row-major, so `vec[i * c + j] -> M[i, j]`).
    pub fn unvec(v: &[C64], rows: usize, cols: usize) -> Result<CMat> {
        CMat::from_row_major(rows, cols, v)
    }

    /// Row-major flattening; inverse of [`CMat::unvec`].
    pub fn vec(&self) -> Vec<C64> {
        self.row_major()
    }
}

impl Mul<&CMat> for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        CMat(&self.0 * &rhs.0)
    }
}

impl Add<&CMat> for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        CMat(&self.0 + &rhs.0)
    }
}

impl Sub<&CMat> for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        CMat(&self.0 - &rhs.0)
    }
}

impl AddAssign<&CMat> for CMat {
    fn add_assign(&mut self, rhs: &CMat) {
        self.0 += &rhs.0;
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        CMat(-&self.0)
    }
}

/// Ordered tensor factor dimensions of a square matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimSplit(Vec<usize>);

impl DimSplit {
    pub fn new(factors: Vec<usize>) -> Result<Self> {
        if factors.is_empty() || factors.contains(&0) {
            return Err(dim_err(format!("invalid factor dimensions {factors:?}")));
        }
        Ok(DimSplit(factors))
    }

    pub fn bipartite(a: usize, b: usize) -> Result<Self> {
        DimSplit::new(vec![a, b])
    }

    pub fn factors(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }
}

/// Kronecker product.
pub fn tensor(a: &CMat, b: &CMat) -> CMat {
    CMat(a.0.kronecker(&b.0))
}

/// Traces out every factor not listed in `keep`.
pub fn partial_trace(m: &CMat, split: &DimSplit, keep: &[usize]) -> Result<CMat> {
    if !m.is_square() {
        return Err(dim_err(format!("partial trace of a {}x{} matrix", m.rows(), m.cols())));
    }
    let dims = split.factors();
    if split.total() != m.rows() {
        return Err(dim_err(format!("split {dims:?} does not factor dimension {}", m.rows())));
    }
    let k = dims.len();
    let mut kept = vec![false; k];
    for &i in keep {
        if i >= k {
            return Err(dim_err(format!("factor index {i} out of range for {k} factors")));
        }
        kept[i] = true;
    }
    // strides of the full index, first factor slowest
    let mut strides = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let kept_dims: Vec<usize> = (0..k).filter(|&i| kept[i]).map(|i| dims[i]).collect();
    let traced_dims: Vec<usize> = (0..k).filter(|&i| !kept[i]).map(|i| dims[i]).collect();
    let kept_idx: Vec<usize> = (0..k).filter(|&i| kept[i]).collect();
    let traced_idx: Vec<usize> = (0..k).filter(|&i| !kept[i]).collect();
    let out_dim: usize = kept_dims.iter().product();
    let traced_total: usize = traced_dims.iter().product();

    let offset = |flat: usize, factors: &[usize], fdims: &[usize]| -> usize {
        let mut rem = flat;
        let mut off = 0;
        for (pos, &f) in factors.iter().enumerate().rev() {
            let d = fdims[pos];
            off += (rem % d) * strides[f];
            rem /= d;
        }
        off
    };
    let kept_off: Vec<usize> = (0..out_dim).map(|r| offset(r, &kept_idx, &kept_dims)).collect();
    let traced_off: Vec<usize> = (0..traced_total).map(|t| offset(t, &traced_idx, &traced_dims)).collect();

    let mut out = CMat::zeros(out_dim, out_dim);
    for r in 0..out_dim {
        for c in 0..out_dim {
            let mut acc = C64::default();
            for &t in &traced_off {
                acc += m.0[(kept_off[r] + t, kept_off[c] + t)];
            }
            out.0[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Singular values, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut sv: Vec<f64> = m.0.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Sum of singular values.
pub fn trace_norm(m: &CMat) -> f64 {
    singular_values(m).iter().sum()
}

/// Largest singular value.
pub fn operator_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermEig {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `values`.
    pub vectors: CMat,
}

impl HermEig {
    pub fn max(&self) -> f64 {
        *self.values.last().expect("nonempty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.0.column(k).iter().copied().collect()
    }

    /// `U f(Λ) U^*`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMat {
        let u = &self.vectors.0;
        let w: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let scaled = CMat(u.clone()).scale_cols(&w);
        CMat(&scaled.0 * u.adjoint())
    }
}

pub fn herm_eig(m: &CMat) -> Result<HermEig> {
    check_hermitian(m)?;
    Ok(eigh(m))
}

pub fn herm_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    check_hermitian(m)?;
    Ok(eigvalsh(m))
}

fn check_hermitian(m: &CMat) -> Result<()> {
    if !m.is_square() {
        return Err(dim_err(format!("eigendecomposition of a {}x{} matrix", m.rows(), m.cols())));
    }
    if !m.is_hermitian() {
        return Err(Error::NotHermitian { deviation: m.hermitian_deviation() });
    }
    Ok(())
}

/// Hermitian eigendecomposition without the contract check; the input is
/// symmetrized first.
pub(crate) fn eigh(m: &CMat) -> HermEig {
    let h = m.hermitian_part();
    let eig = h.0.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let n = m.rows();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    HermEig { values, vectors }
}

pub(crate) fn eigvalsh(m: &CMat) -> Vec<f64> {
    let h = m.hermitian_part();
    let mut v: Vec<f64> = h.0.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Positive semidefinite square root. Eigenvalues in `[-tol * |m|, 0)` are
/// clamped to zero and counted in [`clamp_events`].
pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    let eig = herm_eig(m)?;
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.min();
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    if min < 0.0 {
        record_clamp();
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Unitary factor `U` of the polar decomposition `M = U |M|`; for a tall
/// matrix `U` is the isometric factor.
pub fn polar_unitary(m: &CMat) -> CMat {
    let svd = m.0.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors");
    let v_t = svd.v_t.expect("right singular vectors");
    CMat(u * v_t)
}

/// Projects onto the operator-norm unit ball by clipping singular values at 1.
pub fn clip_to_contraction(m: &CMat) -> CMat {
    let svd = m.0.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors");
    let v_t = svd.v_t.expect("right singular vectors");
    let s = svd.singular_values.map(|x| c64(x.min(1.0), 0.0));
    CMat(u * DMatrix::from_diagonal(&s) * v_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
        CMat::from_fn(rows, cols, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_herm(n: usize, rng: &mut impl Rng) -> CMat {
        random(n, n, rng).hermitian_part()
    }

    #[test]
    fn tensor_identity_and_diag() {
        assert_eq!(tensor(&CMat::identity(2), &CMat::identity(3)), CMat::identity(6));
        let t = tensor(&CMat::from_real_diag(&[1.0, 2.0]), &CMat::from_real_diag(&[1.0, 0.0]));
        assert_eq!(t, CMat::from_real_diag(&[1.0, 0.0, 2.0, 0.0]));
    }

    #[test]
    fn tensor_matches_index_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(2, 2, &mut rng);
        let b = random(2, 2, &mut rng);
        let t = tensor(&a, &b);
        for ia in 0..2 {
            for ja in 0..2 {
                for ib in 0..2 {
                    for jb in 0..2 {
                        let want = a.get(ia, ja) * b.get(ib, jb);
                        assert_eq!(t.get(ia * 2 + ib, ja * 2 + jb), want);
                    }
                }
            }
        }
    }

    #[test]
    fn tensor_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(2, 3, &mut rng);
        let b = random(3, 2, &mut rng);
        let c = random(2, 2, &mut rng);
        let l = tensor(&tensor(&a, &b), &c);
        let r = tensor(&a, &tensor(&b, &c));
        assert!((&l - &r).max_abs() < 1e-14);
    }

    #[test]
    fn partial_trace_basics() {
        let split = DimSplit::bipartite(2, 2).unwrap();
        let pt = partial_trace(&CMat::identity(4), &split, &[0]).unwrap();
        assert_eq!(pt, CMat::identity(2).scale(2.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_herm(3, &mut rng);
        let b = random_herm(2, &mut rng);
        let prod = tensor(&a, &b);
        let split = DimSplit::bipartite(3, 2).unwrap();
        let keep_a = partial_trace(&prod, &split, &[0]).unwrap();
        assert!((&keep_a - &a.scale_c(b.trace())).max_abs() < 1e-13);
        let keep_b = partial_trace(&prod, &split, &[1]).unwrap();
        assert!((&keep_b - &b.scale_c(a.trace())).max_abs() < 1e-13);
        assert!((keep_a.trace() - prod.trace()).norm() < 1e-13);
    }

    #[test]
    fn partial_trace_of_bell_state_by_summation() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = [c64(s, 0.0), C64::default(), C64::default(), c64(s, 0.0)];
        let rho = CMat::projector(&psi);
        let split = DimSplit::bipartite(2, 2).unwrap();
        // direct summation oracle: (rho_A)_{ij} = sum_k rho_{(i,k),(j,k)}
        let mut oracle = CMat::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = C64::default();
                for k in 0..2 {
                    acc += rho.get(i * 2 + k, j * 2 + k);
                }
                oracle.set(i, j, acc);
            }
        }
        for keep in [0usize, 1] {
            let pt = partial_trace(&rho, &split, &[keep]).unwrap();
            assert!((&pt - &CMat::identity(2).scale(0.5)).max_abs() < 1e-15);
        }
        assert!((&oracle - &CMat::identity(2).scale(0.5)).max_abs() < 1e-15);
    }

    #[test]
    fn partial_trace_three_factors_middle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_herm(2, &mut rng);
        let b = random_herm(3, &mut rng);
        let c = random_herm(2, &mut rng);
        let m = tensor(&tensor(&a, &b), &c);
        let split = DimSplit::new(vec![2, 3, 2]).unwrap();
        let ac = partial_trace(&m, &split, &[0, 2]).unwrap();
        let want = tensor(&a, &c).scale_c(b.trace());
        assert!((&ac - &want).max_abs() < 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_split() {
        let split = DimSplit::bipartite(2, 3).unwrap();
        assert!(matches!(partial_trace(&CMat::identity(4), &split, &[0]), Err(Error::Dimension(_))));
        assert!(DimSplit::new(vec![2, 0]).is_err());
    }

    #[test]
    fn trace_norm_cases() {
        assert!((trace_norm(&CMat::from_real_diag(&[1.0, -2.0])) - 3.0).abs() < 1e-14);
        let phi = CMat::column(&[c64(1.0, 1.0), c64(0.5, 0.0), c64(0.0, -2.0)]);
        let psi = CMat::column(&[c64(0.3, 0.0), c64(-1.0, 0.2), c64(0.0, 0.7)]);
        let r1 = CMat::outer(&phi, &psi);
        assert!((trace_norm(&r1) - phi.frobenius() * psi.frobenius()).abs() < 1e-13);
    }

    #[test]
    fn trace_norm_unitary_invariance_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = random(4, 4, &mut rng);
            let n = random(4, 4, &mut rng);
            let u = polar_unitary(&random(4, 4, &mut rng));
            assert!((trace_norm(&(&u * &m)) - trace_norm(&m)).abs() < 1e-12);
            assert!(trace_norm(&(&m + &n)) <= trace_norm(&m) + trace_norm(&n) + 1e-12);
            // Hermitian input: sum of |eigenvalues|
            let h = m.hermitian_part();
            let abs_sum: f64 = herm_eigenvalues(&h).unwrap().iter().map(|l| l.abs()).sum();
            assert!((trace_norm(&h) - abs_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn herm_eig_small_cases() {
        let e = herm_eig(&CMat::from_real_diag(&[3.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 3.0]);
        assert!((e.vectors.get(1, 0).norm() - 1.0).abs() < 1e-15);
        let x = CMat::from_row_major(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)]).unwrap();
        let e = herm_eig(&x).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn herm_eig_rejects_non_hermitian() {
        let m = CMat::from_row_major(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]).unwrap();
        assert!(matches!(herm_eig(&m), Err(Error::NotHermitian { .. })));
    }

    /// Real roots of the characteristic cubic of a 3x3 Hermitian matrix via
    /// the trigonometric formula.
    fn cubic_roots(m: &CMat) -> Vec<f64> {
        let a = |i, j| m.get(i, j);
        let tr = (a(0, 0) + a(1, 1) + a(2, 2)).re;
        let minors = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)
            + a(1, 1) * a(2, 2)
            - a(1, 2) * a(2, 1))
        .re;
        let det = (a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
            - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
            + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)))
        .re;
        // lambda^3 - tr lambda^2 + minors lambda - det = 0, shift lambda = t + tr/3
        let p = minors - tr * tr / 3.0;
        let q = -2.0 * tr.powi(3) / 27.0 + tr * minors / 3.0 - det;
        let r = (-p / 3.0).sqrt();
        let phi = ((-q / 2.0) / r.powi(3)).clamp(-1.0, 1.0).acos();
        let mut roots: Vec<f64> =
            (0..3).map(|k| 2.0 * r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + tr / 3.0).collect();
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn herm_eig_matches_cubic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let m = random_herm(3, &mut rng);
            let got = herm_eig(&m).unwrap().values;
            let want = cubic_roots(&m);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn herm_eig_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_herm(8, &mut rng);
        let e = herm_eig(&m).unwrap();
        let rec = e.reconstruct_with(|l| l);
        assert!((&m - &rec).frobenius() <= 1e-10 * (1.0 + m.frobenius()));
        let u = &e.vectors;
        let gram = &u.adjoint() * u;
        assert!((&gram - &CMat::identity(8)).frobenius() <= 1e-10 * 8.0);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn psd_sqrt_cases() {
        let r = psd_sqrt(&CMat::from_real_diag(&[4.0, 9.0])).unwrap();
        assert!((&r - &CMat::from_real_diag(&[2.0, 3.0])).max_abs() < 1e-14);
        assert_eq!(psd_sqrt(&CMat::zeros(3, 3)).unwrap(), CMat::zeros(3, 3));
        assert!(matches!(psd_sqrt(&CMat::from_real_diag(&[1.0, -0.5])), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn psd_sqrt_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.random_range(1..6);
            let b = random(n, n, &mut rng);
            let rho = &b * &b.adjoint();
            let r = psd_sqrt(&rho).unwrap();
            assert!((&(&r * &r) - &rho).frobenius() <= 1e-9 * (1.0 + rho.frobenius()));
        }
    }

    #[test]
    fn psd_sqrt_counts_clamps() {
        let before = clamp_events();
        let _ = psd_sqrt(&CMat::from_real_diag(&[1.0, -1e-15])).unwrap();
        assert!(clamp_events() > before);
    }

    #[test]
    fn contraction_clip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random(3, 3, &mut rng).scale(3.0);
        let c = clip_to_contraction(&m);
        assert!(operator_norm(&c) <= 1.0 + 1e-12);
        let u = polar_unitary(&m);
        assert!((&(&u.adjoint() * &u) - &CMat::identity(3)).max_abs() < 1e-12);
    }
}
