//! Dense complex linear algebra helpers shared by every module.
//!
//! All equality checks in the engine are tolerance-based (operator norm),
//! with the global default [`DEFAULT_TOL`] overridable per call.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;

/// Global default tolerance for operator-norm equality checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Eigenvalue floor below which a "provably positive" operator is treated as
/// singular (signals broken input, not a numerical fallback).
pub const POSITIVITY_FLOOR: f64 = 1e-12;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest singular value. Zero-sized matrices have norm 0.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn frob_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Operator-norm distance to the identity.
pub fn dist_to_identity(m: &CMat) -> f64 {
    op_norm(&(m - identity(m.nrows())))
}

/// Eigendecomposition of a Hermitian matrix. Returns (eigenvalues ascending,
/// unitary of eigenvectors as columns).
pub fn hermitian_eig(m: &CMat) -> (Vec<f64>, CMat) {
    assert_eq!(m.nrows(), m.ncols());
    if m.nrows() == 0 {
        return (vec![], m.clone());
    }
    // Symmetrize first: callers pass operators that are Hermitian up to
    // roundoff, and SymmetricEigen reads only one triangle.
    let h = (m + m.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = m.nrows();
    let mut vecs = CMat::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i).into_owned());
    }
    (vals, vecs)
}

/// f(A) for Hermitian A through its eigendecomposition.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = hermitian_eig(m);
    let n = m.nrows();
    let mut d = CMat::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = cr(f(vals[i]));
    }
    &vecs * d * vecs.adjoint()
}

/// Positive square root of a positive (Hermitian) matrix.
///
/// Errors if an eigenvalue falls below [`POSITIVITY_FLOOR`]: the callers use
/// this only on operators that are positive-invertible by construction, so a
/// floor breach means the input violated a precondition.
pub fn psd_sqrt_invertible(m: &CMat) -> crate::error::Result<CMat> {
    check_floor(m)?;
    Ok(hermitian_fn(m, f64::sqrt))
}

/// Inverse positive square root of a positive invertible matrix.
pub fn psd_inv_sqrt(m: &CMat) -> crate::error::Result<CMat> {
    check_floor(m)?;
    Ok(hermitian_fn(m, |x| 1.0 / x.sqrt()))
}

/// Inverse of a positive invertible matrix.
pub fn psd_inv(m: &CMat) -> crate::error::Result<CMat> {
    check_floor(m)?;
    Ok(hermitian_fn(m, |x| 1.0 / x))
}

fn check_floor(m: &CMat) -> crate::error::Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let (vals, _) = hermitian_eig(m);
    if vals[0] < POSITIVITY_FLOOR {
        return Err(crate::error::Error::numerical(format!(
            "operator expected positive invertible has eigenvalue {:.3e} below floor {:.0e}",
            vals[0], POSITIVITY_FLOOR
        )));
    }
    Ok(())
}

/// General inverse via LU. Errors on (numerically) singular input.
pub fn inverse(m: &CMat) -> crate::error::Result<CMat> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| crate::error::Error::numerical("matrix not invertible".to_string()))
}

/// Orthonormal basis of the nullspace of `a`, as columns.
/// Directions with singular value <= `tol * max_sv` (or absolute `tol` when
/// `a` is zero) are considered null.
pub fn nullspace(a: &CMat, tol: f64) -> CMat {
    let (rows, cols) = (a.nrows(), a.ncols());
    if cols == 0 {
        return CMat::zeros(0, 0);
    }
    if rows == 0 {
        return identity(cols);
    }
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let max_sv = svd.singular_values.max().max(1.0);
    let mut null_cols = Vec::new();
    for i in 0..cols {
        let sv = if i < svd.singular_values.len() {
            svd.singular_values[i]
        } else {
            0.0
        };
        if sv <= tol * max_sv {
            null_cols.push(vt.row(i).adjoint());
        }
    }
    let mut out = CMat::zeros(cols, null_cols.len());
    for (j, col) in null_cols.iter().enumerate() {
        out.set_column(j, col);
    }
    out
}

/// Least-squares solve A x = b via SVD (minimum-norm solution).
pub fn lstsq(a: &CMat, b: &CMat) -> CMat {
    if a.ncols() == 0 {
        return CMat::zeros(0, b.ncols());
    }
    if a.nrows() == 0 {
        return CMat::zeros(a.ncols(), b.ncols());
    }
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13).expect("svd solve")
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Random matrix with independent standard complex Gaussian-ish entries.
pub fn random_cmat(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
    })
}

/// Random Hermitian matrix.
pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMat {
    let a = random_cmat(rng, n, n);
    (&a + a.adjoint()).scale(0.5)
}

/// Random unitary via QR of a random matrix.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMat {
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let a = random_cmat(rng, n, n);
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix the diagonal phases so the distribution is not skewed and the
    // result is reproducible across backends.
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}

/// Random invertible matrix with condition number bounded away from 0,
/// built as U * diag(spread in [0.5, 1.5]) * V.
pub fn random_invertible(rng: &mut impl Rng, n: usize) -> CMat {
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let u = random_unitary(rng, n);
    let v = random_unitary(rng, n);
    let mut d = CMat::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = cr(0.5 + rng.random::<f64>());
    }
    u * d * v
}

/// Real nonnegative matrix helpers for the Perron-Frobenius fast path.
pub mod real {
    use nalgebra::DMatrix;

    /// Top singular triple (sigma, u, v) of a real nonnegative matrix with
    /// u, v sign-fixed to be entrywise nonnegative.
    pub fn top_singular_triple(m: &DMatrix<f64>) -> (f64, Vec<f64>, Vec<f64>) {
        let svd = m.clone().svd(true, true);
        let mut best = 0usize;
        for i in 0..svd.singular_values.len() {
            if svd.singular_values[i] > svd.singular_values[best] {
                best = i;
            }
        }
        let sigma = svd.singular_values[best];
        let u_m = svd.u.as_ref().unwrap();
        let v_m = svd.v_t.as_ref().unwrap();
        let mut u: Vec<f64> = (0..m.nrows()).map(|i| u_m[(i, best)]).collect();
        let mut v: Vec<f64> = (0..m.ncols()).map(|j| v_m[(best, j)]).collect();
        let s: f64 = u.iter().sum();
        if s < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
        (sigma, u, v)
    }
}
