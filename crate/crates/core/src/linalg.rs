//! Small dense linear-algebra helpers for symmetric matrices.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::of(0.5)
}

/// Relative asymmetry `‖M − Mᵀ‖_F / ‖M‖_F` (0 for the zero matrix).
pub fn relative_asymmetry<T: Scalar>(m: &DMatrix<T>) -> T {
    let norm = m.norm();
    if norm == T::zero() {
        return T::zero();
    }
    (m - m.transpose()).norm() / norm
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let mut ev: Vec<T> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    sym_eigenvalues(m)[0]
}

pub fn max_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    *sym_eigenvalues(m).last().unwrap()
}

/// Operator norm of a symmetric matrix.
pub fn sym_op_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    let ev = sym_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(lo), Some(hi)) => lo.abs().max(hi.abs()),
        _ => T::zero(),
    }
}

/// Symmetrizes and clamps negative eigenvalues to zero. Returns the projected
/// matrix and the smallest eigenvalue seen before clamping.
pub fn psd_project<T: Scalar>(m: &DMatrix<T>) -> (DMatrix<T>, T) {
    let sym = symmetrize(m);
    if sym.nrows() == 0 {
        return (sym, T::zero());
    }
    let eig = sym.clone().symmetric_eigen();
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    if min >= T::zero() {
        return (sym, min);
    }
    let clamped = eig.eigenvalues.map(|v| v.max(T::zero()));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    (symmetrize(&out), min)
}

/// Inverse of a symmetric positive-definite matrix through a Cholesky factor.
pub fn spd_inverse<T: Scalar>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let inv = m.clone().cholesky()?.inverse();
    if inv.iter().all(|v| v.is_finite()) {
        Some(symmetrize(&inv))
    } else {
        None
    }
}

/// Stacks the rows of `a` into one vector: entry `(i, j)` lands at
/// `i * a.ncols() + j`. Every vec(A)-space quantity uses this layout.
pub fn vec_rows<T: Scalar>(a: &DMatrix<T>) -> DVector<T> {
    let (r, c) = a.shape();
    DVector::from_fn(r * c, |k, _| a[(k / c, k % c)])
}

/// Inverse of [`vec_rows`].
pub fn unvec_rows<T: Scalar>(v: &DVector<T>, rows: usize, cols: usize) -> DMatrix<T> {
    assert_eq!(v.len(), rows * cols, "vector length does not match shape");
    DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

/// `tr(A·B)` without forming the product.
pub fn trace_product<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = T::zero();
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Frobenius inner product `⟨A, B⟩ = Σ A_ij B_ij`.
pub fn frob_inner<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Quadratic form `vᵀ M v` on a slice.
#[inline]
pub fn quad_form<T: Scalar>(m: &DMatrix<T>, v: &[T]) -> T {
    let n = v.len();
    let mut acc = T::zero();
    for j in 0..n {
        let vj = v[j];
        if vj == T::zero() {
            continue;
        }
        let col = m.column(j);
        let mut s = T::zero();
        for i in 0..n {
            s += col[i] * v[i];
        }
        acc += s * vj;
    }
    acc
}

/// `M += w · v vᵀ` on a square matrix.
#[inline]
pub fn add_outer<T: Scalar>(m: &mut DMatrix<T>, v: &[T], w: T) {
    let n = v.len();
    for j in 0..n {
        if v[j] == T::zero() {
            continue;
        }
        for i in 0..n {
            m[(i, j)] += (v[i] * v[j]) * w;
        }
    }
}

/// Condition number `λ_max / λ_min` of a symmetric PSD matrix (infinite when
/// the smallest eigenvalue is not positive).
pub fn condition_number<T: Scalar>(m: &DMatrix<T>) -> f64 {
    let ev = sym_eigenvalues(m);
    let (lo, hi) = (ev[0].to_f64(), ev[ev.len() - 1].to_f64());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
