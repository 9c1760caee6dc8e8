//! Small dense symmetric-positive-definite helpers used by the cubature
//! Kalman filter.

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result, Scalar};

/// Lower Cholesky factor `L` with `a = L L^T`. Only the lower triangle of
/// `a` is read.
pub fn cholesky<T: Scalar>(a: ArrayView2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::LengthMismatch {
            what: "square matrix columns",
            expected: n,
            actual: a.ncols(),
        });
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let (head, mut tail) = l.view_mut().split_at(ndarray::Axis(0), j + 1);
        let lj = head.row(j);
        let lj = &lj.as_slice().expect("row-major")[..j];
        let d = a[[j, j]] - dot(lj, lj);
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::Numerical(format!("matrix not positive definite at pivot {j}")));
        }
        let d = d.sqrt();
        for (r, mut row) in tail.outer_iter_mut().enumerate() {
            let i = j + 1 + r;
            let li = row.as_slice_mut().expect("row-major");
            li[j] = (a[[i, j]] - dot(&li[..j], lj)) / d;
        }
        l[[j, j]] = d;
    }
    Ok(l)
}

/// Cholesky that retries with `jitter * I` added, starting at `first_jitter`
/// and growing tenfold up to `max_tries` times. Returns the factor and the
/// jitter that was needed (zero on first success).
pub fn cholesky_jittered<T: Scalar>(a: ArrayView2<T>, first_jitter: T, max_tries: usize) -> Result<(Array2<T>, T)> {
    if let Ok(l) = cholesky(a) {
        return Ok((l, T::zero()));
    }
    let mut jitter = first_jitter;
    let mut m = a.to_owned();
    for _ in 0..max_tries {
        for i in 0..m.nrows() {
            m[[i, i]] = a[[i, i]] + jitter;
        }
        if let Ok(l) = cholesky(m.view()) {
            return Ok((l, jitter));
        }
        jitter = jitter * T::of(10.0);
    }
    Err(Error::Numerical(format!("Cholesky failed after {max_tries} jitter attempts")))
}

/// Solves `L L^T x = b` in place for every column of `b`.
pub fn cholesky_solve<T: Scalar>(l: ArrayView2<T>, b: &mut Array2<T>) {
    let n = l.nrows();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[[i, c]];
            for k in 0..i {
                s = s - l[[i, k]] * b[[k, c]];
            }
            b[[i, c]] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = b[[i, c]];
            for k in i + 1..n {
                s = s - l[[k, i]] * b[[k, c]];
            }
            b[[i, c]] = s / l[[i, i]];
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Solves `L X = B` in place for lower-triangular `L`, row by row.
pub fn solve_lower<T: Scalar>(l: ArrayView2<T>, b: &mut Array2<T>) {
    for i in 0..l.nrows() {
        let (done, mut rest) = b.view_mut().split_at(ndarray::Axis(0), i);
        let mut bi = rest.row_mut(0);
        for (k, bk) in done.outer_iter().enumerate() {
            let c = l[[i, k]];
            if c != T::zero() {
                bi.scaled_add(-c, &bk);
            }
        }
        bi.mapv_inplace(|v| v / l[[i, i]]);
    }
}

/// Replaces `a` with `(a + a^T) / 2`.
pub fn symmetrize<T: Scalar>(a: &mut Array2<T>) {
    let n = a.nrows();
    let half = T::of(0.5);
    for i in 0..n {
        for j in i + 1..n {
            let v = (a[[i, j]] + a[[j, i]]) * half;
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Float;
    use ndarray::array;

    #[test]
    fn factor_and_solve() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut b = array![[1.0, 0.0], [2.0, 1.0], [3.0, -1.0]];
        let b0 = b.clone();
        cholesky_solve(l.view(), &mut b);
        let r = a.dot(&b);
        for (x, y) in r.iter().zip(b0.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_substitution() {
        let l = array![[2.0, 0.0, 0.0], [1.0, 3.0, 0.0], [-1.0, 0.5, 1.5]];
        let mut b = array![[1.0, 2.0], [0.0, 1.0], [4.0, -2.0]];
        let b0 = b.clone();
        solve_lower(l.view(), &mut b);
        let r = l.dot(&b);
        for (x, y) in r.iter().zip(b0.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky(a.view()).is_err());
        let (_, j) = cholesky_jittered(a.view(), 1e-12, 12).unwrap();
        assert!(j > 0.0);
        let neg = array![[-1.0, 0.0], [0.0, 1.0]];
        assert!(cholesky_jittered(neg.view(), 1e-12, 3).is_err());
    }

    #[test]
    fn symmetrize_averages() {
        let mut a = array![[1.0, 2.0], [4.0, 3.0]];
        symmetrize(&mut a);
        assert_eq!(a, array![[1.0, 3.0], [3.0, 3.0]]);
    }
}
