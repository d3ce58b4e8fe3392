//! Row-major dense products on top of `matrixmultiply`.

/// `c = a * w^T (+ beta c)` with `a: m x k`, `w: n x k`, `c: m x n`.
pub(crate) fn mul_abt(m: usize, k: usize, n: usize, a: &[f64], w: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && w.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the slices cover the index ranges implied by the dimensions and
    // strides asserted above; `c` does not alias `a` or `w`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `g += z^T * a` with `z: m x n`, `a: m x k`, `g: n x k`.
pub(crate) fn acc_atb(m: usize, n: usize, k: usize, z: &[f64], a: &[f64], g: &mut [f64]) {
    debug_assert!(z.len() >= m * n && a.len() >= m * k && g.len() >= n * k);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            n,
            m,
            k,
            1.0,
            z.as_ptr(),
            1,
            n as isize,
            a.as_ptr(),
            k as isize,
            1,
            1.0,
            g.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// `out = z * w` with `z: m x n`, `w: n x k`, `out: m x k`.
pub(crate) fn mul_ab(m: usize, n: usize, k: usize, z: &[f64], w: &[f64], out: &mut [f64]) {
    debug_assert!(z.len() >= m * n && w.len() >= n * k && out.len() >= m * k);
    if m == 0 || k == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            n,
            k,
            1.0,
            z.as_ptr(),
            n as isize,
            1,
            w.as_ptr(),
            k as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_naive_loops() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let w: Vec<f64> = (0..n * k).map(|i| (i as f64).sin()).collect();
        let mut c = vec![0.0; m * n];
        mul_abt(m, k, n, &a, &w, 0.0, &mut c);
        for i in 0..m {
            for j in 0..n {
                let e: f64 = (0..k).map(|p| a[i * k + p] * w[j * k + p]).sum();
                assert!((c[i * n + j] - e).abs() < 1e-12);
            }
        }
        let mut g = vec![1.0; n * k];
        acc_atb(m, n, k, &c, &a, &mut g);
        for j in 0..n {
            for p in 0..k {
                let e: f64 = 1.0 + (0..m).map(|i| c[i * n + j] * a[i * k + p]).sum::<f64>();
                assert!((g[j * k + p] - e).abs() < 1e-12);
            }
        }
        let mut o = vec![0.0; m * k];
        mul_ab(m, n, k, &c, &w, &mut o);
        for i in 0..m {
            for p in 0..k {
                let e: f64 = (0..n).map(|j| c[i * n + j] * w[j * k + p]).sum();
                assert!((o[i * k + p] - e).abs() < 1e-12);
            }
        }
    }
}
