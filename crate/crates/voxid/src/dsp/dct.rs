//! Orthonormal DCT-II basis used for cepstral coefficients.

/// Row-major `n x n` orthonormal DCT-II matrix. Row `k` applied to a signal
/// of length `n` gives coefficient `k`; the inverse transform is the
/// transpose.
pub fn dct_ortho_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0f64; n * n];
    let norm0 = (1.0 / n as f64).sqrt();
    let norm = (2.0 / n as f64).sqrt();
    for k in 0..n {
        for j in 0..n {
            let angle = std::f64::consts::PI * (j as f64 + 0.5) * k as f64 / n as f64;
            m[k * n + j] = if k == 0 { norm0 } else { norm * angle.cos() };
        }
    }
    m
}
