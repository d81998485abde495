//! Effective dimension of an embedding cloud.

use alloc::vec;
use alloc::vec::Vec;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of the symmetric `n`×`n` row-major matrix `a`, descending.
///
/// Cyclic Jacobi rotations; `a` is overwritten.
pub fn symmetric_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n, "matrix must be n by n");
    let frob: f64 = a.iter().map(|v| v * v).sum();
    if frob == 0.0 {
        return vec![0.0; n];
    }
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= 1e-30 * frob {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if libm::fabs(theta) > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Smallest number of principal components whose variance share reaches
/// `threshold`. Identical points give 0.
///
/// The spectrum is taken from whichever of the Gram matrix and the scatter
/// matrix is smaller; both share their nonzero eigenvalues.
pub fn effective_dimension(rows: &[Vec<f64>], threshold: f64) -> usize {
    assert!(threshold > 0.0 && threshold <= 1.0, "threshold must lie in (0, 1]");
    let n = rows.len();
    if n < 2 {
        return 0;
    }
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
    let scale: f64 = rows.iter().flat_map(|r| r.iter()).map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);

    let (mut m, k) = if n <= d {
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        (g, n)
    } else {
        let mut c = vec![0.0; d * d];
        for r in &centered {
            for i in 0..d {
                if r[i] == 0.0 {
                    continue;
                }
                for j in i..d {
                    c[i * d + j] += r[i] * r[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                c[i * d + j] = c[j * d + i];
            }
        }
        (c, d)
    };
    let eig = symmetric_eigenvalues(&mut m, k);
    let eig: Vec<f64> = eig.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = eig.iter().sum();
    if total <= 1e-12 * scale {
        return 0;
    }
    // Relative slack keeps rounding noise from demanding an extra component
    // when the threshold is 1.
    let goal = threshold * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, v) in eig.iter().enumerate() {
        acc += v;
        if acc >= goal {
            return i + 1;
        }
    }
    eig.len()
}
