//! Fixed-size vector and 2×2 matrix helpers used by the per-node geometry.
//!
//! Surfaces of dimension m = 1 use the upper-left 1×1 block of every
//! matrix; unused entries stay zero.

pub type Vec3 = [f64; 3];
pub type Mat2 = [[f64; 2]; 2];

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn dist3(a: Vec3, b: Vec3) -> f64 {
    norm3(sub3(a, b))
}

pub fn identity(m: usize) -> Mat2 {
    let mut r = [[0.0; 2]; 2];
    for (i, row) in r.iter_mut().enumerate().take(m) {
        row[i] = 1.0;
    }
    r
}

pub fn matmul(m: usize, a: &Mat2, b: &Mat2) -> Mat2 {
    let mut r = [[0.0; 2]; 2];
    for i in 0..m {
        for j in 0..m {
            r[i][j] = (0..m).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    r
}

pub fn matvec(m: usize, a: &Mat2, v: &[f64; 2]) -> [f64; 2] {
    let mut r = [0.0; 2];
    for i in 0..m {
        r[i] = (0..m).map(|k| a[i][k] * v[k]).sum();
    }
    r
}

pub fn transpose(m: usize, a: &Mat2) -> Mat2 {
    let mut r = [[0.0; 2]; 2];
    for i in 0..m {
        for j in 0..m {
            r[i][j] = a[j][i];
        }
    }
    r
}

pub fn det(m: usize, a: &Mat2) -> f64 {
    match m {
        1 => a[0][0],
        _ => a[0][0] * a[1][1] - a[0][1] * a[1][0],
    }
}

pub fn trace(m: usize, a: &Mat2) -> f64 {
    (0..m).map(|i| a[i][i]).sum()
}

/// Inverse, or `None` when the determinant vanishes.
pub fn inverse(m: usize, a: &Mat2) -> Option<Mat2> {
    let d = det(m, a);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some(match m {
        1 => [[1.0 / a[0][0], 0.0], [0.0, 0.0]],
        _ => [
            [a[1][1] / d, -a[0][1] / d],
            [-a[1][0] / d, a[0][0] / d],
        ],
    })
}

/// Quadratic form ξᵀ A ξ.
pub fn quad(m: usize, a: &Mat2, xi: &[f64; 2]) -> f64 {
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += a[i][j] * xi[i] * xi[j];
        }
    }
    s
}

pub fn symmetrize(m: usize, a: &Mat2) -> Mat2 {
    let mut r = *a;
    if m == 2 {
        let s = 0.5 * (a[0][1] + a[1][0]);
        r[0][1] = s;
        r[1][0] = s;
    }
    r
}

/// Real eigenvalues of a 2×2 matrix similar to a symmetric one (e.g. a
/// Weingarten matrix), sorted ascending.
pub fn real_eigenvalues(m: usize, a: &Mat2) -> [f64; 2] {
    if m == 1 {
        return [a[0][0], 0.0];
    }
    let half_tr = 0.5 * (a[0][0] + a[1][1]);
    let half_diff = 0.5 * (a[0][0] - a[1][1]);
    let disc = (half_diff * half_diff + a[0][1] * a[1][0]).max(0.0).sqrt();
    [half_tr - disc, half_tr + disc]
}

/// Extreme values of ξᵀBξ over ξ with ξᵀAξ = 1, for A positive definite:
/// the generalized eigenvalues of (B, A), ascending.
pub fn generalized_eigenvalues(m: usize, b: &Mat2, a: &Mat2) -> Option<[f64; 2]> {
    let ainv = inverse(m, a)?;
    let c = matmul(m, &ainv, b);
    let mut e = real_eigenvalues(m, &c);
    if m == 1 {
        e[1] = e[0];
    }
    Some(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let a = [[2.0, 0.3], [0.3, 1.5]];
        let ai = inverse(2, &a).unwrap();
        let p = matmul(2, &a, &ai);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p[i][j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let e = real_eigenvalues(2, &[[3.0, 0.0], [0.0, -1.0]]);
        assert_eq!(e, [-1.0, 3.0]);
    }

    #[test]
    fn generalized_extremes_bracket_samples() {
        let a = [[2.0, 0.4], [0.4, 1.0]];
        let b = [[1.0, -0.2], [-0.2, 3.0]];
        let [lo, hi] = generalized_eigenvalues(2, &b, &a).unwrap();
        for k in 0..360 {
            let t = (k as f64).to_radians();
            let mut xi = [t.cos(), t.sin()];
            let n = quad(2, &a, &xi).sqrt();
            xi = [xi[0] / n, xi[1] / n];
            let v = quad(2, &b, &xi);
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
