//! Dense row-major matrix/vector kernels for the decoder.

/// out = M x, with M of shape rows x cols.
pub(crate) fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        out[r] = acc;
    }
}

/// out += M^T y, with M of shape rows x cols and y of length rows.
pub(crate) fn matvec_t_acc(m: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for r in 0..rows {
        let yr = y[r];
        if yr == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += row[c] * yr;
        }
    }
}

/// g += y (outer) x, with g of shape y.len() x x.len().
pub(crate) fn outer_acc(g: &mut [f64], y: &[f64], x: &[f64]) {
    debug_assert_eq!(g.len(), y.len() * x.len());
    for r in 0..y.len() {
        let yr = y[r];
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * x.len()..(r + 1) * x.len()];
        for c in 0..x.len() {
            row[c] += yr * x[c];
        }
    }
}

/// Overflow-safe logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose_agree_with_hand_math() {
        // M = [[1, 2], [3, 4], [5, 6]]
        let m = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x = [10.0, 1.0];
        let mut out = [0.0; 3];
        matvec(&m, 3, 2, &x, &mut out);
        assert_eq!(out, [12.0, 34.0, 56.0]);

        let y = [1.0, 0.0, -1.0];
        let mut t = [0.0; 2];
        matvec_t_acc(&m, 3, 2, &y, &mut t);
        assert_eq!(t, [-4.0, -4.0]);
    }

    #[test]
    fn outer_accumulates() {
        let mut g = vec![0.0; 4];
        outer_acc(&mut g, &[2.0, 3.0], &[1.0, -1.0]);
        outer_acc(&mut g, &[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(g, vec![3.0, -1.0, 3.0, -3.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }
}
