//! Central finite differences with one level of Richardson extrapolation.
//!
//! A derivative of order `k` is the `k`-fold composition of the symmetric
//! difference `(f(x+h) - f(x-h)) / 2h`, whose truncation error is `O(h^2)`.
//! Extrapolating `D(h)` and `D(h/2)` cancels that term, leaving `O(h^4)`.
//! Steps scale with `eps^(1/(k+4))`, which balances the `O(h^4)` truncation
//! against the `eps / h^k` rounding floor of a `k`-th order stencil.

/// Smallest magnitude used when scaling a step to its evaluation point.
const MIN_SCALE: f64 = 1e-3;

/// Step for a `k`-th order stencil centred at `x`.
pub fn step_for_order(x: f64, order: usize) -> f64 {
    f64::EPSILON.powf(1.0 / (order as f64 + 4.0)) * x.abs().max(MIN_SCALE)
}

#[inline]
fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// Weights of the `k`-fold symmetric difference, indexed by offset `-k..=k`.
fn nested_weights(order: usize) -> Vec<f64> {
    let mut w = vec![1.0];
    for _ in 0..order {
        let mut next = vec![0.0; w.len() + 2];
        for (i, &c) in w.iter().enumerate() {
            next[i] -= c;
            next[i + 2] += c;
        }
        w = next;
    }
    w
}

fn raw_derivative<F: Fn(f64) -> f64>(f: &F, x: f64, order: usize, h: f64) -> f64 {
    if order == 0 {
        return f(x);
    }
    let k = order as i64;
    let sum: f64 = nested_weights(order)
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(i, &c)| c * f(x + (i as i64 - k) as f64 * h))
        .sum();
    sum / (2.0 * h).powi(order as i32)
}

/// `order`-th derivative of a scalar function at `x`, with explicit step.
pub fn derivative_with_step<F: Fn(f64) -> f64>(f: F, x: f64, order: usize, h: f64) -> f64 {
    richardson(raw_derivative(&f, x, order, h), raw_derivative(&f, x, order, 0.5 * h))
}

/// `order`-th derivative of a scalar function at `x`.
pub fn derivative<F: Fn(f64) -> f64>(f: F, x: f64, order: usize) -> f64 {
    derivative_with_step(f, x, order, step_for_order(x, order))
}

fn raw_mixed<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], dirs: &[usize], steps: &[f64]) -> f64 {
    let m = dirs.len();
    let mut point = x.to_vec();
    let mut total = 0.0;
    for mask in 0u32..(1 << m) {
        point.copy_from_slice(x);
        let mut weight = 1.0;
        for (t, &d) in dirs.iter().enumerate() {
            let sign = if mask & (1 << t) != 0 { 1.0 } else { -1.0 };
            point[d] += sign * steps[d];
            weight *= sign / (2.0 * steps[d]);
        }
        total += weight * f(&point);
    }
    total
}

/// Mixed partial derivative `d^m f / dx_{dirs[0]} ... dx_{dirs[m-1]}`.
pub fn mixed_partial<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], dirs: &[usize]) -> f64 {
    let order = dirs.len();
    let steps: Vec<f64> = x.iter().map(|&xi| step_for_order(xi, order)).collect();
    let half: Vec<f64> = steps.iter().map(|h| 0.5 * h).collect();
    richardson(raw_mixed(f, x, dirs, &steps), raw_mixed(f, x, dirs, &half))
}

/// Row-major Hessian by finite differences.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<Vec<f64>> {
    let m = x.len();
    let mut h = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let v = mixed_partial(f, x, &[i, j]);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}

/// Third-derivative tensor by finite differences, flattened as `[i][j][k]`.
pub fn third_tensor<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut t = vec![0.0; m * m * m];
    for i in 0..m {
        for j in i..m {
            for k in j..m {
                let v = mixed_partial(f, x, &[i, j, k]);
                for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                    t[(a * m + b) * m + c] = v;
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_match_textbook_stencils() {
        assert_eq!(nested_weights(1), vec![-1.0, 0.0, 1.0]);
        assert_eq!(nested_weights(2), vec![1.0, 0.0, -2.0, 0.0, 1.0]);
    }

    #[test]
    fn derivatives_of_exp() {
        for order in 1..=5 {
            let tol = if order <= 3 { 1e-7 } else { 1e-4 };
            let d = derivative(f64::exp, 1.3, order);
            assert_relative_eq!(d, 1.3f64.exp(), max_relative = tol);
        }
    }

    #[test]
    fn derivatives_of_reciprocal() {
        // d^k/dx^k x^-1 = (-1)^k k! x^-(k+1)
        let x = 1.7f64;
        let mut fact = 1.0;
        for order in 1..=5usize {
            fact *= order as f64;
            let tol = if order <= 3 { 1e-7 } else { 1e-4 };
            let exact = (-1f64).powi(order as i32) * fact / x.powi(order as i32 + 1);
            assert_relative_eq!(derivative(|t| 1.0 / t, x, order), exact, max_relative = tol);
        }
    }

    #[test]
    fn mixed_partials_of_polynomial() {
        // f = x^2 y^3 -> f_xy = 6 x y^2, f_xyy = 12 x y, f_yyy = 6 x^2
        let f = |p: &[f64]| p[0] * p[0] * p[1].powi(3);
        let x = [1.3, -0.7];
        assert_relative_eq!(mixed_partial(&f, &x, &[0, 1]), 6.0 * 1.3 * 0.49, max_relative = 1e-8);
        let t = third_tensor(&f, &x);
        assert_relative_eq!(t[0b011], 12.0 * 1.3 * -0.7, max_relative = 1e-7);
        assert_relative_eq!(t[0b110], 12.0 * 1.3 * -0.7, max_relative = 1e-7);
        assert_relative_eq!(t[7], 6.0 * 1.69, max_relative = 1e-7);
        assert!(t[0].abs() < 1e-6);
    }
}
