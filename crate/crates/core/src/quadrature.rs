//! Romberg integration (trapezoid rule with Richardson extrapolation) and
//! trapezoid weights on uniform nodes.

/// Integrates `f` over `[a, b]`, refining until successive extrapolants
/// agree to `tol` (absolute, relative to the running magnitude).
pub fn romberg(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    const MAX_LEVEL: usize = 22;
    let mut prev: Vec<f64> = Vec::with_capacity(MAX_LEVEL);
    let h0 = b - a;
    prev.push(0.5 * h0 * (f(a) + f(b)));
    let mut n_mid = 1usize;
    for level in 1..MAX_LEVEL {
        let h = h0 / (2 * n_mid) as f64;
        let mut mid = 0.0;
        for k in 0..n_mid {
            mid += f(a + (2 * k + 1) as f64 * h);
        }
        let mut cur = Vec::with_capacity(level + 1);
        cur.push(0.5 * prev[0] + h * mid);
        let mut fac = 1.0;
        for m in 1..=level {
            fac *= 4.0;
            let v = cur[m - 1] + (cur[m - 1] - prev[m - 1]) / (fac - 1.0);
            cur.push(v);
        }
        let est = cur[level];
        let last = prev[level - 1];
        if level >= 4 && (est - last).abs() <= tol * est.abs().max(1e-300) + tol * 1e-3 {
            return est;
        }
        prev = cur;
        n_mid *= 2;
    }
    prev[prev.len() - 1]
}

/// Trapezoid weights for `n` uniform nodes of spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn romberg_smooth() {
        let v = romberg(|x| x.exp(), 0.0, 1.0, 1e-14);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
        let v = romberg(|x| (3.0 * x).cos(), -1.0, 2.0, 1e-14);
        assert!((v - ((6.0f64).sin() + (3.0f64).sin()) / 3.0).abs() < 1e-13);
    }

    #[test]
    fn trapezoid_is_exact_on_linears() {
        let n = 9;
        let h = 0.125;
        let w = trapezoid_weights(n, h);
        let s: f64 = (0..n).map(|i| w[i] * (2.0 + 3.0 * i as f64 * h)).sum();
        assert!((s - (2.0 + 1.5)).abs() < 1e-14);
    }
}
