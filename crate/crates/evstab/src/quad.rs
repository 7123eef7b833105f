//! Quadrature rules and Chebyshev series used throughout the crate.

use std::f64::consts::PI;

/// Gauss–Legendre rule mapped to an interval.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point Gauss–Legendre rule on `[a, b]`, nodes in increasing order.
    pub fn legendre(n: usize, a: f64, b: f64) -> Self {
        assert!(n >= 2, "Gauss-Legendre rule needs at least two nodes");
        let rule = gauss_quad::GaussLegendre::new(n).expect("valid Gauss-Legendre degree");
        let mut pairs: Vec<(f64, f64)> = rule.into_iter().collect();
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GaussRule {
            nodes: pairs.iter().map(|(x, _)| mid + half * x).collect(),
            weights: pairs.iter().map(|(_, w)| half * w).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Chebyshev points of the first kind on `[a, b]`, in increasing order.
pub fn chebyshev_nodes(n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let t = -(PI * (j as f64 + 0.5) / n as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * t
        })
        .collect()
}

/// Fejér (first rule) weights matching [`chebyshev_nodes`].
pub fn fejer_weights(n: usize, a: f64, b: f64) -> Vec<f64> {
    let half = 0.5 * (b - a);
    (0..n)
        .map(|j| {
            // Node j of chebyshev_nodes sits at angle π - θ_j; the weights are symmetric.
            let th = PI * (j as f64 + 0.5) / n as f64;
            let mut s = 0.0;
            for k in 1..=n / 2 {
                s += (2.0 * k as f64 * th).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
            half * 2.0 / n as f64 * (1.0 - 2.0 * s)
        })
        .collect()
}

/// A truncated Chebyshev expansion `Σ c_k T_k(x̂)` on `[a, b]`.
#[derive(Debug, Clone)]
pub struct ChebSeries {
    pub a: f64,
    pub b: f64,
    pub coeffs: Vec<f64>,
}

impl ChebSeries {
    /// Interpolant through values sampled at [`chebyshev_nodes`]`(n, a, b)`.
    pub fn from_values(a: f64, b: f64, values: &[f64]) -> Self {
        let n = values.len();
        let mut coeffs = vec![0.0; n];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, v) in values.iter().enumerate() {
                // Node j corresponds to angle π - θ_j, so T_k picks up (-1)^k.
                let th = PI * (j as f64 + 0.5) / n as f64;
                s += v * (k as f64 * th).cos();
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            *c = sign * 2.0 * s / n as f64;
        }
        coeffs[0] *= 0.5;
        ChebSeries { a, b, coeffs }
    }

    /// Interpolant of `f` on `n` first-kind Chebyshev points.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl FnMut(f64) -> f64) -> Self {
        let values: Vec<f64> = chebyshev_nodes(n, a, b).into_iter().map(f).collect();
        Self::from_values(a, b, &values)
    }

    fn to_unit(&self, x: f64) -> f64 {
        (2.0 * x - self.a - self.b) / (self.b - self.a)
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let t = self.to_unit(x);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    /// Antiderivative vanishing at `a`.
    /// `T_k` at `x` for every coefficient index, so that `eval(x) = Σ c_k T_k`.
    pub fn basis(&self, x: f64) -> Vec<f64> {
        let t = self.to_unit(x);
        let n = self.coeffs.len();
        let mut out = Vec::with_capacity(n);
        let (mut a, mut b) = (1.0, t);
        for _ in 0..n {
            out.push(a);
            let next = 2.0 * t * b - a;
            a = b;
            b = next;
        }
        out
    }

    pub fn antiderivative(&self) -> ChebSeries {
        let n = self.coeffs.len();
        let scale = 0.5 * (self.b - self.a);
        let c = |k: usize| -> f64 {
            if k >= n {
                0.0
            } else if k == 0 {
                2.0 * self.coeffs[0]
            } else {
                self.coeffs[k]
            }
        };
        let mut out = vec![0.0; n + 1];
        for (k, o) in out.iter_mut().enumerate().skip(1) {
            *o = scale * (c(k - 1) - c(k + 1)) / (2.0 * k as f64);
        }
        let mut s = ChebSeries { a: self.a, b: self.b, coeffs: out };
        let at_a = s.eval(self.a);
        s.coeffs[0] -= at_a;
        s
    }

    /// Derivative series.
    pub fn derivative(&self) -> ChebSeries {
        let n = self.coeffs.len();
        if n <= 1 {
            return ChebSeries { a: self.a, b: self.b, coeffs: vec![0.0] };
        }
        let mut d = vec![0.0; n + 1];
        for k in (1..n).rev() {
            d[k - 1] = d[k + 1] + 2.0 * k as f64 * self.coeffs[k];
        }
        d[0] *= 0.5;
        d.truncate(n - 1);
        let scale = 2.0 / (self.b - self.a);
        for v in d.iter_mut() {
            *v *= scale;
        }
        ChebSeries { a: self.a, b: self.b, coeffs: d }
    }
}

/// Barycentric Lagrange interpolation weights for arbitrary distinct nodes.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for j in 0..n {
        for k in 0..n {
            if k != j {
                w[j] /= nodes[j] - nodes[k];
            }
        }
    }
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    w.iter().map(|v| v / scale).collect()
}

/// Coefficients `ℓ_j(x)` such that `p(x) = Σ ℓ_j(x) p(x_j)`.
pub fn lagrange_coefficients(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    if let Some(j) = nodes.iter().position(|&n| n == x) {
        let mut out = vec![0.0; nodes.len()];
        out[j] = 1.0;
        return out;
    }
    let terms: Vec<f64> = nodes.iter().zip(bary).map(|(&n, &w)| w / (x - n)).collect();
    let s: f64 = terms.iter().sum();
    terms.iter().map(|t| t / s).collect()
}

/// Legendre polynomials `P_0..P_{n-1}` at `x`.
pub fn legendre_values(n: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n);
    if n == 0 {
        return p;
    }
    p.push(1.0);
    if n > 1 {
        p.push(x);
    }
    for k in 2..n {
        let kf = k as f64;
        let v = ((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
        p.push(v);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        let g = GaussRule::legendre(8, 1.0, 3.0);
        let v = g.integrate(|x| x.powi(7));
        assert!((v - (3f64.powi(8) - 1.0) / 8.0).abs() < 1e-10);
    }

    #[test]
    fn chebyshev_antiderivative_and_fejer_agree() {
        let s = ChebSeries::from_fn(0.0, 2.0, 32, |x| x.exp() * x.sin());
        let w = fejer_weights(32, 0.0, 2.0);
        let nodes = chebyshev_nodes(32, 0.0, 2.0);
        let fejer: f64 = nodes.iter().zip(&w).map(|(x, w)| w * x.exp() * x.sin()).sum();
        let exact = |x: f64| 0.5 * x.exp() * (x.sin() - x.cos());
        let reference = exact(2.0) - exact(0.0);
        assert!((s.antiderivative().eval(2.0) - reference).abs() < 1e-13);
        assert!((fejer - reference).abs() < 1e-13);
        assert!((s.antiderivative().eval(1.3) - (exact(1.3) - exact(0.0))).abs() < 1e-13);
        assert!((s.derivative().eval(0.7) - 0.7f64.exp() * (0.7f64.sin() + 0.7f64.cos())).abs() < 1e-11);
    }

    #[test]
    fn lagrange_reproduces_polynomials() {
        let g = GaussRule::legendre(6, -1.0, 1.0);
        let bw = barycentric_weights(&g.nodes);
        let l = lagrange_coefficients(&g.nodes, &bw, 0.3);
        let v: f64 = g.nodes.iter().zip(&l).map(|(x, c)| c * x.powi(5)).sum();
        assert!((v - 0.3f64.powi(5)).abs() < 1e-14);
    }
}
