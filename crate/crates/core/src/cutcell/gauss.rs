//! Gauss-Legendre rules on the unit interval and derived square/triangle rules.

use crate::{Real, Vec2};

/// Gauss-Legendre nodes and weights on `[0, 1]` with `n` points.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    for i in 0..n.div_ceil(2) {
        // Newton iteration on P_n starting from the Chebyshev-like guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (
        nodes.into_iter().map(T::lit).collect(),
        weights.into_iter().map(T::lit).collect(),
    )
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor rule on the axis-aligned box `[lo, hi]`; weights carry the box area.
pub fn square_rule<T: Real>(lo: Vec2<T>, hi: Vec2<T>, nodes: &[T], weights: &[T]) -> Vec<(Vec2<T>, T)> {
    let d = hi - lo;
    let area = d.x * d.y;
    let mut out = Vec::with_capacity(nodes.len() * nodes.len());
    for (&ny, &wy) in nodes.iter().zip(weights) {
        for (&nx, &wx) in nodes.iter().zip(weights) {
            out.push((Vec2::new(lo.x + nx * d.x, lo.y + ny * d.y), wx * wy * area));
        }
    }
    out
}

/// Collapsed (Duffy) tensor rule on a triangle; weights carry the triangle area.
pub fn triangle_rule<T: Real>(p: [Vec2<T>; 3], nodes: &[T], weights: &[T], out: &mut Vec<(Vec2<T>, T)>) {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[1];
    let det = e1.cross(e2).abs();
    if det == T::zero() {
        return;
    }
    for (&s, &ws) in nodes.iter().zip(weights) {
        for (&t, &wt) in nodes.iter().zip(weights) {
            let x = p[0] + e1 * s + e2 * (s * t);
            out.push((x, ws * wt * s * det));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_monomials_exactly() {
        for n in 1..=8 {
            let (x, w) = gauss_legendre::<f64>(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p} q={q}");
            }
        }
    }

    #[test]
    fn triangle_rule_area_and_moments() {
        let (x, w) = gauss_legendre::<f64>(5);
        let mut pts = Vec::new();
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(0.0, 1.0)];
        triangle_rule(tri, &x, &w, &mut pts);
        let area: f64 = pts.iter().map(|p| p.1).sum();
        assert!((area - 1.0).abs() < 1e-14);
        // integral of x*y over the triangle = b^2 h^2 / 24
        let xy: f64 = pts.iter().map(|(p, w)| w * p.x * p.y).sum();
        assert!((xy - 4.0 / 24.0).abs() < 1e-14);
    }
}
