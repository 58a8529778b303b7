//! Univariate uniform B-splines of degree k and regularity k-1.

use crate::Real;

/// Uniform univariate B-spline basis over `elements` unit-length knot spans.
///
/// Knots are integers in element units. An open axis uses a clamped knot
/// vector and has `elements + k` functions; a periodic axis wraps uniform
/// knots and has `elements` functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis1d {
    degree: usize,
    elements: usize,
    periodic: bool,
    knots: Vec<f64>,
}

impl Basis1d {
    /// Panics if `degree == 0` or a periodic axis has fewer than `degree + 1` elements.
    pub fn new(degree: usize, elements: usize, periodic: bool) -> Self {
        assert!(degree >= 1, "spline degree must be at least 1");
        assert!(elements >= 1, "need at least one element");
        assert!(
            !periodic || elements > degree,
            "periodic axis needs more than {degree} elements, got {elements}"
        );
        let k = degree as i64;
        let n = elements as i64;
        let knots = (0..(elements + 2 * degree + 1) as i64)
            .map(|i| {
                let t = i - k;
                if periodic { t as f64 } else { t.clamp(0, n) as f64 }
            })
            .collect();
        Self { degree, elements, periodic, knots }
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn elements(&self) -> usize {
        self.elements
    }

    #[inline]
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Number of distinct basis functions.
    pub fn len(&self) -> usize {
        if self.periodic { self.elements } else { self.elements + self.degree }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Knot vector in element units (extended by `degree` ghost knots on each
    /// side for periodic axes).
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Global index of the `j`-th function (`0..=degree`) supported on element `e`.
    #[inline]
    pub fn function(&self, e: usize, j: usize) -> usize {
        let i = e + j;
        if self.periodic { i % self.elements } else { i }
    }

    /// Elements in the support of function `i`.
    pub fn support(&self, i: usize) -> Vec<usize> {
        if self.periodic {
            (0..=self.degree).map(|j| (i + self.elements - self.degree + j) % self.elements).collect()
        } else {
            let lo = i.saturating_sub(self.degree);
            let hi = i.min(self.elements - 1);
            (lo..=hi).collect()
        }
    }

    /// Values and derivatives (with respect to the element-unit coordinate) of
    /// the `degree + 1` functions on element `e` at local coordinate `r` in
    /// `[0, 1]`. Row `d` of the result holds the `d`-th derivatives, `d <= nd`.
    ///
    /// Follows the classical triangular-table algorithm with derivative
    /// recursion; derivatives of order above `degree` are zero.
    pub fn eval<T: Real>(&self, e: usize, r: T, nd: usize, out: &mut [Vec<T>]) {
        let p = self.degree;
        let span = e + p;
        let u = T::from_count(e) + r;
        let knot = |i: usize| T::lit(self.knots[i]);
        let mut ndu = [[T::zero(); 8]; 8];
        let mut left = [T::zero(); 8];
        let mut right = [T::zero(); 8];
        assert!(p < 8, "degree above 7 is not supported");
        ndu[0][0] = T::one();
        for j in 1..=p {
            left[j] = u - knot(span + 1 - j);
            right[j] = knot(span + j) - u;
            let mut saved = T::zero();
            for rr in 0..j {
                ndu[j][rr] = right[rr + 1] + left[j - rr];
                let temp = ndu[rr][j - 1] / ndu[j][rr];
                ndu[rr][j] = saved + right[rr + 1] * temp;
                saved = left[j - rr] * temp;
            }
            ndu[j][j] = saved;
        }
        for (d, row) in out.iter_mut().enumerate().take(nd + 1) {
            row.clear();
            row.resize(p + 1, T::zero());
            if d == 0 {
                for j in 0..=p {
                    row[j] = ndu[j][p];
                }
            }
        }
        if nd == 0 {
            return;
        }
        let mut a = [[T::zero(); 8]; 2];
        for rr in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = T::one();
            for k in 1..=nd.min(p) {
                let mut dval = T::zero();
                let rk = rr as isize - k as isize;
                let pk = p - k;
                if rr >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    dval = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if rr as isize - 1 <= pk as isize { k - 1 } else { p - rr };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    dval += a[s2][j] * ndu[idx][pk];
                }
                if rr <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][rr];
                    dval += a[s2][k] * ndu[rr][pk];
                }
                out[k][rr] = dval;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = T::from_count(p);
        for k in 1..=nd.min(p) {
            for v in out[k].iter_mut() {
                *v *= factor;
            }
            factor *= T::from_count(p - k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_all(b: &Basis1d, x: f64, nd: usize) -> Vec<Vec<f64>> {
        let e = (x.floor() as usize).min(b.elements() - 1);
        let mut out = vec![Vec::new(); nd + 1];
        b.eval(e, x - e as f64, nd, &mut out);
        let mut full = vec![vec![0.0; b.len()]; nd + 1];
        for d in 0..=nd {
            for j in 0..=b.degree() {
                full[d][b.function(e, j)] += out[d][j];
            }
        }
        full
    }

    #[test]
    fn function_counts() {
        assert_eq!(Basis1d::new(3, 5, false).len(), 8);
        assert_eq!(Basis1d::new(2, 4, false).len(), 6);
        assert_eq!(Basis1d::new(3, 8, true).len(), 8);
    }

    #[test]
    fn linear_hats() {
        let b = Basis1d::new(1, 4, false);
        let v = eval_all(&b, 1.5, 1);
        assert!((v[0][1] - 0.5).abs() < 1e-15 && (v[0][2] - 0.5).abs() < 1e-15);
        assert!((v[1][1] + 1.0).abs() < 1e-15 && (v[1][2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cubic_uniform_interior_values() {
        // Cardinal cubic B-spline values at an interior knot: 1/6, 2/3, 1/6.
        let b = Basis1d::new(3, 8, false);
        let v = eval_all(&b, 4.0, 3);
        assert!((v[0][4] - 1.0 / 6.0).abs() < 1e-14);
        assert!((v[0][5] - 2.0 / 3.0).abs() < 1e-14);
        assert!((v[0][6] - 1.0 / 6.0).abs() < 1e-14);
        // Third derivative of the cardinal cubic on its first span is 1.
        let v = eval_all(&b, 3.5, 3);
        assert!((v[3][6] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamped_endpoints_interpolate() {
        let b = Basis1d::new(3, 5, false);
        let v0 = eval_all(&b, 0.0, 0);
        assert!((v0[0][0] - 1.0).abs() < 1e-15);
        let mut out: Vec<Vec<f64>> = vec![Vec::new(); 1];
        b.eval(4, 1.0, 0, &mut out);
        assert!((out[0][3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_wraps() {
        let b = Basis1d::new(2, 5, true);
        for x in [0.0, 0.3, 2.7, 4.99] {
            let v = eval_all(&b, x, 0);
            let s: f64 = v[0].iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        // Same value at both ends of the period.
        let a = eval_all(&b, 0.0, 1);
        let mut out = vec![Vec::new(); 2];
        b.eval(4, 1.0, 1, &mut out);
        let mut z = vec![vec![0.0; 5]; 2];
        for d in 0..2 {
            for j in 0..3 {
                z[d][b.function(4, j)] += out[d][j];
            }
        }
        for i in 0..5 {
            assert!((a[0][i] - z[0][i]).abs() < 1e-14);
            assert!((a[1][i] - z[1][i]).abs() < 1e-14);
        }
        assert_eq!(b.support(0), vec![3, 4, 0]);
    }

    #[test]
    fn supports_match_evaluation() {
        for periodic in [false, true] {
            let b = Basis1d::new(3, 7, periodic);
            for i in 0..b.len() {
                for e in 0..7 {
                    let on = (0..4).any(|j| b.function(e, j) == i);
                    assert_eq!(on, b.support(i).contains(&e), "fn {i} elem {e}");
                }
            }
        }
    }
}
