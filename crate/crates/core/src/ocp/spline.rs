//! Natural cubic spline on a uniform grid over `[0, span]`, held constant
//! outside it.

#[derive(Debug, Clone, PartialEq)]
pub struct UniformSpline {
    span: f64,
    values: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
}

impl UniformSpline {
    /// `values.len() ≥ 1`; a single value gives a constant.
    pub fn new(span: f64, values: &[f64]) -> Self {
        let n = values.len();
        assert!(n >= 1, "spline needs at least one knot");
        let mut m = vec![0.0; n];
        if n >= 3 {
            let h = span / (n - 1) as f64;
            // Tridiagonal system for the interior second derivatives:
            // m[i-1] + 4 m[i] + m[i+1] = 6 (y[i-1] - 2 y[i] + y[i+1]) / h²
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (values[i] - 2.0 * values[i + 1] + values[i + 2]) / (h * h);
                let denom = if i == 0 { 4.0 } else { 4.0 - c[i - 1] };
                c[i] = 1.0 / denom;
                d[i] = if i == 0 { rhs / denom } else { (rhs - d[i - 1]) / denom };
            }
            for i in (0..k).rev() {
                let next = if i + 1 < k { m[i + 2] } else { 0.0 };
                m[i + 1] = d[i] - c[i] * next;
            }
        }
        Self { span, values: values.to_vec(), m }
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 1 || !(self.span > 0.0) {
            return self.values[0];
        }
        let h = self.span / (n - 1) as f64;
        let t = t.clamp(0.0, self.span);
        let i = ((t / h) as usize).min(n - 2);
        let a = (t - i as f64 * h) / h;
        let b = 1.0 - a;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        b * y0 + a * y1 + ((b * b * b - b) * m0 + (a * a * a - a) * m1) * h * h / 6.0
    }

    /// Values of this spline at `n` uniform knots over `[0, span]`.
    pub fn resample(&self, span: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.eval(0.0)];
        }
        (0..n).map(|k| self.eval(span * k as f64 / (n - 1) as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots() {
        let v = [0.3, -1.0, 2.0, 0.5, 0.0];
        let s = UniformSpline::new(8.0, &v);
        for (k, &y) in v.iter().enumerate() {
            assert!((s.eval(2.0 * k as f64) - y).abs() < 1e-14);
        }
    }

    #[test]
    fn reproduces_lines_and_clamps() {
        let v: Vec<f64> = (0..7).map(|k| 1.0 + 0.5 * k as f64).collect();
        let s = UniformSpline::new(6.0, &v);
        for k in 0..=60 {
            let t = 0.1 * k as f64;
            assert!((s.eval(t) - (1.0 + 0.5 * t)).abs() < 1e-13);
        }
        assert_eq!(s.eval(100.0), s.eval(6.0));
        assert_eq!(s.eval(-1.0), 1.0);
    }

    #[test]
    fn natural_end_conditions() {
        let s = UniformSpline::new(1.0, &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(s.m[0], 0.0);
        assert_eq!(s.m[3], 0.0);
        // second difference near the ends is ~0
        let e = 1e-4;
        let d2 = (s.eval(2.0 * e) - 2.0 * s.eval(e) + s.eval(0.0)) / (e * e);
        assert!(d2.abs() < 1e-2 * s.m[1].abs());
    }

    #[test]
    fn matches_reference_values() {
        // natural spline through (0,0),(1,1),(2,0): m1 = -3
        let s = UniformSpline::new(2.0, &[0.0, 1.0, 0.0]);
        assert!((s.eval(0.5) - 0.6875).abs() < 1e-14);
        assert!((s.eval(1.5) - 0.6875).abs() < 1e-14);
    }
}
