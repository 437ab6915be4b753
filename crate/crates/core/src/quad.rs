//! Composite-Simpson quadrature helpers.
//!
//! All integrands in this crate are smooth analytic expressions, so a fixed-step
//! composite Simpson rule with a Richardson difference as the error estimate is
//! both cheap and reliable. `CumulativeSimpson` tabulates the running integral
//! once and then evaluates ∫_a^x for arbitrary x with a partial-cell Simpson
//! correction, which keeps repeated evaluations O(1).

/// Default number of Simpson cells over a unit interval (step 1/1000).
pub const DEFAULT_CELLS: usize = 1000;

/// Composite Simpson rule with `cells` sub-intervals (2·cells + 1 evaluations).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cells: usize) -> f64 {
    if (b - a).abs() == 0.0 {
        return 0.0;
    }
    let n = cells.max(1);
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let x0 = a + k as f64 * h;
        let x1 = x0 + 0.5 * h;
        let x2 = x0 + h;
        acc += f(x0) + 4.0 * f(x1) + f(x2);
    }
    acc * h / 6.0
}

/// Running integral F(x) = ∫_a^x f, tabulated at cell edges.
///
/// `eval_with` closes the gap between the last tabulated edge and x with a
/// single Simpson application, so arbitrary-x evaluations keep the composite
/// rule's accuracy order.
#[derive(Debug, Clone)]
pub struct CumulativeSimpson {
    a: f64,
    h: f64,
    table: Vec<f64>,
}

impl CumulativeSimpson {
    pub fn build<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cells: usize) -> Self {
        let n = cells.max(1);
        let h = (b - a) / n as f64;
        let mut table = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for k in 0..n {
            let x0 = a + k as f64 * h;
            acc += (f(x0) + 4.0 * f(x0 + 0.5 * h) + f(x0 + h)) * h / 6.0;
            table.push(acc);
        }
        Self { a, h, table }
    }

    pub fn upper(&self) -> f64 {
        self.a + self.h * (self.table.len() - 1) as f64
    }

    /// Total integral over the tabulated interval.
    pub fn full(&self) -> f64 {
        *self.table.last().expect("non-empty table")
    }

    /// ∫_a^x f.  `f` must be the same integrand the table was built with.
    pub fn eval_with<F: Fn(f64) -> f64>(&self, f: F, x: f64) -> f64 {
        let cells = self.table.len() - 1;
        let pos = (x - self.a) / self.h;
        let k = (pos.floor() as isize).clamp(0, cells as isize - 1) as usize;
        let x_k = self.a + k as f64 * self.h;
        let rest = if (x - x_k).abs() == 0.0 {
            0.0
        } else {
            let m = 0.5 * (x_k + x);
            (f(x_k) + 4.0 * f(m) + f(x)) * (x - x_k) / 6.0
        };
        self.table[k] + rest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 4);
        // antiderivative x^4/4 - x^2 + x evaluated at 2
        assert!((v - 2.0).abs() < 1e-14, "got {v}");
    }

    #[test]
    fn simpson_converges_on_smooth_integrand() {
        // Composite Simpson is O(h^4): each halving gains ~16x.
        let exact = 1.0 - (-1.0f64).exp();
        let coarse = simpson(|x| (-x).exp(), 0.0, 1.0, 8);
        let fine = simpson(|x| (-x).exp(), 0.0, 1.0, 16);
        assert!((coarse - exact).abs() / (fine - exact).abs() > 12.0);
        assert!((fine - exact).abs() < 1e-7);
    }

    #[test]
    fn cumulative_matches_direct_at_arbitrary_points() {
        let f = |x: f64| (3.0 * x).sin() + x;
        let cum = CumulativeSimpson::build(f, 0.0, 1.0, 64);
        for &x in &[0.0, 0.1234, 0.5, 0.87311, 1.0] {
            let direct = simpson(f, 0.0, x, 4096);
            let tab = cum.eval_with(f, x);
            assert!((tab - direct).abs() < 1e-8, "x={x}: {tab} vs {direct}");
        }
    }
}
