//! Uniform characteristic lattice and piecewise-cubic quadrature.
//!
//! The successive-approximation recursion integrates its previous iterate over
//! axis-aligned rectangles of the (ξ, η) plane. Both the per-iterate sweep and
//! the final off-lattice evaluation integrate the C¹ Catmull-Rom interpolant
//! of lattice samples exactly. A C¹ integrand keeps the resulting kernel
//! samples smooth enough that finite-difference residuals of the stored field
//! stay O(h²); a C⁰ (bilinear) interpolant would leave slope kinks whose
//! second differences do not vanish under refinement.

/// Characteristic lattice: ξ_a = a·Δ for a = 0..=2m, η_c = −c·Δ for c = 0..=m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Lattice {
    pub m: usize,
    pub delta: f64,
}

impl Lattice {
    pub fn new(m: usize, half_length: f64) -> Self {
        Self {
            m,
            delta: half_length / m as f64,
        }
    }

    pub fn nx(&self) -> usize {
        2 * self.m + 1
    }

    pub fn ny(&self) -> usize {
        self.m + 1
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    #[inline]
    pub fn idx(&self, a: usize, c: usize) -> usize {
        debug_assert!(a < self.nx() && c < self.ny());
        a * self.ny() + c
    }

}

/// Sample lookup with quadratic extrapolation one node beyond each end
/// (the Catmull-Rom stencil reaches one node outside the data).
#[inline]
fn gv(v: &[f64], i: isize) -> f64 {
    let n = v.len() as isize;
    if i < 0 {
        3.0 * v[0] - 3.0 * v[1] + v[2]
    } else if i >= n {
        let n = v.len();
        3.0 * v[n - 1] - 3.0 * v[n - 2] + v[n - 3]
    } else {
        v[i as usize]
    }
}

/// Exact integrals of the Catmull-Rom interpolant over each full cell.
/// `out[k] = ∫ over cell k`, k = 0..v.len()-2.
pub(crate) fn cr_cell_integrals(v: &[f64], delta: f64, out: &mut Vec<f64>) {
    let cells = v.len() - 1;
    out.clear();
    out.reserve(cells);
    for k in 0..cells {
        let ki = k as isize;
        let s = -gv(v, ki - 1) + 13.0 * v[k] + 13.0 * v[k + 1] - gv(v, ki + 2);
        out.push(delta * s / 24.0);
    }
}

/// Prefix sums of cell integrals: `prefix[k] = ∫ from node 0 to node k`.
pub(crate) fn cr_prefix(cell_integrals: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.reserve(cell_integrals.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for ci in cell_integrals {
        acc += ci;
        out.push(acc);
    }
}

/// ∫ of the Catmull-Rom interpolant of `v` from node 0 to the point
/// `x_units` (measured in node spacings). `prefix` must come from
/// [`cr_prefix`] of the same samples.
pub(crate) fn cr_integral_to(v: &[f64], prefix: &[f64], delta: f64, x_units: f64) -> f64 {
    let max_units = (v.len() - 1) as f64;
    let x = x_units.clamp(0.0, max_units);
    let k = (x.floor() as usize).min(v.len() - 2);
    let u = x - k as f64;
    if u == 0.0 {
        return prefix[k];
    }
    let u2 = u * u;
    let u3 = u2 * u;
    let u4 = u3 * u;
    let w_m1 = (-u2 / 2.0 + 2.0 * u3 / 3.0 - u4 / 4.0) / 2.0;
    let w_0 = (2.0 * u - 5.0 * u3 / 3.0 + 3.0 * u4 / 4.0) / 2.0;
    let w_1 = (u2 / 2.0 + 4.0 * u3 / 3.0 - 3.0 * u4 / 4.0) / 2.0;
    let w_2 = (-u3 / 3.0 + u4 / 4.0) / 2.0;
    let ki = k as isize;
    prefix[k]
        + delta
            * (gv(v, ki - 1) * w_m1 + v[k] * w_0 + v[k + 1] * w_1 + gv(v, ki + 2) * w_2)
}
