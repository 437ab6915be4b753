//! Uniform spatial grid on [0, 1] and PDE states sampled on it.

use crate::error::{Error, Result};

/// Uniform grid with nodes r_i = i/n, i = 0..=n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialGrid {
    n: usize,
}

impl SpatialGrid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self { n: n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    pub fn n_nodes(&self) -> usize {
        self.n + 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |i| self.node(i))
    }
}

/// Which state a field holds; tracks the transformation chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldLabel {
    /// Plant state in original coordinates.
    U,
    /// Plant state after the gauge transform.
    C,
    /// Observer estimate of `C`.
    CHat,
    /// Estimation error `C - CHat`.
    CTilde,
    /// Error mapped into the stable target system.
    WTilde,
}

impl FieldLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldLabel::U => "u",
            FieldLabel::C => "c",
            FieldLabel::CHat => "c_hat",
            FieldLabel::CTilde => "c_tilde",
            FieldLabel::WTilde => "w_tilde",
        }
    }
}

/// One PDE state sampled on a `SpatialGrid` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
    pub time: f64,
    pub label: FieldLabel,
}

impl StateField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>, time: f64, label: FieldLabel) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::Shape(format!(
                "state has {} values but the grid has {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("state contains non-finite values".into()));
        }
        Ok(Self {
            grid,
            values,
            time,
            label,
        })
    }

    pub fn from_fn(
        grid: SpatialGrid,
        time: f64,
        label: FieldLabel,
        mut f: impl FnMut(f64) -> f64,
    ) -> Result<Self> {
        let values = grid.nodes().map(&mut f).collect();
        Self::new(grid, values, time, label)
    }

    pub fn zeros(grid: SpatialGrid, time: f64, label: FieldLabel) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_nodes()],
            time,
            label,
        }
    }

    /// L²(0,1) norm by trapezoid quadrature.
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.spacing();
        let n = self.values.len();
        let mut acc = 0.5 * (self.values[0] * self.values[0] + self.values[n - 1] * self.values[n - 1]);
        for v in &self.values[1..n - 1] {
            acc += v * v;
        }
        (acc * h).sqrt()
    }

    pub fn boundary_value(&self) -> f64 {
        *self.values.last().expect("non-empty state")
    }
}
