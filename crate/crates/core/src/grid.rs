//! Uniform space-time grids and fields sampled on them.

use crate::error::{Error, Result};

/// Times `t_k = (k+1) dt` for `k = 0..n_t` (so the last is `T`) and
/// positions `x_i = (i - c) dx` for `i = 0..2c+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    pub dt: f64,
    pub dx: f64,
    pub n_t: usize,
    pub half_n: usize,
}

impl SpaceTimeGrid {
    /// Grid on `(0, T] × [-L, L]`; `T/dt` and `L/dx` must be integers up to
    /// rounding.
    pub fn new(t_final: f64, dt: f64, half_width: f64, dx: f64) -> Result<Self> {
        if !(dt > 0.0 && dx > 0.0 && t_final > 0.0 && half_width > 0.0) {
            return Err(Error::Parameter(format!(
                "grid needs positive T, dt, L, dx (got T={t_final}, dt={dt}, L={half_width}, dx={dx})"
            )));
        }
        let n_t = (t_final / dt).round();
        let half_n = (half_width / dx).round();
        if (n_t * dt - t_final).abs() > 1e-9 * t_final || n_t < 1.0 {
            return Err(Error::Parameter(format!("T = {t_final} is not a multiple of dt = {dt}")));
        }
        if (half_n * dx - half_width).abs() > 1e-9 * half_width || half_n < 1.0 {
            return Err(Error::Parameter(format!("L = {half_width} is not a multiple of dx = {dx}")));
        }
        Ok(Self {
            dt,
            dx,
            n_t: n_t as usize,
            half_n: half_n as usize,
        })
    }

    pub fn n_x(&self) -> usize {
        2 * self.half_n + 1
    }

    pub fn t(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.dt
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.half_n as f64) * self.dx
    }

    pub fn t_final(&self) -> f64 {
        self.t(self.n_t - 1)
    }

    pub fn half_width(&self) -> f64 {
        self.half_n as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_x()).map(|i| self.x(i)).collect()
    }

    /// Index of the time node closest to `t`.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round() as i64 - 1;
        if k < 0 || k as usize >= self.n_t || ((k + 1) as f64 * self.dt - t).abs() > 1e-9 {
            return Err(Error::Contract(format!("t = {t} is not a grid time")));
        }
        Ok(k as usize)
    }

    /// Index of the space node closest to `x`.
    pub fn space_index(&self, x: f64) -> Result<usize> {
        let i = (x / self.dx).round() as i64 + self.half_n as i64;
        if i < 0 || i as usize >= self.n_x() || (self.x(i as usize) - x).abs() > 1e-9 {
            return Err(Error::Contract(format!("x = {x} is not a grid position")));
        }
        Ok(i as usize)
    }

    /// Same grid extended or cut to `n_t` time steps.
    pub fn with_steps(&self, n_t: usize) -> Self {
        Self { n_t, ..*self }
    }
}

/// Values indexed `(time, space)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: SpaceTimeGrid,
    pub values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: SpaceTimeGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_t * grid.n_x()],
        }
    }

    pub fn from_fn(grid: SpaceTimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut field = Self::zeros(grid);
        for k in 0..grid.n_t {
            let t = grid.t(k);
            for (i, v) in field.row_mut(k).iter_mut().enumerate() {
                *v = f(t, grid.x(i));
            }
        }
        field
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.grid.n_x() + i]
    }

    pub fn set(&mut self, k: usize, i: usize, v: f64) {
        let n = self.grid.n_x();
        self.values[k * n + i] = v;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.grid.n_x();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.n_x();
        &mut self.values[k * n..(k + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Contract(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }
}
