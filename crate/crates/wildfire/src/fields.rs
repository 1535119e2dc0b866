//! Grid geometry, state containers, and the flatten/unflatten mapping
//! between gridded fields and the analysis state vector.

use crate::error::{Error, Result};

/// Rectangular mesh of `nx` (by `ny` in 2D) grid points with uniform step
/// `dx` in meters. Point `(ix, iy)` sits at `(ix*dx, iy*dx)`; fields over
/// the grid are stored row-major with `ix` varying fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dims: u8,
    nx: usize,
    ny: usize,
    dx: f64,
}

impl Grid {
    pub fn new_1d(nx: usize, dx: f64) -> Result<Self> {
        if nx < 3 {
            return Err(Error::InvalidArgument(format!("nx = {nx}, need nx >= 3")));
        }
        if !(dx > 0.0) {
            return Err(Error::InvalidArgument(format!("dx = {dx}, need dx > 0")));
        }
        Ok(Grid { dims: 1, nx, ny: 1, dx })
    }

    pub fn new_2d(nx: usize, ny: usize, dx: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidArgument(format!(
                "nx = {nx}, ny = {ny}, need both >= 3"
            )));
        }
        if !(dx > 0.0) {
            return Err(Error::InvalidArgument(format!("dx = {dx}, need dx > 0")));
        }
        Ok(Grid { dims: 2, nx, ny, dx })
    }

    pub fn dims(&self) -> u8 {
        self.dims
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Number of grid points.
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Row-major index of point `(ix, iy)`.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        iy * self.nx + ix
    }

    /// Domain extent along x in meters.
    pub fn length_x(&self) -> f64 {
        (self.nx - 1) as f64 * self.dx
    }

    /// Domain extent along y in meters (zero for 1D).
    pub fn length_y(&self) -> f64 {
        (self.ny - 1) as f64 * self.dx
    }
}

/// Length of the flattened state vector for `grid`: the T block followed by
/// the S block.
pub fn state_len(grid: &Grid) -> usize {
    2 * grid.cells()
}

/// Gridded temperature (K) and fuel mass fraction fields plus the
/// simulation clock. Value semantics: operations return new states, so a
/// state can be shared read-only across concurrent workers.
#[derive(Debug, Clone, PartialEq)]
pub struct FireState {
    grid: Grid,
    temp: Vec<f64>,
    fuel: Vec<f64>,
    time: f64,
}

impl FireState {
    /// Uniform state, the usual starting point before ignition.
    pub fn uniform(grid: Grid, temp: f64, fuel: f64) -> FireState {
        let n = grid.cells();
        FireState {
            grid,
            temp: vec![temp; n],
            fuel: vec![fuel; n],
            time: 0.0,
        }
    }

    /// Build from explicit fields; shapes must conform to the grid.
    pub fn new(grid: Grid, temp: Vec<f64>, fuel: Vec<f64>, time: f64) -> Result<FireState> {
        let n = grid.cells();
        if temp.len() != n || fuel.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} points but T has {} and S has {}",
                n,
                temp.len(),
                fuel.len()
            )));
        }
        Ok(FireState { grid, temp, fuel, time })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn temp(&self) -> &[f64] {
        &self.temp
    }

    pub fn fuel(&self) -> &[f64] {
        &self.fuel
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Same fields at a different clock value.
    pub fn with_time(mut self, time: f64) -> FireState {
        self.time = time;
        self
    }

    /// Flatten to the analysis layout: all T values row-major, then all S
    /// values. The clock is not part of the vector.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.temp.len());
        v.extend_from_slice(&self.temp);
        v.extend_from_slice(&self.fuel);
        v
    }

    /// Inverse of [`FireState::flatten`]. `time` must be supplied by the
    /// caller since the vector does not carry it.
    pub fn unflatten(grid: Grid, v: &[f64], time: f64) -> Result<FireState> {
        let n = grid.cells();
        if v.len() != 2 * n {
            return Err(Error::ShapeMismatch(format!(
                "state vector has length {} but grid needs {}",
                v.len(),
                2 * n
            )));
        }
        Ok(FireState {
            grid,
            temp: v[..n].to_vec(),
            fuel: v[n..].to_vec(),
            time,
        })
    }

    pub(crate) fn replace_fields(&self, temp: Vec<f64>, fuel: Vec<f64>, time: f64) -> FireState {
        debug_assert_eq!(temp.len(), self.grid.cells());
        debug_assert_eq!(fuel.len(), self.grid.cells());
        FireState {
            grid: self.grid,
            temp,
            fuel,
            time,
        }
    }
}
