//! Scalar fields over `S^n`: a periodic grid on the circle (n = 1) and a
//! cell-centered polar-angle grid for axisymmetric fields (n >= 2).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field has {got} values, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite field value at node {0}")]
    NonFinite(usize),
    #[error("reparametrization failed: abscissae not strictly increasing at index {0}")]
    NonMonotone(usize),
    #[error("target node {0} lies outside the sampled range")]
    OutOfRange(f64),
    #[error("differentiation order must be 1 or 2, got {0}")]
    InvalidOrder(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Circle,
    Axisym,
}

/// Uniform grid on `S^1` or on the polar angle `theta in [0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub mode: GridMode,
    pub n: usize,
    pub m: usize,
}

pub const MIN_NODES: usize = 16;

impl Grid {
    pub fn new(mode: GridMode, n: usize, m: usize) -> Result<Self, GridError> {
        if m < MIN_NODES {
            return Err(GridError::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes, got {m}"
            )));
        }
        match mode {
            GridMode::Circle if n != 1 => Err(GridError::InvalidGrid(format!(
                "circle grids carry curves (n = 1), got n = {n}"
            ))),
            GridMode::Axisym if n < 2 => Err(GridError::InvalidGrid(format!(
                "axisymmetric grids need n >= 2, got n = {n}"
            ))),
            _ => Ok(Grid { mode, n, m }),
        }
    }

    /// The natural grid for dimension `n`: circle for curves, axisymmetric otherwise.
    pub fn for_dimension(n: usize, m: usize) -> Result<Self, GridError> {
        let mode = if n == 1 {
            GridMode::Circle
        } else {
            GridMode::Axisym
        };
        Grid::new(mode, n, m)
    }

    pub fn h(&self) -> f64 {
        match self.mode {
            GridMode::Circle => 2.0 * PI / self.m as f64,
            GridMode::Axisym => PI / self.m as f64,
        }
    }

    pub fn node(&self, j: usize) -> f64 {
        match self.mode {
            GridMode::Circle => j as f64 * self.h(),
            GridMode::Axisym => (j as f64 + 0.5) * self.h(),
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.node(j)).collect()
    }

    /// Same mode and dimension with `m` replaced.
    pub fn with_nodes(&self, m: usize) -> Result<Self, GridError> {
        Grid::new(self.mode, self.n, m)
    }

    /// Quadrature weights for `int_{S^n} f`.
    ///
    /// Odd `n` uses the midpoint rule on the smooth periodic integrand
    /// `f sin^(n-1)`; even `n` uses Fejer's first rule in `cos theta`, which
    /// stays spectrally accurate despite the `|sin theta|` kink.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let h = self.h();
        match self.mode {
            GridMode::Circle => vec![h; self.m],
            GridMode::Axisym => {
                let area = sphere_area(self.n - 1);
                let m = self.m;
                (0..m)
                    .map(|j| {
                        let th = self.node(j);
                        if self.n % 2 == 1 {
                            area * h * th.sin().powi(self.n as i32 - 1)
                        } else {
                            let mut s = 0.0;
                            for k in 1..=m / 2 {
                                let kf = k as f64;
                                s += (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
                            }
                            let fejer = 2.0 / m as f64 * (1.0 - 2.0 * s);
                            area * fejer * th.sin().powi(self.n as i32 - 2)
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Area of the unit sphere `S^k`.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// Symmetry of an axisymmetric field under reflection through the poles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub parity: Parity,
}

const GHOSTS: usize = 6;
const LAGRANGE_WIDTH: usize = 8;

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, parity: Parity) -> Result<Self, GridError> {
        if values.len() != grid.m {
            return Err(GridError::LengthMismatch {
                expected: grid.m,
                got: values.len(),
            });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(j));
        }
        Ok(ScalarField {
            grid,
            values,
            parity,
        })
    }

    pub fn from_fn(grid: Grid, parity: Parity, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        ScalarField::new(grid, grid.nodes().into_iter().map(f).collect(), parity)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.m],
            parity: Parity::Even,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, parity: Parity, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            parity,
        }
    }

    /// Value at node index `j`, extended past the ends by periodicity or parity.
    pub fn ghost(&self, j: isize) -> f64 {
        let m = self.grid.m as isize;
        match self.grid.mode {
            GridMode::Circle => self.values[j.rem_euclid(m) as usize],
            GridMode::Axisym => {
                if j < 0 {
                    self.parity.sign() * self.values[(-1 - j) as usize]
                } else if j >= m {
                    self.parity.sign() * self.values[(2 * m - 1 - j) as usize]
                } else {
                    self.values[j as usize]
                }
            }
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    /// Area-weighted mean over `S^n`.
    pub fn sphere_mean(&self) -> f64 {
        let ones = ScalarField::constant(self.grid, 1.0);
        integrate_sphere(self) / integrate_sphere(&ones)
    }

    /// Nodes and values with ghost samples appended on both sides.
    pub fn extended_samples(&self, ghosts: usize) -> (Vec<f64>, Vec<f64>) {
        let g = ghosts as isize;
        let m = self.grid.m as isize;
        let h = self.grid.h();
        let offset = match self.grid.mode {
            GridMode::Circle => 0.0,
            GridMode::Axisym => 0.5,
        };
        let xs = (-g..m + g).map(|j| (j as f64 + offset) * h).collect();
        let ys = (-g..m + g).map(|j| self.ghost(j)).collect();
        (xs, ys)
    }

    /// High-order (degree 7) Lagrange interpolation at an arbitrary angle.
    pub fn interpolate_at(&self, theta: f64) -> f64 {
        let (xs, ys) = self.extended_samples(GHOSTS);
        lagrange_at(&xs, &ys, theta, LAGRANGE_WIDTH)
    }

    /// Minimum and maximum of the interpolated field, located between nodes.
    pub fn refined_extrema(&self) -> (f64, f64) {
        let (xs, ys) = self.extended_samples(GHOSTS);
        let h = self.grid.h();
        let interp = |x: f64| lagrange_at(&xs, &ys, x, LAGRANGE_WIDTH);
        let (jmin, jmax) = argminmax(&self.values);
        let lo = self.grid.node(jmin);
        let hi = self.grid.node(jmax);
        let fmin = golden_min(interp, lo - h, lo + h).1;
        let fmax = -golden_min(|x| -interp(x), hi - h, hi + h).1;
        (fmin.min(self.min()), fmax.max(self.max()))
    }
}

fn argminmax(v: &[f64]) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[imin] {
            imin = i;
        }
        if x > v[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

/// Golden-section minimization on `[a, b]`; returns `(argmin, min)`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-15 {
            break;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Lagrange interpolation through the `width` samples nearest `xt`.
///
/// `x` must be strictly increasing.
pub fn lagrange_at(x: &[f64], y: &[f64], xt: f64, width: usize) -> f64 {
    let len = x.len();
    let width = width.min(len);
    let i = x.partition_point(|&xi| xi <= xt);
    let start = i.saturating_sub(width / 2).min(len - width);
    let xs = &x[start..start + width];
    let ys = &y[start..start + width];
    let mut total = 0.0;
    for k in 0..width {
        let mut w = 1.0;
        for j in 0..width {
            if j != k {
                w *= (xt - xs[j]) / (xs[k] - xs[j]);
            }
        }
        total += w * ys[k];
    }
    total
}

/// Fourth-order central derivative of order 1 or 2.
///
/// Circle fields wrap periodically; axisymmetric fields are extended across
/// both poles by their parity. First derivatives flip the parity.
pub fn differentiate(f: &ScalarField, order: u8) -> Result<ScalarField, GridError> {
    let h = f.grid.h();
    let m = f.grid.m as isize;
    let values: Vec<f64> = match order {
        1 => (0..m)
            .map(|j| {
                (8.0 * (f.ghost(j + 1) - f.ghost(j - 1)) - (f.ghost(j + 2) - f.ghost(j - 2)))
                    / (12.0 * h)
            })
            .collect(),
        2 => (0..m)
            .map(|j| {
                (16.0 * (f.ghost(j + 1) + f.ghost(j - 1))
                    - (f.ghost(j + 2) + f.ghost(j - 2))
                    - 30.0 * f.ghost(j))
                    / (12.0 * h * h)
            })
            .collect(),
        other => return Err(GridError::InvalidOrder(other)),
    };
    let parity = if order == 1 {
        f.parity.flip()
    } else {
        f.parity
    };
    Ok(ScalarField {
        grid: f.grid,
        values,
        parity,
    })
}

/// `int_{S^n} f` for the field's grid.
pub fn integrate_sphere(f: &ScalarField) -> f64 {
    f.grid
        .quadrature_weights()
        .iter()
        .zip(&f.values)
        .map(|(w, v)| w * v)
        .sum()
}

/// Shape-preserving cubic Hermite resampling onto the nodes of `target`.
///
/// Slopes are three-point (Bessel) estimates passed through the Hyman
/// monotonicity filter: zero at local extrema of the data, and bounded by
/// three times the adjacent secants elsewhere. The interpolant is monotone
/// wherever the data are, so it never leaves the data range.
pub fn resample_monotone(x: &[f64], y: &[f64], target: &Grid) -> Result<ScalarField, GridError> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(GridError::InvalidGrid(
            "monotone resampling needs at least three (x, y) pairs".into(),
        ));
    }
    if let Some(i) = (1..x.len()).find(|&i| !(x[i] > x[i - 1])) {
        return Err(GridError::NonMonotone(i));
    }
    let slopes = hyman_slopes(x, y);
    let values = target
        .nodes()
        .into_iter()
        .map(|xt| {
            if xt < x[0] || xt > x[x.len() - 1] {
                return Err(GridError::OutOfRange(xt));
            }
            let i = x.partition_point(|&xi| xi <= xt).clamp(1, x.len() - 1) - 1;
            let dx = x[i + 1] - x[i];
            let t = (xt - x[i]) / dx;
            let t2 = t * t;
            let t3 = t2 * t;
            Ok((2.0 * t3 - 3.0 * t2 + 1.0) * y[i]
                + (t3 - 2.0 * t2 + t) * dx * slopes[i]
                + (-2.0 * t3 + 3.0 * t2) * y[i + 1]
                + (t3 - t2) * dx * slopes[i + 1])
        })
        .collect::<Result<Vec<_>, _>>()?;
    ScalarField::new(*target, values, Parity::Even)
}

fn hyman_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let k = x.len();
    let h: Vec<f64> = (0..k - 1).map(|i| x[i + 1] - x[i]).collect();
    let s: Vec<f64> = (0..k - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; k];
    for i in 1..k - 1 {
        d[i] = (h[i] * s[i - 1] + h[i - 1] * s[i]) / (h[i - 1] + h[i]);
        if s[i - 1] * s[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let bound = 3.0 * s[i - 1].abs().min(s[i].abs());
            d[i] = s[i].signum() * d[i].abs().min(bound);
        }
    }
    let end = |d0: f64, s0: f64| {
        if d0 * s0 <= 0.0 {
            0.0
        } else if d0.abs() > 3.0 * s0.abs() {
            3.0 * s0
        } else {
            d0
        }
    };
    d[0] = end(
        ((2.0 * h[0] + h[1]) * s[0] - h[0] * s[1]) / (h[0] + h[1]),
        s[0],
    );
    let (a, b) = (h[k - 2], h[k - 3]);
    d[k - 1] = end(((2.0 * a + b) * s[k - 2] - a * s[k - 3]) / (a + b), s[k - 2]);
    d
}

/// Adds ghost samples to scattered data so that interpolation covers the whole
/// grid domain: periodic copies on the circle, parity mirrors across the poles.
pub fn extend_scattered(
    mode: GridMode,
    parity: Parity,
    x: &[f64],
    y: &[f64],
    ghosts: usize,
) -> (Vec<f64>, Vec<f64>) {
    let k = x.len();
    let g = ghosts.min(k);
    let mut xs = Vec::with_capacity(k + 2 * g);
    let mut ys = Vec::with_capacity(k + 2 * g);
    match mode {
        GridMode::Circle => {
            let period = 2.0 * PI;
            for i in k - g..k {
                xs.push(x[i] - period);
                ys.push(y[i]);
            }
            xs.extend_from_slice(x);
            ys.extend_from_slice(y);
            for i in 0..g {
                xs.push(x[i] + period);
                ys.push(y[i]);
            }
        }
        GridMode::Axisym => {
            let s = parity.sign();
            for i in (0..g).rev() {
                xs.push(-x[i]);
                ys.push(s * y[i]);
            }
            xs.extend_from_slice(x);
            ys.extend_from_slice(y);
            for i in 0..g {
                xs.push(2.0 * PI - x[k - 1 - i]);
                ys.push(s * y[k - 1 - i]);
            }
        }
    }
    (xs, ys)
}

/// High-order resampling of scattered samples (strictly increasing `x`) onto
/// the nodes of `target`, with ghost extension by `parity`.
pub fn resample_lagrange(
    x: &[f64],
    y: &[f64],
    target: &Grid,
    parity: Parity,
) -> Result<ScalarField, GridError> {
    if let Some(i) = (1..x.len()).find(|&i| !(x[i] > x[i - 1])) {
        return Err(GridError::NonMonotone(i));
    }
    let (xs, ys) = extend_scattered(target.mode, parity, x, y, GHOSTS);
    if let Some(i) = (1..xs.len()).find(|&i| !(xs[i] > xs[i - 1])) {
        return Err(GridError::NonMonotone(i));
    }
    let values = target
        .nodes()
        .into_iter()
        .map(|xt| {
            if xt < xs[0] || xt > xs[xs.len() - 1] {
                Err(GridError::OutOfRange(xt))
            } else {
                Ok(lagrange_at(&xs, &ys, xt, LAGRANGE_WIDTH))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    ScalarField::new(*target, values, parity)
}
