//! Fast evaluation of Laplace-transform data on rectangular grids in the
//! complex plane.
//!
//! Everything swept here is a finite exponential sum `Σ_k c_k e^{-z t_k}`:
//! atoms contribute directly, densities through the cell-midpoint rule, and
//! grid-sampled gains through trapezoid weights. Along a line of constant
//! real part the factor `e^{-iω t_k}` advances by a fixed rotation per
//! frequency step, so a whole line costs one complex multiply-add per term
//! and point.

use crate::error::{Error, Result};
use crate::measure::{Complex, HybridMeasure};

/// Rectangular sweep grid: `Re z ∈ [re_min, re_max]`, `Im z ∈ [0, im_max]`
/// (conjugate symmetry covers negative imaginary parts).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_max: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(re_min: f64, re_max: f64, im_max: f64, step: f64) -> Result<Self> {
        let g = GridSpec { re_min, re_max, im_max, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::Config("grid step must be positive".into()));
        }
        if self.re_max < self.re_min || self.im_max < 0.0 {
            return Err(Error::Config("grid bounds are empty".into()));
        }
        Ok(())
    }

    /// Grid with half the step (a superset of the original nodes).
    pub fn refined(&self) -> GridSpec {
        GridSpec { step: self.step / 2.0, ..*self }
    }

    pub fn n_re(&self) -> usize {
        ((self.re_max - self.re_min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn n_im(&self) -> usize {
        (self.im_max / self.step + 1e-9).floor() as usize + 1
    }
}

/// One scalar channel: the exponential sum `z ↦ Σ_k c_k e^{-z t_k}`.
#[derive(Debug, Clone, Default)]
pub struct ExpChannel {
    terms: Vec<(f64, f64)>, // (location, coefficient)
}

impl ExpChannel {
    /// Channel for the Laplace transform of a scalar hybrid measure; uses
    /// the same atom/midpoint rule as [`HybridMeasure::laplace`].
    pub fn from_measure(m: &HybridMeasure) -> Result<Self> {
        if m.rows() != 1 || m.cols() != 1 {
            return Err(Error::ShapeMismatch("sweep channels must be scalar".into()));
        }
        let mut terms = Vec::new();
        for a in m.atoms() {
            terms.push((a.location, a.weight[(0, 0)]));
        }
        if let Some(d) = m.density() {
            for (i, s) in d.samples.iter().enumerate() {
                terms.push(((i as f64 + 0.5) * d.step, d.step * s[(0, 0)]));
            }
        }
        Ok(ExpChannel { terms })
    }

    /// Channel from raw `(location, coefficient)` atoms.
    pub fn from_atoms(terms: Vec<(f64, f64)>) -> Self {
        ExpChannel { terms }
    }

    /// Channel for trapezoid quadrature of grid-point samples, matching
    /// [`crate::model::ControllerGains`] transforms.
    pub fn from_trapezoid_samples(samples: &[f64], h: f64) -> Self {
        let last = samples.len() - 1;
        let terms = samples
            .iter()
            .enumerate()
            .map(|(l, &v)| {
                let w = if l == 0 || l == last { 0.5 } else { 1.0 };
                (l as f64 * h, v * w * h)
            })
            .collect();
        ExpChannel { terms }
    }

    /// Direct evaluation at one point (no recursion), for spot checks.
    pub fn eval(&self, z: Complex) -> Complex {
        self.terms.iter().map(|&(t, c)| (-z * t).exp() * c).sum()
    }
}

/// Evaluate all channels over the grid. `visit(z, values)` is called once
/// per grid point with `values[i]` the i-th channel at `z`.
pub fn sweep(channels: &[ExpChannel], grid: &GridSpec, mut visit: impl FnMut(Complex, &[Complex])) {
    let flat: Vec<(f64, f64, usize)> = channels
        .iter()
        .enumerate()
        .flat_map(|(ci, ch)| ch.terms.iter().map(move |&(t, c)| (t, c, ci)))
        .collect();
    let n_re = grid.n_re();
    let n_im = grid.n_im();
    let mut acc = vec![Complex::new(0.0, 0.0); flat.len()];
    let mut rot = vec![Complex::new(0.0, 0.0); flat.len()];
    let mut values = vec![Complex::new(0.0, 0.0); channels.len()];
    for ire in 0..n_re {
        let x = grid.re_min + ire as f64 * grid.step;
        for (k, &(t, c, _)) in flat.iter().enumerate() {
            acc[k] = Complex::new((-x * t).exp() * c, 0.0);
            rot[k] = Complex::new(0.0, -grid.step * t).exp();
        }
        for iim in 0..n_im {
            let z = Complex::new(x, iim as f64 * grid.step);
            values.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
            for (k, &(_, _, ci)) in flat.iter().enumerate() {
                values[ci] += acc[k];
            }
            visit(z, &values);
            for (a, r) in acc.iter_mut().zip(&rot) {
                *a *= *r;
            }
        }
    }
}
