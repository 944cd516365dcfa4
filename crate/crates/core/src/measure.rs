//! Compactly supported matrix-valued hybrid measures: finitely many Dirac
//! atoms plus a square-integrable density on a uniform grid.
//!
//! The class is closed under addition and convolution, which is what makes
//! it usable as the coefficient algebra for delay systems: pointwise delays
//! are atoms, distributed delays are densities. Densities are stored as
//! cell averages of their piecewise-constant representative; convolution of
//! two densities is the exact convolution of the representatives (a
//! trapezoid-equivalent rule), so the algebra stays consistent under the
//! Laplace transform up to quadrature error of order `(|z| h)^2`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Complex = nalgebra::Complex<f64>;

/// Atom locations closer than this are merged by summing weights.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// A weighted Dirac atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: DMatrix<f64>,
}

/// Cell-average samples of a function on `[0, step * samples.len()]`.
///
/// `samples[i]` is the mean of the function over `[i*step, (i+1)*step)`;
/// the represented function is the piecewise-constant extension.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub step: f64,
    pub samples: Vec<DMatrix<f64>>,
}

impl Density {
    /// Sample a callable into cell averages on `[0, support]`, zero-extending
    /// the final partial cell. Uses composite Simpson (8 panels per cell).
    pub fn from_fn(
        step: f64,
        support: f64,
        rows: usize,
        cols: usize,
        f: impl Fn(f64) -> DMatrix<f64>,
    ) -> Result<Self> {
        if step <= 0.0 {
            return Err(Error::InvalidInput("density step must be positive".into()));
        }
        if support < 0.0 {
            return Err(Error::InvalidInput("density support must be nonnegative".into()));
        }
        let ncells = ((support / step) - 1e-9).ceil().max(0.0) as usize;
        let mut samples = Vec::with_capacity(ncells);
        for i in 0..ncells {
            let a = i as f64 * step;
            let b = ((i + 1) as f64 * step).min(support);
            let mut acc = DMatrix::zeros(rows, cols);
            if b > a {
                // composite Simpson over [a, b]
                const PANELS: usize = 8;
                let w = (b - a) / PANELS as f64;
                for p in 0..PANELS {
                    let lo = a + p as f64 * w;
                    acc += (f(lo) + f(lo + 0.5 * w) * 4.0 + f(lo + w)) * (w / 6.0);
                }
            }
            samples.push(acc / step);
        }
        Ok(Density { step, samples })
    }

    pub fn zero(step: f64) -> Self {
        Density { step, samples: Vec::new() }
    }

    fn shape(&self) -> Option<(usize, usize)> {
        self.samples.first().map(|m| (m.nrows(), m.ncols()))
    }

    /// End of the last nonzero cell (0 if identically zero).
    fn support_end(&self) -> f64 {
        match self.samples.iter().rposition(|m| m.iter().any(|&v| v != 0.0)) {
            Some(i) => (i + 1) as f64 * self.step,
            None => 0.0,
        }
    }

    /// Exact cell averages of the piecewise-constant representative on a new
    /// grid, by overlap integration. Mass is conserved when the new grid
    /// covers the old support.
    fn resample(&self, new_step: f64, rows: usize, cols: usize) -> Density {
        if self.samples.is_empty() || steps_equal(self.step, new_step) {
            return Density { step: new_step, samples: self.samples.clone() };
        }
        let end = self.step * self.samples.len() as f64;
        let n_new = ((end / new_step) - 1e-9).ceil() as usize;
        let mut samples = vec![DMatrix::zeros(rows, cols); n_new];
        for (k, out) in samples.iter_mut().enumerate() {
            let lo = k as f64 * new_step;
            let hi = (k + 1) as f64 * new_step;
            let c0 = (lo / self.step + 1e-12).floor().max(0.0) as usize;
            let c1 = ((hi / self.step - 1e-12).ceil() as usize).min(self.samples.len());
            for c in c0..c1 {
                let a = lo.max(c as f64 * self.step);
                let b = hi.min((c + 1) as f64 * self.step);
                if b > a {
                    *out += &self.samples[c] * ((b - a) / new_step);
                }
            }
        }
        Density { step: new_step, samples }
    }
}

/// Exponentially weighted total-variation norm `∫ e^{νt} |μ|(dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTv {
    pub nu: f64,
    pub value: f64,
}

/// A measure discretized to point masses on a uniform grid.
///
/// `weights[i]` is the mass attached to grid node `i*step`: atoms snapped to
/// the nearest node (ties round down) plus the density mass of the centered
/// cell `[(i-1/2)step, (i+1/2)step)`. Snap displacements are recorded.
#[derive(Debug, Clone)]
pub struct DiscretizedMeasure {
    pub step: f64,
    pub weights: Vec<DMatrix<f64>>,
    pub atom_snaps: Vec<AtomSnap>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomSnap {
    pub location: f64,
    pub index: usize,
    pub error: f64,
}

impl DiscretizedMeasure {
    /// Scalar weight vector (1x1 measures only).
    pub fn scalar_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|m| m[(0, 0)]).collect()
    }
}

/// Finite compactly supported matrix-valued Borel measure with an atomic
/// part and an absolutely continuous part.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridMeasure {
    rows: usize,
    cols: usize,
    atoms: Vec<Atom>,
    density: Option<Density>,
    support_end: f64,
}

impl HybridMeasure {
    pub fn zero(rows: usize, cols: usize) -> Self {
        HybridMeasure { rows, cols, atoms: Vec::new(), density: None, support_end: 0.0 }
    }

    /// Build from raw parts: atoms are sorted, duplicates (within
    /// [`ATOM_MERGE_TOL`]) merged, exact-zero atoms and trailing zero cells
    /// dropped, and the support bound tightened.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        atoms: Vec<(f64, DMatrix<f64>)>,
        density: Option<Density>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("measure shape must be positive".into()));
        }
        for (loc, w) in &atoms {
            if !loc.is_finite() || *loc < 0.0 {
                return Err(Error::InvalidInput(format!("atom location {loc} out of range")));
            }
            if w.nrows() != rows || w.ncols() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "atom weight is {}x{}, measure is {}x{}",
                    w.nrows(),
                    w.ncols(),
                    rows,
                    cols
                )));
            }
        }
        if let Some(d) = &density {
            if d.step <= 0.0 {
                return Err(Error::InvalidInput("density step must be positive".into()));
            }
            if let Some((r, c)) = d.shape() {
                if r != rows || c != cols {
                    return Err(Error::ShapeMismatch(format!(
                        "density sample is {r}x{c}, measure is {rows}x{cols}"
                    )));
                }
            }
        }
        let mut sorted = atoms;
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<Atom> = Vec::with_capacity(sorted.len());
        for (loc, w) in sorted {
            match merged.last_mut() {
                Some(last) if (loc - last.location).abs() <= ATOM_MERGE_TOL => last.weight += w,
                _ => merged.push(Atom { location: loc, weight: w }),
            }
        }
        merged.retain(|a| a.weight.iter().any(|&v| v != 0.0));

        let mut density = density.filter(|d| !d.samples.is_empty());
        if let Some(d) = &mut density {
            let keep = d.samples.iter().rposition(|m| m.iter().any(|&v| v != 0.0));
            match keep {
                Some(i) => d.samples.truncate(i + 1),
                None => density = None,
            }
        }

        let atom_end = merged.last().map_or(0.0, |a| a.location);
        let dens_end = density.as_ref().map_or(0.0, |d| d.support_end());
        Ok(HybridMeasure {
            rows,
            cols,
            atoms: merged,
            density,
            support_end: atom_end.max(dens_end),
        })
    }

    /// A single matrix-weighted atom.
    pub fn dirac(location: f64, weight: DMatrix<f64>) -> Result<Self> {
        let (r, c) = (weight.nrows(), weight.ncols());
        Self::from_parts(r, c, vec![(location, weight)], None)
    }

    /// Scalar atom `w · δ_loc`.
    pub fn dirac_scalar(location: f64, w: f64) -> Self {
        Self::dirac(location, DMatrix::from_element(1, 1, w)).unwrap()
    }

    /// `δ_0 · I_n`, the identity of the convolution algebra.
    pub fn identity(n: usize) -> Self {
        Self::dirac(0.0, DMatrix::identity(n, n)).unwrap()
    }

    /// Density-only measure.
    pub fn from_density(rows: usize, cols: usize, density: Density) -> Result<Self> {
        Self::from_parts(rows, cols, Vec::new(), Some(density))
    }

    /// Scalar density from cell averages.
    pub fn scalar_density(step: f64, samples: &[f64]) -> Self {
        let cells = samples.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        Self::from_density(1, 1, Density { step, samples: cells }).unwrap()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.density.is_none()
    }

    /// Entry `(i, j)` as a scalar measure.
    pub fn entry(&self, i: usize, j: usize) -> Result<HybridMeasure> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::InvalidInput(format!("entry ({i},{j}) out of range")));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| (a.location, DMatrix::from_element(1, 1, a.weight[(i, j)])))
            .collect();
        let density = self.density.as_ref().map(|d| Density {
            step: d.step,
            samples: d.samples.iter().map(|m| DMatrix::from_element(1, 1, m[(i, j)])).collect(),
        });
        Self::from_parts(1, 1, atoms, density)
    }

    /// Measure scaled by a constant.
    pub fn scaled(&self, alpha: f64) -> HybridMeasure {
        let atoms = self.atoms.iter().map(|a| (a.location, &a.weight * alpha)).collect();
        let density = self.density.as_ref().map(|d| Density {
            step: d.step,
            samples: d.samples.iter().map(|m| m * alpha).collect(),
        });
        Self::from_parts(self.rows, self.cols, atoms, density).unwrap()
    }

    /// `self + alpha * other`. Densities on different grids are resampled to
    /// the finer step first.
    pub fn add_scaled(&self, other: &HybridMeasure, alpha: f64) -> Result<HybridMeasure> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "cannot add {}x{} and {}x{} measures",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut atoms: Vec<(f64, DMatrix<f64>)> =
            self.atoms.iter().map(|a| (a.location, a.weight.clone())).collect();
        atoms.extend(other.atoms.iter().map(|a| (a.location, &a.weight * alpha)));

        let density = match (&self.density, &other.density) {
            (None, None) => None,
            (Some(d), None) => Some(d.clone()),
            (None, Some(d)) => Some(Density {
                step: d.step,
                samples: d.samples.iter().map(|m| m * alpha).collect(),
            }),
            (Some(a), Some(b)) => {
                let step = a.step.min(b.step);
                let ra = a.resample(step, self.rows, self.cols);
                let rb = b.resample(step, self.rows, self.cols);
                let len = ra.samples.len().max(rb.samples.len());
                let zero = DMatrix::zeros(self.rows, self.cols);
                let samples = (0..len)
                    .map(|i| {
                        let x = ra.samples.get(i).unwrap_or(&zero);
                        let y = rb.samples.get(i).unwrap_or(&zero);
                        x + y * alpha
                    })
                    .collect();
                Some(Density { step, samples })
            }
        };
        Self::from_parts(self.rows, self.cols, atoms, density)
    }

    /// Convolution `self * other`. Matrix weights multiply in operand order.
    ///
    /// Atom pairs produce atoms at summed locations; an atom shifts a density
    /// (with exact re-averaging of the piecewise-constant representative onto
    /// the canonical grid); two densities convolve on the finer of the two
    /// steps with the trapezoid-equivalent rule.
    pub fn convolve(&self, other: &HybridMeasure) -> Result<HybridMeasure> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot convolve {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (rows, cols) = (self.rows, other.cols);
        let mut atoms: Vec<(f64, DMatrix<f64>)> = Vec::new();
        for a in &self.atoms {
            for b in &other.atoms {
                atoms.push((a.location + b.location, &a.weight * &b.weight));
            }
        }

        let mut densities: Vec<Density> = Vec::new();
        if let Some(db) = &other.density {
            for a in &self.atoms {
                densities.push(shift_density(db, a.location, |s| &a.weight * s));
            }
        }
        if let Some(da) = &self.density {
            for b in &other.atoms {
                densities.push(shift_density(da, b.location, |s| s * &b.weight));
            }
            if let Some(db) = &other.density {
                densities.push(convolve_densities(da, db, rows, cols));
            }
        }

        let density = densities.into_iter().try_fold(None::<Density>, |acc, d| {
            Ok::<_, Error>(match acc {
                None => Some(d),
                Some(prev) => {
                    let step = prev.step.min(d.step);
                    let ra = prev.resample(step, rows, cols);
                    let rb = d.resample(step, rows, cols);
                    let len = ra.samples.len().max(rb.samples.len());
                    let zero = DMatrix::zeros(rows, cols);
                    let samples = (0..len)
                        .map(|i| {
                            ra.samples.get(i).unwrap_or(&zero) + rb.samples.get(i).unwrap_or(&zero)
                        })
                        .collect();
                    Some(Density { step, samples })
                }
            })
        })?;
        Self::from_parts(rows, cols, atoms, density)
    }

    /// Laplace transform `∫ e^{-zt} μ(dt)`: exact on atoms, cell-midpoint
    /// rule on the density.
    pub fn laplace(&self, z: Complex) -> DMatrix<Complex> {
        let mut out = DMatrix::<Complex>::zeros(self.rows, self.cols);
        for a in &self.atoms {
            let e = (-z * a.location).exp();
            out.zip_apply(&a.weight, |o, w| *o += e * w);
        }
        if let Some(d) = &self.density {
            let h = d.step;
            for (i, s) in d.samples.iter().enumerate() {
                let t = (i as f64 + 0.5) * h;
                let e = (-z * t).exp() * h;
                out.zip_apply(s, |o, w| *o += e * w);
            }
        }
        out
    }

    /// Scalar Laplace value (1x1 measures only).
    pub fn laplace_scalar(&self, z: Complex) -> Complex {
        self.laplace(z)[(0, 0)]
    }

    /// `∫ e^{νt} |μ|(dt)` with `|·|` the spectral norm of matrix weights.
    /// Atoms contribute exactly; density cells use the exact cell integral
    /// of the exponential against the constant cell value.
    pub fn weighted_tv(&self, nu: f64) -> Result<WeightedTv> {
        if nu < 0.0 {
            return Err(Error::InvalidInput("weighted TV rate must be nonnegative".into()));
        }
        let mut value = 0.0;
        for a in &self.atoms {
            value += spectral_norm(&a.weight) * (nu * a.location).exp();
        }
        if let Some(d) = &self.density {
            let h = d.step;
            for (i, s) in d.samples.iter().enumerate() {
                let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                let cell = if nu == 0.0 {
                    h
                } else {
                    ((nu * b).exp() - (nu * a).exp()) / nu
                };
                value += spectral_norm(s) * cell;
            }
        }
        Ok(WeightedTv { nu, value })
    }

    /// Weights per grid node `i*h` for `i = 0..=ceil(support_end/h)`: atoms
    /// snap to the nearest node (ties round down, displacement recorded) and
    /// the density contributes its exact mass over each centered cell.
    /// Total mass is conserved.
    pub fn discretize(&self, h: f64) -> Result<DiscretizedMeasure> {
        if h <= 0.0 {
            return Err(Error::InvalidInput("discretization step must be positive".into()));
        }
        let len = (self.support_end / h - 1e-9).ceil().max(0.0) as usize + 1;
        let mut weights = vec![DMatrix::zeros(self.rows, self.cols); len];
        let mut atom_snaps = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            // nearest index, exact half rounds down
            let idx = ((a.location / h - 0.5).ceil().max(0.0) as usize).min(len - 1);
            weights[idx] += &a.weight;
            atom_snaps.push(AtomSnap {
                location: a.location,
                index: idx,
                error: (idx as f64 * h - a.location).abs(),
            });
        }
        if let Some(d) = &self.density {
            let d_end = d.step * d.samples.len() as f64;
            for (i, w) in weights.iter_mut().enumerate() {
                let lo = ((i as f64 - 0.5) * h).max(0.0);
                let hi = if i + 1 == len { f64::INFINITY } else { (i as f64 + 0.5) * h };
                let hi = hi.min(d_end);
                if hi <= lo {
                    continue;
                }
                let c0 = (lo / d.step + 1e-12).floor().max(0.0) as usize;
                let c1 = ((hi / d.step - 1e-12).ceil() as usize).min(d.samples.len());
                for c in c0..c1 {
                    let a = lo.max(c as f64 * d.step);
                    let b = hi.min((c + 1) as f64 * d.step);
                    if b > a {
                        *w += &d.samples[c] * (b - a);
                    }
                }
            }
        }
        Ok(DiscretizedMeasure { step: h, weights, atom_snaps })
    }

    /// Structured text record (debugging dump). Values carry 17 significant
    /// digits so the record round-trips f64 exactly.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(
            s,
            "hybrid-measure rows={} cols={} support_end={:.16e}",
            self.rows, self.cols, self.support_end
        )
        .unwrap();
        for a in &self.atoms {
            let w: Vec<String> = a.weight.transpose().iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(s, "atom location={:.16e} weight={}", a.location, w.join(",")).unwrap();
        }
        if let Some(d) = &self.density {
            writeln!(s, "density step={:.16e} cells={}", d.step, d.samples.len()).unwrap();
            for m in &d.samples {
                let w: Vec<String> = m.transpose().iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(s, "cell {}", w.join(",")).unwrap();
            }
        }
        s
    }
}

fn steps_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.max(b)
}

/// Spectral (operator) norm of a real matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.singular_values().max()
}

/// Shift a density by `c >= 0` and apply a weight map to each sample.
/// The shifted piecewise-constant function is re-averaged exactly onto the
/// canonical grid: with `c = (q + φ) step`, the new cell `k` averages
/// `φ f[k-q-1] + (1-φ) f[k-q]`.
fn shift_density(
    d: &Density,
    c: f64,
    weigh: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
) -> Density {
    let h = d.step;
    let ratio = c / h;
    let mut q = ratio.floor() as usize;
    let mut phi = ratio - ratio.floor();
    if phi > 1.0 - 1e-9 {
        q += 1;
        phi = 0.0;
    } else if phi < 1e-9 {
        phi = 0.0;
    }
    let extra = if phi == 0.0 { 0 } else { 1 };
    let len = d.samples.len() + q + extra;
    let (rows, cols) = d.shape().unwrap_or((1, 1));
    let zero = DMatrix::zeros(rows, cols);
    let samples = (0..len)
        .map(|k| {
            let prev = if k >= q + 1 { d.samples.get(k - q - 1) } else { None };
            let cur = if k >= q { d.samples.get(k - q) } else { None };
            let v = prev.unwrap_or(&zero) * phi + cur.unwrap_or(&zero) * (1.0 - phi);
            weigh(&v)
        })
        .collect();
    Density { step: h, samples }
}

/// Exact convolution of two piecewise-constant densities on a common grid:
/// `c_k = (h/2) (u_k + u_{k-1})` with `u_k = Σ_{i+j=k} A_i B_j`.
fn convolve_densities(a: &Density, b: &Density, rows: usize, cols: usize) -> Density {
    let step = a.step.min(b.step);
    let (ar, ac) = a.shape().unwrap_or((rows, rows));
    let (br, bc) = b.shape().unwrap_or((cols, cols));
    let ra = a.resample(step, ar, ac);
    let rb = b.resample(step, br, bc);
    let (m, n) = (ra.samples.len(), rb.samples.len());
    if m == 0 || n == 0 {
        return Density { step, samples: Vec::new() };
    }
    let mut u = vec![DMatrix::<f64>::zeros(rows, cols); m + n - 1];
    for (i, x) in ra.samples.iter().enumerate() {
        for (j, y) in rb.samples.iter().enumerate() {
            u[i + j] += x * y;
        }
    }
    let zero = DMatrix::zeros(rows, cols);
    let samples = (0..m + n)
        .map(|k| {
            let cur = u.get(k).unwrap_or(&zero);
            let prev = if k >= 1 { u.get(k - 1).unwrap_or(&zero) } else { &zero };
            (cur + prev) * (step / 2.0)
        })
        .collect();
    Density { step, samples }
}
