//! Plant and controller data: the delay system, its Laplace symbols, the
//! state/input measures, and the closed-loop characteristic matrix.
//!
//! The plant is
//!
//! ```text
//! X(t) = Σ_k A_k X(t-τ_k) + ∫_0^{τ*} N(η) X(t-η) dη
//!      + Σ_j B_j U(t-θ_j) + ∫_0^{θ*} M(η) U(t-η) dη
//! ```
//!
//! with strictly increasing delays, `τ_k ∈ (0, τ*]`, `θ_j ∈ [0, θ*]`, and
//! square-integrable kernels. The controller is autoregressive:
//!
//! ```text
//! U(t) = Σ_i ∫_0^{min(t,S_i)} g_i(η) X_i(t-η) dη
//!      + ∫_0^{min(t,S_{n+1})} f(η) U(t-η) dη.
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measure::{Complex, Density, HybridMeasure};

/// One pointwise state delay `A_k X(t - τ_k)`.
#[derive(Debug, Clone)]
pub struct StateDelay {
    pub tau: f64,
    pub gain: DMatrix<f64>,
}

/// One pointwise input delay `B_j U(t - θ_j)`.
#[derive(Debug, Clone)]
pub struct InputDelay {
    pub theta: f64,
    pub gain: DVector<f64>,
}

/// The full plant datum.
#[derive(Debug, Clone)]
pub struct IdeSystem {
    n: usize,
    state_delays: Vec<StateDelay>,
    input_delays: Vec<InputDelay>,
    state_kernel: Density,
    input_kernel: Density,
    tau_star: f64,
    theta_star: f64,
}

impl IdeSystem {
    pub fn new(
        n: usize,
        state_delays: Vec<StateDelay>,
        input_delays: Vec<InputDelay>,
        state_kernel: Density,
        input_kernel: Density,
        tau_star: f64,
        theta_star: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("state dimension must be positive".into()));
        }
        if tau_star <= 0.0 || theta_star <= 0.0 {
            return Err(Error::InvalidInput("delay horizons must be positive".into()));
        }
        let mut prev = 0.0;
        for d in &state_delays {
            if d.tau <= prev || d.tau > tau_star + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "state delays must be strictly increasing in (0, {tau_star}]; got {}",
                    d.tau
                )));
            }
            if d.gain.nrows() != n || d.gain.ncols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "state gain must be {n}x{n}, got {}x{}",
                    d.gain.nrows(),
                    d.gain.ncols()
                )));
            }
            if d.gain.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("state gain has non-finite entries".into()));
            }
            prev = d.tau;
        }
        let mut prev = -1.0;
        for d in &input_delays {
            if d.theta <= prev || d.theta < 0.0 || d.theta > theta_star + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "input delays must be strictly increasing in [0, {theta_star}]; got {}",
                    d.theta
                )));
            }
            if d.gain.nrows() != n {
                return Err(Error::ShapeMismatch(format!(
                    "input gain must have {n} rows, got {}",
                    d.gain.nrows()
                )));
            }
            if d.gain.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("input gain has non-finite entries".into()));
            }
            prev = d.theta;
        }
        for (kernel, rows, cols, horizon, what) in [
            (&state_kernel, n, n, tau_star, "state"),
            (&input_kernel, n, 1, theta_star, "input"),
        ] {
            if let Some(s) = kernel.samples.first() {
                if s.nrows() != rows || s.ncols() != cols {
                    return Err(Error::ShapeMismatch(format!(
                        "{what} kernel samples must be {rows}x{cols}"
                    )));
                }
            }
            if kernel.step * kernel.samples.len() as f64 > horizon + kernel.step * 0.5 + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "{what} kernel support exceeds its horizon {horizon}"
                )));
            }
        }
        Ok(IdeSystem {
            n,
            state_delays,
            input_delays,
            state_kernel,
            input_kernel,
            tau_star,
            theta_star,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }

    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    pub fn state_delays(&self) -> &[StateDelay] {
        &self.state_delays
    }

    pub fn input_delays(&self) -> &[InputDelay] {
        &self.input_delays
    }

    pub fn state_kernel(&self) -> &Density {
        &self.state_kernel
    }

    pub fn input_kernel(&self) -> &Density {
        &self.input_kernel
    }

    /// The state-side measure `Q = δ_0 I - Σ_k A_k δ_{τ_k} - N dt` (n x n).
    pub fn state_measure(&self) -> HybridMeasure {
        let mut atoms = vec![(0.0, DMatrix::identity(self.n, self.n))];
        for d in &self.state_delays {
            atoms.push((d.tau, -&d.gain));
        }
        let density = Density {
            step: self.state_kernel.step,
            samples: self.state_kernel.samples.iter().map(|m| -m).collect(),
        };
        HybridMeasure::from_parts(self.n, self.n, atoms, Some(density)).unwrap()
    }

    /// The input-side measure `P = Σ_j B_j δ_{θ_j} + M dt` (n x 1).
    pub fn input_measure(&self) -> HybridMeasure {
        let atoms = self
            .input_delays
            .iter()
            .map(|d| (d.theta, DMatrix::from_column_slice(self.n, 1, d.gain.as_slice())))
            .collect();
        HybridMeasure::from_parts(self.n, 1, atoms, Some(self.input_kernel.clone())).unwrap()
    }

    /// Principal-part symbol `Δ_0(z) = I - Σ_k A_k e^{-τ_k z}`.
    pub fn delta0_at(&self, z: Complex) -> DMatrix<Complex> {
        let mut out = DMatrix::<Complex>::identity(self.n, self.n);
        for d in &self.state_delays {
            let e = (-z * d.tau).exp();
            out.zip_apply(&d.gain, |o, a| *o -= e * a);
        }
        out
    }

    /// State symbol `q(z) = Δ_0(z) - ∫_0^{τ*} N(η) e^{-ηz} dη`.
    pub fn state_symbol(&self, z: Complex) -> DMatrix<Complex> {
        let mut out = self.delta0_at(z);
        let nhat = kernel_transform(&self.state_kernel, z, self.n, self.n);
        out -= nhat;
        out
    }

    /// Input symbol `p(z) = Σ_j B_j e^{-θ_j z} + ∫_0^{θ*} M(η) e^{-ηz} dη`.
    pub fn input_symbol(&self, z: Complex) -> DMatrix<Complex> {
        let mut out = kernel_transform(&self.input_kernel, z, self.n, 1);
        for d in &self.input_delays {
            let e = (-z * d.theta).exp();
            for i in 0..self.n {
                out[(i, 0)] += e * d.gain[i];
            }
        }
        out
    }

    /// Closed-loop characteristic matrix
    /// `A(z) = [[q(z), -p(z)], [-ĝ(z), 1 - f̂(z)]]` of size (n+1) x (n+1).
    pub fn characteristic_matrix(
        &self,
        gains: &ControllerGains,
        z: Complex,
    ) -> Result<DMatrix<Complex>> {
        if gains.dim() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "controller has {} state gains, plant dimension is {}",
                gains.dim(),
                self.n
            )));
        }
        let n = self.n;
        let q = self.state_symbol(z);
        let p = self.input_symbol(z);
        let mut a = DMatrix::<Complex>::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n)).copy_from(&q);
        for i in 0..n {
            a[(i, n)] = -p[(i, 0)];
        }
        for j in 0..n {
            a[(n, j)] = -gains.state_gain_transform(j, z);
        }
        a[(n, n)] = Complex::new(1.0, 0.0) - gains.feedback_transform(z);
        Ok(a)
    }
}

/// Midpoint-rule Laplace transform of a cell-average kernel; matches the
/// density rule used by [`HybridMeasure::laplace`].
pub fn kernel_transform(kernel: &Density, z: Complex, rows: usize, cols: usize) -> DMatrix<Complex> {
    let mut out = DMatrix::<Complex>::zeros(rows, cols);
    let h = kernel.step;
    for (i, s) in kernel.samples.iter().enumerate() {
        let e = (-z * ((i as f64 + 0.5) * h)).exp() * h;
        out.zip_apply(s, |o, v| *o += e * v);
    }
    out
}

/// Controller kernels sampled at grid nodes: `state_gains[i][l] = g_{i+1}(l h)`
/// on `[0, S_{i+1}]` and `feedback[l] = f(l h)` on `[0, S_{n+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    step: f64,
    state_gains: Vec<Vec<f64>>,
    feedback: Vec<f64>,
    supports: Vec<f64>,
}

impl ControllerGains {
    pub fn new(
        step: f64,
        state_gains: Vec<Vec<f64>>,
        feedback: Vec<f64>,
        supports: Vec<f64>,
    ) -> Result<Self> {
        if step <= 0.0 {
            return Err(Error::InvalidInput("gain grid step must be positive".into()));
        }
        if supports.len() != state_gains.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} supports, got {}",
                state_gains.len() + 1,
                supports.len()
            )));
        }
        if supports.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidInput("supports must be positive".into()));
        }
        if state_gains.iter().any(|g| g.is_empty()) || feedback.is_empty() {
            return Err(Error::InvalidInput("gain sample arrays must be nonempty".into()));
        }
        Ok(ControllerGains { step, state_gains, feedback, supports })
    }

    /// All-zero gains with supports `S_i = τ*`, `S_{n+1} = θ*`.
    pub fn zero(n: usize, step: f64, tau_star: f64, theta_star: f64) -> Self {
        let ns = (tau_star / step + 1e-9).floor() as usize;
        let nf = (theta_star / step + 1e-9).floor() as usize;
        let mut supports = vec![tau_star; n];
        supports.push(theta_star);
        ControllerGains {
            step,
            state_gains: vec![vec![0.0; ns + 1]; n],
            feedback: vec![0.0; nf + 1],
            supports,
        }
    }

    pub fn dim(&self) -> usize {
        self.state_gains.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn state_gains(&self) -> &[Vec<f64>] {
        &self.state_gains
    }

    pub fn feedback(&self) -> &[f64] {
        &self.feedback
    }

    pub fn supports(&self) -> &[f64] {
        &self.supports
    }

    pub fn is_zero(&self) -> bool {
        self.state_gains.iter().all(|g| g.iter().all(|&v| v == 0.0))
            && self.feedback.iter().all(|&v| v == 0.0)
    }

    /// `ĝ_{i+1}(z)` by trapezoid quadrature on the sample grid.
    pub fn state_gain_transform(&self, i: usize, z: Complex) -> Complex {
        trapezoid_transform(&self.state_gains[i], self.step, z)
    }

    /// `f̂(z)` by trapezoid quadrature on the sample grid.
    pub fn feedback_transform(&self, z: Complex) -> Complex {
        trapezoid_transform(&self.feedback, self.step, z)
    }
}

fn trapezoid_transform(samples: &[f64], h: f64, z: Complex) -> Complex {
    let mut acc = Complex::new(0.0, 0.0);
    let last = samples.len() - 1;
    for (l, &v) in samples.iter().enumerate() {
        let w = if l == 0 || l == last { 0.5 } else { 1.0 };
        acc += (-z * (l as f64 * h)).exp() * (v * w);
    }
    acc * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn empty_system(n: usize) -> IdeSystem {
        IdeSystem::new(
            n,
            Vec::new(),
            Vec::new(),
            Density::zero(0.01),
            Density::zero(0.01),
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn empty_system_has_identity_state_measure() {
        let sys = empty_system(2);
        let q = sys.state_measure();
        assert_eq!(q.atoms().len(), 1);
        assert_eq!(q.atoms()[0].weight, DMatrix::identity(2, 2));
        assert!(q.density().is_none());
        let z = Complex::new(0.3, -2.0);
        let qz = sys.state_symbol(z);
        assert_eq!(qz, DMatrix::identity(2, 2).map(|v| Complex::new(v, 0.0)));
    }

    #[test]
    fn reference_example_measures() {
        let sys = presets::paper_example().system;
        let q = sys.state_measure();
        // δ0 + 0.2 δ2 + 0.4 δ4 + sin(η) dη
        let locs: Vec<f64> = q.atoms().iter().map(|a| a.location).collect();
        assert_eq!(locs, vec![0.0, 2.0, 4.0]);
        let w: Vec<f64> = q.atoms().iter().map(|a| a.weight[(0, 0)]).collect();
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.2, epsilon = 1e-15);
        assert_relative_eq!(w[2], 0.4, epsilon = 1e-15);
        let dens = q.density().unwrap();
        // density is -N = +sin: check one interior cell average
        let k = 100;
        let want = ((k as f64 * 0.01).cos() - ((k + 1) as f64 * 0.01).cos()) / 0.01;
        assert_relative_eq!(dens.samples[k][(0, 0)], want, epsilon = 1e-9);

        let p = sys.input_measure();
        let locs: Vec<f64> = p.atoms().iter().map(|a| a.location).collect();
        assert_eq!(locs[0], 1.0);
        assert_relative_eq!(locs[1], std::f64::consts::FRAC_PI_2, epsilon = 1e-15);

        // q(0) = 1.6 + (1 - cos 4), p(0) = 9.5 + (2√2/3)(π/2)^{3/2}
        let z0 = Complex::new(0.0, 0.0);
        let q0 = q.laplace_scalar(z0).re;
        assert_relative_eq!(q0, 1.6 + (1.0 - 4.0_f64.cos()), epsilon = 1e-9);
        let p0 = p.laplace_scalar(z0).re;
        let want =
            9.5 + (2.0 * 2.0_f64.sqrt() / 3.0) * std::f64::consts::FRAC_PI_2.powf(1.5);
        assert_relative_eq!(p0, want, epsilon = 1e-5);
    }

    #[test]
    fn delta0_examples() {
        let sys = empty_system(3);
        let z = Complex::new(-0.2, 5.0);
        assert_eq!(sys.delta0_at(z), DMatrix::identity(3, 3).map(|v| Complex::new(v, 0.0)));

        let sys = presets::paper_example().system;
        let d0 = sys.delta0_at(Complex::new(0.0, 0.0))[(0, 0)];
        assert_relative_eq!(d0.re, 1.6, epsilon = 1e-15);
        assert_relative_eq!(d0.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn symbols_agree_with_measure_transforms() {
        let sys = presets::paper_example().system;
        let q_meas = sys.state_measure();
        let p_meas = sys.input_measure();
        let mut seed = 7u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10 {
            let z = Complex::new(2.0 * next() - 0.5, 6.0 * next() - 3.0);
            let q1 = sys.state_symbol(z)[(0, 0)];
            let q2 = q_meas.laplace_scalar(z);
            assert!((q1 - q2).norm() <= 1e-8 * (1.0 + q2.norm()));
            let p1 = sys.input_symbol(z)[(0, 0)];
            let p2 = p_meas.laplace_scalar(z);
            assert!((p1 - p2).norm() <= 1e-8 * (1.0 + p2.norm()));
            // δ0 part: q(z) + N̂(z) = L(Q + N dt)(z) = Δ0(z)
            let d0 = sys.delta0_at(z)[(0, 0)];
            let nhat = kernel_transform(sys.state_kernel(), z, 1, 1)[(0, 0)];
            assert!((q1 + nhat - d0).norm() <= 1e-10 * (1.0 + d0.norm()));
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let sys = presets::paper_example().system;
        let gains = ControllerGains::new(
            0.01,
            vec![vec![0.3, -0.1, 0.2]],
            vec![0.5, 0.25],
            vec![4.0, std::f64::consts::FRAC_PI_2],
        )
        .unwrap();
        for (re, im) in [(0.1, 1.3), (-0.02, 7.7), (1.0, 0.4)] {
            let z = Complex::new(re, im);
            let zb = Complex::new(re, -im);
            let a = sys.characteristic_matrix(&gains, z).unwrap();
            let b = sys.characteristic_matrix(&gains, zb).unwrap();
            let da = a.determinant();
            let db = b.determinant();
            assert_relative_eq!(da.re, db.re, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(da.im, -db.im, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_gains_characteristic_is_state_determinant() {
        let sys = presets::paper_example().system;
        let gains = ControllerGains::zero(1, 0.01, sys.tau_star(), sys.theta_star());
        let z = Complex::new(0.2, 3.0);
        let a = sys.characteristic_matrix(&gains, z).unwrap();
        assert_eq!(a[(1, 0)], Complex::new(0.0, 0.0));
        assert_eq!(a[(1, 1)], Complex::new(1.0, 0.0));
        let det_a = a.determinant();
        let det_q = sys.state_symbol(z).determinant();
        assert!((det_a - det_q).norm() <= 1e-12 * (1.0 + det_q.norm()));
    }

    #[test]
    fn two_by_two_determinant_formula() {
        let sys = presets::paper_example().system;
        let gains = ControllerGains::new(
            0.01,
            vec![vec![0.1, 0.2, -0.3, 0.05]],
            vec![0.4, -0.2, 0.1],
            vec![4.0, std::f64::consts::FRAC_PI_2],
        )
        .unwrap();
        let z = Complex::new(0.05, -2.2);
        let a = sys.characteristic_matrix(&gains, z).unwrap();
        let det = a.determinant();
        let q = sys.state_symbol(z)[(0, 0)];
        let p = sys.input_symbol(z)[(0, 0)];
        let g = gains.state_gain_transform(0, z);
        let f = gains.feedback_transform(z);
        let want = q * (Complex::new(1.0, 0.0) - f) - p * g;
        assert!((det - want).norm() <= 1e-12 * (1.0 + want.norm()));
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let bad = IdeSystem::new(
            1,
            vec![
                StateDelay { tau: 2.0, gain: DMatrix::from_element(1, 1, 0.1) },
                StateDelay { tau: 2.0, gain: DMatrix::from_element(1, 1, 0.2) },
            ],
            Vec::new(),
            Density::zero(0.01),
            Density::zero(0.01),
            4.0,
            1.0,
        );
        assert!(bad.is_err());
        let bad = IdeSystem::new(
            1,
            vec![StateDelay { tau: 5.0, gain: DMatrix::from_element(1, 1, 0.1) }],
            Vec::new(),
            Density::zero(0.01),
            Density::zero(0.01),
            4.0,
            1.0,
        );
        assert!(bad.is_err());
    }
}
