//! Built-in example systems.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::FRAC_PI_2;

use crate::measure::Density;
use crate::model::{IdeSystem, InputDelay, StateDelay};

/// A ready-to-run example: plant plus default numerical parameters and
/// initial conditions.
pub struct PresetBundle {
    pub system: IdeSystem,
    /// Default grid step for discretization, synthesis and simulation.
    pub step: f64,
    /// Default simulation end time.
    pub t_end: f64,
    /// Candidate rate for the principal-part certificate.
    pub nu_tilde: f64,
    /// Candidate rate for the stabilizability check.
    pub nu_bar: f64,
}

impl PresetBundle {
    /// Initial state history on `[-τ*, 0]`.
    pub fn initial_state(&self, t: f64) -> DVector<f64> {
        DVector::from_element(1, 0.2 * (2.0 * t).cos() * (t / 3.0).exp())
    }

    /// Initial input history on `[-θ*, 0]`.
    pub fn initial_input(&self, _t: f64) -> f64 {
        0.0
    }
}

/// The bundled worked example: a scalar plant with two pointwise state
/// delays, two pointwise input delays, and distributed kernels
/// `N(η) = -sin(η)` on `[0, 4]`, `M(η) = sqrt(2η)` on `[0, π/2]`.
pub fn paper_example() -> PresetBundle {
    paper_example_with_step(0.01)
}

/// Same plant with a caller-chosen kernel sampling step.
pub fn paper_example_with_step(step: f64) -> PresetBundle {
    let n_kernel = Density::from_fn(step, 4.0, 1, 1, |eta| {
        DMatrix::from_element(1, 1, -eta.sin())
    })
    .unwrap();
    let m_kernel = Density::from_fn(step, FRAC_PI_2, 1, 1, |eta| {
        DMatrix::from_element(1, 1, (2.0 * eta).sqrt())
    })
    .unwrap();
    let system = IdeSystem::new(
        1,
        vec![
            StateDelay { tau: 2.0, gain: DMatrix::from_element(1, 1, -0.2) },
            StateDelay { tau: 4.0, gain: DMatrix::from_element(1, 1, -0.4) },
        ],
        vec![
            InputDelay { theta: 1.0, gain: DVector::from_element(1, 2.0) },
            InputDelay { theta: FRAC_PI_2, gain: DVector::from_element(1, 7.5) },
        ],
        n_kernel,
        m_kernel,
        4.0,
        FRAC_PI_2,
    )
    .unwrap();
    PresetBundle { system, step, t_end: 40.0, nu_tilde: 0.05, nu_bar: 0.05 }
}

/// Look up a preset by its command-line name.
pub fn by_name(name: &str) -> Option<PresetBundle> {
    match name {
        "paper-example" => Some(paper_example()),
        _ => None,
    }
}
