//! Numerical certificates and estimates for the design margins: stability of
//! the principal part, spectral stabilizability, and the positivity gap of
//! the minor sum over a right half-plane.
//!
//! The half-plane infima are not computable exactly; each check states
//! plainly whether its number is a certificate (small-gain bound) or a grid
//! estimate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::measure::{spectral_norm, Complex};
use crate::model::IdeSystem;
use crate::sweep::{sweep, ExpChannel, GridSpec};

/// Outcome of the principal-part stability check.
#[derive(Debug, Clone, Copy)]
pub struct PrincipalCertificate {
    pub nu_tilde: f64,
    /// `Σ_k ||A_k||_op e^{ν̃ τ_k}`; below 1 the check is a certificate.
    pub rho: f64,
    pub certified: bool,
    /// Lower bound for `|det Δ_0|` on the half-plane when certified,
    /// otherwise the grid minimum.
    pub eta_lower: f64,
}

/// Outcome of the stabilizability rank check.
#[derive(Debug, Clone, Copy)]
pub struct StabilizabilityCheck {
    pub nu_bar: f64,
    pub ok: bool,
    /// Grid minimum of the n-th singular value of `[q(z), -p(z)]`.
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rank_tol: f64,
}

/// Grid estimate of `d = inf Σ_j |r_j(z)|` with an asymptotic floor.
#[derive(Debug, Clone, Copy)]
pub struct CoronaGap {
    pub nu: f64,
    pub grid_min: f64,
    /// Grid maximum of `|Ñ(z)|` on the outer band `Im z > im_max / 2`.
    pub tail: f64,
    /// `max(0, eta_lower - tail)`: beyond the grid the minor `r_{n+1}`
    /// approaches `det Δ_0`.
    pub floor: f64,
    /// `min(grid_min, floor)`; never a certificate.
    pub estimate: f64,
}

/// Aggregated margins from a single shared sweep.
#[derive(Debug, Clone, Copy)]
pub struct SpectralReport {
    pub principal: PrincipalCertificate,
    pub stabilizability: StabilizabilityCheck,
    pub gap: CoronaGap,
    pub grid: GridSpec,
    /// Decay rate selected by [`choose_rates`], once chosen.
    pub nu: Option<f64>,
}

/// Default relative threshold for the numerical rank decision.
pub const RANK_TOL_REL: f64 = 1e-9;

/// Small-gain certificate for the principal part: if
/// `ρ = Σ ||A_k|| e^{ν̃ τ_k} < 1` then `|det Δ_0| ≥ (1-ρ)^n` on the
/// half-plane `Re z > -ν̃`. Otherwise falls back to the grid minimum of
/// `|det Δ_0|` (not a certificate).
pub fn certify_principal_part(
    sys: &IdeSystem,
    nu_tilde: f64,
    fallback_grid: &GridSpec,
) -> Result<PrincipalCertificate> {
    if nu_tilde <= 0.0 {
        return Err(Error::Config("nu_tilde must be positive".into()));
    }
    fallback_grid.validate()?;
    let rho: f64 = sys
        .state_delays()
        .iter()
        .map(|d| spectral_norm(&d.gain) * (nu_tilde * d.tau).exp())
        .sum();
    if rho < 1.0 {
        return Ok(PrincipalCertificate {
            nu_tilde,
            rho,
            certified: true,
            eta_lower: (1.0 - rho).powi(sys.dim() as i32),
        });
    }
    let grid = GridSpec {
        re_min: fallback_grid.re_min.min(-nu_tilde),
        ..*fallback_grid
    };
    let channels = delta0_channels(sys);
    let n = sys.dim();
    let mut min_abs = f64::INFINITY;
    sweep(&channels, &grid, |_z, vals| {
        let d = det_from_values(vals, n);
        min_abs = min_abs.min(d.norm());
    });
    Ok(PrincipalCertificate { nu_tilde, rho, certified: false, eta_lower: min_abs })
}

/// Grid check of `rank [q(z), -p(z)] = n` via the n-th singular value,
/// with a relative numerical-rank threshold.
pub fn check_spectral_stabilizability(
    sys: &IdeSystem,
    nu_bar: f64,
    grid: &GridSpec,
    rank_tol_rel: f64,
) -> Result<StabilizabilityCheck> {
    if nu_bar <= 0.0 {
        return Err(Error::Config("nu_bar must be positive".into()));
    }
    grid.validate()?;
    let grid = GridSpec { re_min: grid.re_min.min(-nu_bar), ..*grid };
    let channels = SymbolChannels::new(sys);
    let n = sys.dim();
    let mut sigma_min = f64::INFINITY;
    let mut sigma_max: f64 = 0.0;
    sweep(&channels.all, &grid, |_z, vals| {
        let (lo, hi) = channels.sigma_range(vals, n);
        sigma_min = sigma_min.min(lo);
        sigma_max = sigma_max.max(hi);
    });
    let rank_tol = rank_tol_rel * sigma_max;
    Ok(StabilizabilityCheck { nu_bar, ok: sigma_min > rank_tol, sigma_min, sigma_max, rank_tol })
}

/// Grid estimate of the gap `d = inf_{z ∈ C_ν} Σ_j |r_j(z)|`, extended by
/// the asymptotic floor `eta_lower - max |Ñ|` on the outer imaginary band.
pub fn estimate_corona_gap(
    sys: &IdeSystem,
    nu: f64,
    grid: &GridSpec,
    eta_lower: f64,
) -> Result<CoronaGap> {
    grid.validate()?;
    if grid.step > 0.5 {
        return Err(Error::Config(format!(
            "gap sweep grid too coarse: step {} exceeds 0.5",
            grid.step
        )));
    }
    if nu <= 0.0 {
        return Err(Error::Config("nu must be positive".into()));
    }
    let grid = GridSpec { re_min: grid.re_min.min(-nu), ..*grid };
    let channels = SymbolChannels::new(sys);
    let n = sys.dim();
    let outer = grid.im_max / 2.0;
    let mut grid_min = f64::INFINITY;
    let mut tail: f64 = 0.0;
    sweep(&channels.all, &grid, |z, vals| {
        let s = channels.minor_abs_sum(vals, n);
        grid_min = grid_min.min(s);
        if z.im > outer {
            tail = tail.max(channels.ntilde(vals, n).norm());
        }
    });
    let floor = (eta_lower - tail).max(0.0);
    Ok(CoronaGap { nu, grid_min, tail, floor, estimate: grid_min.min(floor) })
}

/// Run all three margin estimates over one shared sweep.
pub fn run_checks(
    sys: &IdeSystem,
    nu_tilde: f64,
    nu_bar: f64,
    grid: &GridSpec,
    rank_tol_rel: f64,
) -> Result<SpectralReport> {
    if nu_tilde <= 0.0 || nu_bar <= 0.0 {
        return Err(Error::Config("candidate rates must be positive".into()));
    }
    grid.validate()?;
    if grid.step > 0.5 {
        return Err(Error::Config(format!(
            "sweep grid too coarse: step {} exceeds 0.5",
            grid.step
        )));
    }
    let rho: f64 = sys
        .state_delays()
        .iter()
        .map(|d| spectral_norm(&d.gain) * (nu_tilde * d.tau).exp())
        .sum();
    let certified = rho < 1.0;

    let grid_eff = GridSpec {
        re_min: grid.re_min.min(-nu_tilde).min(-nu_bar),
        ..*grid
    };
    let channels = SymbolChannels::new(sys);
    let n = sys.dim();
    let outer = grid_eff.im_max / 2.0;
    let mut min_det_delta0 = f64::INFINITY;
    let mut sigma_min = f64::INFINITY;
    let mut sigma_max: f64 = 0.0;
    let mut gap_min = f64::INFINITY;
    let mut tail: f64 = 0.0;
    sweep(&channels.all, &grid_eff, |z, vals| {
        min_det_delta0 = min_det_delta0.min(channels.det_delta0(vals, n).norm());
        let (lo, hi) = channels.sigma_range(vals, n);
        sigma_min = sigma_min.min(lo);
        sigma_max = sigma_max.max(hi);
        gap_min = gap_min.min(channels.minor_abs_sum(vals, n));
        if z.im > outer {
            tail = tail.max(channels.ntilde(vals, n).norm());
        }
    });

    let eta_lower = if certified { (1.0 - rho).powi(n as i32) } else { min_det_delta0 };
    let rank_tol = rank_tol_rel * sigma_max;
    let floor = (eta_lower - tail).max(0.0);
    let nu_provisional = 0.5 * nu_tilde.min(nu_bar);
    Ok(SpectralReport {
        principal: PrincipalCertificate { nu_tilde, rho, certified, eta_lower },
        stabilizability: StabilizabilityCheck {
            nu_bar,
            ok: sigma_min > rank_tol,
            sigma_min,
            sigma_max,
            rank_tol,
        },
        gap: CoronaGap {
            nu: nu_provisional,
            grid_min: gap_min,
            tail,
            floor,
            estimate: gap_min.min(floor),
        },
        grid: *grid,
        nu: None,
    })
}

/// Select the synthesis decay rate: `ν = 0.5 min(ν̄, ν̃)` by default, or a
/// caller override strictly below `min(ν̄, ν̃)`. Refuses when either
/// assumption check failed.
pub fn choose_rates(report: &SpectralReport, override_nu: Option<f64>) -> Result<f64> {
    if !report.principal.certified {
        return Err(Error::CheckFailed(format!(
            "principal part not certified stable: rho = {:.6} (need < 1); grid |det D0| min = {:.6e}",
            report.principal.rho, report.principal.eta_lower
        )));
    }
    if !report.stabilizability.ok {
        return Err(Error::CheckFailed(format!(
            "spectral stabilizability failed: sigma_min = {:.6e} <= tol {:.6e}",
            report.stabilizability.sigma_min, report.stabilizability.rank_tol
        )));
    }
    let cap = report.principal.nu_tilde.min(report.stabilizability.nu_bar);
    let nu = override_nu.unwrap_or(0.5 * cap);
    if !(nu > 0.0 && nu < cap) {
        return Err(Error::Config(format!(
            "requested rate {nu} is outside (0, min(nu_bar, nu_tilde)) = (0, {cap})"
        )));
    }
    Ok(nu)
}

/// One row of the sweep report CSV.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub re: f64,
    pub im: f64,
    pub abs_det_delta0: f64,
    pub sum_abs_minors: f64,
    pub sigma_min: f64,
}

/// Per-point sweep data for report emission. Meant for coarse grids.
pub fn sweep_rows(sys: &IdeSystem, grid: &GridSpec) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let channels = SymbolChannels::new(sys);
    let n = sys.dim();
    let mut rows = Vec::with_capacity(grid.n_re() * grid.n_im());
    sweep(&channels.all, grid, |z, vals| {
        let (lo, _) = channels.sigma_range(vals, n);
        rows.push(SweepRow {
            re: z.re,
            im: z.im,
            abs_det_delta0: channels.det_delta0(vals, n).norm(),
            sum_abs_minors: channels.minor_abs_sum(vals, n),
            sigma_min: lo,
        });
    });
    Ok(rows)
}

fn delta0_channels(sys: &IdeSystem) -> Vec<ExpChannel> {
    let n = sys.dim();
    let mut chans = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut terms = Vec::new();
            if i == j {
                terms.push((0.0, 1.0));
            }
            for d in sys.state_delays() {
                terms.push((d.tau, -d.gain[(i, j)]));
            }
            chans.push(ExpChannel::from_atoms(terms));
        }
    }
    chans
}

/// Channel layout for the plant symbols: `Δ_0` entries (atoms only), the
/// state-kernel transform entries, and the input symbol entries.
pub(crate) struct SymbolChannels {
    pub all: Vec<ExpChannel>,
    n: usize,
}

impl SymbolChannels {
    pub fn new(sys: &IdeSystem) -> Self {
        let n = sys.dim();
        let mut all = delta0_channels(sys);
        let nk = sys.state_kernel();
        for i in 0..n {
            for j in 0..n {
                let terms = nk
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(c, s)| ((c as f64 + 0.5) * nk.step, nk.step * s[(i, j)]))
                    .collect();
                all.push(ExpChannel::from_atoms(terms));
            }
        }
        let mk = sys.input_kernel();
        for i in 0..n {
            let mut terms: Vec<(f64, f64)> =
                sys.input_delays().iter().map(|d| (d.theta, d.gain[i])).collect();
            terms.extend(
                mk.samples
                    .iter()
                    .enumerate()
                    .map(|(c, s)| ((c as f64 + 0.5) * mk.step, mk.step * s[(i, 0)])),
            );
            all.push(ExpChannel::from_atoms(terms));
        }
        SymbolChannels { all, n }
    }

    fn q_entry(&self, vals: &[Complex], i: usize, j: usize) -> Complex {
        let n = self.n;
        vals[i * n + j] - vals[n * n + i * n + j]
    }

    fn p_entry(&self, vals: &[Complex], i: usize) -> Complex {
        vals[2 * self.n * self.n + i]
    }

    pub fn det_delta0(&self, vals: &[Complex], n: usize) -> Complex {
        det_from_values(&vals[..n * n], n)
    }

    pub fn det_q(&self, vals: &[Complex], n: usize) -> Complex {
        if n == 1 {
            return self.q_entry(vals, 0, 0);
        }
        let m = DMatrix::from_fn(n, n, |i, j| self.q_entry(vals, i, j));
        m.determinant()
    }

    /// `Ñ(z) = det q(z) - det Δ_0(z)`.
    pub fn ntilde(&self, vals: &[Complex], n: usize) -> Complex {
        self.det_q(vals, n) - self.det_delta0(vals, n)
    }

    /// `Σ_{j=1}^{n+1} |r_j(z)|` over the column-deleted minors of `[q, -p]`.
    pub fn minor_abs_sum(&self, vals: &[Complex], n: usize) -> f64 {
        if n == 1 {
            return self.q_entry(vals, 0, 0).norm() + self.p_entry(vals, 0).norm();
        }
        let ext = self.extended_matrix(vals, n);
        (0..=n).map(|drop| minor_determinant(&ext, drop).norm()).sum()
    }

    /// Smallest and largest singular value of `[q(z), -p(z)]`.
    pub fn sigma_range(&self, vals: &[Complex], n: usize) -> (f64, f64) {
        if n == 1 {
            let s = (self.q_entry(vals, 0, 0).norm_sqr() + self.p_entry(vals, 0).norm_sqr())
                .sqrt();
            return (s, s);
        }
        let ext = self.extended_matrix(vals, n);
        let gram = &ext * ext.adjoint();
        let eig = gram.symmetric_eigenvalues();
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
        let hi = eig.iter().cloned().fold(0.0f64, f64::max);
        (lo.sqrt(), hi.sqrt())
    }

    fn extended_matrix(&self, vals: &[Complex], n: usize) -> DMatrix<Complex> {
        DMatrix::from_fn(n, n + 1, |i, j| {
            if j < n {
                self.q_entry(vals, i, j)
            } else {
                -self.p_entry(vals, i)
            }
        })
    }
}

fn det_from_values(vals: &[Complex], n: usize) -> Complex {
    if n == 1 {
        return vals[0];
    }
    let m = DMatrix::from_fn(n, n, |i, j| vals[i * n + j]);
    m.determinant()
}

/// Determinant of `ext` (n x (n+1)) with column `drop` removed.
pub(crate) fn minor_determinant(ext: &DMatrix<Complex>, drop: usize) -> Complex {
    let n = ext.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let src = if j < drop { j } else { j + 1 };
        ext[(i, src)]
    });
    m.determinant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Density;
    use crate::model::{InputDelay, StateDelay};
    use crate::presets;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn coarse_grid() -> GridSpec {
        GridSpec::new(-0.05, 5.0, 25.0, 0.05).unwrap()
    }

    #[test]
    fn empty_system_certifies_with_unit_margin() {
        let sys = crate::model::IdeSystem::new(
            2,
            Vec::new(),
            Vec::new(),
            Density::zero(0.01),
            Density::zero(0.01),
            1.0,
            1.0,
        )
        .unwrap();
        let cert = certify_principal_part(&sys, 0.1, &coarse_grid()).unwrap();
        assert!(cert.certified);
        assert_eq!(cert.rho, 0.0);
        assert_eq!(cert.eta_lower, 1.0);
    }

    #[test]
    fn reference_example_certificate_values() {
        let sys = presets::paper_example().system;
        let c0 = certify_principal_part(&sys, 1e-12, &coarse_grid());
        assert!(c0.is_err()); // rate must be positive

        // at ν̃ -> 0 the bound is ρ = 0.6, η = 0.4
        let c = certify_principal_part(&sys, 1e-9, &coarse_grid()).unwrap();
        assert_relative_eq!(c.rho, 0.6, epsilon = 1e-8);
        assert_relative_eq!(c.eta_lower, 0.4, epsilon = 1e-8);

        let c = certify_principal_part(&sys, 0.05, &coarse_grid()).unwrap();
        assert!(c.certified);
        assert_relative_eq!(c.rho, 0.2 * 0.1f64.exp() + 0.4 * 0.2f64.exp(), epsilon = 1e-12);
        assert_relative_eq!(c.eta_lower, 1.0 - c.rho, epsilon = 1e-12);
    }

    #[test]
    fn certified_bound_is_a_true_lower_bound() {
        let sys = presets::paper_example().system;
        let cert = certify_principal_part(&sys, 0.05, &coarse_grid()).unwrap();
        let mut seed = 42u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let z = Complex::new(-0.05 + 25.0 * next(), 400.0 * next() - 200.0);
            let d = sys.delta0_at(z).determinant().norm();
            assert!(d >= cert.eta_lower - 1e-12, "|det D0({z})| = {d} < {}", cert.eta_lower);
        }
    }

    #[test]
    fn unit_input_atom_keeps_gap_at_least_one() {
        // p ≡ 1: Σ|r_j| ≥ |p| = 1 everywhere
        let sys = crate::model::IdeSystem::new(
            1,
            vec![StateDelay { tau: 1.0, gain: DMatrix::from_element(1, 1, 0.3) }],
            vec![InputDelay { theta: 0.0, gain: DVector::from_element(1, 1.0) }],
            Density::zero(0.01),
            Density::zero(0.01),
            1.0,
            1.0,
        )
        .unwrap();
        let gap = estimate_corona_gap(&sys, 0.05, &coarse_grid(), 0.7).unwrap();
        assert!(gap.grid_min >= 1.0 - 1e-12);
        assert!(gap.estimate > 0.0);
    }

    #[test]
    fn gap_rejects_coarse_grid() {
        let sys = presets::paper_example().system;
        let grid = GridSpec::new(-0.05, 5.0, 25.0, 0.6).unwrap();
        assert!(matches!(
            estimate_corona_gap(&sys, 0.025, &grid, 0.29),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gap_estimate_monotone_under_refinement() {
        let sys = presets::paper_example().system;
        let grid = GridSpec::new(-0.025, 3.0, 12.0, 0.2).unwrap();
        let coarse = estimate_corona_gap(&sys, 0.025, &grid, 0.29).unwrap();
        let fine = estimate_corona_gap(&sys, 0.025, &grid.refined(), 0.29).unwrap();
        assert!(fine.grid_min <= coarse.grid_min + 1e-12);
        assert!(fine.estimate <= coarse.estimate + 1e-12);
    }

    #[test]
    fn stabilizability_passes_on_unit_input() {
        let sys = crate::model::IdeSystem::new(
            1,
            Vec::new(),
            vec![InputDelay { theta: 0.0, gain: DVector::from_element(1, 1.0) }],
            Density::zero(0.01),
            Density::zero(0.01),
            1.0,
            1.0,
        )
        .unwrap();
        let chk = check_spectral_stabilizability(&sys, 0.05, &coarse_grid(), RANK_TOL_REL).unwrap();
        assert!(chk.ok);
        assert!(chk.sigma_min >= 1.0 - 1e-12);
    }

    #[test]
    fn constructed_rank_drop_is_detected() {
        // q(z) = 1 - e^{0.2} e^{-z} vanishes at z = 0.2, p ≡ 0; the root sits
        // exactly on a grid node so the indicator collapses to zero there.
        let sys = crate::model::IdeSystem::new(
            1,
            vec![StateDelay { tau: 1.0, gain: DMatrix::from_element(1, 1, 0.2f64.exp()) }],
            Vec::new(),
            Density::zero(0.01),
            Density::zero(0.01),
            1.0,
            1.0,
        )
        .unwrap();
        let grid = GridSpec::new(-0.05, 2.0, 10.0, 0.05).unwrap();
        let chk = check_spectral_stabilizability(&sys, 0.05, &grid, RANK_TOL_REL).unwrap();
        assert!(!chk.ok, "sigma_min = {}", chk.sigma_min);
    }

    #[test]
    fn choose_rates_rules() {
        let sys = presets::paper_example().system;
        let grid = GridSpec::new(-0.1, 3.0, 12.0, 0.1).unwrap();
        let mut report = run_checks(&sys, 0.1, 0.1, &grid, RANK_TOL_REL).unwrap();
        assert!(report.principal.certified);
        assert!(report.stabilizability.ok);
        let nu = choose_rates(&report, None).unwrap();
        assert_relative_eq!(nu, 0.05, epsilon = 1e-15);
        assert_relative_eq!(choose_rates(&report, Some(0.02)).unwrap(), 0.02);
        assert!(choose_rates(&report, Some(0.1)).is_err());
        assert!(choose_rates(&report, Some(0.2)).is_err());
        report.nu = Some(nu);

        // failed checks refuse rate selection
        let mut bad = report;
        bad.principal.certified = false;
        assert!(matches!(choose_rates(&bad, None), Err(Error::CheckFailed(_))));
        let mut bad = report;
        bad.stabilizability.ok = false;
        assert!(matches!(choose_rates(&bad, None), Err(Error::CheckFailed(_))));
    }

    #[test]
    fn conjugate_symmetry_spot_check() {
        let sys = presets::paper_example().system;
        for (re, im) in [(0.0, 1.0), (0.4, 7.3), (-0.02, 0.6)] {
            let z = Complex::new(re, im);
            let a = sys.state_symbol(z)[(0, 0)];
            let b = sys.state_symbol(Complex::new(re, -im))[(0, 0)];
            assert_relative_eq!(a.re, b.re, max_relative = 1e-13, epsilon = 1e-13);
            assert_relative_eq!(a.im, -b.im, max_relative = 1e-13, epsilon = 1e-13);
        }
    }

    #[test]
    fn sweep_rows_match_direct_symbols() {
        let sys = presets::paper_example().system;
        let grid = GridSpec::new(-0.05, 1.0, 2.0, 0.5).unwrap();
        let rows = sweep_rows(&sys, &grid).unwrap();
        assert_eq!(rows.len(), grid.n_re() * grid.n_im());
        for row in rows.iter().step_by(3) {
            let z = Complex::new(row.re, row.im);
            let q = sys.state_symbol(z)[(0, 0)];
            let p = sys.input_symbol(z)[(0, 0)];
            assert_relative_eq!(row.sum_abs_minors, q.norm() + p.norm(), max_relative = 1e-10);
            assert_relative_eq!(
                row.sigma_min,
                (q.norm_sqr() + p.norm_sqr()).sqrt(),
                max_relative = 1e-10
            );
            assert_relative_eq!(
                row.abs_det_delta0,
                sys.delta0_at(z).determinant().norm(),
                max_relative = 1e-10
            );
        }
    }
}
