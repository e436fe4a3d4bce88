//! Gain conditions under which `Ψ = H_d + ζ²/2` is a strict Lyapunov function.
//!
//! Along the closed loop `Ψ̇ = −x̄ᵀ Θ x̄` with `x̄ = (p, ζ, ς)`. When the
//! external force varies as `Ḟ = c ẋ` with `0 <= c <= ε`, the off-diagonal
//! entry grows by `ε/(2M)`, which gives the matrix `Θ′`.

use nalgebra::Matrix3;
use serde::Serialize;

use crate::controller::ControllerGains;
use crate::plant::PlantParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    /// Row-major entries of `Θ` (or `Θ′` when `epsilon > 0`).
    pub theta: [[f64; 3]; 3],
    /// Leading principal minors of `theta`.
    pub minors: [f64; 3],
    /// Decided from `k_i > 0` and `condition_product > threshold`.
    pub positive_definite: bool,
    /// Smallest eigenvalue of `theta`.
    pub margin: f64,
    /// Whether the eigenvalue sign agrees with `positive_definite`.
    pub eigen_consistent: bool,
    /// `(R − α M) α k_m`.
    pub condition_product: f64,
    /// `(1 + ε k_m)² / 4`.
    pub threshold: f64,
    /// Mass used for the evaluation [kg].
    pub mass: f64,
    /// Bound on the force variation rate [N·s/m].
    pub epsilon: f64,
    /// `R / M` [1/s].
    pub alpha_bound: f64,
    pub alpha_within_bound: bool,
    /// Closed-loop damping `S22 = k_m (R − α M)`.
    pub damping_assignment: f64,
    /// `(R − α M) α > ε/2`: some `k_m` satisfies the `Θ′` condition.
    pub epsilon_solvable: bool,
}

/// Builds `Θ`/`Θ′` at mass `mass` and decides positive definiteness.
pub fn validate_gains(params: &PlantParams, gains: &ControllerGains, mass: f64, epsilon: f64) -> StabilityReport {
    let r = params.damping;
    let (alpha, km, ki) = (gains.alpha, gains.k_m, gains.k_i);
    let slack = r - alpha * mass;

    let a = slack / (km * mass * mass);
    let b = 1.0 / (2.0 * km * mass) + epsilon / (2.0 * mass);
    let d = 2.0 * ki;
    let theta = [[a, b, 0.0], [b, alpha, 0.0], [0.0, 0.0, d]];
    let m2 = a * alpha - b * b;
    let minors = [a, m2, m2 * d];

    let condition_product = slack * alpha * km;
    let threshold = 0.25 * (1.0 + epsilon * km).powi(2);
    let positive_definite = ki > 0.0 && condition_product > threshold;

    let matrix = Matrix3::from_fn(|i, j| theta[i][j]);
    let margin = matrix.symmetric_eigenvalues().min();

    StabilityReport {
        theta,
        minors,
        positive_definite,
        margin,
        eigen_consistent: (margin > 0.0) == positive_definite,
        condition_product,
        threshold,
        mass,
        epsilon,
        alpha_bound: r / mass,
        alpha_within_bound: alpha < r / mass,
        damping_assignment: km * slack,
        epsilon_solvable: slack * alpha > 0.5 * epsilon,
    }
}

/// Largest force-variation bound `ε` for which `Θ′` stays positive
/// definite, or `None` when even `ε = 0` fails.
pub fn max_force_variation(params: &PlantParams, gains: &ControllerGains, mass: f64) -> Option<f64> {
    let product = (params.damping - gains.alpha * mass) * gains.alpha * gains.k_m;
    if product <= 0.25 {
        return None;
    }
    Some((2.0 * product.sqrt() - 1.0) / gains.k_m)
}

/// Report at the domain midpoint plus the worst case over the admissible range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DomainStabilityReport {
    pub midpoint: StabilityReport,
    pub worst: StabilityReport,
    pub worst_x: f64,
}

pub fn validate_gains_over_domain(
    params: &PlantParams,
    gains: &ControllerGains,
    epsilon: f64,
    samples: usize,
) -> DomainStabilityReport {
    let geometry = &params.geometry;
    let mass_at = |x: f64| params.total_mass(x).expect("sample lies inside the domain");
    let midpoint = validate_gains(params, gains, mass_at(geometry.midpoint()), epsilon);

    let (lo, hi) = geometry.position_range();
    let inset = 2.0 * geometry.domain_margin;
    let (lo, hi) = (lo + inset, hi - inset);
    let n = samples.max(2);
    let mut worst = midpoint;
    let mut worst_x = geometry.midpoint();
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let report = validate_gains(params, gains, mass_at(x), epsilon);
        if report.condition_product - report.threshold < worst.condition_product - worst.threshold {
            worst = report;
            worst_x = x;
        }
    }
    DomainStabilityReport { midpoint, worst, worst_x }
}
