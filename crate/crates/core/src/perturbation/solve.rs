use crate::error::{Error, Result};
use crate::perturbation::PreconditionerOp;
use crate::vector::ModelVector;

/// Below this value of `||D⁻¹ C g||` the perturbation is declared degenerate
/// and set to zero.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSolution {
    pub epsilon: ModelVector,
    /// `<C g, eps>`.
    pub objective_value: f64,
    pub degenerate: bool,
    /// `max_i 1 / D_ii`, the operator norm of `D⁻¹` (1 for the identity).
    pub d_inv_norm: f64,
}

/// Closed-form maximizer of `<C g, eps>` over `||D eps|| <= rho`:
///
/// `eps = rho · D⁻² C g / ||D⁻¹ C g||`
///
/// `D` must be diagonal-structured with strictly positive entries. Strictly
/// positive scalar factors wrapped around `C` leave the maximizer unchanged and
/// are removed before the direction is formed.
pub fn solve_perturbation(
    g: &ModelVector,
    c: &PreconditionerOp,
    d: &PreconditionerOp,
    rho: f64,
) -> Result<PerturbationSolution> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("rho must be >= 0, got {rho}")));
    }
    let dim = g.dim();
    let d_diag = d.constraint_diagonal(dim)?;
    let (c_factor, c_core) = c.split_positive_scale();

    let cg = c_core.apply(g)?;
    let u = match &d_diag {
        None => cg.clone(),
        Some(dd) => cg.zip_map(dd, |a, b| a / b),
    };
    let d_inv_norm = d_diag
        .as_ref()
        .map_or(1.0, |dd| dd.iter().fold(0.0_f64, |m, &v| m.max(1.0 / v)));

    let n = u.norm();
    if !n.is_finite() {
        return Err(Error::NumericOverflow(
            "preconditioned gradient has a non-finite norm".into(),
        ));
    }
    if n <= DEGENERACY_TOL {
        return Ok(PerturbationSolution {
            epsilon: ModelVector::zeros(dim),
            objective_value: 0.0,
            degenerate: true,
            d_inv_norm,
        });
    }

    let step = rho / n;
    let epsilon = match &d_diag {
        None => u.scale(step),
        Some(dd) => u.zip_map(dd, |a, b| step * (a / b)),
    };
    epsilon.ensure_finite("perturbation")?;
    let objective_value = c_factor * cg.dot(&epsilon);
    Ok(PerturbationSolution {
        epsilon,
        objective_value,
        degenerate: false,
        d_inv_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::mv;

    /// Maximizes `<w, eps>` over a dense angular grid on the ellipse
    /// `||diag(dd) eps|| = rho` in two dimensions.
    fn ellipse_grid_argmax(w: [f64; 2], dd: [f64; 2], rho: f64, steps: usize) -> [f64; 2] {
        let mut best = (f64::NEG_INFINITY, [0.0; 2]);
        for k in 0..steps {
            let th = k as f64 / steps as f64 * std::f64::consts::TAU;
            let e = [rho * th.cos() / dd[0], rho * th.sin() / dd[1]];
            let val = w[0] * e[0] + w[1] * e[1];
            if val > best.0 {
                best = (val, e);
            }
        }
        best.1
    }

    #[test]
    fn sam_case_matches_normalized_gradient() {
        let sol = solve_perturbation(
            &mv(&[3.0, 4.0]),
            &PreconditionerOp::Identity,
            &PreconditionerOp::Identity,
            1.0,
        )
        .unwrap();
        assert!((sol.epsilon[0] - 0.6).abs() < 1e-15);
        assert!((sol.epsilon[1] - 0.8).abs() < 1e-15);
        assert!((sol.objective_value - 5.0).abs() < 1e-14);
        assert!(!sol.degenerate);
    }

    #[test]
    fn zero_objective_preconditioner_is_degenerate() {
        for rho in [0.01, 1.0, 50.0] {
            let sol = solve_perturbation(
                &mv(&[1.0, -2.0, 3.0]),
                &PreconditionerOp::Zero,
                &PreconditionerOp::Identity,
                rho,
            )
            .unwrap();
            assert!(sol.degenerate);
            assert_eq!(sol.epsilon, ModelVector::zeros(3));
        }
    }

    #[test]
    fn constraint_preconditioned_case_matches_grid_search() {
        let d = PreconditionerOp::Diagonal(mv(&[2.0, 1.0]));
        let sol =
            solve_perturbation(&mv(&[4.0, 3.0]), &PreconditionerOp::Identity, &d, 1.0).unwrap();
        let brute = ellipse_grid_argmax([4.0, 3.0], [2.0, 1.0], 1.0, 2_000_000);
        // frozen from the grid search
        let expected = [0.277_350_098, 0.832_050_294];
        for i in 0..2 {
            assert!((sol.epsilon[i] - brute[i]).abs() < 1e-5);
            assert!((sol.epsilon[i] - expected[i]).abs() < 1e-8);
        }
        let de = d.apply(&sol.epsilon).unwrap().norm();
        assert!((de - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_degenerate() {
        let sol = solve_perturbation(
            &ModelVector::zeros(4),
            &PreconditionerOp::Identity,
            &PreconditionerOp::Identity,
            0.5,
        )
        .unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.epsilon, ModelVector::zeros(4));
    }

    #[test]
    fn singular_constraint_is_rejected() {
        let err = solve_perturbation(
            &mv(&[1.0, 1.0]),
            &PreconditionerOp::Identity,
            &PreconditionerOp::Diagonal(mv(&[1.0, 0.0])),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidPreconditioner(_)));
    }

    #[test]
    fn dimension_mismatch_is_invalid_input() {
        let err = solve_perturbation(
            &mv(&[1.0, 1.0]),
            &PreconditionerOp::Diagonal(mv(&[1.0, 2.0, 3.0])),
            &PreconditionerOp::Identity,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn negative_rho_is_rejected() {
        assert!(solve_perturbation(
            &mv(&[1.0]),
            &PreconditionerOp::Identity,
            &PreconditionerOp::Identity,
            -1.0
        )
        .is_err());
    }

    #[test]
    fn scaled_objective_keeps_epsilon_and_scales_objective() {
        let g = mv(&[0.3, -1.2, 2.0]);
        let c = PreconditionerOp::Diagonal(mv(&[0.5, 2.0, 1.0]));
        let base = solve_perturbation(&g, &c, &PreconditionerOp::Identity, 0.1).unwrap();
        let scaled =
            solve_perturbation(&g, &c.clone().scaled(1e6), &PreconditionerOp::Identity, 0.1)
                .unwrap();
        assert_eq!(base.epsilon, scaled.epsilon);
        assert!((scaled.objective_value / base.objective_value - 1e6).abs() < 1e-3);
    }

    #[test]
    fn d_inv_norm_reports_largest_inverse_entry() {
        let sol = solve_perturbation(
            &mv(&[1.0, 1.0]),
            &PreconditionerOp::Identity,
            &PreconditionerOp::Diagonal(mv(&[0.25, 4.0])),
            1.0,
        )
        .unwrap();
        assert_eq!(sol.d_inv_norm, 4.0);
    }
}
