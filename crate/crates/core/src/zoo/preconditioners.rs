use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation::PreconditionerOp;
use crate::vector::ModelVector;

pub const DEFAULT_ASAM_CLAMP: f64 = 1e-12;
pub const DEFAULT_FISHER_CLAMP: f64 = 1e-12;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;
/// Gradient entries at or below this magnitude get a zero weight in the
/// ℓ∞ objective preconditioner.
pub const LINF_FLOOR: f64 = 1e-12;
/// `||g||` at or below this skips the VaSSO rank-one term.
pub const VASSO_DEGENERACY_TOL: f64 = 1e-12;

fn check_clamp(clamp: f64) -> Result<()> {
    if clamp > 0.0 && clamp.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("clamp must be > 0, got {clamp}")))
    }
}

/// ASAM constraint preconditioner `D = diag(1 / max(|x_i|, clamp))`.
pub fn asam_preconditioner(x: &ModelVector, clamp: f64) -> Result<PreconditionerOp> {
    check_clamp(clamp)?;
    Ok(PreconditionerOp::Diagonal(x.map(|v| 1.0 / v.abs().max(clamp))))
}

/// FisherSAM constraint preconditioner `D = diag(max(|g_i|, clamp))`.
pub fn fisher_preconditioner(g: &ModelVector, clamp: f64) -> Result<PreconditionerOp> {
    check_clamp(clamp)?;
    Ok(PreconditionerOp::Diagonal(g.map(|v| v.abs().max(clamp))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormBall {
    LInf,
    L1,
    /// `n`-support norm: keep the `n` largest-magnitude coordinates.
    NSupport(usize),
}

/// Indices of the `n` largest `|g_i|`, ties broken toward lower indices.
pub fn top_magnitude_indices(g: &ModelVector, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.dim()).collect();
    idx.sort_by(|&a, &b| {
        g[b].abs()
            .partial_cmp(&g[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(n);
    idx
}

fn mask(dim: usize, keep: &[usize]) -> ModelVector {
    let mut m = vec![0.0; dim];
    for &i in keep {
        m[i] = 1.0;
    }
    ModelVector::from_vec_unchecked(m)
}

/// Objective preconditioners whose perturbation mimics a non-Euclidean ball.
pub fn op_norm_preconditioner(g: &ModelVector, kind: NormBall) -> Result<PreconditionerOp> {
    let d = g.dim();
    Ok(match kind {
        NormBall::LInf => PreconditionerOp::Diagonal(g.map(|v| {
            if v.abs() > LINF_FLOOR {
                1.0 / v.abs()
            } else {
                0.0
            }
        })),
        NormBall::L1 => PreconditionerOp::Diagonal(mask(d, &top_magnitude_indices(g, 1))),
        NormBall::NSupport(n) => {
            if n == 0 || n > d {
                return Err(Error::InvalidInput(format!(
                    "n-support size {n} must be in 1..={d}"
                )));
            }
            PreconditionerOp::Diagonal(mask(d, &top_magnitude_indices(g, n)))
        }
    })
}

/// Number of coordinates kept by a sparse mask: `ceil(keep_ratio · d)`, at
/// least one. A relative slack of 1e-9 absorbs products like `(1/3)·3`.
pub fn kept_coordinates(keep_ratio: f64, dim: usize) -> usize {
    let raw = keep_ratio * dim as f64;
    ((raw - 1e-9 * raw.max(1.0)).ceil() as usize).clamp(1, dim)
}

/// 0/1 diagonal mask keeping the `ceil(keep_ratio · d)` largest `|g_i|`.
pub fn sparse_mask_preconditioner(g: &ModelVector, keep_ratio: f64) -> Result<PreconditionerOp> {
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "keep_ratio must be in (0, 1], got {keep_ratio}"
        )));
    }
    let keep = kept_coordinates(keep_ratio, g.dim());
    Ok(PreconditionerOp::Diagonal(mask(
        g.dim(),
        &top_magnitude_indices(g, keep),
    )))
}

/// Every `period`-th iteration (starting at t = 0) is a SAM step; the rest are
/// plain ERM steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LazyPolicy {
    period: usize,
}

impl LazyPolicy {
    pub fn new(period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidInput("lazy period must be >= 1".into()));
        }
        Ok(Self { period })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn is_sam_step(&self, t: usize) -> bool {
        t.is_multiple_of(self.period)
    }
}

pub fn lazy_schedule(t: usize, policy: &LazyPolicy) -> PreconditionerOp {
    if policy.is_sam_step(t) {
        PreconditionerOp::Identity
    } else {
        PreconditionerOp::Zero
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VassoState {
    d: ModelVector,
    theta: f64,
}

impl VassoState {
    pub fn new(dim: usize, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "theta must be in (0, 1], got {theta}"
            )));
        }
        Ok(Self {
            d: ModelVector::zeros(dim),
            theta,
        })
    }

    /// Resumes from a known running average `d`.
    pub fn with_running_average(d: ModelVector, theta: f64) -> Result<Self> {
        let mut s = Self::new(d.dim(), theta)?;
        d.ensure_finite("vasso running average")?;
        s.d = d;
        Ok(s)
    }

    pub fn running_average(&self) -> &ModelVector {
        &self.d
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Advances `d_t = (1-θ) d_{t-1} + θ g` and returns
/// `C = ((1-θ)/||g||²) d_{t-1} gᵀ + θ I`, for which `C g = d_t`.
///
/// For `||g|| <= 1e-12` the state is left unchanged and `C = I`.
pub fn vasso_update(state: &mut VassoState, g: &ModelVector) -> Result<PreconditionerOp> {
    g.ensure_dim(state.d.dim(), "vasso gradient")?;
    let g_norm_sq = g.norm_sq();
    if g_norm_sq.sqrt() <= VASSO_DEGENERACY_TOL {
        return Ok(PreconditionerOp::Identity);
    }
    let theta = state.theta;
    let next = state.d.scale(1.0 - theta).axpy(theta, g);
    let prev = std::mem::replace(&mut state.d, next);
    if theta == 1.0 {
        return Ok(PreconditionerOp::Identity);
    }
    Ok(PreconditionerOp::RankOnePlusScaledIdentity {
        u: prev.scale((1.0 - theta) / g_norm_sq),
        v: g.clone(),
        scale: theta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoSamState {
    m: ModelVector,
    alpha: f64,
    variance_floor: f64,
}

impl InfoSamState {
    pub fn new(dim: usize, alpha: f64, variance_floor: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must be in (0, 1), got {alpha}"
            )));
        }
        if !(variance_floor > 0.0 && variance_floor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "variance floor must be > 0, got {variance_floor}"
            )));
        }
        Ok(Self {
            m: ModelVector::zeros(dim),
            alpha,
            variance_floor,
        })
    }

    pub fn ema(&self) -> &ModelVector {
        &self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variance_floor(&self) -> f64 {
        self.variance_floor
    }
}

/// `C = diag(1 / max(variance_i, floor))`.
pub fn inverse_variance_preconditioner(variance: &ModelVector, floor: f64) -> PreconditionerOp {
    PreconditionerOp::Diagonal(variance.map(|v| 1.0 / v.max(floor)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoSamUpdate {
    pub op: PreconditionerOp,
    /// Per-coordinate noise estimate `(m_t - g)²`.
    pub variance: ModelVector,
}

/// EMA `m_t = α m_{t-1} + (1-α) g`, noise estimate `σ̂² = (m_t - g)²` and the
/// inverse-variance objective preconditioner built from it.
pub fn infosam_update(state: &mut InfoSamState, g: &ModelVector) -> Result<InfoSamUpdate> {
    g.ensure_dim(state.m.dim(), "infosam gradient")?;
    let a = state.alpha;
    state.m = state.m.zip_map(g, |m, gi| a * m + (1.0 - a) * gi);
    let variance = state.m.zip_map(g, |m, gi| (m - gi) * (m - gi));
    Ok(InfoSamUpdate {
        op: inverse_variance_preconditioner(&variance, state.variance_floor),
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::{compose_preconditioners, solve_perturbation};
    use crate::vector::mv;

    fn diag_of(op: &PreconditionerOp) -> &ModelVector {
        match op {
            PreconditionerOp::Diagonal(d) => d,
            other => panic!("expected diagonal, got {other:?}"),
        }
    }

    /// Best `<g, eps>` over `||diag(dd) eps|| = rho` on an angular grid.
    fn ellipse_argmax(g: [f64; 2], dd: [f64; 2], rho: f64) -> [f64; 2] {
        let steps = 2_000_000;
        let mut best = (f64::NEG_INFINITY, [0.0; 2]);
        for k in 0..steps {
            let th = k as f64 / steps as f64 * std::f64::consts::TAU;
            let e = [rho * th.cos() / dd[0], rho * th.sin() / dd[1]];
            let v = g[0] * e[0] + g[1] * e[1];
            if v > best.0 {
                best = (v, e);
            }
        }
        best.1
    }

    #[test]
    fn asam_substitution_and_clamp() {
        let d = asam_preconditioner(&mv(&[2.0, -0.5]), 1e-12).unwrap();
        assert_eq!(diag_of(&d), &mv(&[0.5, 2.0]));
        let d = asam_preconditioner(&mv(&[0.0, 1.0]), 1e-3).unwrap();
        assert!((diag_of(&d)[0] - 1000.0).abs() < 1e-9);
        assert_eq!(diag_of(&d)[1], 1.0);
        assert!(asam_preconditioner(&mv(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn asam_downstream_perturbation() {
        let d = asam_preconditioner(&mv(&[2.0, -0.5]), 1e-12).unwrap();
        let sol = solve_perturbation(&mv(&[1.0, 1.0]), &PreconditionerOp::Identity, &d, 1.0)
            .unwrap();
        let brute = ellipse_argmax([1.0, 1.0], [0.5, 2.0], 1.0);
        let expected = [1.940_285_000, 0.121_267_813];
        for i in 0..2 {
            assert!((sol.epsilon[i] - brute[i]).abs() < 1e-5);
            assert!((sol.epsilon[i] - expected[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn fisher_substitution_and_clamp() {
        let d = fisher_preconditioner(&mv(&[0.1, -0.2]), 1e-12).unwrap();
        assert_eq!(diag_of(&d), &mv(&[0.1, 0.2]));
        let d = fisher_preconditioner(&mv(&[0.0, 0.5]), 1e-6).unwrap();
        assert_eq!(diag_of(&d), &mv(&[1e-6, 0.5]));
    }

    #[test]
    fn fisher_downstream_perturbation() {
        let g = mv(&[0.1, -0.2]);
        let d = fisher_preconditioner(&g, 1e-12).unwrap();
        let sol = solve_perturbation(&g, &PreconditionerOp::Identity, &d, 1.0).unwrap();
        let brute = ellipse_argmax([0.1, -0.2], [0.1, 0.2], 1.0);
        let expected = [7.071_067_812, -3.535_533_906];
        for i in 0..2 {
            assert!((sol.epsilon[i] - brute[i]).abs() < 1e-4);
            assert!((sol.epsilon[i] - expected[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn linf_rule() {
        let g = mv(&[2.0, -4.0]);
        let c = op_norm_preconditioner(&g, NormBall::LInf).unwrap();
        assert_eq!(diag_of(&c), &mv(&[0.5, 0.25]));
        let sol = solve_perturbation(&g, &c, &PreconditionerOp::Identity, 0.1).unwrap();
        let r = 0.1 / 2f64.sqrt();
        assert!((sol.epsilon[0] - r).abs() < 1e-15);
        assert!((sol.epsilon[1] + r).abs() < 1e-15);
        // floored entries drop out
        let c = op_norm_preconditioner(&mv(&[0.0, 3.0]), NormBall::LInf).unwrap();
        assert_eq!(diag_of(&c)[0], 0.0);
    }

    #[test]
    fn l1_rule() {
        let g = mv(&[2.0, -4.0]);
        let c = op_norm_preconditioner(&g, NormBall::L1).unwrap();
        assert_eq!(diag_of(&c), &mv(&[0.0, 1.0]));
        let sol = solve_perturbation(&g, &c, &PreconditionerOp::Identity, 1.0).unwrap();
        assert_eq!(sol.epsilon, mv(&[0.0, -1.0]));
        // ties go to the lower index
        let c = op_norm_preconditioner(&mv(&[-3.0, 3.0, 1.0]), NormBall::L1).unwrap();
        assert_eq!(diag_of(&c), &mv(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn nsupport_rule() {
        let g = mv(&[3.0, -4.0, 1.0]);
        let c = op_norm_preconditioner(&g, NormBall::NSupport(2)).unwrap();
        assert_eq!(diag_of(&c), &mv(&[1.0, 1.0, 0.0]));
        let sol = solve_perturbation(&g, &c, &PreconditionerOp::Identity, 1.0).unwrap();
        assert!((sol.epsilon[0] - 0.6).abs() < 1e-15);
        assert!((sol.epsilon[1] + 0.8).abs() < 1e-15);
        assert_eq!(sol.epsilon[2], 0.0);
        assert!(op_norm_preconditioner(&g, NormBall::NSupport(4)).is_err());
        assert!(op_norm_preconditioner(&g, NormBall::NSupport(0)).is_err());
    }

    #[test]
    fn sparse_mask_rule() {
        let g = mv(&[5.0, 1.0, -3.0]);
        let full = sparse_mask_preconditioner(&g, 1.0).unwrap();
        assert_eq!(diag_of(&full), &mv(&[1.0, 1.0, 1.0]));
        let m = sparse_mask_preconditioner(&g, 0.34).unwrap();
        assert_eq!(diag_of(&m), &mv(&[1.0, 0.0, 1.0]));
        assert_eq!(kept_coordinates(1.0 / 3.0, 3), 1);
        assert!(sparse_mask_preconditioner(&g, 0.0).is_err());
        assert!(sparse_mask_preconditioner(&g, 1.5).is_err());
    }

    #[test]
    fn sparse_mask_composed_with_infosam() {
        let g = mv(&[5.0, 1.0, -3.0]);
        let mut state = InfoSamState::new(3, 0.9, DEFAULT_VARIANCE_FLOOR).unwrap();
        let info = infosam_update(&mut state, &g).unwrap();
        let mask = sparse_mask_preconditioner(&g, 0.34).unwrap();
        let c = compose_preconditioners(vec![mask, info.op]).unwrap();
        let sol = solve_perturbation(&g, &c, &PreconditionerOp::Identity, 0.5).unwrap();
        let zeros: Vec<usize> = (0..3).filter(|&i| sol.epsilon[i] == 0.0).collect();
        assert_eq!(zeros, vec![1]);
        assert!((sol.epsilon.norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lazy_schedule_periods() {
        let sam = LazyPolicy::new(1).unwrap();
        assert!((0..10).all(|t| lazy_schedule(t, &sam) == PreconditionerOp::Identity));
        let p2 = LazyPolicy::new(2).unwrap();
        assert_eq!(lazy_schedule(1, &p2), PreconditionerOp::Zero);
        assert_eq!(lazy_schedule(4, &p2), PreconditionerOp::Identity);
        assert!(LazyPolicy::new(0).is_err());
    }

    #[test]
    fn vasso_theta_one_recovers_sam() {
        let mut s = VassoState::new(2, 1.0).unwrap();
        let g = mv(&[0.3, -0.7]);
        let c = vasso_update(&mut s, &g).unwrap();
        assert_eq!(c, PreconditionerOp::Identity);
        assert_eq!(s.running_average(), &g);
    }

    #[test]
    fn vasso_maps_gradient_to_running_average() {
        let mut s = VassoState::new(2, 0.5).unwrap();
        s.d = mv(&[1.0, 0.0]);
        let g = mv(&[0.0, 2.0]);
        let c = vasso_update(&mut s, &g).unwrap();
        assert_eq!(s.running_average(), &mv(&[0.5, 1.0]));
        let cg = c.apply(&g).unwrap();
        assert!(cg.sub(&mv(&[0.5, 1.0])).max_abs() < 1e-15);
    }

    #[test]
    fn vasso_degenerate_gradient_is_skipped() {
        let mut s = VassoState::new(2, 0.3).unwrap();
        s.d = mv(&[1.0, 1.0]);
        let c = vasso_update(&mut s, &ModelVector::zeros(2)).unwrap();
        assert_eq!(c, PreconditionerOp::Identity);
        assert_eq!(s.running_average(), &mv(&[1.0, 1.0]));
        assert!(VassoState::new(2, 0.0).is_err());
    }

    #[test]
    fn infosam_direct_substitution() {
        let mut s = InfoSamState::new(2, 0.9, 1e-8).unwrap();
        let up = infosam_update(&mut s, &mv(&[1.0, 2.0])).unwrap();
        assert!((s.ema()[0] - 0.1).abs() < 1e-15);
        assert!((s.ema()[1] - 0.2).abs() < 1e-15);
        assert!((up.variance[0] - 0.81).abs() < 1e-14);
        assert!((up.variance[1] - 3.24).abs() < 1e-14);
        assert!(InfoSamState::new(2, 1.0, 1e-8).is_err());
        assert!(InfoSamState::new(2, 0.5, 0.0).is_err());
    }

    #[test]
    fn infosam_zero_variance_is_sam_direction() {
        let g = mv(&[0.4, -0.1, 0.3]);
        let mut s = InfoSamState::new(3, 0.5, 1e-8).unwrap();
        s.m = g.clone();
        let up = infosam_update(&mut s, &g).unwrap();
        assert_eq!(up.variance, ModelVector::zeros(3));
        let sol = solve_perturbation(&g, &up.op, &PreconditionerOp::Identity, 1.0).unwrap();
        let sam = g.scale(1.0 / g.norm());
        assert!(sol.epsilon.sub(&sam).max_abs() < 1e-15);
    }
}
