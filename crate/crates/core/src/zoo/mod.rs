//! Preconditioner rules for the SAM variants: ASAM and FisherSAM (constraint
//! side), norm-ball and sparse objective preconditioners, lazy SAM, VaSSO and
//! infoSAM.

mod preconditioners;
pub mod rules;

pub use preconditioners::{
    asam_preconditioner, fisher_preconditioner, infosam_update, inverse_variance_preconditioner,
    kept_coordinates, lazy_schedule, op_norm_preconditioner, sparse_mask_preconditioner,
    top_magnitude_indices, vasso_update, InfoSamState, InfoSamUpdate, LazyPolicy, NormBall,
    VassoState, DEFAULT_ASAM_CLAMP, DEFAULT_FISHER_CLAMP, DEFAULT_VARIANCE_FLOOR, LINF_FLOOR,
    VASSO_DEGENERACY_TOL,
};
