//! Structured linear operators used as objective (`C`) and constraint (`D`)
//! preconditioners. Operators are never materialized as dense matrices.

use crate::error::{dim_mismatch, Error, Result};
use crate::vector::ModelVector;

#[derive(Debug, Clone, PartialEq)]
pub enum PreconditionerOp {
    /// `I`, valid for any dimension.
    Identity,
    /// The annihilator `0`, valid for any dimension.
    Zero,
    Diagonal(ModelVector),
    /// `u vᵀ + scale·I`.
    RankOnePlusScaledIdentity {
        u: ModelVector,
        v: ModelVector,
        scale: f64,
    },
    /// `factor · inner`, kept structural so positive factors can be peeled off
    /// exactly by the solver.
    Scaled {
        factor: f64,
        inner: Box<PreconditionerOp>,
    },
    /// Operators applied in list order: the first element acts first.
    /// An empty chain is the identity.
    Chain(Vec<PreconditionerOp>),
}

impl PreconditionerOp {
    pub fn diagonal(entries: ModelVector) -> Self {
        Self::Diagonal(entries)
    }

    /// The fixed dimension of the operator, or `None` when it applies to
    /// vectors of any size.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Identity | Self::Zero => None,
            Self::Diagonal(d) => Some(d.dim()),
            Self::RankOnePlusScaledIdentity { u, .. } => Some(u.dim()),
            Self::Scaled { inner, .. } => inner.dim(),
            Self::Chain(ops) => ops.iter().find_map(|op| op.dim()),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != dim => Err(dim_mismatch("preconditioner", d, dim)),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, g: &ModelVector) -> Result<ModelVector> {
        self.check_dim(g.dim())?;
        Ok(self.apply_unchecked(g))
    }

    fn apply_unchecked(&self, g: &ModelVector) -> ModelVector {
        match self {
            Self::Identity => g.clone(),
            Self::Zero => ModelVector::zeros(g.dim()),
            Self::Diagonal(d) => d.hadamard(g),
            Self::RankOnePlusScaledIdentity { u, v, scale } => {
                let vg = v.dot(g);
                g.zip_map(u, |gi, ui| scale * gi + vg * ui)
            }
            Self::Scaled { factor, inner } => inner.apply_unchecked(g).scale(*factor),
            Self::Chain(ops) => ops
                .iter()
                .fold(g.clone(), |acc, op| op.apply_unchecked(&acc)),
        }
    }

    /// `alpha · self`.
    pub fn scaled(self, alpha: f64) -> Self {
        Self::Scaled {
            factor: alpha,
            inner: Box::new(self),
        }
    }

    /// True when the operator is structurally the zero map.
    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Scaled { factor, inner } => *factor == 0.0 || inner.is_zero(),
            Self::Chain(ops) => ops.iter().any(Self::is_zero),
            _ => false,
        }
    }

    /// Splits off leading strictly positive scalar factors: returns the
    /// accumulated factor and the remaining operator.
    pub fn split_positive_scale(&self) -> (f64, &Self) {
        let mut factor = 1.0;
        let mut op = self;
        while let Self::Scaled { factor: f, inner } = op {
            if *f > 0.0 {
                factor *= f;
                op = inner;
            } else {
                break;
            }
        }
        (factor, op)
    }

    /// Diagonal of the operator when used as a constraint preconditioner.
    ///
    /// Returns `Ok(None)` for the identity. Only diagonal-structured operators
    /// with strictly positive entries are invertible constraint operators;
    /// everything else is rejected.
    pub fn constraint_diagonal(&self, dim: usize) -> Result<Option<ModelVector>> {
        self.check_dim(dim)?;
        let diag = match self {
            Self::Identity => None,
            Self::Zero => {
                return Err(Error::InvalidPreconditioner(
                    "zero operator is not invertible".into(),
                ))
            }
            Self::Diagonal(d) => Some(d.clone()),
            Self::RankOnePlusScaledIdentity { .. } => {
                return Err(Error::InvalidPreconditioner(
                    "rank-one operators are not supported as constraint preconditioners".into(),
                ))
            }
            Self::Scaled { factor, inner } => inner
                .constraint_diagonal(dim)?
                .map(|d| d.scale(*factor))
                .or_else(|| Some(ModelVector::filled(dim, *factor))),
            Self::Chain(ops) => {
                let mut acc: Option<ModelVector> = None;
                for op in ops {
                    if let Some(d) = op.constraint_diagonal(dim)? {
                        acc = Some(match acc {
                            None => d,
                            Some(a) => a.hadamard(&d),
                        });
                    }
                }
                acc
            }
        };
        if let Some(d) = &diag {
            if let Some(i) = d.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidPreconditioner(format!(
                    "constraint diagonal entry {i} is {} (must be > 0)",
                    d[i]
                )));
            }
        }
        Ok(diag)
    }
}

/// Builds the cascade `ops[0]`, then `ops[1]`, ... as a single operator.
pub fn compose_preconditioners(ops: Vec<PreconditionerOp>) -> Result<PreconditionerOp> {
    let mut dim: Option<usize> = None;
    for op in &ops {
        match (dim, op.dim()) {
            (Some(a), Some(b)) if a != b => return Err(dim_mismatch("compose", a, b)),
            (None, Some(b)) => dim = Some(b),
            _ => {}
        }
    }
    Ok(PreconditionerOp::Chain(ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::mv;

    #[test]
    fn compose_identities_is_identity() {
        let c = compose_preconditioners(vec![PreconditionerOp::Identity; 2]).unwrap();
        let g = mv(&[1.5, -2.0, 0.25]);
        assert_eq!(c.apply(&g).unwrap(), g);
    }

    #[test]
    fn compose_diagonals_multiplies() {
        let c = compose_preconditioners(vec![
            PreconditionerOp::Diagonal(mv(&[2.0, 1.0])),
            PreconditionerOp::Diagonal(mv(&[1.0, 3.0])),
        ])
        .unwrap();
        assert_eq!(c.apply(&mv(&[1.0, 1.0])).unwrap(), mv(&[2.0, 3.0]));
    }

    #[test]
    fn compose_with_zero_annihilates() {
        let c = compose_preconditioners(vec![
            PreconditionerOp::Zero,
            PreconditionerOp::Diagonal(mv(&[5.0, 7.0])),
        ])
        .unwrap();
        assert!(c.is_zero());
        assert_eq!(c.apply(&mv(&[1.0, -4.0])).unwrap(), ModelVector::zeros(2));
    }

    #[test]
    fn compose_rejects_mismatched_dims() {
        let err = compose_preconditioners(vec![
            PreconditionerOp::Diagonal(mv(&[1.0, 2.0])),
            PreconditionerOp::Diagonal(mv(&[1.0, 2.0, 3.0])),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn empty_chain_is_identity() {
        let c = PreconditionerOp::Chain(vec![]);
        let g = mv(&[3.0, -1.0]);
        assert_eq!(c.apply(&g).unwrap(), g);
        assert_eq!(c.constraint_diagonal(2).unwrap(), None);
    }

    #[test]
    fn chain_applies_in_list_order() {
        // Rank-one u vᵀ with u = e1, v = e2 maps (a, b) to (b, 0) when scale = 0.
        let swap_down = PreconditionerOp::RankOnePlusScaledIdentity {
            u: mv(&[1.0, 0.0]),
            v: mv(&[0.0, 1.0]),
            scale: 0.0,
        };
        let d = PreconditionerOp::Diagonal(mv(&[1.0, 10.0]));
        let c = PreconditionerOp::Chain(vec![d, swap_down]);
        // diag first: (1, 20), then rank-one: (20, 0)
        assert_eq!(c.apply(&mv(&[1.0, 2.0])).unwrap(), mv(&[20.0, 0.0]));
    }

    #[test]
    fn rank_one_apply() {
        let op = PreconditionerOp::RankOnePlusScaledIdentity {
            u: mv(&[1.0, 2.0]),
            v: mv(&[3.0, -1.0]),
            scale: 0.5,
        };
        // v·g = 3 - 2 = 1; 0.5 g + u = (0.5 + 1, 1 + 2)
        assert_eq!(op.apply(&mv(&[1.0, 2.0])).unwrap(), mv(&[1.5, 3.0]));
    }

    #[test]
    fn apply_dimension_mismatch() {
        let op = PreconditionerOp::Diagonal(mv(&[1.0, 2.0]));
        assert!(matches!(
            op.apply(&mv(&[1.0])).unwrap_err(),
            Error::InvalidInput(_)
        ));
    }

    #[test]
    fn constraint_diagonal_validation() {
        assert!(matches!(
            PreconditionerOp::Zero.constraint_diagonal(2).unwrap_err(),
            Error::InvalidPreconditioner(_)
        ));
        assert!(matches!(
            PreconditionerOp::Diagonal(mv(&[1.0, 0.0]))
                .constraint_diagonal(2)
                .unwrap_err(),
            Error::InvalidPreconditioner(_)
        ));
        let scaled_id = PreconditionerOp::Identity.scaled(2.0);
        assert_eq!(
            scaled_id.constraint_diagonal(3).unwrap(),
            Some(mv(&[2.0, 2.0, 2.0]))
        );
    }

    #[test]
    fn split_positive_scale_peels_nested_factors() {
        let op = PreconditionerOp::Diagonal(mv(&[1.0, 2.0]))
            .scaled(2.0)
            .scaled(3.0);
        let (f, inner) = op.split_positive_scale();
        assert_eq!(f, 6.0);
        assert_eq!(inner, &PreconditionerOp::Diagonal(mv(&[1.0, 2.0])));

        let neg = PreconditionerOp::Identity.scaled(-1.0);
        assert_eq!(neg.split_positive_scale().0, 1.0);
    }
}
