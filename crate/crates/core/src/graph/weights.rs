//! Edge weight kernels.

use crate::error::{Error, Result};

/// Similarity kernel used to weight k-NN edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightKind {
    /// Radial basis function `exp(-d² / (2 xi))`.
    Rbf { xi: f64 },
    /// Zelnik-Manor/Perona local scaling `exp(-d² / (s(x) s(y)))`, where the
    /// local scale `s(x)` is the distance from `x` to its `var_neighbor`-th
    /// nearest neighbour.
    ZelnikManorPerona { var_neighbor: usize },
    /// Cosine similarity `<x, y> / (|x| |y|)`.
    Cosine,
}

impl WeightKind {
    /// RBF kernel parameterised by its raw denominator, `exp(-d² / denom)`.
    pub fn rbf_with_denominator(denom: f64) -> Self {
        WeightKind::Rbf { xi: denom / 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightKind::Rbf { xi } if !(xi > 0.0 && xi.is_finite()) => {
                Err(Error::invalid(format!("RBF scale must be positive, got {xi}")))
            }
            WeightKind::ZelnikManorPerona { var_neighbor: 0 } => Err(Error::invalid(
                "Zelnik-Manor/Perona neighbour rank must be at least 1",
            )),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightKind::Rbf { .. } => "rbf",
            WeightKind::ZelnikManorPerona { .. } => "zmp",
            WeightKind::Cosine => "cosine",
        }
    }
}

/// Per-endpoint local scales, needed only by the Zelnik-Manor/Perona kernel.
#[derive(Clone, Copy, Debug, Default)]
pub struct LocalScale {
    pub x: f64,
    pub y: f64,
}

pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Evaluates the kernel on a pair of points.
pub fn compute_weight(kind: WeightKind, x: &[f64], y: &[f64], scale: LocalScale) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    kind.validate()?;
    let d2 = squared_distance(x, y);
    weight_from_parts(kind, d2, x, y, scale)
}

/// Same as [`compute_weight`] but with the squared distance already known.
pub(crate) fn weight_from_parts(
    kind: WeightKind,
    d2: f64,
    x: &[f64],
    y: &[f64],
    scale: LocalScale,
) -> Result<f64> {
    match kind {
        WeightKind::Rbf { xi } => Ok((-d2 / (2.0 * xi)).exp()),
        WeightKind::ZelnikManorPerona { .. } => {
            if !(scale.x > 0.0 && scale.y > 0.0) {
                return Err(Error::invalid(format!(
                    "local scale must be positive, got ({}, {})",
                    scale.x, scale.y
                )));
            }
            Ok((-d2 / (scale.x * scale.y)).exp())
        }
        WeightKind::Cosine => {
            let nx = dot(x, x);
            let ny = dot(y, y);
            if nx == 0.0 || ny == 0.0 {
                return Err(Error::invalid("cosine weight undefined for a zero vector"));
            }
            Ok(dot(x, y) / (nx * ny).sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rbf_at_zero_distance_is_one() {
        let w = compute_weight(WeightKind::Rbf { xi: 0.3 }, &[1.0, 2.0], &[1.0, 2.0], LocalScale::default()).unwrap();
        assert_eq!(w, 1.0);
    }

    #[test]
    fn rbf_distance_two_scale_two() {
        // exp(-4 / 4)
        let w = compute_weight(WeightKind::Rbf { xi: 2.0 }, &[0.0, 0.0], &[2.0, 0.0], LocalScale::default()).unwrap();
        assert_abs_diff_eq!(w, 0.367_879_441_171_442_3, epsilon = 1e-15);
    }

    #[test]
    fn rbf_denominator_convention() {
        assert_eq!(WeightKind::rbf_with_denominator(18.0), WeightKind::Rbf { xi: 9.0 });
    }

    #[test]
    fn cosine_of_colinear_vectors() {
        let w = compute_weight(WeightKind::Cosine, &[1.0, -2.0, 0.5], &[2.0, -4.0, 1.0], LocalScale::default()).unwrap();
        assert_abs_diff_eq!(w, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let err = compute_weight(WeightKind::Cosine, &[0.0, 0.0], &[1.0, 0.0], LocalScale::default());
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zmp_requires_positive_scale() {
        let kind = WeightKind::ZelnikManorPerona { var_neighbor: 7 };
        let err = compute_weight(kind, &[0.0], &[1.0], LocalScale { x: 0.0, y: 1.0 });
        assert!(matches!(err, Err(Error::InvalidInput(_))));
        let w = compute_weight(kind, &[0.0], &[1.0], LocalScale { x: 1.0, y: 2.0 }).unwrap();
        assert_abs_diff_eq!(w, (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn mismatched_dimensions() {
        assert!(compute_weight(WeightKind::Cosine, &[1.0], &[1.0, 2.0], LocalScale::default()).is_err());
    }
}
