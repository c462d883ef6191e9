use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial order of the per-voxel current expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisOrder {
    /// One pulse per voxel.
    Pwc,
    /// Pulse plus the three linear ramps.
    Pwl,
}

impl BasisOrder {
    pub fn functions_per_voxel(self) -> usize {
        match self {
            BasisOrder::Pwc => 1,
            BasisOrder::Pwl => 4,
        }
    }
}

/// Value of basis function `l` (1-based) of the voxel centred at `center`
/// with edge lengths `delta`. Zero outside the closed voxel.
pub fn basis_eval(order: BasisOrder, l: usize, center: [f64; 3], delta: [f64; 3], r: [f64; 3]) -> Result<f64> {
    if l == 0 || l > order.functions_per_voxel() {
        return Err(Error::InvalidArgument(format!(
            "basis index {l} out of range 1..={} for {order:?}",
            order.functions_per_voxel()
        )));
    }
    let local = [r[0] - center[0], r[1] - center[1], r[2] - center[2]];
    let inside = (0..3).all(|k| local[k].abs() <= 0.5 * delta[k] * (1.0 + 1e-12));
    if !inside {
        return Ok(0.0);
    }
    Ok(match l {
        1 => 1.0,
        _ => local[l - 2] / delta[l - 2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const C: [f64; 3] = [1.0, 2.0, 3.0];
    const D: [f64; 3] = [0.2, 0.1, 0.4];

    #[test]
    fn ramp_vanishes_at_center() {
        assert_eq!(basis_eval(BasisOrder::Pwl, 2, C, D, C).unwrap(), 0.0);
    }

    #[test]
    fn outside_is_zero() {
        for l in 1..=4 {
            assert_eq!(basis_eval(BasisOrder::Pwl, l, C, D, [1.2, 2.0, 3.0]).unwrap(), 0.0);
        }
        assert_eq!(basis_eval(BasisOrder::Pwc, 1, C, D, [1.0, 2.0, 3.3]).unwrap(), 0.0);
    }

    #[test]
    fn ramp_at_face_center() {
        let v = basis_eval(BasisOrder::Pwl, 2, C, D, [1.1, 2.0, 3.0]).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let v = basis_eval(BasisOrder::Pwl, 4, C, D, [1.0, 2.0, 2.8]).unwrap();
        assert!((v + 0.5).abs() < 1e-12);
    }

    #[test]
    fn pulse_inside() {
        assert_eq!(basis_eval(BasisOrder::Pwc, 1, C, D, [1.05, 1.97, 3.1]).unwrap(), 1.0);
    }

    #[test]
    fn index_checked() {
        assert!(basis_eval(BasisOrder::Pwc, 2, C, D, C).is_err());
        assert!(basis_eval(BasisOrder::Pwl, 0, C, D, C).is_err());
        assert!(basis_eval(BasisOrder::Pwl, 5, C, D, C).is_err());
    }
}
