use serde::{Deserialize, Serialize};

use super::{im_part, min_eig_hermitian_part, re_part, AlgebraElement, POSITIVITY_TOL};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `Im b > 0`
    Upper,
    /// `Im b < 0`
    Lower,
    /// `Re b > 0`, i.e. `(−i)H⁺`
    Right,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
            Side::Right => "right",
        }
    }
}

/// An element certified to lie in one of the open noncommutative half-planes.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfPlanePoint {
    value: AlgebraElement,
    side: Side,
}

impl HalfPlanePoint {
    pub fn new(value: AlgebraElement, side: Side) -> Result<Self> {
        let margin = Self::margin_of(&value, side);
        if margin > POSITIVITY_TOL {
            Ok(Self { value, side })
        } else {
            Err(Error::NotInHalfPlane {
                side: side.name(),
                margin,
            })
        }
    }

    pub fn upper(value: AlgebraElement) -> Result<Self> {
        Self::new(value, Side::Upper)
    }

    /// Signed distance into the half-plane: `λ_min(Im b)`, `−λ_max(Im b)` or `λ_min(Re b)`.
    pub fn margin_of(value: &AlgebraElement, side: Side) -> f64 {
        match side {
            Side::Upper => min_eig_hermitian_part(&im_part(value.matrix())),
            Side::Lower => min_eig_hermitian_part(&(-im_part(value.matrix()))),
            Side::Right => min_eig_hermitian_part(&re_part(value.matrix())),
        }
    }

    pub fn margin(&self) -> f64 {
        Self::margin_of(&self.value, self.side)
    }

    pub fn value(&self) -> &AlgebraElement {
        &self.value
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn into_value(self) -> AlgebraElement {
        self.value
    }
}
