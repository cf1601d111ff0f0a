use serde::{Deserialize, Serialize};

/// Quadratic scalar field `c0 + c1·x + c2·|x|²` on the plane.
///
/// Covers the weights used in practice: constants, `1 + x¹`, `|x|²`, `1 + |x|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarField {
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c1: [f64; 2],
    #[serde(default)]
    pub c2: f64,
}

impl ScalarField {
    pub const fn constant(c: f64) -> Self {
        Self { c0: c, c1: [0.0, 0.0], c2: 0.0 }
    }

    pub const fn one() -> Self {
        Self::constant(1.0)
    }

    /// `|x|²`, the weight that turns `∫|x|⁻²η u²` into the plain `∫u²`.
    pub const fn r2() -> Self {
        Self { c0: 0.0, c1: [0.0, 0.0], c2: 1.0 }
    }

    pub const fn one_plus_r2() -> Self {
        Self { c0: 1.0, c1: [0.0, 0.0], c2: 1.0 }
    }

    pub const fn one_plus_x1() -> Self {
        Self { c0: 1.0, c1: [1.0, 0.0], c2: 0.0 }
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.c0 + self.c1[0] * x[0] + self.c1[1] * x[1] + self.c2 * (x[0] * x[0] + x[1] * x[1])
    }

    #[inline]
    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        [self.c1[0] + 2.0 * self.c2 * x[0], self.c1[1] + 2.0 * self.c2 * x[1]]
    }

    pub fn is_constant(&self) -> bool {
        self.c1 == [0.0, 0.0] && self.c2 == 0.0
    }

    /// Polynomial degree of the field.
    pub fn degree(&self) -> usize {
        if self.c2 != 0.0 {
            2
        } else if self.c1 != [0.0, 0.0] {
            1
        } else {
            0
        }
    }
}

impl Default for ScalarField {
    fn default() -> Self {
        Self::one()
    }
}
