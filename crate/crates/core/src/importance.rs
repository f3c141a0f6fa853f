//! Composite importance field: anisotropic Gaussian plume (optionally skewed
//! by a logistic wind factor), a sixth-power attraction toward the spill
//! centre and a small positive offset. After [`ImportanceField::normalize`]
//! the field is a probability density over the region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Region};
use crate::integration::{self, Quadrature};

/// Offset added to the raw field so weights never underflow.
pub const DEFAULT_OFFSET: f64 = 1e-12;

/// Relative tolerance used when computing the normalization constant.
pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSpec {
    /// Logistic steepness, 1/m.
    pub k: f64,
    /// Logistic midpoint along y, m.
    pub y0: f64,
}

impl WindSpec {
    #[inline]
    pub fn factor(&self, y: f64) -> f64 {
        1.0 / (1.0 + (-self.k * (y - self.y0)).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlumeSpec {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind: Option<WindSpec>,
}

impl PlumeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x > 0.0 && self.sigma_y > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "plume widths must be positive, got sigma_x = {}, sigma_y = {}",
                self.sigma_x, self.sigma_y
            )));
        }
        if let Some(w) = self.wind {
            if !(w.k > 0.0) || !w.y0.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "wind steepness must be positive, got k = {}",
                    w.k
                )));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Point {
        Point::new(self.mu_x, self.mu_y)
    }
}

/// Gaussian plume value at `q`, in `(0, 1]`.
#[inline]
pub fn plume_eval(spec: &PlumeSpec, q: Point) -> f64 {
    let dx = q.x - spec.mu_x;
    let dy = q.y - spec.mu_y;
    let g = (-(dx * dx) / (2.0 * spec.sigma_x * spec.sigma_x)
        - (dy * dy) / (2.0 * spec.sigma_y * spec.sigma_y))
        .exp();
    match spec.wind {
        Some(w) => g * w.factor(q.y),
        None => g,
    }
}

/// Artificial attraction toward a centre, falling from 1 to 0 at distance `reach`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attraction {
    pub center: Point,
    /// Largest distance from `center` to any corner of the region.
    pub reach: f64,
}

impl Attraction {
    pub fn for_region(center: Point, region: &Region) -> Self {
        let reach = region
            .corners()
            .iter()
            .map(|c| c.distance(center))
            .fold(0.0, f64::max);
        Self { center, reach }
    }

    /// `1 − (d/D)⁶`, clamped at zero beyond the reach.
    #[inline]
    pub fn eval(&self, q: Point) -> f64 {
        let r2 = (q - self.center).norm_squared() / (self.reach * self.reach);
        (1.0 - r2 * r2 * r2).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceField {
    pub region: Region,
    pub plume: Option<PlumeSpec>,
    pub attraction: Option<Attraction>,
    pub offset: f64,
    normalization_constant: f64,
    inv_normalization: f64,
}

impl ImportanceField {
    /// Plume + attraction (centred on the spill) + offset. Unnormalized.
    pub fn composite(region: Region, plume: PlumeSpec, offset: f64) -> Result<Self> {
        plume.validate()?;
        let attraction = Attraction::for_region(plume.center(), &region);
        Self::from_parts(region, Some(plume), Some(attraction), offset)
    }

    /// Constant field `offset` over the region.
    pub fn uniform(region: Region, offset: f64) -> Result<Self> {
        Self::from_parts(region, None, None, offset)
    }

    pub fn from_parts(
        region: Region,
        plume: Option<PlumeSpec>,
        attraction: Option<Attraction>,
        offset: f64,
    ) -> Result<Self> {
        if !(offset > 0.0) || !offset.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "offset must be positive, got {offset}"
            )));
        }
        if let Some(p) = &plume {
            p.validate()?;
        }
        if let Some(a) = &attraction {
            if !(a.reach > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "attraction reach must be positive, got {}",
                    a.reach
                )));
            }
        }
        Ok(Self {
            region,
            plume,
            attraction,
            offset,
            normalization_constant: 1.0,
            inv_normalization: 1.0,
        })
    }

    pub fn normalization_constant(&self) -> f64 {
        self.normalization_constant
    }

    #[inline]
    pub fn attraction_eval(&self, q: Point) -> f64 {
        self.attraction.map_or(0.0, |a| a.eval(q))
    }

    #[inline]
    pub fn plume_eval(&self, q: Point) -> f64 {
        self.plume.as_ref().map_or(0.0, |p| plume_eval(p, q))
    }

    /// Unnormalized sum of all components.
    #[inline]
    pub fn composite_eval_raw(&self, q: Point) -> f64 {
        self.plume_eval(q) + self.attraction_eval(q) + self.offset
    }

    /// Field value divided by the normalization constant.
    #[inline]
    pub fn eval(&self, q: Point) -> f64 {
        self.composite_eval_raw(q) * self.inv_normalization
    }

    /// Integrates the raw field over the region and stores the result as the
    /// normalization constant.
    pub fn normalize(mut self) -> Result<Self> {
        let quad = Quadrature {
            rel_tol: NORMALIZATION_TOL,
            ..Quadrature::default()
        };
        let profile = integration::build_profile(&self.region.to_polygon())?;
        let z = integration::weighted_mass(&profile, |q| self.composite_eval_raw(q), &quad)?;
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "normalization constant {z} is not positive"
            )));
        }
        self.normalization_constant = z;
        self.inv_normalization = 1.0 / z;
        Ok(self)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization_constant != 1.0 || self.inv_normalization != 1.0
    }
}
