use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Softest admissible Young's modulus, GPa.
pub const E_MIN_GPA: f64 = 1e-5;
/// Stiffest admissible Young's modulus (concrete), GPa.
pub const E_MAX_GPA: f64 = 23.0;
/// Largest Poisson's ratio handed to the solver.
pub const NU_CAP: f64 = 0.4995;

/// Isotropic linear-elastic material. `youngs_modulus` is in GPa.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
}

impl MaterialParams {
    pub fn new(youngs_modulus: f64, poissons_ratio: f64) -> Result<Self> {
        let m = Self {
            youngs_modulus,
            poissons_ratio,
        };
        m.validate()?;
        Ok(m)
    }

    /// Like [`MaterialParams::new`] but clamps ν to [`NU_CAP`], for sampling
    /// plans that include the incompressible end of the range.
    pub fn with_capped_ratio(youngs_modulus: f64, poissons_ratio: f64) -> Result<Self> {
        Self::new(youngs_modulus, poissons_ratio.min(NU_CAP))
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.youngs_modulus;
        if !(E_MIN_GPA..=E_MAX_GPA).contains(&e) {
            return Err(Error::Range(format!(
                "Young's modulus {e} GPa outside [{E_MIN_GPA}, {E_MAX_GPA}]"
            )));
        }
        let nu = self.poissons_ratio;
        if nu >= 0.5 {
            return Err(Error::SingularMaterial(format!("Poisson's ratio {nu} must be below 0.5")));
        }
        if !(nu >= 0.0) {
            return Err(Error::Range(format!("Poisson's ratio {nu} outside [0, 0.5)")));
        }
        Ok(())
    }

    pub fn youngs_modulus_pa(&self) -> f64 {
        self.youngs_modulus * 1e9
    }
}

/// A force of `magnitude` newtons along `direction`, spread over one of the
/// mesh's predefined load sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSpec {
    pub magnitude: f64,
    pub location_index: usize,
    pub direction: [f64; 3],
}

pub const DOWN: [f64; 3] = [0.0, 0.0, -1.0];

impl ForceSpec {
    pub fn new(magnitude: f64, location_index: usize, direction: [f64; 3]) -> Result<Self> {
        let f = Self {
            magnitude,
            location_index,
            direction,
        };
        f.validate()?;
        Ok(f)
    }

    /// Downward force.
    pub fn downward(magnitude: f64, location_index: usize) -> Result<Self> {
        Self::new(magnitude, location_index, DOWN)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::Range(format!("force magnitude {} must be ≥ 0", self.magnitude)));
        }
        let norm = Vector3::from(self.direction).norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("force direction has norm {norm}, expected 1")));
        }
        Ok(())
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::from(self.direction) * self.magnitude
    }
}
