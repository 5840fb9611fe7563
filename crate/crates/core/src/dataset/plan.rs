use serde::{Deserialize, Serialize};

use crate::elastic::{MaterialParams, E_MAX_GPA, E_MIN_GPA, NU_CAP};
use crate::error::{Error, Result};

/// Poisson's ratio used when a plan samples E alone.
pub const DEFAULT_CONSTANT_NU: f64 = 0.3;

/// Which parameter combinations a dataset covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingPlan {
    /// Log-uniform samples of E, endpoints included.
    pub e_samples: usize,
    /// E range in GPa.
    pub e_range: [f64; 2],
    /// Linear samples of ν, endpoints included. Ignored when `nu_constant` is set.
    pub nu_samples: usize,
    pub nu_range: [f64; 2],
    /// Fixed ν for plans that vary E only.
    pub nu_constant: Option<f64>,
    /// Magnitudes `f_max · i / (k - 1)`, zero included; a single sample is `f_max`.
    pub force_samples: usize,
    /// Explicit force range maximum in newtons; calibrated per object when absent.
    pub force_max: Option<f64>,
    /// Fraction of object height the loaded nodes of the softest material move,
    /// on average, at `f_max` under calibration.
    pub calibration_deflection: f64,
    pub force_direction: [f64; 3],
    pub location_count: usize,
    /// Stretch factors per axis, linear over `scale_range`; the plan covers all triples.
    pub scale_samples_per_axis: usize,
    pub scale_range: [f64; 2],
    pub rotations_per_axis: usize,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            e_samples: 1,
            e_range: [E_MIN_GPA, E_MAX_GPA],
            nu_samples: 1,
            nu_range: [0.0, 0.5],
            nu_constant: None,
            force_samples: 1,
            force_max: None,
            calibration_deflection: 0.3,
            force_direction: crate::elastic::DOWN,
            location_count: 1,
            scale_samples_per_axis: 1,
            scale_range: [0.5, 1.5],
            rotations_per_axis: 1,
        }
    }
}

fn linspace(count: usize, [lo, hi]: [f64; 2]) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        k => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
    }
}

impl SamplingPlan {
    /// `1 × n`: n moduli at constant ν.
    pub fn modulus_only(n: usize) -> Self {
        Self {
            e_samples: n,
            nu_constant: Some(DEFAULT_CONSTANT_NU),
            ..Self::default()
        }
    }

    /// `k × k` joint grid over E and ν.
    pub fn joint(e_samples: usize, nu_samples: usize) -> Self {
        Self {
            e_samples,
            nu_samples,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("e_samples", self.e_samples),
            ("nu_samples", self.nu_samples),
            ("force_samples", self.force_samples),
            ("location_count", self.location_count),
            ("scale_samples_per_axis", self.scale_samples_per_axis),
            ("rotations_per_axis", self.rotations_per_axis),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let [elo, ehi] = self.e_range;
        if !(E_MIN_GPA <= elo && elo <= ehi && ehi <= E_MAX_GPA) {
            return Err(Error::Config(format!("e_range {:?} outside [{E_MIN_GPA}, {E_MAX_GPA}]", self.e_range)));
        }
        let [nlo, nhi] = self.nu_range;
        if !(0.0 <= nlo && nlo <= nhi && nhi <= 0.5) {
            return Err(Error::Config(format!("nu_range {:?} outside [0, 0.5]", self.nu_range)));
        }
        if let Some(nu) = self.nu_constant {
            if !(0.0..0.5).contains(&nu) {
                return Err(Error::Config(format!("nu_constant {nu} outside [0, 0.5)")));
            }
        }
        if let Some(f) = self.force_max {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Config(format!("force_max {f} must be positive")));
            }
        }
        if !(self.calibration_deflection > 0.0) {
            return Err(Error::Config("calibration_deflection must be positive".into()));
        }
        let [slo, shi] = self.scale_range;
        if !(0.0 < slo && slo <= shi) {
            return Err(Error::Config(format!("scale_range {:?} is invalid", self.scale_range)));
        }
        crate::elastic::ForceSpec::new(0.0, 0, self.force_direction)?;
        Ok(())
    }

    pub fn moduli(&self) -> Vec<f64> {
        let [lo, hi] = self.e_range;
        linspace(self.e_samples, [lo.ln(), hi.ln()]).into_iter().map(f64::exp).collect()
    }

    pub fn poisson_ratios(&self) -> Vec<f64> {
        match self.nu_constant {
            Some(nu) => vec![nu],
            None => linspace(self.nu_samples, self.nu_range).into_iter().map(|v| v.min(NU_CAP)).collect(),
        }
    }

    pub fn force_fractions(&self) -> Vec<f64> {
        match self.force_samples {
            1 => vec![1.0],
            k => (0..k).map(|i| i as f64 / (k - 1) as f64).collect(),
        }
    }

    pub fn scales(&self) -> Vec<[f64; 3]> {
        let s = match self.scale_samples_per_axis {
            1 => vec![1.0],
            k => linspace(k, self.scale_range),
        };
        let mut out = Vec::with_capacity(s.len().pow(3));
        for &x in &s {
            for &y in &s {
                for &z in &s {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }

    /// Records per object in full-3D mode.
    pub fn records_per_object(&self) -> usize {
        self.e_samples
            * self.poisson_ratios().len()
            * self.force_samples
            * self.location_count
            * self.scale_samples_per_axis.pow(3)
    }
}

/// Cartesian product of the plan's moduli and Poisson ratios, E-major.
pub fn sample_materials(plan: &SamplingPlan) -> Result<Vec<MaterialParams>> {
    plan.validate()?;
    let nus = plan.poisson_ratios();
    let mut out = Vec::with_capacity(plan.e_samples * nus.len());
    for e in plan.moduli() {
        for &nu in &nus {
            out.push(MaterialParams::with_capped_ratio(e.clamp(E_MIN_GPA, E_MAX_GPA), nu)?);
        }
    }
    Ok(out)
}
