use serde::{Deserialize, Serialize};

use crate::elastic::{ForceSpec, MaterialParams, E_MAX_GPA, E_MIN_GPA};
use crate::error::{Error, Result};

/// How the force location enters the condition vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationEncoding {
    /// One entry, `index / (L - 1)`.
    Real,
    /// `L` entries with a single 1.
    OneHot,
}

impl LocationEncoding {
    pub fn condition_length(self, location_count: usize) -> usize {
        match self {
            LocationEncoding::Real => 4,
            LocationEncoding::OneHot => 3 + location_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LocationCode {
    Real(f64),
    OneHot { index: usize, count: usize },
}

/// Normalized condition `y`, every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionVector {
    pub e_scaled: f64,
    pub nu_scaled: f64,
    pub force_scaled: f64,
    pub location: LocationCode,
}

/// `(ln E - ln E_min) / (ln E_max - ln E_min)`.
pub fn scale_modulus(e_gpa: f64) -> Result<f64> {
    if !(E_MIN_GPA..=E_MAX_GPA).contains(&e_gpa) {
        return Err(Error::Range(format!("E = {e_gpa} GPa outside [{E_MIN_GPA}, {E_MAX_GPA}]")));
    }
    Ok(((e_gpa.ln() - E_MIN_GPA.ln()) / (E_MAX_GPA.ln() - E_MIN_GPA.ln())).clamp(0.0, 1.0))
}

pub fn unscale_modulus(e_scaled: f64) -> f64 {
    (E_MIN_GPA.ln() + e_scaled * (E_MAX_GPA.ln() - E_MIN_GPA.ln())).exp()
}

pub fn encode_condition(
    m: &MaterialParams,
    f: &ForceSpec,
    f_max: f64,
    mode: LocationEncoding,
    location_count: usize,
) -> Result<ConditionVector> {
    let e_scaled = scale_modulus(m.youngs_modulus)?;
    if !(0.0..=0.5).contains(&m.poissons_ratio) {
        return Err(Error::Range(format!("ν = {} outside [0, 0.5]", m.poissons_ratio)));
    }
    if !(f_max > 0.0) {
        return Err(Error::Range(format!("force range maximum {f_max} must be positive")));
    }
    if !(0.0..=f_max).contains(&f.magnitude) {
        return Err(Error::Range(format!("force {} N outside [0, {f_max}]", f.magnitude)));
    }
    if location_count == 0 || f.location_index >= location_count {
        return Err(Error::Range(format!(
            "force location {} outside [0, {location_count})",
            f.location_index
        )));
    }
    let location = match mode {
        LocationEncoding::Real if location_count == 1 => LocationCode::Real(0.0),
        LocationEncoding::Real => LocationCode::Real(f.location_index as f64 / (location_count - 1) as f64),
        LocationEncoding::OneHot => LocationCode::OneHot {
            index: f.location_index,
            count: location_count,
        },
    };
    Ok(ConditionVector {
        e_scaled,
        nu_scaled: m.poissons_ratio / 0.5,
        force_scaled: f.magnitude / f_max,
        location,
    })
}

/// Raw quantities recovered from a condition vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodedCondition {
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    pub force: f64,
    pub location_index: usize,
}

impl ConditionVector {
    pub fn encoding(&self) -> LocationEncoding {
        match self.location {
            LocationCode::Real(_) => LocationEncoding::Real,
            LocationCode::OneHot { .. } => LocationEncoding::OneHot,
        }
    }

    pub fn len(&self) -> usize {
        match self.location {
            LocationCode::Real(_) => 4,
            LocationCode::OneHot { count, .. } => 3 + count,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.e_scaled, self.nu_scaled, self.force_scaled];
        match self.location {
            LocationCode::Real(x) => v.push(x),
            LocationCode::OneHot { index, count } => v.extend((0..count).map(|i| if i == index { 1.0 } else { 0.0 })),
        }
        v
    }

    /// Inverse of [`encode_condition`]; `location_count` is needed to undo the real-valued location.
    pub fn decode(&self, f_max: f64, location_count: usize) -> DecodedCondition {
        let location_index = match self.location {
            LocationCode::Real(x) => (x * (location_count.max(1) - 1) as f64).round() as usize,
            LocationCode::OneHot { index, .. } => index,
        };
        DecodedCondition {
            youngs_modulus: unscale_modulus(self.e_scaled),
            poissons_ratio: self.nu_scaled * 0.5,
            force: self.force_scaled * f_max,
            location_index,
        }
    }

    /// Rebuilds a condition from its flat form.
    pub fn from_values(values: &[f64], mode: LocationEncoding) -> Result<Self> {
        if values.len() < 4 || (mode == LocationEncoding::Real && values.len() != 4) {
            return Err(Error::Shape(format!("{} condition values for {mode:?} encoding", values.len())));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Range(format!("condition entries {values:?} outside [0, 1]")));
        }
        let location = match mode {
            LocationEncoding::Real => LocationCode::Real(values[3]),
            LocationEncoding::OneHot => {
                let hot = &values[3..];
                let ones: Vec<usize> = (0..hot.len()).filter(|&i| hot[i] == 1.0).collect();
                if ones.len() != 1 || hot.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Range(format!("location block {hot:?} is not one-hot")));
                }
                LocationCode::OneHot {
                    index: ones[0],
                    count: hot.len(),
                }
            }
        };
        Ok(Self {
            e_scaled: values[0],
            nu_scaled: values[1],
            force_scaled: values[2],
            location,
        })
    }
}
