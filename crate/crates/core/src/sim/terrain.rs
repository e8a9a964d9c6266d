use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Ground surface under the hopper.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terrain {
    #[default]
    Flat,
    /// Plane through the origin rising along +x by `slope_deg` degrees.
    Slope { slope_deg: f64 },
}

impl Terrain {
    pub fn slope(slope_deg: f64) -> Self {
        Terrain::Slope { slope_deg }
    }

    /// Slope angles must be finite and inside (-60, 60) degrees.
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Terrain::Flat => Ok(()),
            Terrain::Slope { slope_deg } if slope_deg.is_finite() && slope_deg.abs() < 60.0 => Ok(()),
            Terrain::Slope { slope_deg } => Err(format!("slope angle {slope_deg} outside (-60, 60) degrees")),
        }
    }

    /// Ground height under `(x, y)`.
    pub fn height(&self, x: f64, _y: f64) -> f64 {
        match *self {
            Terrain::Flat => 0.0,
            Terrain::Slope { slope_deg } => x * slope_deg.to_radians().tan(),
        }
    }

    /// Outward unit normal (constant for both kinds).
    pub fn normal(&self) -> Vector3<f64> {
        match *self {
            Terrain::Flat => Vector3::z(),
            Terrain::Slope { slope_deg } => {
                let a = slope_deg.to_radians();
                Vector3::new(-a.sin(), 0.0, a.cos())
            }
        }
    }

    /// Signed distance of `p` above the surface along the normal.
    pub fn clearance(&self, p: &Vector3<f64>) -> f64 {
        (p.z - self.height(p.x, p.y)) * self.normal().z
    }
}

impl fmt::Display for Terrain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terrain::Flat => f.write_str("flat"),
            Terrain::Slope { slope_deg } => write!(f, "slope:{slope_deg}"),
        }
    }
}

impl FromStr for Terrain {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "flat" {
            return Ok(Terrain::Flat);
        }
        let deg = s
            .strip_prefix("slope:")
            .ok_or_else(|| format!("unknown terrain `{s}` (expected flat or slope:DEG)"))?;
        let deg: f64 = deg.parse().map_err(|_| format!("bad slope angle `{deg}`"))?;
        let t = Terrain::Slope { slope_deg: deg };
        t.validate()?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_is_zero_everywhere() {
        assert_eq!(Terrain::Flat.height(3.0, -7.0), 0.0);
        assert_eq!(Terrain::Flat.normal(), Vector3::z());
    }

    #[test]
    fn slope_normal_is_orthogonal_to_surface() {
        let t = Terrain::slope(10.0);
        let a = Vector3::new(0.0, 0.0, t.height(0.0, 0.0));
        let b = Vector3::new(1.0, 0.5, t.height(1.0, 0.5));
        assert_relative_eq!(t.normal().dot(&(b - a)), 0.0, epsilon = 1e-15);
        assert_relative_eq!(t.normal().norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn slope_height_is_continuous() {
        let t = Terrain::slope(10.0);
        let h0 = t.height(0.2, 0.0);
        let h1 = t.height(0.2 + 1e-9, 0.0);
        assert!((h1 - h0).abs() < 1e-9);
    }

    #[test]
    fn parses_cli_spelling() {
        assert_eq!("flat".parse::<Terrain>().unwrap(), Terrain::Flat);
        assert_eq!("slope:10".parse::<Terrain>().unwrap(), Terrain::slope(10.0));
        assert!("stairs".parse::<Terrain>().is_err());
        assert!("slope:x".parse::<Terrain>().is_err());
    }
}
