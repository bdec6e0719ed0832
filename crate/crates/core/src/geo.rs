//! Landsat cross-track coverage along a parallel on a spherical Earth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parallels at or beyond this latitude are rejected.
pub const MAX_LATITUDE_DEG: f64 = 82.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrosstrackConfig {
    pub scene_width_km: f64,
    /// Angle between the scene's across-track edge and the parallel.
    pub inclination_offset_deg: f64,
    pub tracks_per_cycle: f64,
    /// 40000 km reproduces both quoted anchors (1.07 at the equator and
    /// 1.50 at 45 degrees); the geodetic 40075 km gives 1.065 and 0.065
    /// overlap.
    pub equator_circumference_km: f64,
}

impl Default for CrosstrackConfig {
    fn default() -> Self {
        CrosstrackConfig {
            scene_width_km: 185.0,
            inclination_offset_deg: 8.2,
            tracks_per_cycle: 233.0,
            equator_circumference_km: 40_000.0,
        }
    }
}

impl CrosstrackConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.scene_width_km,
            self.inclination_offset_deg,
            self.tracks_per_cycle,
            self.equator_circumference_km,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("cross-track parameters must be positive: {self:?}")))
        }
    }

    /// Total horizontal width swept in one repeat cycle.
    pub fn swept_km(&self) -> f64 {
        self.scene_width_km * self.inclination_offset_deg.to_radians().cos() * self.tracks_per_cycle
    }

    /// Swept width over the length of the parallel at `latitude_deg`.
    pub fn ratio(&self, latitude_deg: f64) -> Result<f64> {
        self.validate()?;
        if !latitude_deg.is_finite() || latitude_deg.abs() >= MAX_LATITUDE_DEG {
            return Err(Error::Domain(format!(
                "latitude {latitude_deg} outside (-{MAX_LATITUDE_DEG}, {MAX_LATITUDE_DEG})"
            )));
        }
        Ok(self.swept_km() / (self.equator_circumference_km * latitude_deg.to_radians().cos()))
    }

    /// Fraction of the parallel imaged at least twice per cycle.
    pub fn overlap(&self, latitude_deg: f64) -> Result<f64> {
        Ok((self.ratio(latitude_deg)? - 1.0).clamp(0.0, 1.0))
    }
}

pub fn crosstrack_ratio(latitude_deg: f64) -> Result<f64> {
    CrosstrackConfig::default().ratio(latitude_deg)
}

pub fn overlap_fraction(latitude_deg: f64) -> Result<f64> {
    CrosstrackConfig::default().overlap(latitude_deg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrosstrackRow {
    pub latitude_deg: f64,
    pub ratio: f64,
    pub overlap_fraction: f64,
}

/// Rows for `start, start + step, ...` up to and including `end`.
pub fn table(cfg: &CrosstrackConfig, start: f64, end: f64, step: f64) -> Result<Vec<CrosstrackRow>> {
    if !(step > 0.0) || !(end >= start) {
        return Err(Error::Domain(format!("bad latitude range {start}:{end}:{step}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| {
            let lat = start + i as f64 * step;
            Ok(CrosstrackRow {
                latitude_deg: lat,
                ratio: cfg.ratio(lat)?,
                overlap_fraction: cfg.overlap(lat)?,
            })
        })
        .collect()
}
