//! Environmental-channel augmentation consistent with the traffic state:
//! normal records stay inside each channel's configured band, abnormal
//! records exceed it with a configured probability.

use crate::error::{Error, Result};
use crate::preprocess::{FlowRecord, ENV_CHANNELS};
use crate::RngState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvChannelSpec {
    pub name: String,
    pub band_min: f64,
    pub band_max: f64,
    /// Excursion reach as a fraction of the band width beyond the edge.
    pub excursion_scale: f64,
}

impl EnvChannelSpec {
    fn new(name: &str, band_min: f64, band_max: f64) -> Self {
        EnvChannelSpec { name: name.into(), band_min, band_max, excursion_scale: 0.5 }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.band_min..=self.band_max).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvGeneratorConfig {
    pub channels: Vec<EnvChannelSpec>,
    /// Probability that an abnormal record's channels leave their bands.
    pub excursion_probability: f64,
}

impl Default for EnvGeneratorConfig {
    fn default() -> Self {
        EnvGeneratorConfig {
            channels: vec![
                EnvChannelSpec::new("pressure_hpa", 990.0, 1020.0),
                EnvChannelSpec::new("humidity_pct", 30.0, 70.0),
                EnvChannelSpec::new("temperature_c", -5.0, 35.0),
                EnvChannelSpec::new("wind_speed_ms", 0.0, 20.0),
                EnvChannelSpec::new("precipitation_mm", 0.0, 8.0),
                EnvChannelSpec::new("visibility_km", 2.0, 20.0),
                EnvChannelSpec::new("surface_accel_x", -0.5, 0.5),
                EnvChannelSpec::new("surface_accel_y", -0.5, 0.5),
                EnvChannelSpec::new("surface_accel_z", -0.5, 0.5),
                EnvChannelSpec::new("surface_gravity_mgal", -40.0, 40.0),
                EnvChannelSpec::new("illuminance_klx", 0.0, 100.0),
                EnvChannelSpec::new("air_quality_aqi", 10.0, 80.0),
                EnvChannelSpec::new("noise_db", 30.0, 70.0),
            ],
            excursion_probability: 0.75,
        }
    }
}

impl EnvGeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != ENV_CHANNELS {
            return Err(Error::Configuration(format!(
                "expected {ENV_CHANNELS} environment channels, got {}",
                self.channels.len()
            )));
        }
        for c in &self.channels {
            if c.band_min > c.band_max {
                return Err(Error::Configuration(format!(
                    "channel {:?} band min {} exceeds max {}",
                    c.name, c.band_min, c.band_max
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.excursion_probability) {
            return Err(Error::Configuration(format!(
                "excursion probability {} outside [0, 1]",
                self.excursion_probability
            )));
        }
        Ok(())
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }
}

/// Fills every record's environment channels in place. Normal records draw
/// uniformly inside each band; abnormal records leave every band when the
/// per-record excursion draw fires. Deterministic under the rng seed.
pub fn augment_environment(
    records: &mut [FlowRecord],
    cfg: &EnvGeneratorConfig,
    rng: &mut RngState,
) -> Result<()> {
    cfg.validate()?;
    for record in records.iter_mut() {
        let excursion = record.abnormal && rng.uniform() < cfg.excursion_probability;
        record.environment = cfg
            .channels
            .iter()
            .map(|c| {
                if excursion {
                    let width = (c.band_max - c.band_min).max(1e-9);
                    // Strictly outside the band: u in (0, 1] scales the reach.
                    let u = 1.0 - rng.uniform();
                    let reach = u * c.excursion_scale * width;
                    if rng.uniform() < 0.5 {
                        c.band_max + reach
                    } else {
                        c.band_min - reach
                    }
                } else {
                    rng.uniform_in(c.band_min, c.band_max)
                }
            })
            .collect();
    }
    Ok(())
}
