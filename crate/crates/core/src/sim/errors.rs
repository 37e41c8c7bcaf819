//! Per-measurement error models: orbit and clock, troposphere, and airborne
//! multipath plus noise on the ionosphere-free combination.

use serde::{Deserialize, Serialize};

use crate::dist::ErrorDistribution;
use crate::error::{Error, Result};
use crate::model::Constellation;
use crate::overbound::{PgoConstruction, SatelliteBound};

const GPS_L1: f64 = 1575.42;
const GPS_L2: f64 = 1227.60;
const GAL_E5A: f64 = 1176.45;

/// Residual troposphere sigma, m.
pub fn tropo_sigma(elev_deg: f64) -> f64 {
    0.12 * 1.001 / (0.002001 + elev_deg.to_radians().sin().powi(2)).sqrt()
}

/// Noise inflation of the dual-frequency ionosphere-free combination.
pub fn if_factor(f_a: f64, f_b: f64) -> f64 {
    let g = (f_a / f_b).powi(2);
    ((g * g + 1.0) / ((g - 1.0) * (g - 1.0))).sqrt()
}

pub fn gps_noise_sigma(elev_deg: f64) -> f64 {
    0.15 + 0.43 * (-elev_deg / 6.9).exp()
}

pub fn gps_multipath_sigma(elev_deg: f64) -> f64 {
    0.13 + 0.53 * (-elev_deg / 10.0).exp()
}

/// Single-frequency airborne multipath plus noise, GPS.
pub fn gps_user_sigma(elev_deg: f64) -> f64 {
    gps_noise_sigma(elev_deg).hypot(gps_multipath_sigma(elev_deg))
}

const GAL_USER: [(f64, f64); 18] = [
    (5.0, 0.4529),
    (10.0, 0.3553),
    (15.0, 0.3063),
    (20.0, 0.2638),
    (25.0, 0.2593),
    (30.0, 0.2555),
    (35.0, 0.2504),
    (40.0, 0.2438),
    (45.0, 0.2396),
    (50.0, 0.2359),
    (55.0, 0.2339),
    (60.0, 0.2302),
    (65.0, 0.2295),
    (70.0, 0.2278),
    (75.0, 0.2297),
    (80.0, 0.2310),
    (85.0, 0.2274),
    (90.0, 0.2277),
];

/// Single-frequency airborne multipath plus noise, Galileo, linearly
/// interpolated between 5 degree nodes and held flat outside them.
pub fn gal_user_sigma(elev_deg: f64) -> f64 {
    let (first, last) = (GAL_USER[0], GAL_USER[GAL_USER.len() - 1]);
    if elev_deg <= first.0 {
        return first.1;
    }
    if elev_deg >= last.0 {
        return last.1;
    }
    let i = GAL_USER.partition_point(|(e, _)| *e <= elev_deg) - 1;
    let ((e0, s0), (e1, s1)) = (GAL_USER[i], GAL_USER[i + 1]);
    s0 + (s1 - s0) * (elev_deg - e0) / (e1 - e0)
}

/// Multipath plus noise on the ionosphere-free combination.
pub fn cnmp_if_sigma(c: Constellation, elev_deg: f64) -> f64 {
    match c {
        Constellation::Gps => gps_user_sigma(elev_deg) * if_factor(GPS_L1, GPS_L2),
        Constellation::Galileo => gal_user_sigma(elev_deg) * if_factor(GPS_L1, GAL_E5A),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFlavor {
    Gaussian,
    #[default]
    Pgo,
}

/// Truth sampler and bounds for one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementErrorModel {
    /// Distribution the simulated error is drawn from.
    pub truth: ErrorDistribution,
    /// Accuracy bound of the chosen flavor.
    pub acc: ErrorDistribution,
    /// Gaussian overbound sigma of the whole range error.
    pub gauss_sigma: f64,
    pub b_nom: f64,
}

/// Error model of a satellite seen at `elev_deg`.
pub fn error_model(
    sat: &SatelliteBound,
    c: Constellation,
    elev_deg: f64,
    flavor: BoundFlavor,
    construction: PgoConstruction,
    b_nom: f64,
) -> Result<MeasurementErrorModel> {
    if !(elev_deg > 0.0 && elev_deg <= 90.0) {
        return Err(Error::InsufficientGeometry(format!("elevation {elev_deg} out of range")));
    }
    let local = tropo_sigma(elev_deg).hypot(cnmp_if_sigma(c, elev_deg));
    let local_d = ErrorDistribution::gaussian(local);
    let truth = ErrorDistribution::Sum { parts: vec![sat.bgmm(), local_d.clone()] };
    let gauss_sigma = sat.gauss_sigma_m.hypot(local);
    let acc = match flavor {
        BoundFlavor::Gaussian => ErrorDistribution::gaussian(gauss_sigma),
        BoundFlavor::Pgo => ErrorDistribution::Sum { parts: vec![ErrorDistribution::Pgo(sat.pgo(construction)?), local_d] },
    };
    Ok(MeasurementErrorModel { truth, acc, gauss_sigma, b_nom })
}
