//! WGS-84 conversions and geometry assembly.

use nalgebra::{DVector, Vector3};

use super::{Constellation, LinearModel};
use crate::error::{Error, Result};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;

/// Geodetic latitude/longitude (degrees) and height (m) to ECEF (m).
pub fn lla_to_ecef(lat_deg: f64, lon_deg: f64, h: f64) -> Vector3<f64> {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    let n = WGS84_A / (1.0 - e2 * lat.sin().powi(2)).sqrt();
    Vector3::new(
        (n + h) * lat.cos() * lon.cos(),
        (n + h) * lat.cos() * lon.sin(),
        (n * (1.0 - e2) + h) * lat.sin(),
    )
}

/// Geodetic latitude and longitude (radians) of an ECEF point.
pub fn ecef_to_latlon(p: &Vector3<f64>) -> (f64, f64) {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let lon = p.y.atan2(p.x);
    let rho = p.x.hypot(p.y);
    let mut lat = p.z.atan2(rho * (1.0 - e2));
    for _ in 0..6 {
        let n = WGS84_A / (1.0 - e2 * lat.sin().powi(2)).sqrt();
        let h = rho / lat.cos() - n;
        lat = p.z.atan2(rho * (1.0 - e2 * n / (n + h)));
    }
    (lat, lon)
}

/// Unit line-of-sight vector from `user` to `sat` in the user's local ENU frame.
pub fn los_enu(user: &Vector3<f64>, sat: &Vector3<f64>) -> [f64; 3] {
    let (lat, lon) = ecef_to_latlon(user);
    let d = (sat - user).normalize();
    let (sl, cl, so, co) = (lat.sin(), lat.cos(), lon.sin(), lon.cos());
    [
        -so * d.x + co * d.y,
        -sl * co * d.x - sl * so * d.y + cl * d.z,
        cl * co * d.x + cl * so * d.y + sl * d.z,
    ]
}

/// Elevation (degrees) of an ENU line-of-sight vector.
pub fn elevation_deg(los: &[f64; 3]) -> f64 {
    los[2].clamp(-1.0, 1.0).asin().to_degrees()
}

/// A satellite seen from a user, ready for model assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleSat {
    pub id: String,
    pub constellation: Constellation,
    pub los: [f64; 3],
    pub elevation_deg: f64,
}

/// Satellites above the mask, in input order.
pub fn visible_sats(
    user: &Vector3<f64>,
    sats: &[(String, Vector3<f64>, Constellation)],
    mask_deg: f64,
) -> Vec<VisibleSat> {
    sats.iter()
        .filter_map(|(id, pos, c)| {
            let los = los_enu(user, pos);
            let el = elevation_deg(&los);
            (el > mask_deg).then(|| VisibleSat { id: id.clone(), constellation: *c, los, elevation_deg: el })
        })
        .collect()
}

/// Unit-weight, zero-observation model for the satellites above `mask_deg`.
pub fn assemble_geometry(
    user: &Vector3<f64>,
    sats: &[(String, Vector3<f64>, Constellation)],
    mask_deg: f64,
) -> Result<LinearModel<f64>> {
    let vis = visible_sats(user, sats, mask_deg);
    model_from_visible(&vis, DVector::from_element(vis.len(), 1.0))
}

pub fn model_from_visible(vis: &[VisibleSat], w: DVector<f64>) -> Result<LinearModel<f64>> {
    if vis.is_empty() {
        return Err(Error::InsufficientGeometry("no satellite above the mask".into()));
    }
    let los: Vec<[f64; 3]> = vis.iter().map(|v| v.los).collect();
    let consts: Vec<Constellation> = vis.iter().map(|v| v.constellation).collect();
    let ids = vis.iter().map(|v| v.id.clone()).collect();
    let n = vis.len();
    LinearModel::from_los(&los, &consts, ids, w, DVector::zeros(n))
}
