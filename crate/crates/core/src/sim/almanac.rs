//! YUMA almanacs and Keplerian propagation.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Constellation;

pub const MU: f64 = 3.986005e14;
pub const OMEGA_E: f64 = 7.2921151467e-5;
const WEEK_S: f64 = 604800.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmanacEntry {
    pub prn: u32,
    /// Label used to look up the satellite's error bounds.
    pub svn: String,
    pub constellation: Constellation,
    pub health: u32,
    pub eccentricity: f64,
    pub toa: f64,
    pub inclination: f64,
    pub raan_rate: f64,
    pub sqrt_a: f64,
    pub raan0: f64,
    pub arg_perigee: f64,
    pub mean_anomaly: f64,
    pub af0: f64,
    pub af1: f64,
    pub week: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Earth-fixed, with Earth rotation.
    Ecef,
    /// Non-rotating frame aligned with ECEF at `toa`.
    Inertial,
}

impl AlmanacEntry {
    pub fn semi_major_axis(&self) -> f64 {
        self.sqrt_a * self.sqrt_a
    }

    pub fn is_healthy(&self) -> bool {
        self.health == 0
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI * (self.semi_major_axis().powi(3) / MU).sqrt()
    }

    /// Position at `t` seconds of week.
    pub fn propagate(&self, t: f64) -> Result<Vector3<f64>> {
        self.propagate_in(t, Frame::Ecef)
    }

    pub fn propagate_in(&self, t: f64, frame: Frame) -> Result<Vector3<f64>> {
        let a = self.semi_major_axis();
        let mut tk = t - self.toa;
        if tk > 0.5 * WEEK_S {
            tk -= WEEK_S;
        } else if tk < -0.5 * WEEK_S {
            tk += WEEK_S;
        }
        let n0 = (MU / a.powi(3)).sqrt();
        let m = self.mean_anomaly + n0 * tk;
        let e = self.eccentricity;
        let mut ea = m;
        let mut converged = false;
        for _ in 0..50 {
            let d = (ea - e * ea.sin() - m) / (1.0 - e * ea.cos());
            ea -= d;
            if d.abs() < 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::KeplerNonConvergence);
        }
        let nu = ((1.0 - e * e).sqrt() * ea.sin()).atan2(ea.cos() - e);
        let u = nu + self.arg_perigee;
        let r = a * (1.0 - e * ea.cos());
        let omega = match frame {
            Frame::Ecef => self.raan0 + (self.raan_rate - OMEGA_E) * tk - OMEGA_E * self.toa,
            Frame::Inertial => self.raan0 + self.raan_rate * tk - OMEGA_E * self.toa,
        };
        let (xp, yp) = (r * u.cos(), r * u.sin());
        let (so, co, si, ci) = (omega.sin(), omega.cos(), self.inclination.sin(), self.inclination.cos());
        Ok(Vector3::new(xp * co - yp * ci * so, xp * so + yp * ci * co, yp * si))
    }
}

fn field<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse(format!("bad value `{}` for {key}", v.trim())))
}

/// Parses YUMA text. A `Constellation:` line selects GPS or GAL (GPS when
/// absent); an `SVN:` line names the satellite (`PRN<id>` when absent).
pub fn parse_yuma(text: &str) -> Result<Vec<AlmanacEntry>> {
    let mut out = Vec::new();
    let mut cur: Option<AlmanacEntry> = None;
    let blank = || AlmanacEntry {
        prn: 0,
        svn: String::new(),
        constellation: Constellation::Gps,
        health: 0,
        eccentricity: 0.0,
        toa: 0.0,
        inclination: 0.0,
        raan_rate: 0.0,
        sqrt_a: 0.0,
        raan0: 0.0,
        arg_perigee: 0.0,
        mean_anomaly: 0.0,
        af0: 0.0,
        af1: 0.0,
        week: 0,
    };
    let finish = |e: AlmanacEntry, out: &mut Vec<AlmanacEntry>| -> Result<()> {
        if !(e.sqrt_a > 0.0) {
            return Err(Error::Parse(format!("almanac block for PRN {} has no SQRT(A)", e.prn)));
        }
        if !(0.0..=0.05).contains(&e.eccentricity) {
            return Err(Error::Parse(format!("eccentricity {} out of range for PRN {}", e.eccentricity, e.prn)));
        }
        let mut e = e;
        if e.svn.is_empty() {
            e.svn = format!("PRN{:02}", e.prn);
        }
        out.push(e);
        Ok(())
    };
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("****") {
            if let Some(e) = cur.take() {
                finish(e, &mut out)?;
            }
            cur = Some(blank());
            continue;
        }
        let Some((key, val)) = line.split_once(':') else {
            return Err(Error::Parse(format!("line {}: expected `key: value`", ln + 1)));
        };
        let e = cur.get_or_insert_with(blank);
        let key_l = key.trim().to_ascii_lowercase();
        match key_l.as_str() {
            "id" => e.prn = field(val, key)?,
            "health" => e.health = field(val, key)?,
            "eccentricity" => e.eccentricity = field(val, key)?,
            k if k.starts_with("time of applicability") => e.toa = field(val, key)?,
            k if k.starts_with("orbital inclination") => e.inclination = field(val, key)?,
            k if k.starts_with("rate of right ascen") => e.raan_rate = field(val, key)?,
            k if k.starts_with("sqrt(a)") => e.sqrt_a = field(val, key)?,
            k if k.starts_with("right ascen at week") => e.raan0 = field(val, key)?,
            k if k.starts_with("argument of perigee") => e.arg_perigee = field(val, key)?,
            k if k.starts_with("mean anom") => e.mean_anomaly = field(val, key)?,
            k if k.starts_with("af0") => e.af0 = field(val, key)?,
            k if k.starts_with("af1") => e.af1 = field(val, key)?,
            "week" => e.week = field(val, key)?,
            "constellation" => e.constellation = val.trim().parse()?,
            "svn" => e.svn = val.trim().to_string(),
            _ => return Err(Error::Parse(format!("line {}: unknown almanac field `{}`", ln + 1, key.trim()))),
        }
    }
    if let Some(e) = cur.take() {
        finish(e, &mut out)?;
    }
    if out.is_empty() {
        return Err(Error::Parse("almanac has no entries".into()));
    }
    Ok(out)
}

pub fn load_yuma(path: &Path) -> Result<Vec<AlmanacEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_yuma(&text)
}

pub fn write_yuma(entries: &[AlmanacEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = write!(
            s,
            "******** Week {} almanac for PRN-{:02} ********\n\
             ID:                         {:02}\n\
             Health:                     {:03}\n\
             Eccentricity:               {:.10E}\n\
             Time of Applicability(s):   {:.4}\n\
             Orbital Inclination(rad):   {:.10}\n\
             Rate of Right Ascen(r/s):   {:.10E}\n\
             SQRT(A)  (m 1/2):           {:.6}\n\
             Right Ascen at Week(rad):   {:.10E}\n\
             Argument of Perigee(rad):   {:.9}\n\
             Mean Anom(rad):             {:.10E}\n\
             Af0(s):                     {:.10E}\n\
             Af1(s/s):                   {:.10E}\n\
             week:                       {}\n\
             Constellation:              {}\n\
             SVN:                        {}\n\n",
            e.week, e.prn, e.prn, e.health, e.eccentricity, e.toa, e.inclination, e.raan_rate, e.sqrt_a, e.raan0,
            e.arg_perigee, e.mean_anomaly, e.af0, e.af1, e.week, e.constellation, e.svn
        );
    }
    s
}

const GPS_NOMINAL: &str = include_str!("../../data/gps_nominal.yuma");
const GAL_NOMINAL: &str = include_str!("../../data/gal_nominal.yuma");

/// Bundled nominal 24-slot almanac for a constellation.
pub fn nominal_almanac(c: Constellation) -> Vec<AlmanacEntry> {
    let text = match c {
        Constellation::Gps => GPS_NOMINAL,
        Constellation::Galileo => GAL_NOMINAL,
    };
    parse_yuma(text).expect("bundled almanac parses")
}
