//! Worldwide user grid, per-epoch error synthesis and monitor evaluation.

use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::almanac::AlmanacEntry;
use super::errors::{error_model, BoundFlavor};
use crate::dist::GridConfig;
use crate::error::{Error, Result};
use crate::integrity::{baseline_alert, baseline_araim_pl, IntegrityBudget, IntegrityMonitor, PlOptions};
use crate::jackknife::{ContinuityCount, DetectionAxes, DetectorConfig, MeasurementBounds};
use crate::model::geo::{lla_to_ecef, model_from_visible, visible_sats};
use crate::model::{Constellation, EAST, NORTH, UP};
use crate::overbound::{PgoConstruction, SatelliteBoundTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Baseline,
    #[default]
    Jk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid_step_deg: f64,
    pub epoch_step_s: f64,
    pub duration_s: f64,
    /// Time of week of the first epoch, s.
    pub start_s: f64,
    pub mask_deg: f64,
    pub altitude_m: f64,
    pub constellations: Vec<Constellation>,
    pub bound: BoundFlavor,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub budget: IntegrityBudget,
    pub grid_points: usize,
    pub construction: PgoConstruction,
    pub axes: DetectionAxes,
    pub continuity_count: ContinuityCount,
    pub h0_share: bool,
    /// Size `k_max` for the whole constellations rather than the satellites
    /// in view.
    pub kmax_from_constellation: bool,
    /// Simulate error-free measurements.
    pub zero_noise: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            grid_step_deg: 15.0,
            epoch_step_s: 600.0,
            duration_s: 86400.0,
            start_s: 0.0,
            mask_deg: 5.0,
            altitude_m: 0.0,
            constellations: vec![Constellation::Gps],
            bound: BoundFlavor::Pgo,
            algorithm: Algorithm::Jk,
            seed: 1,
            budget: IntegrityBudget::default(),
            grid_points: 4096,
            construction: PgoConstruction::default(),
            axes: DetectionAxes::default(),
            continuity_count: ContinuityCount::default(),
            h0_share: true,
            kmax_from_constellation: true,
            zero_noise: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let step = self.grid_step_deg;
        let ratio = 360.0 / step;
        if !(step > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("grid step {step} does not divide 360")));
        }
        if !(self.epoch_step_s > 0.0) || !(self.duration_s > 0.0) {
            return Err(Error::Config("epoch step and duration must be positive".into()));
        }
        if !(0.0..90.0).contains(&self.mask_deg) {
            return Err(Error::Config(format!("mask angle {} out of range", self.mask_deg)));
        }
        if self.constellations.is_empty() {
            return Err(Error::Config("no constellation selected".into()));
        }
        if !self.grid_points.is_power_of_two() || self.grid_points < 64 {
            return Err(Error::Config(format!("grid points {} must be a power of two >= 64", self.grid_points)));
        }
        self.budget.validate()
    }

    /// User locations `(lat, lon)`: longitudes from -180, latitudes centred
    /// between the poles.
    pub fn locations(&self) -> Vec<(f64, f64)> {
        let step = self.grid_step_deg;
        let n_lon = (360.0 / step).round() as usize;
        let n_lat = (180.0 / step).floor() as usize;
        let lat0 = -0.5 * step * (n_lat as f64 - 1.0);
        let mut out = Vec::with_capacity(n_lat * n_lon);
        for i in 0..n_lat {
            for j in 0..n_lon {
                out.push((lat0 + i as f64 * step, -180.0 + j as f64 * step));
            }
        }
        out
    }

    pub fn epochs(&self) -> Vec<f64> {
        let n = (self.duration_s / self.epoch_step_s - 1e-9).ceil().max(1.0) as usize;
        (0..n).map(|k| self.start_s + k as f64 * self.epoch_step_s).collect()
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            c_req_fa: self.budget.c_req_fa(),
            axes: self.axes,
            count: self.continuity_count,
            grid: GridConfig::with_points(self.grid_points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StanfordClass {
    #[serde(rename = "NO")]
    Nominal,
    #[serde(rename = "MI")]
    Misleading,
    #[serde(rename = "SU")]
    Unavailable,
    #[serde(rename = "SU&MI")]
    UnavailableMisleading,
    #[serde(rename = "HMI")]
    Hazardous,
}

impl StanfordClass {
    pub const ALL: [StanfordClass; 5] = [
        StanfordClass::Nominal,
        StanfordClass::Misleading,
        StanfordClass::Unavailable,
        StanfordClass::UnavailableMisleading,
        StanfordClass::Hazardous,
    ];

    /// Partition of `(|VPE|, VPL)` against the alert limit. Missing values
    /// count as unavailable.
    pub fn classify(vpe: Option<f64>, vpl: Option<f64>, val: f64) -> Self {
        let (Some(e), Some(l)) = (vpe.map(f64::abs), vpl) else {
            return StanfordClass::Unavailable;
        };
        if l < val {
            if e <= l {
                StanfordClass::Nominal
            } else if e < val {
                StanfordClass::Misleading
            } else {
                StanfordClass::Hazardous
            }
        } else if e <= l {
            StanfordClass::Unavailable
        } else {
            StanfordClass::UnavailableMisleading
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StanfordClass::Nominal => "NO",
            StanfordClass::Misleading => "MI",
            StanfordClass::Unavailable => "SU",
            StanfordClass::UnavailableMisleading => "SU&MI",
            StanfordClass::Hazardous => "HMI",
        }
    }
}

/// One `(location, epoch)` result. Unavailable levels are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub t_s: f64,
    pub n_vis: usize,
    pub vpe_m: Option<f64>,
    pub hpe_m: Option<f64>,
    pub vpl_m: Option<f64>,
    pub hpl_m: Option<f64>,
    pub alert: bool,
    pub class: StanfordClass,
    /// Why the epoch could not be evaluated, if it could not.
    #[serde(skip)]
    pub error: Option<String>,
    /// Number of fault modes in the threat model.
    #[serde(skip)]
    pub n_modes: usize,
}

impl EpochRecord {
    /// `|VPE| > VPL` with no alert raised.
    pub fn is_unsafe(&self) -> bool {
        match (self.vpe_m, self.vpl_m) {
            (Some(e), Some(l)) => e.abs() > l && !self.alert,
            _ => false,
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Satellites of the selected constellations, healthy only.
pub fn select_satellites<'a>(almanac: &'a [AlmanacEntry], cfg: &ScenarioConfig) -> Vec<&'a AlmanacEntry> {
    almanac.iter().filter(|e| e.is_healthy() && cfg.constellations.contains(&e.constellation)).collect()
}

/// Runs every `(location, epoch)` cell. Cells draw from independent streams
/// keyed by `(seed, location, epoch)`, so results do not depend on thread
/// count or order.
pub fn run_scenario(cfg: &ScenarioConfig, almanac: &[AlmanacEntry], table: &SatelliteBoundTable) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let sats = select_satellites(almanac, cfg);
    if sats.is_empty() {
        return Err(Error::Config("almanac has no healthy satellite of the selected constellations".into()));
    }
    for s in &sats {
        table.get(&s.svn)?;
    }
    let mut population: Vec<(Constellation, usize)> = Vec::new();
    for s in &sats {
        match population.iter_mut().find(|(c, _)| *c == s.constellation) {
            Some(p) => p.1 += 1,
            None => population.push((s.constellation, 1)),
        }
    }
    population.sort();
    let epochs = cfg.epochs();
    let positions: Vec<Vec<(String, Vector3<f64>, Constellation)>> = epochs
        .iter()
        .map(|&t| sats.iter().map(|s| Ok((s.svn.clone(), s.propagate(t)?, s.constellation))).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let locs = cfg.locations();
    let cells: Vec<(usize, usize)> = (0..locs.len()).flat_map(|l| (0..epochs.len()).map(move |e| (l, e))).collect();
    let records = cells
        .par_iter()
        .map(|&(l, e)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((l as u64) << 32) | e as u64);
            let (lat, lon) = locs[l];
            run_cell(cfg, table, &population, &positions[e], lat, lon, epochs[e], &mut rng)
        })
        .collect();
    Ok(records)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ScenarioConfig,
    table: &SatelliteBoundTable,
    population: &[(Constellation, usize)],
    sats: &[(String, Vector3<f64>, Constellation)],
    lat: f64,
    lon: f64,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> EpochRecord {
    let user = lla_to_ecef(lat, lon, cfg.altitude_m);
    let vis = visible_sats(&user, sats, cfg.mask_deg);
    let mut rec = EpochRecord {
        lat_deg: lat,
        lon_deg: lon,
        t_s: t,
        n_vis: vis.len(),
        vpe_m: None,
        hpe_m: None,
        vpl_m: None,
        hpl_m: None,
        alert: false,
        class: StanfordClass::Unavailable,
        error: None,
        n_modes: 0,
    };
    if let Err(e) = evaluate(cfg, table, population, &vis, rng, &mut rec) {
        rec.error = Some(e.to_string());
    }
    rec.class = StanfordClass::classify(rec.vpe_m, rec.vpl_m, cfg.budget.val);
    rec
}

fn evaluate(
    cfg: &ScenarioConfig,
    table: &SatelliteBoundTable,
    population: &[(Constellation, usize)],
    vis: &[crate::model::geo::VisibleSat],
    rng: &mut ChaCha8Rng,
    rec: &mut EpochRecord,
) -> Result<()> {
    let n = vis.len();
    let mut acc = Vec::with_capacity(n);
    let mut gauss = Vec::with_capacity(n);
    let mut eps = DVector::zeros(n);
    for (i, v) in vis.iter().enumerate() {
        let em = error_model(table.get(&v.id)?, v.constellation, v.elevation_deg, cfg.bound, cfg.construction, cfg.budget.b_nom)?;
        if !cfg.zero_noise {
            eps[i] = em.truth.sample(rng);
        }
        acc.push(em.acc);
        gauss.push(em.gauss_sigma);
    }
    let w = DVector::from_iterator(n, gauss.iter().map(|s| 1.0 / (s * s)));
    let model = model_from_visible(vis, w)?.with_observations(eps);
    let (x, _) = crate::model::wls_solve(&model)?;
    rec.vpe_m = Some(x[UP]);
    rec.hpe_m = Some(x[EAST].hypot(x[NORTH]));
    let pop: Vec<usize> = model
        .constellations()
        .iter()
        .map(|c| population.iter().find(|(pc, _)| pc == c).map_or(0, |p| p.1))
        .collect();
    let budget = &cfg.budget;
    let threat = budget.threat_for(&model, cfg.kmax_from_constellation.then_some(pop.as_slice()))?;
    rec.n_modes = threat.modes.len();
    let bounds = MeasurementBounds { acc, gauss_sigma: gauss, b_nom: vec![budget.b_nom; n] };
    let pl = match cfg.algorithm {
        Algorithm::Jk => {
            let mon = IntegrityMonitor::new(&model, threat, bounds, budget.clone(), cfg.detector_config())?;
            rec.alert = mon.detector.detect(model.y()).alert;
            mon.pl(&PlOptions { h0_share: cfg.h0_share })?
        }
        Algorithm::Baseline => {
            let gb = MeasurementBounds::gaussian(&bounds.gauss_sigma, budget.b_nom);
            rec.alert = baseline_alert(&model, &threat, &gb, budget)?;
            baseline_araim_pl(&model, &threat, &gb, budget)?
        }
    };
    rec.vpl_m = finite(pl.vpl);
    rec.hpl_m = finite(pl.hpl);
    Ok(())
}

pub fn write_records<W: std::io::Write>(records: &[EpochRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(r: R) -> Result<Vec<EpochRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}
