//! Availability, coverage, protection-level percentiles and Stanford counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::{EpochRecord, StanfordClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationValue {
    pub lat_deg: f64,
    pub lon_deg: f64,
    /// `None` when the value is unbounded.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageLevel {
    pub level: f64,
    /// Area-weighted by cosine of latitude.
    pub weighted: f64,
    pub unweighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanfordCount {
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub availability_by_location: Vec<LocationValue>,
    pub coverage: Vec<CoverageLevel>,
    pub vpl_p995_by_location: Vec<LocationValue>,
    pub stanford_counts: BTreeMap<String, StanfordCount>,
    pub records: usize,
    /// Records with `|VPE| > VPL` and no alert.
    pub unsafe_records: usize,
    pub config_echo: serde_json::Value,
}

pub const DEFAULT_LEVELS: [f64; 3] = [0.75, 0.95, 0.995];

/// Nearest-rank percentile, `q` in (0, 1]. Infinite when the rank falls on
/// an unavailable value.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Groups records by location, keeping first-appearance order.
pub fn by_location(records: &[EpochRecord]) -> Vec<((f64, f64), Vec<&EpochRecord>)> {
    let mut out: Vec<((f64, f64), Vec<&EpochRecord>)> = Vec::new();
    let mut index: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for r in records {
        let key = ((r.lat_deg * 1e6).round() as i64, (r.lon_deg * 1e6).round() as i64);
        let i = *index.entry(key).or_insert_with(|| {
            out.push(((r.lat_deg, r.lon_deg), Vec::new()));
            out.len() - 1
        });
        out[i].1.push(r);
    }
    out
}

pub fn aggregate(records: &[EpochRecord], val: f64, levels: &[f64]) -> SummaryStats {
    let groups = by_location(records);
    let mut availability = Vec::with_capacity(groups.len());
    let mut p995 = Vec::with_capacity(groups.len());
    for ((lat, lon), recs) in &groups {
        let avail = recs.iter().filter(|r| r.vpl_m.is_some_and(|l| l < val)).count() as f64 / recs.len() as f64;
        availability.push(LocationValue { lat_deg: *lat, lon_deg: *lon, value: Some(avail) });
        let vpls: Vec<f64> = recs.iter().map(|r| r.vpl_m.unwrap_or(f64::INFINITY)).collect();
        let p = percentile(&vpls, 0.995);
        p995.push(LocationValue { lat_deg: *lat, lon_deg: *lon, value: p.is_finite().then_some(p) });
    }
    let total_w: f64 = availability.iter().map(|a| a.lat_deg.to_radians().cos()).sum();
    let coverage = levels
        .iter()
        .map(|&level| {
            let pass: Vec<&LocationValue> = availability.iter().filter(|a| a.value.unwrap_or(0.0) >= level).collect();
            CoverageLevel {
                level,
                weighted: pass.iter().fold(0.0, |acc, a| acc + a.lat_deg.to_radians().cos()) / total_w,
                unweighted: pass.len() as f64 / availability.len().max(1) as f64,
            }
        })
        .collect();
    let mut stanford_counts = BTreeMap::new();
    for c in StanfordClass::ALL {
        let count = records.iter().filter(|r| r.class == c).count();
        let percent = 100.0 * count as f64 / records.len().max(1) as f64;
        stanford_counts.insert(c.label().to_string(), StanfordCount { count, percent });
    }
    SummaryStats {
        availability_by_location: availability,
        coverage,
        vpl_p995_by_location: p995,
        stanford_counts,
        records: records.len(),
        unsafe_records: records.iter().filter(|r| r.is_unsafe()).count(),
        config_echo: serde_json::Value::Null,
    }
}

impl SummaryStats {
    pub fn coverage_at(&self, level: f64) -> Option<&CoverageLevel> {
        self.coverage.iter().find(|c| (c.level - level).abs() < 1e-12)
    }
}
