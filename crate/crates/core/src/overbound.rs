//! Gaussian and principal Gaussian overbounds of sampled errors, the paired
//! bias shift, and CDF-dominance checks.
//!
//! Dominance is evaluated on the mean-centred, symmetrised sample (each
//! value and its negation) against the plotting-position ECDF
//! `G_i = (i - 1/2) / m`. A candidate bounds the sample when its CDF is at
//! least `G_i - tol_i` at every negative order statistic, with the slack
//! `tol_i = min(abs_tol, rel_tol * G_i)` absorbing sampling noise in the core
//! while leaving the tails essentially strict.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{normal, ErrorDistribution, PairedBound, Pgo};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailCategory {
    /// Heavy tails on both sides.
    T,
    /// Heavy tail on one side.
    O,
    /// Gaussian-like.
    G,
}

impl FromStr for TailCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "T" => Ok(TailCategory::T),
            "O" => Ok(TailCategory::O),
            "G" => Ok(TailCategory::G),
            other => Err(Error::Parse(format!("unknown tail category `{other}`"))),
        }
    }
}

/// One row of the per-satellite SISRE bound table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteBound {
    pub svn: String,
    pub category: TailCategory,
    pub mean_cm: f64,
    pub std_cm: f64,
    pub gauss_sigma_m: f64,
    pub sigma1_m: f64,
    pub sigma2_m: f64,
    pub p1: f64,
    pub xrp_m: f64,
}

impl SatelliteBound {
    pub fn gaussian(&self) -> ErrorDistribution {
        ErrorDistribution::gaussian(self.gauss_sigma_m)
    }

    /// Generating mixture behind the PGO parameters.
    pub fn bgmm(&self) -> ErrorDistribution {
        ErrorDistribution::Bgmm { p1: self.p1, sigma1: self.sigma1_m, sigma2: self.sigma2_m }
    }

    pub fn pgo(&self, construction: PgoConstruction) -> Result<Pgo> {
        build_pgo(self.p1, self.sigma1_m, self.sigma2_m, Some(self.xrp_m), construction)
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.std_cm, self.gauss_sigma_m, self.sigma1_m, self.sigma2_m, self.xrp_m];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.p1 > 0.0 && self.p1 < 1.0) {
            return Err(Error::Parse(format!("invalid bound row for {}", self.svn)));
        }
        Ok(())
    }
}

/// Per-satellite bounds keyed by SVN label (`SVN63`, `GSAT0206`, ...).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SatelliteBoundTable {
    pub entries: Vec<SatelliteBound>,
}

const BUILTIN_TABLE: &str = include_str!("../data/sisre_bounds.csv");

impl SatelliteBoundTable {
    /// Bundled GPS and Galileo table.
    pub fn builtin() -> Self {
        Self::from_reader(BUILTIN_TABLE.as_bytes()).expect("bundled table parses")
    }

    pub fn from_reader<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let expected = ["svn", "category", "mean_cm", "std_cm", "gauss_sigma_m", "sigma1_m", "sigma2_m", "p1", "xrp_m"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::Parse(format!("unexpected bound table header `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut entries = Vec::new();
        for row in rdr.deserialize() {
            let row: SatelliteBound = row?;
            row.validate()?;
            entries.push(row);
        }
        Ok(SatelliteBoundTable { entries })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(f)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn get(&self, svn: &str) -> Result<&SatelliteBound> {
        self.entries.iter().find(|e| e.svn == svn).ok_or_else(|| Error::UnknownSatellite(svn.to_string()))
    }
}

/// Slack applied when comparing a candidate CDF with the sample ECDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// ECDF level separating the tail from the core in reports.
    pub tail_probability: f64,
    /// Binomial standard errors of slack allowed at each ECDF level; lets
    /// the extreme order statistics exceed a true bound by sampling noise.
    pub confidence_z: f64,
}

impl Default for DominanceOptions {
    fn default() -> Self {
        DominanceOptions { abs_tol: 1e-3, rel_tol: 0.05, tail_probability: 0.01, confidence_z: 3.0 }
    }
}

impl DominanceOptions {
    /// No slack: reported violations are raw CDF gaps.
    pub fn strict() -> Self {
        DominanceOptions { abs_tol: 0.0, rel_tol: 0.0, confidence_z: 0.0, ..Default::default() }
    }

    /// Slack at ECDF level `g` for a sample of `n` draws.
    pub fn tol(&self, g: f64, n: usize) -> f64 {
        let noise = self.confidence_z * (g * (1.0 - g) / n as f64).sqrt();
        self.abs_tol.min((self.rel_tol * g).max(noise))
    }
}

/// Negative half of the centred, symmetrised sample, ascending, with the
/// matching plotting positions.
fn folded_left(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonOverboundable("non-finite sample".into()));
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let mut mags: Vec<f64> = samples.iter().map(|x| -(x - mean).abs()).collect();
    mags.sort_by(f64::total_cmp);
    let m = 2.0 * samples.len() as f64;
    // Every value appears twice (once per sign); the k-th smallest negative
    // value has plotting position (k + 1/2) / m. Tied values share the mean
    // position of their run, so a symmetric sample folds onto itself.
    let eps = 1e-12 * mags[0].abs();
    let mut out = Vec::with_capacity(mags.len());
    let mut i = 0;
    while i < mags.len() {
        let mut j = i + 1;
        while j < mags.len() && mags[j] - mags[i] <= eps {
            j += 1;
        }
        let g = 0.5 * (i + j) as f64 / m;
        out.extend(mags[i..j].iter().map(|z| (*z, g)));
        i = j;
    }
    Ok(out)
}

/// Smallest sigma whose zero-mean Gaussian two-sidedly bounds the sample.
pub fn fit_gaussian_overbound(samples: &[f64], opts: &DominanceOptions) -> Result<f64> {
    let left = folded_left(samples)?;
    let n = samples.len();
    let mut sigma: f64 = 0.0;
    for (z, g) in left {
        let target = g - opts.tol(g, n);
        if z < 0.0 && target > 0.0 {
            sigma = sigma.max(z / normal::ppf(target));
        }
    }
    if !sigma.is_finite() {
        return Err(Error::NonOverboundable("unbounded sigma".into()));
    }
    if sigma == 0.0 {
        return Err(Error::NonOverboundable("degenerate sample".into()));
    }
    Ok(sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverboundReport {
    pub fitted: ErrorDistribution,
    /// Largest `ECDF - CDF - slack` over the core, probability units.
    pub max_core_violation: f64,
    /// Same over the tails (ECDF at or below `tail_probability`).
    pub max_tail_violation: f64,
    pub sample_count: usize,
}

impl OverboundReport {
    pub fn max_violation(&self) -> f64 {
        self.max_core_violation.max(self.max_tail_violation)
    }
}

/// Signed dominance gaps of `candidate` over the sample.
pub fn verify_overbound(candidate: &ErrorDistribution, samples: &[f64], opts: &DominanceOptions) -> Result<OverboundReport> {
    let left = folded_left(samples)?;
    let mut core = f64::NEG_INFINITY;
    let mut tail = f64::NEG_INFINITY;
    for (z, g) in left {
        let gap = g - candidate.cdf(z) - opts.tol(g, samples.len());
        if g <= opts.tail_probability {
            tail = tail.max(gap);
        } else {
            core = core.max(gap);
        }
    }
    Ok(OverboundReport {
        fitted: candidate.clone(),
        max_core_violation: core,
        max_tail_violation: tail,
        sample_count: samples.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgmmFit {
    pub p1: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub iterations: usize,
    /// Mean log-likelihood after each iteration.
    pub log_likelihood: Vec<f64>,
    /// The two components are indistinguishable or one is empty.
    pub degenerate: bool,
}

impl BgmmFit {
    pub fn distribution(&self) -> ErrorDistribution {
        ErrorDistribution::Bgmm { p1: self.p1, sigma1: self.sigma1, sigma2: self.sigma2 }
    }
}

const EM_MAX_ITER: usize = 500;
const EM_TOL: f64 = 1e-8;

/// Zero-mean two-component Gaussian mixture by EM, `sigma1 <= sigma2`.
pub fn fit_bgmm(samples: &[f64]) -> Result<BgmmFit> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let x2: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let sd = (x2.iter().sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::NonOverboundable("zero-variance sample".into()));
    }
    let (mut p1, mut v1, mut v2) = (0.9, (0.5 * sd).powi(2), (2.0 * sd).powi(2));
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..EM_MAX_ITER {
        let (mut r_sum, mut r_x2, mut q_x2, mut ll) = (0.0, 0.0, 0.0, 0.0);
        let (l1, l2) = ((p1 / v1.sqrt()).ln(), ((1.0 - p1) / v2.sqrt()).ln());
        for &s in &x2 {
            let a = l1 - 0.5 * s / v1;
            let b = l2 - 0.5 * s / v2;
            let mx = a.max(b);
            let lse = mx + ((a - mx).exp() + (b - mx).exp()).ln();
            let r = (a - lse).exp();
            ll += lse;
            r_sum += r;
            r_x2 += r * s;
            q_x2 += (1.0 - r) * s;
        }
        ll = ll / n - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let done = history.last().is_some_and(|prev| (ll - prev).abs() < EM_TOL);
        history.push(ll);
        if r_sum <= 0.0 || r_sum >= n {
            break;
        }
        p1 = r_sum / n;
        v1 = (r_x2 / r_sum).max(1e-300);
        v2 = (q_x2 / (n - r_sum)).max(1e-300);
        if done {
            converged = true;
            break;
        }
    }
    if v1 > v2 {
        std::mem::swap(&mut v1, &mut v2);
        p1 = 1.0 - p1;
    }
    let (s1, s2) = (v1.sqrt(), v2.sqrt());
    let degenerate = !(p1 > 1e-3 && p1 < 1.0 - 1e-3) || s2 / s1 < 1.1;
    if !converged && !degenerate {
        return Err(Error::EmConvergenceFailure(EM_MAX_ITER));
    }
    Ok(BgmmFit { p1, sigma1: s1, sigma2: s2, iterations: history.len(), log_likelihood: history, degenerate })
}

/// How the PGO gain `k` and offset `c` are pinned down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgoConstruction {
    /// `k` moves the narrow component's mass beyond `x_rp` into the tail, so
    /// the tail CDF equals the mixture CDF at `x_rp`; `c` spreads the wide
    /// component's mass inside `x_rp` uniformly over the core.
    #[default]
    TailMassMatched,
    /// `k` and `c` make the density continuous at `x_rp` with unit mass.
    DensityContinuous,
}

/// Abscissa where both mixture components have equal posterior weight.
pub fn equal_membership_point(p1: f64, sigma1: f64, sigma2: f64) -> Result<f64> {
    let ratio = p1 * sigma2 / ((1.0 - p1) * sigma1);
    let curv = sigma1.powi(-2) - sigma2.powi(-2);
    if !(ratio > 1.0 && curv > 0.0) {
        return Err(Error::NoValidPartition("components never cross".into()));
    }
    Ok((2.0 * ratio.ln() / curv).sqrt())
}

/// Principal Gaussian overbound of the mixture `(p1, sigma1, sigma2)`.
pub fn build_pgo(p1: f64, sigma1: f64, sigma2: f64, x_rp: Option<f64>, construction: PgoConstruction) -> Result<Pgo> {
    if !(p1 > 0.0 && p1 < 1.0 && sigma1 > 0.0 && sigma2 > sigma1) {
        return Err(Error::NoValidPartition(format!("mixture ({p1}, {sigma1}, {sigma2}) has no wide tail component")));
    }
    let a = match x_rp {
        Some(a) if a > 0.0 => a,
        Some(a) => return Err(Error::NoValidPartition(format!("x_rp {a} must be positive"))),
        None => equal_membership_point(p1, sigma1, sigma2)?,
    };
    let (q1, q2) = (normal::sf(a / sigma1), normal::sf(a / sigma2));
    let (f1, f2) = (normal::pdf(a / sigma1) / sigma1, normal::pdf(a / sigma2) / sigma2);
    let (k_gain, c_offset) = match construction {
        PgoConstruction::TailMassMatched => {
            (p1 * q1 / ((1.0 - p1) * q2), (1.0 - p1) * (1.0 - 2.0 * q2) / (2.0 * a))
        }
        PgoConstruction::DensityContinuous => {
            let u = (1.0 - p1 * (1.0 - 2.0 * q1) + 2.0 * a * p1 * f1) / (2.0 * q2 + 2.0 * a * f2);
            if !(u > 0.0) {
                return Err(Error::NoValidPartition("negative tail coefficient".into()));
            }
            (u / (1.0 - p1) - 1.0, u * f2 - p1 * f1)
        }
    };
    let pgo = Pgo { p1, sigma1, sigma2, k_gain, c_offset, x_rp: a };
    pgo.validate().map_err(|e| Error::NoValidPartition(e.to_string()))?;
    Ok(pgo)
}

/// Paired bound with median plateau `[-b_nom, b_nom]`.
pub fn apply_paired(dist: ErrorDistribution, b_nom: f64) -> Result<PairedBound> {
    PairedBound::new(dist, b_nom)
}
