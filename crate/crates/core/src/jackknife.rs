//! Jackknife residuals, combined per-mode statistics, continuity thresholds
//! and the multiple-hypothesis detector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{CombinedDistribution, ErrorDistribution, GridConfig, LinearCombination};
use crate::error::{Error, Result};
use crate::model::{self, LinearModel, SolutionOps, SubsetOps, EAST, NORTH, UP};
use crate::threat::{ModeKind, ThreatModel};

/// Nominal error bounds for every measurement of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBounds {
    /// Accuracy bound per measurement, used for thresholds and position-error
    /// quantiles.
    pub acc: Vec<ErrorDistribution>,
    /// Gaussian overbound sigma per measurement, used by solution separation.
    pub gauss_sigma: Vec<f64>,
    /// Nominal bias per measurement.
    pub b_nom: Vec<f64>,
}

impl MeasurementBounds {
    pub fn gaussian(sigmas: &[f64], b_nom: f64) -> Self {
        MeasurementBounds {
            acc: sigmas.iter().map(|s| ErrorDistribution::gaussian(*s)).collect(),
            gauss_sigma: sigmas.to_vec(),
            b_nom: vec![b_nom; sigmas.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.acc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acc.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.acc.len() != n || self.gauss_sigma.len() != n || self.b_nom.len() != n {
            return Err(Error::Config(format!("bounds for {} measurements, model has {n}", self.acc.len())));
        }
        for d in &self.acc {
            d.validate()?;
        }
        if self.gauss_sigma.iter().any(|s| !(*s > 0.0)) || self.b_nom.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::InvalidDistribution("non-positive sigma or negative b_nom".into()));
        }
        Ok(())
    }

    /// Distribution of `sum_j c_j eps_j` under the accuracy bounds.
    pub fn combine(&self, coeffs: &DVector<f64>, grid: &GridConfig) -> Result<CombinedDistribution> {
        let mut lc = LinearCombination::new();
        for (c, d) in coeffs.iter().zip(&self.acc) {
            lc.push(*c, d);
        }
        if lc.is_empty() {
            return Ok(CombinedDistribution::Gaussian { sigma: 0.0 });
        }
        lc.build(grid)
    }

    /// Standard deviation of `sum_j c_j eps_j` under the Gaussian overbounds.
    pub fn gaussian_std(&self, coeffs: &DVector<f64>) -> f64 {
        coeffs.iter().zip(&self.gauss_sigma).map(|(c, s)| (c * s).powi(2)).sum::<f64>().sqrt()
    }
}

/// Which position axes get their own combined statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionAxes {
    /// Multi-fault statistics weighted by the vertical row only.
    #[default]
    Vertical,
    /// One multi-fault statistic per east, north and up.
    PerAxis,
}

impl DetectionAxes {
    pub fn axes(self) -> &'static [usize] {
        match self {
            DetectionAxes::Vertical => &[UP],
            DetectionAxes::PerAxis => &[EAST, NORTH, UP],
        }
    }
}

/// Number of tests sharing the false-alert budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuityCount {
    /// Every statistic evaluated: a constellation mode brings one separation
    /// test per axis, a multi-fault mode one per detection axis.
    #[default]
    Tests,
    /// Every monitored mode once, constellation modes included.
    Modes,
    /// Only jackknife-tested modes.
    JackknifeOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Continuity budget allocated to false alerts.
    pub c_req_fa: f64,
    pub axes: DetectionAxes,
    pub count: ContinuityCount,
    pub grid: GridConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            c_req_fa: 3.9e-6 + 9e-8,
            axes: DetectionAxes::default(),
            count: ContinuityCount::default(),
            grid: GridConfig::default(),
        }
    }
}

/// Jackknife residual `y_i - g_i S^(k) y` of excluded measurement `i`.
pub fn residual(model: &LinearModel<f64>, sub: &SubsetOps<f64>, i: usize) -> Result<f64> {
    if !sub.excluded.contains(&i) {
        return Err(Error::Config(format!("measurement {i} is not excluded by this mode")));
    }
    let pred = sub.ptilde.row(i).dot(&model.y().transpose());
    Ok(model.y()[i] - pred)
}

/// Row `i` of `I - G S^(k)`: the error coefficients of residual `i`.
pub fn residual_coeffs(sub: &SubsetOps<f64>, i: usize) -> DVector<f64> {
    let mut c = -sub.ptilde.row(i).transpose();
    c[i] += 1.0;
    c
}

/// Mode statistic and its error coefficients. A single exclusion yields the
/// plain residual; larger sets yield `sum_{i in excluded} S_{v,i} t_i`.
pub fn combined_stat(
    model: &LinearModel<f64>,
    s: &DMatrix<f64>,
    sub: &SubsetOps<f64>,
    axis: usize,
) -> Result<(f64, DVector<f64>)> {
    match sub.excluded.as_slice() {
        [] => Err(Error::Config("fault-free mode has no statistic".into())),
        [i] => Ok((residual(model, sub, *i)?, residual_coeffs(sub, *i))),
        ex => {
            let mut t = 0.0;
            let mut c = DVector::zeros(model.n());
            for &i in ex {
                let w = s[(axis, i)];
                t += w * residual(model, sub, i)?;
                c += w * residual_coeffs(sub, i);
            }
            Ok((t, c))
        }
    }
}

/// Per-test false-alert probability, two-sided: `C / (N P_H0)`.
pub fn per_test_alpha(c_req_fa: f64, n_tests: usize, p_h0: f64) -> f64 {
    c_req_fa / (n_tests.max(1) as f64 * p_h0)
}

/// `T_k = Q^-1_{t_k}(C / (2 N P_H0))` for each statistic distribution.
pub fn thresholds(threat: &ThreatModel, stat_dists: &[CombinedDistribution], c_req_fa: f64, n_tests: usize) -> Result<Vec<f64>> {
    let alpha = per_test_alpha(c_req_fa, n_tests, threat.p_h0);
    stat_dists.iter().map(|d| d.two_sided_bound(alpha)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Jackknife statistic, single residual or axis-weighted combination.
    Jackknife,
    /// Solution separation `(x - x^(k))_v` for a constellation mode.
    SolutionSeparation,
}

/// Precomputed test for one mode and axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTest {
    /// Index into `ThreatModel::modes`.
    pub mode: usize,
    pub kind: TestKind,
    /// Axis weighting the statistic; `None` for single-residual tests.
    pub axis: Option<usize>,
    /// Error coefficients of the statistic.
    pub coeffs: DVector<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStatistic {
    pub mode: usize,
    pub kind: TestKind,
    pub axis: Option<usize>,
    pub statistic: f64,
    pub threshold: f64,
    pub alert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JkStatistics {
    pub tests: Vec<ModeStatistic>,
    /// Monitored modes that could not be tested.
    pub skipped: Vec<usize>,
    pub alert: bool,
    /// Family-wise false-alert probability the thresholds were sized for.
    pub tau: f64,
}

/// Solution-separation threshold multiplier and sigma for a reduced-state
/// constellation subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationTest {
    /// `sigma_v^(k)`: std of the subset position error.
    pub sigma_subset: f64,
    /// Std of the separation `(x - x^(k))_v`.
    pub sigma_ss: f64,
    /// `D_{k,v}`.
    pub threshold: f64,
}

/// Gaussian solution-separation quantities for a subset and axis, with the
/// threshold sized for a two-sided false-alert probability `alpha`.
pub fn constellation_ss(s: &DMatrix<f64>, sub: &SubsetOps<f64>, bounds: &MeasurementBounds, axis: usize, alpha: f64) -> Result<SeparationTest> {
    let row_k = sub.s.row(axis).transpose();
    let sep = s.row(axis).transpose() - &row_k;
    let sigma_subset = bounds.gaussian_std(&row_k);
    let sigma_ss = bounds.gaussian_std(&sep);
    let k_fa = if alpha >= 1.0 { 0.0 } else { crate::dist::normal::isf(alpha / 2.0) };
    Ok(SeparationTest { sigma_subset, sigma_ss, threshold: k_fa * sigma_ss })
}

/// Operators, distributions and thresholds for one epoch's geometry.
#[derive(Debug, Clone)]
pub struct JackknifeDetector {
    pub ops: SolutionOps<f64>,
    pub tests: Vec<ModeTest>,
    pub skipped: Vec<usize>,
    pub tau: f64,
    /// Per-test two-sided false-alert probability.
    pub alpha: f64,
}

impl JackknifeDetector {
    pub fn new(model: &LinearModel<f64>, threat: &ThreatModel, bounds: &MeasurementBounds, cfg: &DetectorConfig) -> Result<Self> {
        bounds.validate(model.n())?;
        let excluded: Vec<Vec<usize>> = threat.modes.iter().map(|m| m.excluded.clone()).collect();
        let reduced: Vec<bool> = threat.modes.iter().map(|m| matches!(m.kind, ModeKind::Constellation(_))).collect();
        let ops = SolutionOps::build(model, &excluded, &reduced)?;
        let testable = |k: usize| threat.modes[k].monitored && ops.subsets[k].is_ok();
        let n_tests = match cfg.count {
            ContinuityCount::Tests => (0..threat.modes.len())
                .filter(|&k| testable(k))
                .map(|k| match threat.modes[k].kind {
                    ModeKind::SatSubset if threat.modes[k].excluded.len() == 1 => 1,
                    ModeKind::SatSubset => cfg.axes.axes().len(),
                    ModeKind::Constellation(_) => 3,
                })
                .sum(),
            ContinuityCount::Modes => threat.n_monitored(),
            ContinuityCount::JackknifeOnly => threat.monitored().filter(|m| m.kind == ModeKind::SatSubset).count(),
        };
        let alpha = per_test_alpha(cfg.c_req_fa, n_tests, threat.p_h0);
        let mut tests = Vec::new();
        let mut skipped = Vec::new();
        for (k, mode) in threat.modes.iter().enumerate() {
            if !mode.monitored {
                continue;
            }
            let sub = match ops.subset(k) {
                Ok(sub) => sub,
                Err(_) => {
                    skipped.push(k);
                    continue;
                }
            };
            match mode.kind {
                ModeKind::SatSubset if mode.excluded.len() == 1 => {
                    let coeffs = residual_coeffs(sub, mode.excluded[0]);
                    let threshold = bounds.combine(&coeffs, &cfg.grid)?.two_sided_bound(alpha)?;
                    tests.push(ModeTest { mode: k, kind: TestKind::Jackknife, axis: None, coeffs, threshold });
                }
                ModeKind::SatSubset => {
                    for &v in cfg.axes.axes() {
                        let (_, coeffs) = combined_stat(model, &ops.s, sub, v)?;
                        let threshold = bounds.combine(&coeffs, &cfg.grid)?.two_sided_bound(alpha)?;
                        tests.push(ModeTest { mode: k, kind: TestKind::Jackknife, axis: Some(v), coeffs, threshold });
                    }
                }
                ModeKind::Constellation(_) => {
                    // Separation tests are cheap, so every axis gets one.
                    for v in [EAST, NORTH, UP] {
                        let ss = constellation_ss(&ops.s, sub, bounds, v, alpha)?;
                        let coeffs = (ops.s.row(v) - sub.s.row(v)).transpose();
                        tests.push(ModeTest {
                            mode: k,
                            kind: TestKind::SolutionSeparation,
                            axis: Some(v),
                            coeffs,
                            threshold: ss.threshold,
                        });
                    }
                }
            }
        }
        Ok(JackknifeDetector { ops, tests, skipped, tau: cfg.c_req_fa / threat.p_h0, alpha })
    }

    /// Threshold of the test for `mode` on `axis` (single-residual tests
    /// match any axis).
    pub fn threshold(&self, mode: usize, axis: usize) -> Option<f64> {
        self.tests
            .iter()
            .find(|t| t.mode == mode && t.axis.is_none_or(|a| a == axis))
            .map(|t| t.threshold)
    }

    /// Evaluates every test on the observations `y`.
    pub fn detect(&self, y: &DVector<f64>) -> JkStatistics {
        let tests: Vec<ModeStatistic> = self
            .tests
            .iter()
            .map(|t| {
                let statistic = t.coeffs.dot(y);
                ModeStatistic {
                    mode: t.mode,
                    kind: t.kind,
                    axis: t.axis,
                    statistic,
                    threshold: t.threshold,
                    alert: statistic.abs() >= t.threshold,
                }
            })
            .collect();
        let alert = tests.iter().any(|t| t.alert);
        JkStatistics { tests, skipped: self.skipped.clone(), alert, tau: self.tau }
    }
}

/// Runs the detector built from scratch on `model.y()`.
pub fn run_detector(model: &LinearModel<f64>, threat: &ThreatModel, bounds: &MeasurementBounds, cfg: &DetectorConfig) -> Result<JkStatistics> {
    Ok(JackknifeDetector::new(model, threat, bounds, cfg)?.detect(model.y()))
}

/// Coefficients of the fault-free position-error part under a mode, the
/// solution-separation form `(x^(k) - x)_v` for reduced-state subsets.
pub fn position_coeffs(model: &LinearModel<f64>, s: &DMatrix<f64>, sub: &SubsetOps<f64>, axis: usize) -> DVector<f64> {
    if sub.dropped_states.is_empty() {
        model::q_vector(model, s, sub, axis)
    } else {
        sub.s.row(axis).transpose()
    }
}
