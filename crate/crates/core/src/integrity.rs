//! Integrity budget, protection levels from the jackknife risk bound, the
//! integrity-risk evaluation behind them, and the solution-separation
//! baseline used for comparison.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dist::normal;
use crate::error::{Error, Result};
use crate::jackknife::{constellation_ss, position_coeffs, DetectorConfig, JackknifeDetector, MeasurementBounds};
use crate::model::{self, subset_ops_reduced, wls_solve, Constellation, LinearModel, EAST, NORTH, UP};
use crate::threat::{determine_kmax, enumerate_modes, ConstellationPrior, ModeKind, ThreatModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrityBudget {
    pub i_req_vert: f64,
    /// Horizontal budget, split equally between east and north.
    pub i_req_horiz: f64,
    pub c_req_fa_vert: f64,
    pub c_req_fa_horiz: f64,
    pub p_sat: f64,
    pub p_const: Vec<ConstellationPrior>,
    pub p_thres: f64,
    pub b_nom: f64,
    pub val: f64,
    pub hal: f64,
}

impl Default for IntegrityBudget {
    fn default() -> Self {
        IntegrityBudget {
            i_req_vert: 9.8e-8,
            i_req_horiz: 2e-9,
            c_req_fa_vert: 3.9e-6,
            c_req_fa_horiz: 9e-8,
            p_sat: 1e-5,
            p_const: vec![
                ConstellationPrior { constellation: Constellation::Gps, p_const: 1e-8 },
                ConstellationPrior { constellation: Constellation::Galileo, p_const: 1e-4 },
            ],
            p_thres: 9e-8,
            b_nom: 0.75,
            val: 35.0,
            hal: 40.0,
        }
    }
}

impl IntegrityBudget {
    pub fn i_req(&self) -> f64 {
        self.i_req_vert + self.i_req_horiz
    }

    /// Combined false-alert budget shared by every test.
    pub fn c_req_fa(&self) -> f64 {
        self.c_req_fa_vert + self.c_req_fa_horiz
    }

    pub fn axis_budget(&self, axis: usize) -> f64 {
        if axis == UP {
            self.i_req_vert
        } else {
            0.5 * self.i_req_horiz
        }
    }

    pub fn p_const_of(&self, c: Constellation) -> Result<f64> {
        self.p_const
            .iter()
            .find(|p| p.constellation == c)
            .map(|p| p.p_const)
            .ok_or_else(|| Error::Config(format!("no constellation prior for {c}")))
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.i_req_vert, self.i_req_horiz, self.c_req_fa_vert, self.c_req_fa_horiz, self.p_thres];
        let ok = probs.iter().all(|p| *p > 0.0 && *p < 1.0)
            && (0.0..1.0).contains(&self.p_sat)
            && self.p_const.iter().all(|p| p.p_const >= 0.0 && p.p_const < 1.0)
            && self.b_nom >= 0.0
            && self.val > 0.0
            && self.hal > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("integrity budget out of range".into()))
        }
    }

    /// Threat model for the constellation partition of `model`. `k_max` is
    /// sized for `population` satellites per constellation when given (the
    /// full constellations), else for the measurements in view.
    pub fn threat_for(&self, model: &LinearModel<f64>, population: Option<&[usize]>) -> Result<ThreatModel> {
        let partition: Vec<(Constellation, Vec<usize>)> =
            model.constellations().into_iter().map(|c| (c, model.indices_of(c))).collect();
        let counts: Vec<usize> = partition.iter().map(|(_, i)| i.len()).collect();
        let pc: Vec<f64> = partition.iter().map(|(c, _)| self.p_const_of(*c)).collect::<Result<_>>()?;
        let (k_max, _) = determine_kmax(population.unwrap_or(&counts), self.p_sat, &pc, self.p_thres);
        let priors: Vec<ConstellationPrior> = partition
            .iter()
            .zip(&pc)
            .map(|((c, _), p)| ConstellationPrior { constellation: *c, p_const: *p })
            .collect();
        enumerate_modes(model.n(), k_max, &partition, self.p_sat, &priors, self.p_thres)
    }
}

/// Protection levels for the three axes. Unavailable levels are `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlResult {
    pub pl: [f64; 3],
    pub vpl: f64,
    pub hpl: f64,
    /// Mode index of the binding term per axis, `None` for the fault-free term
    /// or when unavailable.
    pub binding: [Option<usize>; 3],
    /// Bisection steps (baseline only).
    pub iterations: usize,
}

impl PlResult {
    fn from_axes(pl: [f64; 3], binding: [Option<usize>; 3], iterations: usize) -> Self {
        PlResult { pl, vpl: pl[UP], hpl: pl[EAST].hypot(pl[NORTH]), binding, iterations }
    }

    pub fn is_available(&self, val: f64) -> bool {
        self.vpl.is_finite() && self.vpl < val
    }
}

/// One term of the risk sum or of the protection-level maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTerm {
    /// `None` for the fault-free hypothesis.
    pub mode: Option<usize>,
    pub prior: f64,
    /// Offset subtracted from the limit: threshold share plus bias.
    pub offset: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub total: f64,
    pub terms: Vec<RiskTerm>,
    /// Per-term allocation of the deflated budget.
    pub allocation: f64,
    pub deflated_budget: f64,
}

/// Per-mode ingredients of the protection level on one axis.
#[derive(Debug, Clone)]
enum Term {
    /// Two-sided tail of `coeffs . eps` under the accuracy bounds, shifted.
    Numeric { mode: Option<usize>, prior: f64, coeffs: DVector<f64>, offset: f64 },
    /// Gaussian tail with the given sigma, shifted.
    Gaussian { mode: usize, prior: f64, sigma: f64, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlOptions {
    /// Give the fault-free term its own share of the budget. When false the
    /// budget is split over the monitored modes only and the fault-free term
    /// gets the same share.
    pub h0_share: bool,
}

impl Default for PlOptions {
    fn default() -> Self {
        PlOptions { h0_share: true }
    }
}

/// Protection-level engine for one epoch: detector plus the per-mode terms.
#[derive(Debug, Clone)]
pub struct IntegrityMonitor {
    pub threat: ThreatModel,
    pub bounds: MeasurementBounds,
    pub budget: IntegrityBudget,
    pub detector: JackknifeDetector,
    pub cfg: DetectorConfig,
    /// Priors of monitored modes that could not be tested.
    pub untestable_prior: f64,
    /// Some monitored mode without a test has prior above `p_thres`.
    pub unprotected: bool,
    terms: [Option<Vec<Term>>; 3],
}

impl IntegrityMonitor {
    pub fn new(
        model: &LinearModel<f64>,
        threat: ThreatModel,
        bounds: MeasurementBounds,
        budget: IntegrityBudget,
        cfg: DetectorConfig,
    ) -> Result<Self> {
        budget.validate()?;
        let detector = JackknifeDetector::new(model, &threat, &bounds, &cfg)?;
        let untestable_prior: f64 = detector.skipped.iter().map(|&k| threat.modes[k].prior).sum();
        let unprotected = detector.skipped.iter().any(|&k| threat.modes[k].prior > budget.p_thres);
        let terms = [EAST, NORTH, UP].map(|v| Self::axis_terms(model, &threat, &bounds, &detector, v));
        Ok(IntegrityMonitor { threat, bounds, budget, detector, cfg, untestable_prior, unprotected, terms })
    }

    /// Threat model sized for the measurements in view, then the monitor.
    pub fn for_model(model: &LinearModel<f64>, bounds: MeasurementBounds, budget: IntegrityBudget, cfg: DetectorConfig) -> Result<Self> {
        let threat = budget.threat_for(model, None)?;
        Self::new(model, threat, bounds, budget, cfg)
    }

    fn axis_terms(
        model: &LinearModel<f64>,
        threat: &ThreatModel,
        bounds: &MeasurementBounds,
        det: &JackknifeDetector,
        v: usize,
    ) -> Option<Vec<Term>> {
        let s = &det.ops.s;
        let mut out = vec![Term::Numeric {
            mode: None,
            prior: threat.p_h0,
            coeffs: s.row(v).transpose(),
            offset: model::bias_projection(s, &bounds.b_nom, v),
        }];
        for (k, mode) in threat.modes.iter().enumerate() {
            if !mode.monitored || det.skipped.contains(&k) {
                continue;
            }
            let sub = det.ops.subset(k).ok()?;
            let b = model::bias_projection(&sub.s, &bounds.b_nom, v);
            match mode.kind {
                ModeKind::SatSubset => {
                    let t = det.threshold(k, v)?;
                    let share = if mode.excluded.len() == 1 { s[(v, mode.excluded[0])].abs() * t } else { t };
                    out.push(Term::Numeric {
                        mode: Some(k),
                        prior: mode.prior,
                        coeffs: position_coeffs(model, s, sub, v),
                        offset: share + b,
                    });
                }
                ModeKind::Constellation(_) => {
                    let d = det.threshold(k, v)?;
                    let sigma = bounds.gaussian_std(&sub.s.row(v).transpose());
                    out.push(Term::Gaussian { mode: k, prior: mode.prior, sigma, offset: d + b });
                }
            }
        }
        Some(out)
    }

    /// `I_v (1 - P_nm / I_REQ)`, with untestable priors counted as unmonitored.
    pub fn deflated_budget(&self, axis: usize) -> f64 {
        let p_nm = self.threat.p_not_monitored + self.untestable_prior;
        self.budget.axis_budget(axis) * (1.0 - p_nm / self.budget.i_req())
    }

    fn allocation(&self, axis: usize, opts: &PlOptions) -> Option<f64> {
        let terms = self.terms[axis].as_ref()?;
        let n_modes = terms.len() - 1;
        let shares = if opts.h0_share { n_modes + 1 } else { n_modes.max(1) };
        let b = self.deflated_budget(axis);
        (b > 0.0).then(|| b / shares as f64)
    }

    /// Protection level on one axis and the binding term.
    pub fn pl_axis(&self, axis: usize, opts: &PlOptions) -> Result<(f64, Option<usize>)> {
        let (Some(terms), Some(alloc)) = (self.terms[axis].as_ref(), self.allocation(axis, opts)) else {
            return Ok((f64::INFINITY, None));
        };
        if self.unprotected {
            return Ok((f64::INFINITY, None));
        }
        // Cheap upper bounds first; a term is evaluated exactly only if its
        // Chebyshev bound could still beat the running maximum.
        let mut order: Vec<(usize, f64)> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (prior, offset, var) = match t {
                    Term::Numeric { prior, coeffs, offset, .. } => (*prior, *offset, self.variance_of(coeffs)),
                    Term::Gaussian { prior, sigma, offset, .. } => (*prior, *offset, sigma * sigma),
                };
                let p = alloc / prior;
                let upper = if p >= 1.0 { offset } else { offset + (var / p).sqrt() };
                (i, upper)
            })
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut best = (f64::NEG_INFINITY, None);
        for (i, upper) in order {
            if upper <= best.0 {
                continue;
            }
            let (value, mode) = self.term_value(&terms[i], alloc)?;
            if value > best.0 {
                best = (value, mode);
            }
        }
        Ok(best)
    }

    fn variance_of(&self, coeffs: &DVector<f64>) -> f64 {
        coeffs.iter().zip(&self.bounds.acc).map(|(c, d)| c * c * d.variance()).sum()
    }

    fn term_value(&self, term: &Term, alloc: f64) -> Result<(f64, Option<usize>)> {
        Ok(match term {
            Term::Numeric { mode, prior, coeffs, offset } => {
                let q = if alloc >= *prior { 0.0 } else { self.bounds.combine(coeffs, &self.cfg.grid)?.two_sided_bound(alloc / prior)? };
                (q + offset, *mode)
            }
            Term::Gaussian { mode, prior, sigma, offset } => {
                let q = if alloc >= *prior { 0.0 } else { sigma * normal::isf(0.5 * alloc / prior) };
                (q + offset, Some(*mode))
            }
        })
    }

    pub fn pl(&self, opts: &PlOptions) -> Result<PlResult> {
        let mut pl = [0.0; 3];
        let mut binding = [None; 3];
        for v in [EAST, NORTH, UP] {
            (pl[v], binding[v]) = self.pl_axis(v, opts)?;
        }
        Ok(PlResult::from_axes(pl, binding, 0))
    }

    /// Right-hand side of the integrity-risk bound evaluated at `limit`.
    pub fn hmi_risk(&self, axis: usize, limit: f64, opts: &PlOptions) -> Result<RiskBreakdown> {
        let terms = self.terms[axis]
            .as_ref()
            .ok_or_else(|| Error::Config("axis not monitored under the chosen detection axes".into()))?;
        let mut out = Vec::with_capacity(terms.len());
        for t in terms {
            let (mode, prior, offset, tail) = match t {
                Term::Numeric { mode, prior, coeffs, offset } => {
                    let x = limit - offset;
                    let tail = if x <= 0.0 { 1.0 } else { (2.0 * self.bounds.combine(coeffs, &self.cfg.grid)?.cdf(-x)).min(1.0) };
                    (*mode, *prior, *offset, tail)
                }
                Term::Gaussian { mode, prior, sigma, offset } => {
                    let x = limit - offset;
                    let tail = if x <= 0.0 { 1.0 } else { 2.0 * normal::sf(x / sigma) };
                    (Some(*mode), *prior, *offset, tail)
                }
            };
            out.push(RiskTerm { mode, prior, offset, value: prior * tail });
        }
        Ok(RiskBreakdown {
            total: out.iter().map(|t| t.value).sum(),
            terms: out,
            allocation: self.allocation(axis, opts).unwrap_or(0.0),
            deflated_budget: self.deflated_budget(axis),
        })
    }
}

/// Protection levels from scratch for one epoch.
pub fn compute_pl(
    model: &LinearModel<f64>,
    bounds: MeasurementBounds,
    budget: &IntegrityBudget,
    cfg: DetectorConfig,
    opts: &PlOptions,
) -> Result<PlResult> {
    IntegrityMonitor::for_model(model, bounds, budget.clone(), cfg)?.pl(opts)
}

/// Integrity risk bound at `limit` for one axis.
pub fn hmi_risk_eval(
    model: &LinearModel<f64>,
    threat: ThreatModel,
    bounds: MeasurementBounds,
    budget: &IntegrityBudget,
    cfg: DetectorConfig,
    axis: usize,
    limit: f64,
) -> Result<RiskBreakdown> {
    IntegrityMonitor::new(model, threat, bounds, budget.clone(), cfg)?.hmi_risk(axis, limit, &PlOptions::default())
}

const BISECT_HI: f64 = 1e4;
const BISECT_TOL: f64 = 1e-3;

/// Solution-separation protection levels with Gaussian bounds, solving the
/// total-risk equation by bisection.
pub fn baseline_araim_pl(
    model: &LinearModel<f64>,
    threat: &ThreatModel,
    bounds: &MeasurementBounds,
    budget: &IntegrityBudget,
) -> Result<PlResult> {
    budget.validate()?;
    bounds.validate(model.n())?;
    let (_, s) = wls_solve(model)?;
    let n_mon = threat.n_monitored().max(1) as f64;
    let mut p_nm = threat.p_not_monitored;
    let mut modes = Vec::new();
    for (k, mode) in threat.monitored().enumerate().map(|(_, m)| (m.id - 1, m)) {
        match subset_ops_reduced(model, &mode.excluded) {
            Ok(sub) => modes.push((k, mode.prior, sub)),
            Err(_) if mode.prior <= budget.p_thres => p_nm += mode.prior,
            Err(_) => return Ok(PlResult::from_axes([f64::INFINITY; 3], [None; 3], 0)),
        }
    }
    let mut pl = [0.0; 3];
    let mut binding = [None; 3];
    let mut iterations = 0;
    for v in [EAST, NORTH, UP] {
        let k_fa = if v == UP {
            normal::isf(budget.c_req_fa_vert / (2.0 * n_mon))
        } else {
            normal::isf(budget.c_req_fa_horiz / (4.0 * n_mon))
        };
        let row0 = s.row(v).transpose();
        let sigma0 = bounds.gaussian_std(&row0);
        let b0 = model::bias_projection(&s, &bounds.b_nom, v);
        let terms: Vec<(usize, f64, f64, f64)> = modes
            .iter()
            .map(|(k, prior, sub)| {
                let ss = constellation_ss(&s, sub, bounds, v, 1.0)?;
                let t = k_fa * ss.sigma_ss;
                let b = model::bias_projection(&sub.s, &bounds.b_nom, v);
                Ok((*k, *prior, ss.sigma_subset, t + b))
            })
            .collect::<Result<_>>()?;
        let target = budget.axis_budget(v) * (1.0 - p_nm / budget.i_req());
        let risk = |l: f64| {
            2.0 * normal::sf((l - b0) / sigma0)
                + terms.iter().map(|(_, p, sig, off)| p * normal::sf((l - off) / sig)).sum::<f64>()
        };
        if target <= 0.0 || risk(BISECT_HI) > target {
            pl[v] = f64::INFINITY;
            continue;
        }
        let (mut lo, mut hi) = (0.0, BISECT_HI);
        while hi - lo > BISECT_TOL {
            let mid = 0.5 * (lo + hi);
            if risk(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
        }
        pl[v] = hi;
        // Binding mode: the largest contribution at the solution.
        let h0 = 2.0 * normal::sf((hi - b0) / sigma0);
        binding[v] = terms
            .iter()
            .map(|(k, p, sig, off)| (*k, p * normal::sf((hi - off) / sig)))
            .filter(|(_, r)| *r > h0)
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k);
    }
    Ok(PlResult::from_axes(pl, binding, iterations))
}

/// Solution-separation alert of the baseline: any monitored mode whose
/// separation exceeds its threshold on any axis.
pub fn baseline_alert(
    model: &LinearModel<f64>,
    threat: &ThreatModel,
    bounds: &MeasurementBounds,
    budget: &IntegrityBudget,
) -> Result<bool> {
    let (x, s) = wls_solve(model)?;
    let n_mon = threat.n_monitored().max(1) as f64;
    for mode in threat.monitored() {
        let Ok(sub) = subset_ops_reduced(model, &mode.excluded) else { continue };
        let xk = &sub.s * model.y();
        for v in [EAST, NORTH, UP] {
            let k_fa = if v == UP {
                normal::isf(budget.c_req_fa_vert / (2.0 * n_mon))
            } else {
                normal::isf(budget.c_req_fa_horiz / (4.0 * n_mon))
            };
            let ss = constellation_ss(&s, &sub, bounds, v, 1.0)?;
            if (x[v] - xk[v]).abs() > k_fa * ss.sigma_ss {
                return Ok(true);
            }
        }
    }
    Ok(false)
}
