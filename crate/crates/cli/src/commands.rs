use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use jkraim::dist::ErrorDistribution;
use jkraim::integrity::{baseline_alert, baseline_araim_pl, IntegrityMonitor, PlOptions};
use jkraim::jackknife::{JackknifeDetector, MeasurementBounds, TestKind};
use jkraim::model::geo::model_from_visible;
use jkraim::model::{Constellation, LinearModel};
use jkraim::overbound::{build_pgo, fit_bgmm, fit_gaussian_overbound, verify_overbound, DominanceOptions, SatelliteBoundTable};
use jkraim::sim::stats::DEFAULT_LEVELS;
use jkraim::sim::{aggregate, error_model, load_yuma, nominal_almanac, run_scenario, write_records, Algorithm, BoundFlavor, ScenarioConfig};
use jkraim::threat::{mode_count, ThreatModel};
use serde::Serialize;
use serde_json::json;

use crate::config::{FileConfig, Geometry};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{info, AlgorithmArg, BoundArg, Cli, CliResult, Command};

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let mut scenario = cfg.scenario.clone();
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    scenario.validate()?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("--threads {n}: {e}")))?;
    }
    match &cli.command {
        Command::Pl { geometry, algorithm, bound, manifest } => {
            apply_overrides(&mut scenario, *algorithm, *bound);
            let inputs = data_inputs(&cfg, &[geometry.clone()], false);
            let man = RunManifest::new("pl", cli.config.as_deref(), &inputs, scenario.seed)?;
            let out = cmd_pl(&scenario, &load_table(&cfg)?, &Geometry::load(geometry)?)?;
            emit(&out, manifest.as_deref(), man)
        }
        Command::Detect { geometry, bound, manifest } => {
            apply_overrides(&mut scenario, None, *bound);
            let inputs = data_inputs(&cfg, &[geometry.clone()], false);
            let man = RunManifest::new("detect", cli.config.as_deref(), &inputs, scenario.seed)?;
            let out = cmd_detect(&scenario, &load_table(&cfg)?, &Geometry::load(geometry)?)?;
            emit(&out, manifest.as_deref(), man)
        }
        Command::Fit { samples, manifest } => {
            let man = RunManifest::new("fit", cli.config.as_deref(), std::slice::from_ref(samples), scenario.seed)?;
            let out = cmd_fit(samples)?;
            emit(&out, manifest.as_deref(), man)
        }
        Command::Sim { out, algorithm, bound } => {
            apply_overrides(&mut scenario, *algorithm, *bound);
            let dir = out.clone().or(cfg.files.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
            cmd_sim(cli, &cfg, &scenario, &dir)
        }
    }
}

fn apply_overrides(s: &mut ScenarioConfig, algorithm: Option<AlgorithmArg>, bound: Option<BoundArg>) {
    if let Some(a) = algorithm {
        s.algorithm = match a {
            AlgorithmArg::Jk => Algorithm::Jk,
            AlgorithmArg::Baseline => Algorithm::Baseline,
        };
    }
    if let Some(b) = bound {
        s.bound = match b {
            BoundArg::Pgo => BoundFlavor::Pgo,
            BoundArg::Gaussian => BoundFlavor::Gaussian,
        };
    }
}

fn data_inputs(cfg: &FileConfig, extra: &[PathBuf], almanac: bool) -> Vec<PathBuf> {
    let mut v = extra.to_vec();
    v.extend(cfg.files.table.iter().cloned());
    if almanac {
        v.extend(cfg.files.almanac.iter().cloned());
    }
    v
}

fn load_table(cfg: &FileConfig) -> CliResult<SatelliteBoundTable> {
    match &cfg.files.table {
        Some(p) => SatelliteBoundTable::from_path(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => Ok(SatelliteBoundTable::builtin()),
    }
}

/// Prints `value` as JSON and writes the manifest if one was requested.
fn emit<T: Serialize>(value: &T, manifest: Option<&Path>, man: RunManifest) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{text}").map_err(|e| CliError::Output(e.to_string()))?;
    if let Some(path) = manifest {
        man.write(path)?;
    }
    Ok(())
}

struct Epoch {
    model: LinearModel<f64>,
    bounds: MeasurementBounds,
    threat: ThreatModel,
}

fn assemble(s: &ScenarioConfig, table: &SatelliteBoundTable, geo: &Geometry) -> CliResult<Epoch> {
    let vis: Vec<_> = geo.sat.iter().map(|e| e.visible()).collect();
    let mut acc = Vec::with_capacity(vis.len());
    let mut gauss = Vec::with_capacity(vis.len());
    for (e, v) in geo.sat.iter().zip(&vis) {
        match e.sigma {
            Some(sig) if sig > 0.0 => {
                acc.push(ErrorDistribution::gaussian(sig));
                gauss.push(sig);
            }
            Some(sig) => return Err(CliError::Input(format!("{}: sigma {sig} must be positive", e.svn))),
            None => {
                let m = error_model(table.get(&e.svn)?, v.constellation, v.elevation_deg, s.bound, s.construction, s.budget.b_nom)?;
                acc.push(m.acc);
                gauss.push(m.gauss_sigma);
            }
        }
    }
    let n = vis.len();
    let w = nalgebra::DVector::from_iterator(n, gauss.iter().map(|g| 1.0 / (g * g)));
    let y = nalgebra::DVector::from_iterator(n, geo.sat.iter().map(|e| e.y));
    let model = model_from_visible(&vis, w)?.with_observations(y);
    let threat = s.budget.threat_for(&model, geo.population.as_deref())?;
    let bounds = MeasurementBounds { acc, gauss_sigma: gauss, b_nom: vec![s.budget.b_nom; n] };
    Ok(Epoch { model, bounds, threat })
}

#[derive(Debug, Serialize)]
struct ThresholdRow {
    mode: usize,
    excluded: Vec<String>,
    kind: TestKind,
    axis: Option<usize>,
    threshold: f64,
}

fn threshold_rows(model: &LinearModel<f64>, threat: &ThreatModel, det: &JackknifeDetector) -> Vec<ThresholdRow> {
    det.tests
        .iter()
        .map(|t| ThresholdRow {
            mode: t.mode,
            excluded: threat.modes[t.mode].excluded.iter().map(|&i| model.sat_ids()[i].clone()).collect(),
            kind: t.kind,
            axis: t.axis,
            threshold: t.threshold,
        })
        .collect()
}

fn cmd_pl(s: &ScenarioConfig, table: &SatelliteBoundTable, geo: &Geometry) -> CliResult<serde_json::Value> {
    let Epoch { model, bounds, threat } = assemble(s, table, geo)?;
    let (pl, alert, thresholds) = match s.algorithm {
        Algorithm::Jk => {
            let mon = IntegrityMonitor::new(&model, threat.clone(), bounds, s.budget.clone(), s.detector_config())?;
            let alert = mon.detector.detect(model.y()).alert;
            (mon.pl(&PlOptions { h0_share: s.h0_share })?, alert, threshold_rows(&model, &threat, &mon.detector))
        }
        Algorithm::Baseline => {
            let gb = MeasurementBounds::gaussian(&bounds.gauss_sigma, s.budget.b_nom);
            let alert = baseline_alert(&model, &threat, &gb, &s.budget)?;
            (baseline_araim_pl(&model, &threat, &gb, &s.budget)?, alert, Vec::new())
        }
    };
    Ok(json!({
        "algorithm": s.algorithm,
        "bound": s.bound,
        "vpl": pl.vpl,
        "hpl": pl.hpl,
        "pl_enu": pl.pl,
        "binding": pl.binding,
        "available": pl.is_available(s.budget.val),
        "alert": alert,
        "k_max": threat.k_max,
        "n_modes": threat.modes.len(),
        "p_not_monitored": threat.p_not_monitored,
        "thresholds": thresholds,
    }))
}

fn cmd_detect(s: &ScenarioConfig, table: &SatelliteBoundTable, geo: &Geometry) -> CliResult<serde_json::Value> {
    let Epoch { model, bounds, threat } = assemble(s, table, geo)?;
    let det = JackknifeDetector::new(&model, &threat, &bounds, &s.detector_config())?;
    let stats = det.detect(model.y());
    Ok(json!({
        "alert": stats.alert,
        "tau": stats.tau,
        "skipped": stats.skipped,
        "tests": stats.tests,
        "k_max": threat.k_max,
        "n_modes": threat.modes.len(),
    }))
}

fn read_samples(path: &Path) -> CliResult<Vec<f64>> {
    let text = crate::config::read_input(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => return Err(CliError::Input(format!("{}:{}: non-finite value", path.display(), k + 1))),
            Err(_) if k == 0 && out.is_empty() => {} // header
            Err(_) => return Err(CliError::Input(format!("{}:{}: `{field}` is not a number", path.display(), k + 1))),
        }
    }
    if out.is_empty() {
        return Err(CliError::Input(format!("{}: no samples", path.display())));
    }
    Ok(out)
}

fn cmd_fit(path: &Path) -> CliResult<serde_json::Value> {
    let samples = read_samples(path)?;
    let opts = DominanceOptions::default();
    let sigma = fit_gaussian_overbound(&samples, &opts)?;
    let gauss_report = verify_overbound(&ErrorDistribution::gaussian(sigma), &samples, &opts)?;
    let bgmm = fit_bgmm(&samples)?;
    let pgo = if bgmm.degenerate {
        None
    } else {
        let (p1, s1, s2) = if bgmm.sigma1 <= bgmm.sigma2 {
            (bgmm.p1, bgmm.sigma1, bgmm.sigma2)
        } else {
            (1.0 - bgmm.p1, bgmm.sigma2, bgmm.sigma1)
        };
        build_pgo(p1, s1, s2, None, Default::default()).ok()
    };
    let pgo_report = pgo.as_ref().map(|p| verify_overbound(&ErrorDistribution::Pgo(p.clone()), &samples, &opts)).transpose()?;
    Ok(json!({
        "samples": samples.len(),
        "gaussian_sigma": sigma,
        "gaussian_report": gauss_report,
        "bgmm": bgmm,
        "pgo": pgo,
        "pgo_report": pgo_report,
    }))
}

fn cmd_sim(cli: &Cli, cfg: &FileConfig, s: &ScenarioConfig, dir: &Path) -> CliResult<()> {
    let inputs = data_inputs(cfg, &[], true);
    let mut man = RunManifest::new("sim", cli.config.as_deref(), &inputs, s.seed)?;
    let table = load_table(cfg)?;
    let almanac = if cfg.files.almanac.is_empty() {
        s.constellations.iter().flat_map(|c| nominal_almanac(*c)).collect()
    } else {
        let mut v = Vec::new();
        for p in &cfg.files.almanac {
            v.extend(load_yuma(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?);
        }
        v
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    let cells = s.locations().len() * s.epochs().len();
    info(cli, format!("simulating {cells} cells"));
    let start = Instant::now();
    let records = run_scenario(s, &almanac, &table)?;
    info(cli, format!("done in {:.1}s", start.elapsed().as_secs_f64()));

    let mut summary = aggregate(&records, s.budget.val, &DEFAULT_LEVELS);
    let population: Vec<(Constellation, usize)> = s
        .constellations
        .iter()
        .map(|c| (*c, almanac.iter().filter(|e| e.constellation == *c && e.is_healthy()).count()))
        .collect();
    let counts: Vec<usize> = population.iter().map(|p| p.1).collect();
    let p_const: Vec<f64> = s.constellations.iter().map(|c| s.budget.p_const_of(*c)).collect::<Result<_, _>>()?;
    let (k_max, _) = jkraim::threat::determine_kmax(&counts, s.budget.p_sat, &p_const, s.budget.p_thres);
    let total: usize = counts.iter().sum();
    summary.config_echo = json!({
        "scenario": s,
        "population": population,
        "k_max": k_max,
        "mode_count_all_in_view": mode_count(total, k_max, counts.len()),
        "max_modes_in_run": records.iter().map(|r| r.n_modes).max().unwrap_or(0),
        "unevaluated_records": records.iter().filter(|r| r.error.is_some()).count(),
    });

    let write = |name: &str, f: &dyn Fn(&mut dyn Write) -> CliResult<()>| -> CliResult<PathBuf> {
        let path = dir.join(name);
        let file = std::fs::File::create(&path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        Ok(path)
    };
    let out_err = |e: std::io::Error| CliError::Output(e.to_string());
    man.outputs.push(write("records.csv", &|w| write_records(&records, w).map_err(CliError::from))?);
    man.outputs.push(write("summary.json", &|w| {
        serde_json::to_writer_pretty(&mut *w, &summary).map_err(|e| CliError::Output(e.to_string()))?;
        writeln!(w).map_err(out_err)
    })?);
    man.outputs.push(write("availability_map.csv", &|w| {
        writeln!(w, "lat_deg,lon_deg,availability,vpl_p995_m").map_err(out_err)?;
        for (a, p) in summary.availability_by_location.iter().zip(&summary.vpl_p995_by_location) {
            let p995 = p.value.map_or(String::new(), |v| v.to_string());
            writeln!(w, "{},{},{},{}", a.lat_deg, a.lon_deg, a.value.unwrap_or(0.0), p995).map_err(out_err)?;
        }
        Ok(())
    })?);
    man.outputs.push(write("stanford_histogram.csv", &|w| {
        // 1 m bins of (|VPE|, VPL) for the Stanford triangle plot.
        let mut bins = std::collections::BTreeMap::<(u64, u64), usize>::new();
        for r in &records {
            if let (Some(e), Some(l)) = (r.vpe_m, r.vpl_m) {
                *bins.entry((e.abs().floor() as u64, l.floor() as u64)).or_default() += 1;
            }
        }
        writeln!(w, "vpe_bin_m,vpl_bin_m,count").map_err(out_err)?;
        for ((e, l), c) in bins {
            writeln!(w, "{e},{l},{c}").map_err(out_err)?;
        }
        Ok(())
    })?);
    let man_path = dir.join("manifest.json");
    man.outputs.push(man_path.clone());
    man.write(&man_path)?;
    let mut stdout = std::io::stdout().lock();
    for c in &summary.coverage {
        writeln!(stdout, "coverage@{}: {:.2}% (unweighted {:.2}%)", c.level, 100.0 * c.weighted, 100.0 * c.unweighted).map_err(out_err)?;
    }
    writeln!(stdout, "unsafe records: {}", summary.unsafe_records).map_err(out_err)?;
    Ok(())
}
