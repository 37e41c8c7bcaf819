//! TOML run configuration and the single-epoch geometry file.

use std::path::{Path, PathBuf};

use jkraim::model::geo::VisibleSat;
use jkraim::model::Constellation;
use jkraim::sim::ScenarioConfig;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: ScenarioConfig,
    pub files: Files,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Files {
    /// YUMA almanacs; the nominal almanacs are used when empty.
    pub almanac: Vec<PathBuf>,
    /// Satellite bound table CSV; the built-in table when absent.
    pub table: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

pub fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = read_input(path)?;
        let cfg: FileConfig = toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        // Relative data paths are taken from the config file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        let files = Files {
            almanac: cfg.files.almanac.iter().map(rebase).collect(),
            table: cfg.files.table.as_ref().map(rebase),
            output_dir: cfg.files.output_dir.as_ref().map(rebase),
        };
        Ok(FileConfig { scenario: cfg.scenario, files })
    }
}

/// One measurement of the geometry file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatEntry {
    /// Key into the bound table.
    pub svn: String,
    /// Inferred from the label when absent (`GSAT*` is Galileo).
    pub constellation: Option<Constellation>,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    #[serde(default)]
    pub y: f64,
    /// Plain Gaussian bound of this sigma instead of the table-derived one.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Satellites per constellation used to size `k_max`; the satellites in
    /// view when absent.
    pub population: Option<Vec<usize>>,
    pub sat: Vec<SatEntry>,
}

impl SatEntry {
    pub fn constellation(&self) -> Constellation {
        self.constellation
            .unwrap_or(if self.svn.starts_with("GSAT") { Constellation::Galileo } else { Constellation::Gps })
    }

    pub fn visible(&self) -> VisibleSat {
        let (el, az) = (self.elevation_deg.to_radians(), self.azimuth_deg.to_radians());
        VisibleSat {
            id: self.svn.clone(),
            constellation: self.constellation(),
            los: [el.cos() * az.sin(), el.cos() * az.cos(), el.sin()],
            elevation_deg: self.elevation_deg,
        }
    }
}

impl Geometry {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_input(path)?;
        let g: Geometry = toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if g.sat.is_empty() {
            return Err(CliError::Input(format!("{}: no satellites", path.display())));
        }
        Ok(g)
    }
}
