use std::path::{Path, PathBuf};

use branchquant::{AxisBox, DensitySpec, GriddedDensity, QuantizerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Which sweep reports are written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportToggles {
    pub scaling: bool,
    pub delone: bool,
    pub density: bool,
    pub basins: bool,
    pub balls: bool,
    pub energy: bool,
    pub landscape: bool,
    /// SVG figures.
    pub plots: bool,
}

impl Default for ReportToggles {
    fn default() -> Self {
        ReportToggles { scaling: true, delone: true, density: true, basins: true, balls: true, energy: true, landscape: true, plots: true }
    }
}

impl ReportToggles {
    pub fn none() -> Self {
        ReportToggles {
            scaling: false,
            delone: false,
            density: false,
            basins: false,
            balls: false,
            energy: false,
            landscape: false,
            plots: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub alpha: f64,
    pub measure: GriddedDensity,
    #[serde(rename = "N_list", alias = "n_list")]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub solver: QuantizerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub reports: ReportToggles,
}

fn default_dimension() -> usize {
    2
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dimension: 2,
            alpha: 0.85,
            measure: GriddedDensity { region: AxisBox::unit_cube(2), density: DensitySpec::Uniform, resolution: 32 },
            n_list: vec![2, 4, 8, 16],
            solver: QuantizerConfig::default(),
            seed: 0,
            output_dir: default_output(),
            reports: ReportToggles::default(),
        }
    }
}

impl RunConfig {
    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| CliError::Parse { path: path.to_path_buf(), message })
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.measure.region.dim() != self.dimension {
            return Err(CliError::Usage(format!(
                "measure box has dimension {} but dimension is {}",
                self.measure.region.dim(),
                self.dimension
            )));
        }
        self.measure.region.validate()?;
        branchquant::error::check_alpha(self.alpha, self.dimension)?;
        if self.n_list.is_empty() || self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Usage("N_list must be nonempty, positive and strictly increasing".into()));
        }
        self.solver.validate()?;
        Ok(())
    }

    /// Copies the run seed into the solver configuration.
    pub fn seeded(&self) -> RunConfig {
        let mut c = self.clone();
        c.solver.solver.seed = c.seed;
        c
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form (output
    /// directory excluded, seed included).
    pub fn run_id(&self, salt: &str) -> String {
        let mut c = self.seeded();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        hash_hex(&[salt.as_bytes(), text.as_bytes()])
    }
}

pub fn hash_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_ignores_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.run_id("sweep"), b.run_id("sweep"));
        assert_eq!(a.run_id("sweep").len(), 16);
        b.seed = 1;
        assert_ne!(a.run_id("sweep"), b.run_id("sweep"));
    }

    #[test]
    fn toml_and_json_agree() {
        let json = r#"{"alpha": 0.9, "measure": {"box": {"lo": [0, 0], "hi": [1, 1]}, "density": {"kind": "uniform"}, "resolution": 8}, "N_list": [1, 2]}"#;
        let toml_text = "alpha = 0.9\nN_list = [1, 2]\n[measure]\nresolution = 8\n[measure.box]\nlo = [0.0, 0.0]\nhi = [1.0, 1.0]\n[measure.density]\nkind = \"uniform\"\n";
        let a: RunConfig = serde_json::from_str(json).unwrap();
        let b: RunConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn alpha_range_is_checked() {
        let c = RunConfig { alpha: 0.4, ..RunConfig::default() };
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("alpha must exceed 1 − 1/d"), "{e}");
    }
}
