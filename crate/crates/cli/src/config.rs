//! Pipeline configuration: an optional JSON file overlaid by flags.

use std::fs;
use std::path::{Path, PathBuf};

use emreduce_core::diagram::CropWindow;
use emreduce_core::reduction::DEFAULT_BRUTE_FORCE_CAP;
use emreduce_core::{Algorithm, Error, Result, SolverConfig, UnmixMode};
use serde::Deserialize;

use crate::datasets::{self, DatasetInfo};
use crate::files::ImageFormat;

/// Every setting is optional so a file and the flags can be merged.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineFile {
    pub dataset: Option<PathBuf>,
    pub format: Option<String>,
    /// Registry entry supplying `m_ref` and annotations.
    pub name: Option<String>,
    pub algo: Option<String>,
    pub m_ref: Option<usize>,
    pub m_over: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    /// `[kappa_min, kappa_max, rmse_min, rmse_max]`
    pub crop: Option<[f64; 4]>,
    pub brute_k: Option<usize>,
    pub brute_cap: Option<u128>,
    pub force: Option<bool>,
    pub mode: Option<String>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub linear_kappa: Option<bool>,
    pub out: Option<PathBuf>,
}

impl PipelineFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Fields set in `flags` win.
    pub fn overlay(self, flags: PipelineFile) -> PipelineFile {
        PipelineFile {
            dataset: flags.dataset.or(self.dataset),
            format: flags.format.or(self.format),
            name: flags.name.or(self.name),
            algo: flags.algo.or(self.algo),
            m_ref: flags.m_ref.or(self.m_ref),
            m_over: flags.m_over.or(self.m_over),
            alphas: flags.alphas.or(self.alphas),
            runs: flags.runs.or(self.runs),
            seed: flags.seed.or(self.seed),
            crop: flags.crop.or(self.crop),
            brute_k: flags.brute_k.or(self.brute_k),
            brute_cap: flags.brute_cap.or(self.brute_cap),
            force: flags.force.or(self.force),
            mode: flags.mode.or(self.mode),
            tolerance: flags.tolerance.or(self.tolerance),
            max_iterations: flags.max_iterations.or(self.max_iterations),
            linear_kappa: flags.linear_kappa.or(self.linear_kappa),
            out: flags.out.or(self.out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForce {
    pub k: usize,
    pub cap: u128,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub format: Option<ImageFormat>,
    pub info: Option<&'static DatasetInfo>,
    pub algo: Algorithm,
    pub m_ref: usize,
    pub m_over: usize,
    pub alphas: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub crop: Option<CropWindow>,
    pub brute_force: Option<BruteForce>,
    pub solver: SolverConfig,
    pub kappa_log_scale: bool,
    pub out: PathBuf,
}

pub const DEFAULT_ALPHAS: [f64; 3] = [0.0, 0.5, 1.0];

/// Runs per configuration when not given: 10 for randomized extractors.
pub fn default_runs(algo: Algorithm) -> usize {
    if algo.is_deterministic() {
        1
    } else {
        10
    }
}

fn missing(key: &str) -> Error {
    Error::InvalidConfig(format!("`{key}` is required"))
}

impl PipelineConfig {
    /// Resolve defaults and validate. Returns the config and any warnings.
    pub fn resolve(file: PipelineFile) -> Result<(Self, Vec<String>)> {
        let mut warnings = Vec::new();
        let dataset = file.dataset.ok_or_else(|| missing("dataset"))?;
        let out = file.out.ok_or_else(|| missing("out"))?;
        let algo: Algorithm = file.algo.as_deref().ok_or_else(|| missing("algo"))?.parse()?;
        let format = file.format.as_deref().map(str::parse).transpose()?;
        let info = match file.name.as_deref() {
            Some(name) => Some(
                datasets::lookup(name)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown dataset `{name}`")))?,
            ),
            None => None,
        };
        let m_ref = file
            .m_ref
            .or(info.map(|d| d.m_ref))
            .ok_or_else(|| missing("m_ref (or a registry name)"))?;
        let m_over = file.m_over.unwrap_or(2 * m_ref);
        if m_ref == 0 || m_over < m_ref {
            return Err(Error::InvalidConfig(format!(
                "need m_over >= m_ref >= 1, got m_ref = {m_ref}, m_over = {m_over}"
            )));
        }
        if m_over < 2 {
            return Err(Error::InvalidConfig("m_over must be at least 2 to reduce".into()));
        }
        let alphas = file.alphas.unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
        if alphas.is_empty() {
            return Err(Error::InvalidConfig("at least one alpha is required".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidConfig(format!("alpha {a} outside [0, 1]")));
        }
        if (1..alphas.len()).any(|i| alphas[..i].contains(&alphas[i])) {
            return Err(Error::InvalidConfig("alphas must be distinct".into()));
        }
        let mut runs = file.runs.unwrap_or_else(|| default_runs(algo));
        if runs == 0 {
            return Err(Error::InvalidConfig("runs must be positive".into()));
        }
        if algo.is_deterministic() && runs > 1 {
            warnings.push(format!("{algo} is deterministic; runs coerced from {runs} to 1"));
            runs = 1;
        }
        let crop = file
            .crop
            .map(|[k0, k1, r0, r1]| CropWindow::new((k0, k1), (r0, r1)))
            .transpose()?;
        let brute_force = file.brute_k.map(|k| BruteForce {
            k,
            cap: file.brute_cap.unwrap_or(DEFAULT_BRUTE_FORCE_CAP),
            force: file.force.unwrap_or(false),
        });
        if let Some(b) = brute_force {
            if b.k == 0 || b.k > m_over {
                return Err(Error::InvalidConfig(format!("brute-force size {} outside [1, {m_over}]", b.k)));
            }
        }
        let mut solver = SolverConfig {
            mode: file.mode.as_deref().map(str::parse::<UnmixMode>).transpose()?.unwrap_or(UnmixMode::FullyConstrained),
            ..SolverConfig::default()
        };
        if let Some(t) = file.tolerance {
            solver.tolerance = t;
        }
        solver.max_iterations = file.max_iterations;
        solver.validate()?;
        let config = PipelineConfig {
            dataset,
            format,
            info,
            algo,
            m_ref,
            m_over,
            alphas,
            runs,
            seed: file.seed.unwrap_or(0),
            crop,
            brute_force,
            solver,
            kappa_log_scale: !file.linear_kappa.unwrap_or(false),
            out,
        };
        Ok((config, warnings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PipelineFile {
        PipelineFile {
            dataset: Some("scene.hdr".into()),
            out: Some("out".into()),
            algo: Some("osp".into()),
            ..PipelineFile::default()
        }
    }

    #[test]
    fn registry_sets_reference_sizes() {
        let (c, _) = PipelineConfig::resolve(PipelineFile {
            name: Some("Salinas-A".into()),
            ..base()
        })
        .unwrap();
        assert_eq!((c.m_ref, c.m_over), (6, 12));
        assert_eq!(c.alphas, vec![0.0, 0.5, 1.0]);
        assert_eq!(c.runs, 1);
    }

    #[test]
    fn deterministic_runs_are_coerced() {
        let (c, w) = PipelineConfig::resolve(PipelineFile {
            m_ref: Some(3),
            runs: Some(5),
            ..base()
        })
        .unwrap();
        assert_eq!(c.runs, 1);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("runs coerced"));
    }

    #[test]
    fn randomized_extractors_default_to_ten_runs() {
        let (c, w) = PipelineConfig::resolve(PipelineFile {
            m_ref: Some(3),
            algo: Some("vca".into()),
            ..base()
        })
        .unwrap();
        assert_eq!(c.runs, 10);
        assert!(w.is_empty());
    }

    #[test]
    fn flags_override_file() {
        let file: PipelineFile =
            serde_json::from_str(r#"{"dataset": "a.csv", "m_ref": 4, "alphas": [0.25], "seed": 3}"#).unwrap();
        let merged = file.overlay(PipelineFile {
            seed: Some(9),
            ..base()
        });
        let (c, _) = PipelineConfig::resolve(merged).unwrap();
        assert_eq!(c.dataset, PathBuf::from("scene.hdr"));
        assert_eq!(c.seed, 9);
        assert_eq!(c.alphas, vec![0.25]);
        assert_eq!(c.m_over, 8);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        for bad in [
            PipelineFile { m_ref: Some(4), m_over: Some(3), ..base() },
            PipelineFile { m_ref: Some(0), ..base() },
            PipelineFile { m_ref: Some(2), alphas: Some(vec![1.5]), ..base() },
            PipelineFile { name: Some("nowhere".into()), ..base() },
            PipelineFile { m_ref: Some(2), brute_k: Some(9), ..base() },
            PipelineFile { ..base() },
        ] {
            assert!(PipelineConfig::resolve(bad).is_err());
        }
        assert!(serde_json::from_str::<PipelineFile>(r#"{"bogus": 1}"#).is_err());
    }
}
