//! Scenario files: parsing, validation and resolution of defaults.

use std::fs;
use std::path::{Path, PathBuf};

use lyap_core::linalg::Vector;
use lyap_core::model::{parse_system_spec_in, CoefficientSequence};
use lyap_core::spectrum::TailRule;
use lyap_core::splitness::ScanOptions;
use lyap_core::synth::ExperimentOptions;
use lyap_core::tolerances::{default_gamma_grid, INCOMPRESSIBILITY_TRIALS, REALIZE_TOL, RHO_THRESHOLD, SYNTH_R, TAIL_FRACTION};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: Option<String>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub system: SystemRef,
    #[serde(default)]
    pub fss: FssBlock,
    #[serde(default)]
    pub scan: ScanBlock,
    #[serde(default)]
    pub synth: SynthBlock,
    pub perturb: Option<PerturbBlock>,
    pub assign: Option<AssignBlock>,
    pub instability: Option<InstabilityBlock>,
    pub sinln: Option<SinLnBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Inline spec text or a path relative to the scenario file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemRef {
    pub spec: Option<String>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FssBlock {
    /// Initial vectors; the standard basis when absent.
    pub initial: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub sigma: Option<usize>,
    pub gamma_grid: Option<Vec<f64>>,
    pub tail_fraction: Option<f64>,
    pub realize_tol: Option<f64>,
    pub rho_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthBlock {
    pub r: Option<f64>,
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbBlock {
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignBlock {
    pub target: Vec<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstabilityBlock {
    pub epsilon: Vec<f64>,
    pub reference_spectrum: Option<Vec<f64>>,
    pub spectrum_horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinLnBlock {
    pub max_n: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Every parameter with defaults filled in; echoed into each report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub schema_version: u32,
    pub name: String,
    pub horizon: usize,
    pub seed: u64,
    pub system: SystemRef,
    pub system_kind: String,
    pub dimension: usize,
    pub initial: Vec<Vec<f64>>,
    pub scan: ScanOptions,
    pub r: f64,
    pub trials: usize,
    pub perturb: Option<PerturbBlock>,
    pub assign: Option<AssignBlock>,
    pub instability: Option<InstabilityBlock>,
    pub sinln: Option<SinLnBlock>,
    /// Where reports go; not part of the computation, so not echoed.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    pub format: Format,
}

pub struct Scenario {
    pub params: Resolved,
    pub sequence: CoefficientSequence,
}

impl Resolved {
    pub fn initial_vectors(&self) -> Vec<Vector> {
        self.initial.iter().map(|v| Vector::from_column_slice(v)).collect()
    }

    pub fn experiment_options(&self) -> ExperimentOptions {
        ExperimentOptions {
            scan: self.scan.clone(),
            r: self.r,
            trials: self.trials,
            seed: self.seed,
            spectrum_horizon: self.instability.as_ref().and_then(|b| b.spectrum_horizon),
            reference_spectrum: self.instability.as_ref().and_then(|b| b.reference_spectrum.clone()),
            ..ExperimentOptions::default()
        }
    }
}

fn config_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

pub fn load(path: &Path, over: &Overrides) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(path, e))?;
    let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| config_err(path, e))?;
    resolve(cfg, path.parent().unwrap_or(Path::new(".")), path, over)
}

pub fn resolve(cfg: ScenarioConfig, base: &Path, path: &Path, over: &Overrides) -> Result<Scenario, CliError> {
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(config_err(
            path,
            format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version),
        ));
    }
    let (text, spec_base) = match (&cfg.system.spec, &cfg.system.file) {
        (Some(t), None) => (t.clone(), base.to_path_buf()),
        (None, Some(f)) => {
            let full = base.join(f);
            let t = fs::read_to_string(&full).map_err(|e| config_err(&full, e))?;
            (t, full.parent().unwrap_or(base).to_path_buf())
        }
        _ => return Err(config_err(path, "[system] needs exactly one of `spec` or `file`")),
    };
    let spec = parse_system_spec_in(&text, Some(&spec_base)).map_err(|e| config_err(path, format!("system: {e}")))?;
    let sequence = spec.sequence;
    let s = lyap_core::model::MatrixSequence::dim(&sequence);

    let horizon = over
        .horizon
        .or(cfg.horizon)
        .or(spec.horizon)
        .ok_or_else(|| config_err(path, "no horizon given (config, system spec or --horizon)"))?;
    if horizon < 2 {
        return Err(config_err(path, format!("horizon must be at least 2, got {horizon}")));
    }

    let initial = match cfg.fss.initial {
        Some(v) => {
            if v.len() != s || v.iter().any(|x| x.len() != s) {
                return Err(config_err(path, format!("[fss] initial needs {s} vectors of length {s}")));
            }
            v
        }
        None => (0..s).map(|i| (0..s).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
    };

    let rule = TailRule {
        tail_fraction: cfg.scan.tail_fraction.unwrap_or(TAIL_FRACTION),
        realize_tol: cfg.scan.realize_tol.unwrap_or(REALIZE_TOL),
    };
    let scan = ScanOptions {
        gamma_grid: cfg.scan.gamma_grid.unwrap_or_else(default_gamma_grid),
        sigma: cfg.scan.sigma.unwrap_or(1),
        rule,
        rho_threshold: cfg.scan.rho_threshold.unwrap_or(RHO_THRESHOLD),
    };
    if scan.sigma == 0 {
        return Err(config_err(path, "[scan] sigma must be at least 1"));
    }
    if !(rule.tail_fraction > 0.0 && rule.tail_fraction <= 1.0) {
        return Err(config_err(path, "[scan] tail_fraction must lie in (0, 1]"));
    }
    for (what, len) in [
        ("[perturb] xi", cfg.perturb.as_ref().map(|b| b.xi.len())),
        ("[assign] target", cfg.assign.as_ref().map(|b| b.target.len())),
    ] {
        if let Some(len) = len {
            if len != s {
                return Err(config_err(path, format!("{what} needs {s} entries, got {len}")));
            }
        }
    }

    let params = Resolved {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.unwrap_or_else(|| {
            path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into())
        }),
        horizon,
        seed: over.seed.or(cfg.seed).unwrap_or(0),
        system: cfg.system,
        system_kind: sequence.kind_name().to_string(),
        dimension: s,
        initial,
        scan,
        r: cfg.synth.r.unwrap_or(SYNTH_R),
        trials: cfg.synth.trials.unwrap_or(INCOMPRESSIBILITY_TRIALS),
        perturb: cfg.perturb,
        assign: cfg.assign,
        instability: cfg.instability,
        sinln: cfg.sinln,
        out_dir: over.out_dir.clone().or(cfg.output.dir.map(|d| base.join(d))),
        format: over.format.or(cfg.output.format).unwrap_or(Format::Json),
    };
    Ok(Scenario { params, sequence })
}
