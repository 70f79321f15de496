use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use osctrack::controller::ControllerParams;
use osctrack::curves::{curve_by_name, CurveRef, ExpressionCurve};
use osctrack::scenarios::scenario_by_name;
use osctrack::Scenario64;
use serde::{Deserialize, Serialize};

/// Default output directory when neither a flag nor the config file sets one.
pub const OUT_DIR_ENV: &str = "OSCTRACK_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSpec {
    Name(String),
    /// One closed-form expression in `t` per state component.
    Expr(Vec<String>),
}

impl CurveSpec {
    pub fn label(&self) -> String {
        match self {
            CurveSpec::Name(n) => n.clone(),
            CurveSpec::Expr(_) => "expr".into(),
        }
    }

    pub fn build(&self, horizon: f64) -> osctrack::Result<CurveRef<f64>> {
        match self {
            CurveSpec::Name(n) => curve_by_name(n, horizon),
            CurveSpec::Expr(parts) => {
                Ok(std::sync::Arc::new(ExpressionCurve::parse(parts, horizon)?))
            }
        }
    }
}

/// Fully resolved run settings, echoed into the metadata file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: String,
    pub curve: CurveSpec,
    pub alpha: f64,
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub substeps: usize,
    pub rho: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Config file contents; every field is optional and flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<String>,
    pub curve: Option<CurveSpec>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub substeps: Option<usize>,
    pub rho: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub alphas: Option<Vec<f64>>,
    pub epsilons: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file mirroring the run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<String>,
    /// Built-in curve name (see `list-curves`).
    #[arg(long, conflicts_with = "expr")]
    pub curve: Option<String>,
    /// Curve component as an expression in `t`; repeat once per state component.
    #[arg(long, allow_hyphen_values = true)]
    pub expr: Vec<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub horizon: Option<f64>,
    /// RK4 steps per sampling interval.
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Tube radius used in the reports.
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: $OSCTRACK_OUT_DIR, else the working directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const DEFAULT_RHO: f64 = 0.5;
pub const DEFAULT_SEED: u64 = 0;

impl RunArgs {
    pub fn file(&self) -> anyhow::Result<FileConfig> {
        match &self.config {
            Some(p) => FileConfig::load(p),
            None => Ok(FileConfig::default()),
        }
    }

    /// Merges defaults, the config file and flags, then validates.
    pub fn resolve(&self, file: &FileConfig) -> anyhow::Result<(RunConfig, Scenario64)> {
        let name = self
            .scenario
            .clone()
            .or_else(|| file.scenario.clone())
            .unwrap_or_else(|| "unicycle".into());
        let scenario = scenario_by_name::<f64>(&name)?;
        let curve = if !self.expr.is_empty() {
            CurveSpec::Expr(self.expr.clone())
        } else if let Some(c) = &self.curve {
            CurveSpec::Name(c.clone())
        } else {
            file.curve
                .clone()
                .unwrap_or_else(|| CurveSpec::Name(scenario.default_curve.clone()))
        };
        let alpha = self
            .alpha
            .or(file.alpha)
            .unwrap_or(scenario.default_params.alpha);
        let epsilon = self
            .epsilon
            .or(file.epsilon)
            .unwrap_or(scenario.default_params.epsilon);
        let out_dir = self
            .out
            .clone()
            .or_else(|| file.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let cfg = RunConfig {
            scenario: name,
            curve,
            alpha,
            epsilon,
            x0: self
                .x0
                .clone()
                .or_else(|| file.x0.clone())
                .unwrap_or_else(|| scenario.default_x0.clone()),
            horizon: self.horizon.or(file.horizon).unwrap_or(scenario.horizon),
            substeps: self
                .substeps
                .or(file.substeps)
                .unwrap_or_else(|| scenario.substeps()),
            rho: self.rho.or(file.rho).unwrap_or(DEFAULT_RHO),
            seed: self.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            out_dir,
        };
        cfg.validate(&scenario)?;
        Ok((cfg, scenario))
    }
}

impl RunConfig {
    pub fn params(&self) -> osctrack::Result<ControllerParams<f64>> {
        ControllerParams::new(self.alpha, self.epsilon)
    }

    pub fn validate(&self, scenario: &Scenario64) -> anyhow::Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("epsilon", self.epsilon),
            ("rho", self.rho),
            ("horizon", self.horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive and finite, got {v}");
            }
        }
        if self.substeps == 0 {
            bail!("substeps must be at least 1");
        }
        let n = scenario.system.n();
        if self.x0.len() != n {
            bail!(
                "x0 has {} components but scenario {} has state dimension {n}",
                self.x0.len(),
                self.scenario
            );
        }
        if !self.x0.iter().all(|v| v.is_finite()) || !scenario.system.contains(&self.x0) {
            bail!(
                "x0 = {:?} lies outside the domain of scenario {}",
                self.x0,
                self.scenario
            );
        }
        if let CurveSpec::Expr(parts) = &self.curve {
            if parts.len() != n {
                bail!(
                    "curve has {} components but scenario {} has state dimension {n}",
                    parts.len(),
                    self.scenario
                );
            }
        }
        Ok(())
    }

    /// File stem shared by all outputs of this run.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.scenario, self.curve.label())
    }
}
