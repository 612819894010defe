use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use proxyrecon::dataset::AnalysisWindow;
use proxyrecon::harness::Scoring;
use proxyrecon::modelzoo::ModelSpec;

use crate::error::CliError;

/// Everything a run needs. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub synthetic: SyntheticSection,
    pub windows: WindowSection,
    pub harness: HarnessSection,
    pub null_bench: NullBenchSection,
    pub bayes: BayesSection,
    pub events: EventSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    /// 0 = one worker per core.
    pub workers: usize,
}

/// Input files. With no `temperature` and `proxies`, a synthetic world is
/// generated from `[synthetic]` instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub temperature: Option<PathBuf>,
    /// Column of the temperature file; the first one when unset.
    pub temperature_column: Option<String>,
    pub proxies: Option<PathBuf>,
    pub local: Option<PathBuf>,
    /// `wide` or `long`, for every file.
    pub format: Option<String>,
    /// Proxies left out of the instrumental-era set.
    pub exclude: Vec<String>,
    /// Proxies left out of the reconstruction-era set.
    pub exclude_reconstruction: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub first_year: i32,
    pub last_year: i32,
    pub n_proxies: usize,
    pub n_local: usize,
    pub signal: f64,
    pub proxy_ar: f64,
    pub temp_ar: f64,
    /// Years after this one are not observed.
    pub observed_until: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub instrumental: String,
    pub reconstruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    pub block_len: usize,
    pub scoring: String,
    pub models: Vec<String>,
    /// Pseudo-proxy classes for envelopes and null comparisons.
    pub nulls: Vec<String>,
    /// Model refit on pseudo-proxies for envelopes and p-values.
    pub null_model: String,
    /// Pseudo-proxy draws per block for the envelope; 0 skips it.
    pub envelope_reps: usize,
    pub envelope_level: f64,
    pub cv_reps: usize,
    pub cv_folds: usize,
    pub cv_grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NullBenchSection {
    /// Series pairs per kind in the spurious-correlation experiment.
    pub pairs: usize,
    /// Pseudo-proxy refits behind each outperformance p-value; 0 skips them.
    pub pvalue_reps: usize,
    /// Run the augmentation test for each null class.
    pub augmentation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesSection {
    pub n_pcs: usize,
    pub prior_beta_var: f64,
    pub sigma_upper: f64,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub chains: usize,
    pub band_level: f64,
    pub validate_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSection {
    pub record_year: i32,
    pub decade: String,
    pub trailing_years: usize,
    pub runup_lags: Vec<usize>,
    pub loess_span: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run: RunSection::default(),
            data: DataSection::default(),
            synthetic: SyntheticSection::default(),
            windows: WindowSection::default(),
            harness: HarnessSection::default(),
            null_bench: NullBenchSection::default(),
            bayes: BayesSection::default(),
            events: EventSection::default(),
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            workers: 0,
        }
    }
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            first_year: 998,
            last_year: 2006,
            n_proxies: 20,
            n_local: 20,
            signal: 0.5,
            proxy_ar: 0.4,
            temp_ar: 0.6,
            observed_until: 2006,
        }
    }
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            instrumental: "1850-1998".into(),
            reconstruction: "998-1849".into(),
        }
    }
}

impl Default for HarnessSection {
    fn default() -> Self {
        Self {
            block_len: 30,
            scoring: "full".into(),
            models: vec!["intercept".into(), "lasso_proxies".into()],
            nulls: vec!["white".into()],
            null_model: "lasso_proxies".into(),
            envelope_reps: 0,
            envelope_level: 0.95,
            cv_reps: 10,
            cv_folds: 5,
            cv_grid: 100,
        }
    }
}

impl Default for NullBenchSection {
    fn default() -> Self {
        Self {
            pairs: 1000,
            pvalue_reps: 0,
            augmentation: false,
        }
    }
}

impl Default for BayesSection {
    fn default() -> Self {
        Self {
            n_pcs: 10,
            prior_beta_var: 1000.0,
            sigma_upper: 100.0,
            iters: 5000,
            burnin: 1000,
            thin: 2,
            chains: 4,
            band_level: 0.95,
            validate_reps: 1000,
        }
    }
}

impl Default for EventSection {
    fn default() -> Self {
        Self {
            record_year: 1998,
            decade: "1997-2006".into(),
            trailing_years: 30,
            runup_lags: vec![10, 30, 60],
            loess_span: 0.33,
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub window: Option<String>,
    pub block_len: Option<usize>,
    pub scoring: Option<String>,
    pub nulls: Vec<String>,
    pub reps: Option<usize>,
}

impl RunConfig {
    /// Reads `path`, resolving relative data paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.temperature, &mut cfg.data.proxies, &mut cfg.data.local]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if let Ok(abs) = std::path::absolute(&*p) {
                *p = abs;
            }
        }
        Ok(cfg)
    }

    /// `--reps` sets whichever replicate count the subcommand uses.
    pub fn apply(&mut self, o: &Overrides, command: &str) {
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(p) = &o.out {
            self.run.out = p.clone();
        }
        if let Some(w) = o.workers {
            self.run.workers = w;
        }
        if let Some(w) = &o.window {
            self.windows.instrumental = w.clone();
        }
        if let Some(b) = o.block_len {
            self.harness.block_len = b;
        }
        if let Some(s) = &o.scoring {
            self.harness.scoring = s.clone();
        }
        if !o.nulls.is_empty() {
            self.harness.nulls = o.nulls.clone();
        }
        if let Some(r) = o.reps {
            match command {
                "cv" => self.harness.envelope_reps = r,
                "null-bench" => self.null_bench.pairs = r,
                "bayes-validate" => self.bayes.validate_reps = r,
                _ => {}
            }
        }
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.instrumental()?;
        self.reconstruction()?;
        self.decade()?;
        self.scoring()?;
        self.models()?;
        for n in &self.harness.nulls {
            crate::data::NullKind::parse(n)?;
        }
        self.null_model()?;
        if self.harness.block_len == 0 {
            return bad("block_len must be at least 1".into());
        }
        match self.data.format.as_deref() {
            None | Some("wide") | Some("long") => {}
            Some(f) => return bad(format!("unknown table format {f:?}")),
        }
        let files = [&self.data.temperature, &self.data.proxies, &self.data.local];
        for p in files.into_iter().flatten() {
            if !p.exists() {
                return bad(format!("data file {} does not exist", p.display()));
            }
        }
        if self.data.temperature.is_some() != self.data.proxies.is_some() {
            return bad("give both data.temperature and data.proxies, or neither".into());
        }
        if self.uses_synthetic() {
            let s = &self.synthetic;
            if s.last_year <= s.first_year || s.n_proxies == 0 {
                return bad("synthetic world needs last_year > first_year and n_proxies >= 1".into());
            }
        }
        if self.harness.cv_reps == 0 || self.harness.cv_folds < 2 || self.harness.cv_grid < 2 {
            return bad("cv_reps >= 1, cv_folds >= 2 and cv_grid >= 2 required".into());
        }
        Ok(())
    }

    pub fn uses_synthetic(&self) -> bool {
        self.data.temperature.is_none()
    }

    pub fn instrumental(&self) -> Result<AnalysisWindow, CliError> {
        AnalysisWindow::parse(&self.windows.instrumental).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn reconstruction(&self) -> Result<AnalysisWindow, CliError> {
        AnalysisWindow::parse(&self.windows.reconstruction).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn decade(&self) -> Result<AnalysisWindow, CliError> {
        AnalysisWindow::parse(&self.events.decade).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn scoring(&self) -> Result<Scoring, CliError> {
        self.harness.scoring.parse().map_err(|e: proxyrecon::ReconError| CliError::Config(e.to_string()))
    }

    pub fn null_model(&self) -> Result<ModelSpec, CliError> {
        self.harness.null_model.parse().map_err(|e: proxyrecon::ReconError| CliError::Config(e.to_string()))
    }

    pub fn models(&self) -> Result<Vec<ModelSpec>, CliError> {
        self.harness
            .models
            .iter()
            .map(|m| m.parse().map_err(|e: proxyrecon::ReconError| CliError::Config(e.to_string())))
            .collect()
    }
}
