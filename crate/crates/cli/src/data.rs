use proxyrecon::dataset::{
    align, drop_named, load_series, load_table, standardize, AnalysisWindow, MissingPolicy, ProxyMatrix,
    SyntheticWorldConfig, TableFormat, TimeSeries,
};
use proxyrecon::modelzoo::ZooData;
use proxyrecon::nullmodels::{ar1_coefficient, PseudoProxyClass, PseudoSource};

use crate::config::RunConfig;
use crate::error::CliError;

/// Temperature record, raw proxies and optional local temperatures, before
/// any windowing.
pub struct Inputs {
    pub temperature: TimeSeries,
    pub proxies: ProxyMatrix,
    pub local: Option<ProxyMatrix>,
    pub synthetic: bool,
}

/// A model-ready view over one window plus what was removed to get there.
pub struct Prepared<T> {
    pub value: T,
    pub dropped_incomplete: Vec<String>,
    pub excluded: Vec<String>,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        if cfg.uses_synthetic() {
            return Self::synthetic(cfg);
        }
        let format: TableFormat = cfg.data.format.as_deref().unwrap_or("wide").parse()?;
        let temperature = load_series(
            cfg.data.temperature.as_ref().unwrap(),
            format,
            cfg.data.temperature_column.as_deref(),
        )?;
        let proxies = load_table(cfg.data.proxies.as_ref().unwrap(), format)?;
        let local = cfg.data.local.as_ref().map(|p| load_table(p, format)).transpose()?;
        Ok(Self {
            temperature,
            proxies,
            local,
            synthetic: false,
        })
    }

    /// Generated world; temperature is only observed from the start of the
    /// instrumental window to `observed_until`.
    fn synthetic(cfg: &RunConfig) -> Result<Self, CliError> {
        let s = &cfg.synthetic;
        let world = SyntheticWorldConfig {
            n_years: (s.last_year - s.first_year + 1) as usize,
            n_proxies: s.n_proxies,
            signal: s.signal,
            proxy_ar: s.proxy_ar,
            temp_ar: s.temp_ar,
            start_year: s.first_year,
            n_local: s.n_local,
            ..Default::default()
        }
        .generate(proxyrecon::rng::derive_seed(cfg.run.seed, &[0xda7a]))?;
        let inst = cfg.instrumental()?;
        let observed = AnalysisWindow::new(inst.first_year, s.observed_until.min(s.last_year))?;
        Ok(Self {
            temperature: world.temperature.window(&observed)?,
            proxies: world.proxies,
            local: world.local,
            synthetic: true,
        })
    }

    /// Proxies complete over `window`, exclusions removed, standardized there.
    fn proxy_view(&self, window: &AnalysisWindow, exclude: &[String]) -> Result<Prepared<ProxyMatrix>, CliError> {
        let aligned = align(&self.proxies, window, MissingPolicy::DropIncompleteColumns)?;
        let present: Vec<&String> = exclude
            .iter()
            .filter(|n| aligned.matrix.names().contains(n))
            .collect();
        for n in exclude.iter().filter(|n| !present.contains(n)) {
            if !self.proxies.names().contains(n) {
                log::warn!("excluded proxy {n} is not in the proxy table");
            }
        }
        let kept = drop_named(&aligned.matrix, &present)?;
        if kept.n_cols() == 0 {
            return Err(CliError::Data(format!("no complete proxies left over {window}")));
        }
        Ok(Prepared {
            value: standardize(&kept, window)?,
            dropped_incomplete: aligned.dropped,
            excluded: present.into_iter().cloned().collect(),
        })
    }

    /// Proxies used against the instrumental record.
    pub fn instrumental_proxies(&self, cfg: &RunConfig) -> Result<Prepared<ProxyMatrix>, CliError> {
        self.proxy_view(&cfg.instrumental()?, &cfg.data.exclude)
    }

    /// Proxies covering the reconstruction window through the end of the
    /// instrumental window.
    pub fn reconstruction_proxies(&self, cfg: &RunConfig) -> Result<Prepared<ProxyMatrix>, CliError> {
        self.proxy_view(&self.reconstruction_span(cfg)?, &cfg.data.exclude_reconstruction)
    }

    pub fn reconstruction_span(&self, cfg: &RunConfig) -> Result<AnalysisWindow, CliError> {
        let (r, i) = (cfg.reconstruction()?, cfg.instrumental()?);
        if r.last_year >= i.first_year {
            return Err(CliError::Config(format!(
                "reconstruction window {r} must end before the instrumental window {i}"
            )));
        }
        Ok(AnalysisWindow::new(r.first_year, i.last_year)?)
    }

    pub fn response(&self, cfg: &RunConfig) -> Result<TimeSeries, CliError> {
        Ok(self.temperature.window(&cfg.instrumental()?)?)
    }

    /// Local temperatures over the instrumental window, standardized there.
    fn local_view(&self, cfg: &RunConfig) -> Result<Option<ProxyMatrix>, CliError> {
        let w = cfg.instrumental()?;
        self.local
            .as_ref()
            .map(|z| Ok(standardize(&align(z, &w, MissingPolicy::RejectMissing)?.matrix, &w)?))
            .transpose()
    }

    pub fn instrumental_zoo(&self, cfg: &RunConfig) -> Result<Prepared<ZooData>, CliError> {
        let p = self.instrumental_proxies(cfg)?;
        let local = self.local_view(cfg)?;
        Ok(Prepared {
            value: ZooData::new(self.response(cfg)?, p.value, local.as_ref())?,
            dropped_incomplete: p.dropped_incomplete,
            excluded: p.excluded,
        })
    }

    /// Response over the instrumental window with proxies reaching back
    /// through the reconstruction window.
    pub fn reconstruction_zoo(&self, cfg: &RunConfig) -> Result<Prepared<ZooData>, CliError> {
        let p = self.reconstruction_proxies(cfg)?;
        let local = self.local_view(cfg)?;
        Ok(Prepared {
            value: ZooData::new(self.response(cfg)?, p.value, local.as_ref())?,
            dropped_incomplete: p.dropped_incomplete,
            excluded: p.excluded,
        })
    }
}

/// Pseudo-proxy class named on the command line or in the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullKind {
    White,
    Ar1(f64),
    Empirical,
    Brownian,
}

impl NullKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("unknown null class {s:?}; expected white, ar1_<phi>, empirical or brownian"));
        Ok(match s {
            "white" => NullKind::White,
            "empirical" => NullKind::Empirical,
            "brownian" => NullKind::Brownian,
            _ => {
                let phi: f64 = s.strip_prefix("ar1_").ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if !(0.0..1.0).contains(&phi) {
                    return Err(CliError::Config(format!("AR1 coefficient {phi} not in [0, 1)")));
                }
                NullKind::Ar1(phi)
            }
        })
    }

    /// Concrete class; the empirical one takes each proxy's lag-one
    /// autocorrelation.
    pub fn resolve(self, proxies: &ProxyMatrix) -> Result<PseudoProxyClass, CliError> {
        Ok(match self {
            NullKind::White => PseudoProxyClass::WhiteNoise,
            NullKind::Ar1(phi) => PseudoProxyClass::Ar1 { phi },
            NullKind::Brownian => PseudoProxyClass::BrownianMotion,
            NullKind::Empirical => PseudoProxyClass::EmpiricalAr1 {
                phis: (0..proxies.n_cols())
                    .map(|j| ar1_coefficient(&proxies.column(j).dense()?))
                    .collect::<proxyrecon::Result<_>>()?,
            },
        })
    }
}

pub fn resolve_nulls(cfg: &RunConfig, proxies: &ProxyMatrix) -> Result<Vec<PseudoProxyClass>, CliError> {
    cfg.harness
        .nulls
        .iter()
        .map(|n| NullKind::parse(n)?.resolve(proxies))
        .collect()
}

/// Hands back the real proxies in place of a pseudo draw, so the null
/// machinery scores the actual model on exactly the same split.
pub struct RealProxies(pub ProxyMatrix);

impl PseudoSource for RealProxies {
    fn generate(&self, start_year: i32, n_years: usize, _n_series: usize, _seed: u64) -> proxyrecon::Result<ProxyMatrix> {
        let w = AnalysisWindow::new(start_year, start_year + n_years as i32 - 1)?;
        self.0.window(&w)
    }
}
