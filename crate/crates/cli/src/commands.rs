use serde::Serialize;
use serde_json::{json, Value};

use proxyrecon::bayes::{
    backcast_mean, backcast_paths, credible_bands, event_probabilities, gibbs_sample, holdout_validate, Anchors,
    BayesConfig, BayesDesign, Direction, EventConfig, PathEnsemble, PathMode, PcTable, PosteriorDraws,
    ValidationBlock,
};
use proxyrecon::dataset::{write_series, write_table, TableFormat, TimeSeries};
use proxyrecon::harness::{
    compare, outperformance_pvalue, pseudo_block_rmses, pseudo_envelope, run_block_cv, BlockScheme, HoldoutResult,
};
use proxyrecon::lasso::CvConfig;
use proxyrecon::modelzoo::{augmentation_test, ensemble_specs, fit_ensemble, ZooData, ZooOptions};
use proxyrecon::nullmodels::{spurious_corr_experiment, PairKind};
use proxyrecon::numerics::{mean, median, quantile};
use proxyrecon::rng::derive_seed;

use crate::config::RunConfig;
use crate::data::{resolve_nulls, Inputs, RealProxies};
use crate::error::CliError;
use crate::output::{num, opt_num, Outputs};
use crate::svg::{box_plot, histogram, line_plot, Band, Series};

type Res = Result<(), CliError>;

/// Artifacts `report` collates, with the subcommand that writes each.
pub const REPORT_INPUTS: [(&str, &str); 8] = [
    ("ingest.json", "ingest"),
    ("cv_summary.json", "cv"),
    ("null_bench.json", "null-bench"),
    ("zoo_backcast.json", "zoo-backcast"),
    ("bayes_fit.json", "bayes-fit"),
    ("bayes_backcast.json", "bayes-backcast"),
    ("bayes_validate.json", "bayes-validate"),
    ("events.json", "events"),
];

fn zoo_options(cfg: &RunConfig) -> ZooOptions {
    ZooOptions {
        cv: CvConfig {
            reps: cfg.harness.cv_reps,
            folds: cfg.harness.cv_folds,
            grid_size: cfg.harness.cv_grid,
            ..CvConfig::default()
        },
        ..ZooOptions::default()
    }
}

fn scheme_for(cfg: &RunConfig, data: &ZooData) -> Result<BlockScheme, CliError> {
    Ok(BlockScheme::new(cfg.harness.block_len, cfg.scoring()?, data.window().len())?)
}

fn years_of(s: &TimeSeries) -> impl Iterator<Item = i32> {
    s.start_year()..=s.end_year()
}

fn series_points(s: &TimeSeries) -> Vec<(f64, f64)> {
    years_of(s)
        .zip(s.values())
        .filter_map(|(t, v)| v.map(|v| (t as f64, v)))
        .collect()
}

#[derive(Serialize)]
struct ViewSummary {
    window: String,
    proxies_kept: usize,
    dropped_incomplete: Vec<String>,
    excluded: Vec<String>,
}

pub fn ingest(cfg: &RunConfig, out: &mut Outputs) -> Res {
    let inputs = Inputs::load(cfg)?;
    let inst = inputs.instrumental_proxies(cfg)?;
    let recon = inputs.reconstruction_proxies(cfg)?;
    let y = inputs.response(cfg)?;
    if y.has_missing() {
        return Err(CliError::Data(format!("temperature has gaps inside {}", cfg.instrumental()?)));
    }
    write_series(&out.path("ingest_temperature.csv"), "temperature", &inputs.temperature)?;
    write_table(&out.path("ingest_instrumental_proxies.csv"), &inst.value, TableFormat::Wide)?;
    write_table(&out.path("ingest_reconstruction_proxies.csv"), &recon.value, TableFormat::Wide)?;
    let summary = json!({
        "synthetic": inputs.synthetic,
        "temperature_span": inputs.temperature.span().to_string(),
        "temperature_missing": inputs.temperature.values().iter().filter(|v| v.is_none()).count(),
        "proxies_total": inputs.proxies.n_cols(),
        "proxy_span": inputs.proxies.span().to_string(),
        "local_series": inputs.local.as_ref().map_or(0, |z| z.n_cols()),
        "instrumental": ViewSummary {
            window: cfg.instrumental()?.to_string(),
            proxies_kept: inst.value.n_cols(),
            dropped_incomplete: inst.dropped_incomplete,
            excluded: inst.excluded,
        },
        "reconstruction": ViewSummary {
            window: inputs.reconstruction_span(cfg)?.to_string(),
            proxies_kept: recon.value.n_cols(),
            dropped_incomplete: recon.dropped_incomplete,
            excluded: recon.excluded,
        },
    });
    out.json("ingest.json", &summary)
}

/// Writes the generated world as CSV files that `[data]` can point at.
pub fn synth(cfg: &RunConfig, out: &mut Outputs) -> Res {
    let mut c = cfg.clone();
    c.data = Default::default();
    let inputs = Inputs::load(&c)?;
    write_series(&out.path("temperature.csv"), "temperature", &inputs.temperature)?;
    write_table(&out.path("proxies.csv"), &inputs.proxies, TableFormat::Wide)?;
    if let Some(z) = &inputs.local {
        write_table(&out.path("local.csv"), z, TableFormat::Wide)?;
    }
    Ok(())
}

pub fn cv(cfg: &RunConfig, out: &mut Outputs) -> Res {
    let inputs = Inputs::load(cfg)?;
    let data = inputs.instrumental_zoo(cfg)?.value;
    let scheme = scheme_for(cfg, &data)?;
    let opts = zoo_options(cfg);
    let seed = cfg.run.seed;
    let results: Vec<HoldoutResult> = cfg
        .models()?
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            log::info!("cv: {m} over {} blocks", scheme.n_blocks());
            run_block_cv(m, &data, &scheme, derive_seed(seed, &[1, i as u64]), &opts)
        })
        .collect::<Result<_, _>>()?;

    out.csv(
        "cv_blocks.csv",
        &["spec", "block_start", "rmse"],
        results.iter().flat_map(|r| {
            r.per_block
                .iter()
                .map(move |b| vec![r.spec.to_string(), b.block_start_year.to_string(), opt_num(b.rmse)])
        }),
    )?;

    let mut envelopes = Vec::new();
    if cfg.harness.envelope_reps > 0 {
        let spec = cfg.null_model()?;
        for (k, class) in resolve_nulls(cfg, data.proxies())?.into_iter().enumerate() {
            log::info!("cv: {} envelope, {} reps per block", class.label(), cfg.harness.envelope_reps);
            let rows = pseudo_envelope(
                spec,
                &class,
                &data,
                &scheme,
                cfg.harness.envelope_reps,
                cfg.harness.envelope_level,
                derive_seed(seed, &[2, k as u64]),
                &opts,
            )?;
            envelopes.push((class.label(), rows));
        }
        out.csv(
            "cv_envelope.csv",
            &["null", "block_start", "mean", "lo", "hi"],
            envelopes.iter().flat_map(|(label, rows)| {
                rows.iter().map(move |r| {
                    vec![label.clone(), r.block_start_year.to_string(), num(r.mean), num(r.lo), num(r.hi)]
                })
            }),
        )?;
    }

    let models: Vec<Value> = results
        .iter()
        .map(|r| {
            let v = r.rmses();
            json!({
                "spec": r.spec.to_string(),
                "blocks": r.per_block.len(),
                "failed": r.n_failed(),
                "mean_rmse": (!v.is_empty()).then(|| mean(&v)),
                "median_rmse": (!v.is_empty()).then(|| median(&v)),
            })
        })
        .collect();
    let mut comparisons = Vec::new();
    for (i, a) in results.iter().enumerate() {
        for b in &results[i + 1..] {
            comparisons.push(json!({"a": a.spec.to_string(), "b": b.spec.to_string(), "result": compare(a, b)?}));
        }
    }
    let env_summary: Vec<Value> = envelopes
        .iter()
        .map(|(label, rows)| {
            let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
            json!({"null": label, "model": cfg.harness.null_model, "median_of_means": median(&means)})
        })
        .collect();
    out.json(
        "cv_summary.json",
        &json!({
            "window": data.window().to_string(),
            "scheme": scheme,
            "models": models,
            "comparisons": comparisons,
            "envelopes": env_summary,
        }),
    )?;

    let groups: Vec<(String, Vec<f64>)> = results.iter().map(|r| (r.spec.to_string(), r.rmses())).collect();
    out.text("cv_blocks.svg", &box_plot("Holdout RMSE by model", "block RMSE", &groups))?;
    let series: Vec<Series> = results
        .iter()
        .map(|r| Series {
            name: r.spec.to_string(),
            points: r
                .per_block
                .iter()
                .filter_map(|b| b.rmse.map(|v| (b.block_start_year as f64, v)))
                .collect(),
        })
        .collect();
    let bands: Vec<Band> = envelopes
        .iter()
        .map(|(label, rows)| Band {
            name: format!("{label} envelope"),
            x: rows.iter().map(|r| r.block_start_year as f64).collect(),
            lo: rows.iter().map(|r| r.lo).collect(),
            hi: rows.iter().map(|r| r.hi).collect(),
        })
        .collect();
    out.text(
        "cv_rmse_by_block.svg",
        &line_plot("Holdout RMSE by block", "first year of block", "RMSE", &series, &bands),
    )
}

pub fn null_bench(cfg: &RunConfig, out: &mut Outputs) -> Res {
    let seed = cfg.run.seed;
    let n = cfg.instrumental()?.len();
    let pairs = cfg.null_bench.pairs;
    let rw = spurious_corr_experiment(n, pairs, PairKind::RandomWalk, derive_seed(seed, &[20]))?;
    let wn = spurious_corr_experiment(n, pairs, PairKind::WhiteNoise, derive_seed(seed, &[21]))?;
    let sd = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
    };
    out.csv(
        "null_correlations.csv",
        &["kind", "r"],
        rw.iter()
            .map(|r| vec!["random_walk".to_string(), num(*r)])
            .chain(wn.iter().map(|r| vec!["white_noise".to_string(), num(*r)])),
    )?;
    out.text(
        "null_correlations.svg",
        &histogram(
            &format!("Correlations of independent series, n = {n}"),
            "sample correlation",
            &[("random walk".into(), rw.clone()), ("white noise".into(), wn.clone())],
            40,
        ),
    )?;

    let mut pvalues = Vec::new();
    let mut augmentation = Vec::new();
    if cfg.null_bench.pvalue_reps > 0 || cfg.null_bench.augmentation {
        let inputs = Inputs::load(cfg)?;
        let data = inputs.instrumental_zoo(cfg)?.value;
        let scheme = scheme_for(cfg, &data)?;
        let opts = zoo_options(cfg);
        let spec = cfg.null_model()?;
        let classes = resolve_nulls(cfg, data.proxies())?;
        if cfg.null_bench.pvalue_reps > 0 {
            let block = scheme.n_blocks() / 2;
            let real = RealProxies(data.proxies().clone());
            let model_rmse = pseudo_block_rmses(spec, &real, &data, &scheme, block, 1, derive_seed(seed, &[22]), &opts)?[0];
            for (k, class) in classes.iter().enumerate() {
                let p = outperformance_pvalue(
                    model_rmse,
                    spec,
                    class,
                    &data,
                    &scheme,
                    block,
                    cfg.null_bench.pvalue_reps,
                    derive_seed(seed, &[23, k as u64]),
                    &opts,
                )?;
                pvalues.push(json!({
                    "null": class.label(),
                    "block_start": data.window().first_year + block as i32,
                    "model_rmse": model_rmse,
                    "pvalue": p,
                }));
            }
        }
        if cfg.null_bench.augmentation {
            for (k, class) in classes.iter().enumerate() {
                let a = augmentation_test(&data, class, &scheme, &opts.cv, derive_seed(seed, &[24, k as u64]))?;
                augmentation.push(json!({
                    "null": class.label(),
                    "percent_pseudo": a.percent_pseudo,
                    "excluded_blocks": a.excluded_blocks,
                }));
            }
        }
    }
    out.json(
        "null_bench.json",
        &json!({
            "n": n,
            "pairs": pairs,
            "sd_random_walk": sd(&rw),
            "sd_white_noise": sd(&wn),
            "sd_ratio": sd(&rw) / sd(&wn),
            "white_noise_reference": 1.0 / ((n - 1) as f64).sqrt(),
            "outperformance": pvalues,
            "augmentation": augmentation,
        }),
    )
}

pub fn zoo_backcast(cfg: &RunConfig, out: &mut Outputs) -> Res {
    let inputs = Inputs::load(cfg)?;
    let data = inputs.reconstruction_zoo(cfg)?.value;
    let window = cfg.reconstruction()?;
    let specs = ensemble_specs(data.proxies().n_cols());
    let fits = fit_ensemble(&specs, &data, &cfg.instrumental()?, derive_seed(cfg.run.seed, &[3]), &zoo_options(cfg));
    let mut columns = Vec::new();
    let mut summary = Vec::new();
    for (spec, fit) in specs.iter().zip(fits) {
        let outcome = fit.and_then(|m| Ok((m.backcast(&data, &window)?, m.in_sample_rmse(&data)?, m.fallback)));
        match outcome {
            Ok((b, rmse, fallback)) => {
                let v = b.dense()?;
                summary.push(json!({
                    "spec": spec.to_string(),
                    "in_sample_rmse": rmse,
                    "fallback": fallback,
                    "backcast_mean": mean(&v),
                    "backcast_sd": (v.iter().map(|x| (x - mean(&v)).powi(2)).sum::<f64>() / v.len() as f64).sqrt(),
                }));
                columns.push((spec.to_string(), Some(v)));
            }
            Err(e) => {
                log::warn!("{spec}: {e}");
                summary.push(json!({"spec": spec.to_string(), "error": e.to_string()}));
                columns.push((spec.to_string(), None));
            }
        }
    }
    let mut header = vec!["year"];
    header.extend(columns.iter().map(|c| c.0.as_str()));
    let rows = window.years().enumerate().map(|(i, t)| {
        std::iter::once(t.to_string())
            .chain(columns.iter().map(|c| c.1.as_ref().map(|v| num(v[i])).unwrap_or_default()))
            .collect()
    });
    out.csv("zoo_backcast.csv", &header, rows)?;
    let ok: Vec<f64> = summary.iter().filter_map(|s| s["backcast_mean"].as_f64()).collect();
    out.json(
        "zoo_backcast.json",
        &json!({
            "window": window.to_string(),
            "trained_on": cfg.instrumental()?.to_string(),
            "proxies": data.proxies().n_cols(),
            "models": summary,
            "spread_of_means": ok.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ok.iter().copied().fold(f64::INFINITY, f64::min),
        }),
    )?;
    let series: Vec<Series> = columns
        .iter()
        .filter_map(|(name, v)| {
            v.as_ref().map(|v| Series {
                name: name.clone(),
                points: window.years().zip(v).map(|(t, x)| (t as f64, *x)).collect(),
            })
        })
        .collect();
    out.text(
        "zoo_backcast.svg",
        &line_plot("Backcasts of the model ensemble", "year", "temperature", &series, &[]),
    )
}

struct BayesFit {
    pcs: PcTable,
    draws: PosteriorDraws,
    n_proxies: usize,
    config: BayesConfig,
}

fn bayes_config(cfg: &RunConfig, seed: u64) -> BayesConfig {
    let b = &cfg.bayes;
    BayesConfig {
        n_pcs: b.n_pcs,
        prior_beta_var: b.prior_beta_var,
        sigma_upper: b.sigma_upper,
        iters: b.iters,
        burnin: b.burnin,
        thin: b.thin,
        chains: b.chains,
        seed,
    }
}

fn bayes_fit_inner(cfg: &RunConfig, inputs: &Inputs) -> Result<BayesFit, CliError> {
    let proxies = inputs.reconstruction_proxies(cfg)?.value;
    let config = bayes_config(cfg, derive_seed(cfg.run.seed, &[10]));
    config.validate()?;
    let pcs = PcTable::from_proxies(&proxies, config.n_pcs)?;
    let design = BayesDesign::new(&pcs, &inputs.temperature, &cfg.instrumental()?, config.n_pcs, Direction::Backward)?;
    let draws = gibbs_sample(&design, &config)?;
    if draws.diagnostics.flagged {
        log::warn!("split R-hat above 1.1 for at least one parameter");
    }
    Ok(BayesFit {
        pcs,
        draws,
        n_proxies: proxies.n_cols(),
        config,
    })
}

fn coef_names(n_pcs: usize) -> Vec<String> {
    let mut v = vec!["intercept".to_string()];
    v.extend((1..=n_pcs).map(|j| format!("pc{j}")));
    v.push("lag1".into());
    v.push("lag2".into());
    v
}

fn summarize(v: &[f64]) -> Value {
    let m = mean(v);
    json!({
        "mean": m,
        "sd": (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt(),
        "q025": quantile(v, 0.025),
        "q975": quantile(v, 0.975),
    })
}

pub fn bayes_fit(cfg: &RunConfig, out: &mut Outputs) -> Res {
    let inputs = Inputs::load(cfg)?;
    let fit = bayes_fit_inner(cfg, &inputs)?;
    let d = &fit.draws;
    let names = coef_names(d.n_pcs);
    let per_chain = d.len() / d.chains;
    let mut header: Vec<&str> = vec!["draw", "chain"];
    header.extend(names.iter().map(String::as_str));
    header.push("sigma");
    out.csv(
        "posterior_draws.csv",
        &header,
        (0..d.len()).map(|i| {
            let mut r = vec![i.to_string(), (i / per_chain).to_string()];
            r.extend(d.beta_row(i).into_iter().map(num));
            r.push(num(d.sigma[i]));
            r
        }),
    )?;
    let mut coefficients = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let col: Vec<f64> = d.beta.column(j).iter().copied().collect();
        let mut s = summarize(&col);
        s["name"] = json!(name);
        s["ess"] = json!(d.diagnostics.ess[j]);
        s["rhat"] = json!(d.diagnostics.rhat[j]);
        coefficients.push(s);
    }
    let mut sigma = summarize(&d.sigma);
    sigma["ess"] = json!(d.diagnostics.ess[names.len()]);
    sigma["rhat"] = json!(d.diagnostics.rhat[names.len()]);
    out.json(
        "bayes_fit.json",
        &json!({
            "train": cfg.instrumental()?.to_string(),
            "proxies": fit.n_proxies,
            "config": fit.config,
            "draws": d.len(),
            "coefficients": coefficients,
            "sigma": sigma,
            "rhat_flagged": d.diagnostics.flagged,
        }),
    )?;
    let trace: Vec<Series> = (0..d.chains)
        .map(|c| Series {
            name: format!("chain {}", c + 1),
            points: (0..per_chain).map(|i| (i as f64, d.sigma[c * per_chain + i])).collect(),
        })
        .collect();
    out.text("bayes_sigma_trace.svg", &line_plot("Trace of the residual sd", "retained draw", "sigma", &trace, &[]))
}

const MODES: [(&str, PathMode); 3] = [
    ("residual_only", PathMode::ResidualOnly),
    ("parameter_only", PathMode::ParameterOnly),
    ("full", PathMode::Full),
];

fn paths(cfg: &RunConfig, inputs: &Inputs, fit: &BayesFit, m: usize) -> Result<PathEnsemble, CliError> {
    let window = cfg.reconstruction()?;
    let anchors = Anchors::from_series(&inputs.temperature, &window, Direction::Backward)?;
    Ok(backcast_paths(&fit.draws, &fit.pcs, anchors, &window, MODES[m].1, derive_seed(cfg.run.seed, &[11, m as u64]))?)
}

pub fn bayes_backcast(cfg: &RunConfig, out: &mut Outputs) -> Res {
    let inputs = Inputs::load(cfg)?;
    let fit = bayes_fit_inner(cfg, &inputs)?;
    let window = cfg.reconstruction()?;
    let anchors = Anchors::from_series(&inputs.temperature, &window, Direction::Backward)?;
    let point = backcast_mean(&fit.draws, &fit.pcs, anchors, &window)?.dense()?;
    let level = cfg.bayes.band_level;
    let mut bands = Vec::new();
    let mut summary = Vec::new();
    for (m, (name, _)) in MODES.iter().enumerate() {
        let e = paths(cfg, &inputs, &fit, m)?;
        let b = credible_bands(&e, level)?;
        let widths: Vec<f64> = b.iter().map(|(lo, hi)| hi - lo).collect();
        summary.push(json!({"mode": name, "paths": e.n_paths(), "mean_width": mean(&widths)}));
        bands.push((*name, b));
    }
    let mut header = vec!["year".to_string(), "posterior_mean".to_string()];
    for (name, _) in &bands {
        header.push(format!("{name}_lo"));
        header.push(format!("{name}_hi"));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "bayes_backcast.csv",
        &header,
        window.years().enumerate().map(|(i, t)| {
            let mut r = vec![t.to_string(), num(point[i])];
            for (_, b) in &bands {
                r.push(num(b[i].0));
                r.push(num(b[i].1));
            }
            r
        }),
    )?;
    out.json(
        "bayes_backcast.json",
        &json!({
            "window": window.to_string(),
            "level": level,
            "posterior_mean_average": mean(&point),
            "modes": summary,
        }),
    )?;
    let xs: Vec<f64> = window.years().map(|t| t as f64).collect();
    let full = &bands[2].1;
    out.text(
        "bayes_backcast.svg",
        &line_plot(
            "Backcast with pathwise credible band",
            "year",
            "temperature",
            &[
                Series {
                    name: "posterior mean".into(),
                    points: xs.iter().copied().zip(point.iter().copied()).collect(),
                },
                Series {
                    name: "observed".into(),
                    points: series_points(&inputs.temperature),
                },
            ],
            &[Band {
                name: format!("{:.0}% band", 100.0 * level),
                x: xs,
                lo: full.iter().map(|b| b.0).collect(),
                hi: full.iter().map(|b| b.1).collect(),
            }],
        ),
    )
}

pub fn events(cfg: &RunConfig, out: &mut Outputs) -> Res {
    let inputs = Inputs::load(cfg)?;
    let fit = bayes_fit_inner(cfg, &inputs)?;
    let e = paths(cfg, &inputs, &fit, 2)?;
    let ec = EventConfig {
        record_year: cfg.events.record_year,
        decade: cfg.decade()?,
        trailing_years: cfg.events.trailing_years,
        runup_lags: cfg.events.runup_lags.clone(),
        loess_span: cfg.events.loess_span,
    };
    let table = event_probabilities(&e, &inputs.temperature, &ec)?;
    out.json("events.json", &json!({"paths": e.n_paths(), "config": ec, "table": table}))
}

pub fn bayes_validate(cfg: &RunConfig, out: &mut Outputs) -> Res {
    let inputs = Inputs::load(cfg)?;
    let proxies = inputs.reconstruction_proxies(cfg)?.value;
    let config = bayes_config(cfg, derive_seed(cfg.run.seed, &[10]));
    config.validate()?;
    let pcs = PcTable::from_proxies(&proxies, config.n_pcs)?;
    let nulls = resolve_nulls(cfg, &proxies)?;
    let inst = cfg.instrumental()?;
    let mut blocks = Vec::new();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (b, block) in [ValidationBlock::First30, ValidationBlock::Last30].into_iter().enumerate() {
        let cfg_b = BayesConfig {
            seed: derive_seed(cfg.run.seed, &[12, b as u64]),
            ..config
        };
        let v = holdout_validate(
            &cfg_b,
            &pcs,
            &inputs.temperature,
            &inst,
            proxies.n_cols(),
            block,
            &nulls,
            cfg.bayes.validate_reps,
            derive_seed(cfg.run.seed, &[13, b as u64]),
        )?;
        for t in years_of(&v.prediction) {
            rows.push(vec![
                format!("{block:?}"),
                t.to_string(),
                opt_num(v.prediction.get(t)),
                opt_num(inputs.temperature.get(t)),
            ]);
        }
        series.push(Series {
            name: format!("{block:?} prediction"),
            points: series_points(&v.prediction),
        });
        blocks.push(json!({
            "block": format!("{block:?}"),
            "holdout": v.holdout.to_string(),
            "rmse": v.rmse,
            "nulls": v.nulls,
        }));
    }
    out.csv("bayes_validate.csv", &["block", "year", "predicted", "observed"], rows)?;
    out.json(
        "bayes_validate.json",
        &json!({"instrumental": inst.to_string(), "null_reps": cfg.bayes.validate_reps, "blocks": blocks}),
    )?;
    let observed = inputs.temperature.window(&inst)?;
    series.insert(
        0,
        Series {
            name: "observed".into(),
            points: series_points(&observed),
        },
    );
    out.text(
        "bayes_validate.svg",
        &line_plot("Holdout predictions of the first and last blocks", "year", "temperature", &series, &[]),
    )
}

/// Collates the upstream summaries into one JSON document and a short
/// Markdown digest. Any missing artifact is a data error naming it.
pub fn report(out: &mut Outputs) -> Res {
    let mut all = serde_json::Map::new();
    for (name, cmd) in REPORT_INPUTS {
        let p = out.dir().join(name);
        let text = std::fs::read_to_string(&p).map_err(|_| {
            CliError::Data(format!("missing artifact {} (written by `proxyrecon {cmd}`)", p.display()))
        })?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("artifact {} is not valid JSON: {e}", p.display())))?;
        all.insert(name.trim_end_matches(".json").to_string(), v);
    }
    let doc = Value::Object(all);
    out.json("report.json", &doc)?;
    out.text("report.md", &digest(&doc))
}

fn fmt_val(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), |x| format!("{x:.4}")),
        Value::Null => "n/a".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn digest(doc: &Value) -> String {
    let mut s = String::from("# Reconstruction report\n\n");
    let ingest = &doc["ingest"];
    s.push_str(&format!(
        "## Data\n\n- synthetic: {}\n- temperature: {}\n- proxies kept (instrumental / reconstruction): {} / {}\n\n",
        fmt_val(&ingest["synthetic"]),
        fmt_val(&ingest["temperature_span"]),
        ingest["instrumental"]["proxies_kept"],
        ingest["reconstruction"]["proxies_kept"]
    ));
    s.push_str("## Block holdout\n\n| model | median RMSE | failed blocks |\n|---|---|---|\n");
    for m in doc["cv_summary"]["models"].as_array().into_iter().flatten() {
        s.push_str(&format!("| {} | {} | {} |\n", fmt_val(&m["spec"]), fmt_val(&m["median_rmse"]), m["failed"]));
    }
    for c in doc["cv_summary"]["comparisons"].as_array().into_iter().flatten() {
        s.push_str(&format!(
            "\n{} beats {} on {} of blocks.\n",
            fmt_val(&c["a"]),
            fmt_val(&c["b"]),
            fmt_val(&c["result"]["fraction_a_wins"])
        ));
    }
    let nb = &doc["null_bench"];
    s.push_str(&format!(
        "\n## Null benchmarks\n\n- correlation sd, random walks: {}\n- correlation sd, white noise: {}\n",
        fmt_val(&nb["sd_random_walk"]),
        fmt_val(&nb["sd_white_noise"])
    ));
    let zoo = &doc["zoo_backcast"];
    s.push_str(&format!(
        "\n## Model ensemble\n\n- models: {}\n- spread of backcast means: {}\n",
        zoo["models"].as_array().map_or(0, |a| a.len()),
        fmt_val(&zoo["spread_of_means"])
    ));
    s.push_str("\n## Bayesian model\n\n");
    for m in doc["bayes_backcast"]["modes"].as_array().into_iter().flatten() {
        s.push_str(&format!("- mean band width, {}: {}\n", fmt_val(&m["mode"]), fmt_val(&m["mean_width"])));
    }
    for b in doc["bayes_validate"]["blocks"].as_array().into_iter().flatten() {
        s.push_str(&format!("- {} holdout RMSE: {}\n", fmt_val(&b["block"]), fmt_val(&b["rmse"])));
    }
    let t = &doc["events"]["table"];
    s.push_str(&format!(
        "\n## Events\n\n- warmest year: {}\n- warmest decade: {}\n- warmest trailing block: {}\n",
        fmt_val(&t["p_warmest_year"]),
        fmt_val(&t["p_warmest_decade"]),
        fmt_val(&t["p_warmest_trailing"])
    ));
    s
}
