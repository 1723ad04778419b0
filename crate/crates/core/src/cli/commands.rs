use std::path::PathBuf;

use serde_json::{json, Value};

use super::config::{ExperimentConfig, Objective, SweepSettings};
use super::output::{num, opt_num, CsvTable, Metadata, OutputDir};
use crate::bounds::{BoundModel, Metric, RateSource, TailBoundCurve};
use crate::distributions::DistributionSpec;
use crate::error::{FjError, Result};
use crate::optimizer::{optimize_binomial_p, optimize_budget, optimize_pmf, RateInput};
use crate::simulator::{fit_log_growth, simulate, GrowthAxis, SimulationConfig, SimulationResult, REPORT_PERCENTILES};
use crate::strategies::StrategySpec;
use crate::system::FJSystemSpec;

const METRICS: [Metric; 2] = [Metric::Waiting, Metric::Response];
const DOMINANCE_SE: f64 = 3.0;

/// Everything a subcommand needs besides the config itself.
pub struct Context {
    pub out: OutputDir,
    pub seed: u64,
    pub config_hash: String,
}

impl Context {
    fn meta(&self, command: &str, notes: Vec<String>) -> Metadata {
        Metadata { command: command.into(), config_hash: self.config_hash.clone(), seed: self.seed, notes }
    }
}

fn bound_model(cfg: &ExperimentConfig) -> Result<BoundModel> {
    BoundModel::for_system(&cfg.fj_system()?, cfg.strategy.as_ref(), cfg.rate_model.as_ref())
}

fn curve_notes(curve: &TailBoundCurve) -> Vec<String> {
    vec![format!("family={}", curve.family), format!("theta_tilde={}", opt_num(curve.theta_tilde))]
}

pub fn cmd_bound(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let sigmas = cfg.sigma_values()?;
    let curve = bound_model(cfg)?.curve(&sigmas)?;
    let mut table = CsvTable::new(&["sigma", "metric", "family", "bound"]);
    for metric in METRICS {
        for (sigma, b) in curve.values(metric) {
            table.push(vec![num(sigma), metric.as_str().into(), curve.family.into(), num(b)]);
        }
    }
    Ok(vec![ctx.out.write_csv("bound.csv", &table, &ctx.meta("bound", curve_notes(&curve)))?])
}

fn simulation_notes(sim: &SimulationConfig, res: &SimulationResult) -> Vec<String> {
    let mut notes = vec![
        format!("mode={}", serde_json::to_value(sim.mode).unwrap_or(Value::Null).as_str().unwrap_or("")),
        format!("n_jobs={} warmup={} replications={}", res.n_jobs, res.warmup, res.replications()),
        format!("horizon_capped={}", res.horizon_capped()),
    ];
    notes.extend(res.warnings.iter().map(|w| format!("warning: {w}")));
    notes
}

fn report_warnings(res: &SimulationResult) {
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn cmd_simulate(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let sim = cfg.simulation_config(ctx.seed)?;
    let res = simulate(&sim)?;
    report_warnings(&res);
    let notes = simulation_notes(&sim, &res);
    let mut written = Vec::new();

    let mut table = CsvTable::new(&[
        "metric", "mean", "mean_std_error", "p50", "p90", "p99", "p99_9", "samples", "effective_sample_size",
    ]);
    for metric in METRICS {
        let mean = res.mean(metric)?;
        let pct = res.percentiles(metric, &REPORT_PERCENTILES)?;
        let mut row = vec![metric.as_str().into(), num(mean.value), num(mean.std_error)];
        row.extend(pct.into_iter().map(num));
        row.push(res.total_samples().to_string());
        row.push(num(res.effective_sample_size()));
        table.push(row);
    }
    written.push(ctx.out.write_csv("simulate.csv", &table, &ctx.meta("simulate", notes.clone()))?);

    if cfg.sigma.is_some() {
        let mut ccdf = CsvTable::new(&["sigma", "metric", "empirical_ccdf", "std_error"]);
        for metric in METRICS {
            for sigma in cfg.sigma_values()? {
                let e = res.ccdf(metric, sigma)?;
                ccdf.push(vec![num(sigma), metric.as_str().into(), num(e.value), num(e.std_error)]);
            }
        }
        written.push(ctx.out.write_csv("simulate_ccdf.csv", &ccdf, &ctx.meta("simulate", notes))?);
    }
    if cfg.simulation_settings()?.dump_samples {
        let path = ctx.out.path("samples.bin");
        res.write_samples(&path).map_err(|e| FjError::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_compare(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let sigmas = cfg.sigma_values()?;
    let curve = bound_model(cfg)?.curve(&sigmas)?;
    let mut notes = curve_notes(&curve);
    let result = match &cfg.simulation {
        Some(s) if s.replications > 0 => {
            let sim = cfg.simulation_config(ctx.seed)?;
            let res = simulate(&sim)?;
            report_warnings(&res);
            notes.extend(simulation_notes(&sim, &res));
            Some(res)
        }
        _ => {
            notes.push("bound only: no replications requested".into());
            None
        }
    };
    let mut table = CsvTable::new(&["sigma", "metric", "family", "bound", "empirical_ccdf", "std_error", "dominates"]);
    let mut violations = 0;
    for metric in METRICS {
        for (sigma, b) in curve.values(metric) {
            let mut row = vec![num(sigma), metric.as_str().into(), curve.family.into(), num(b)];
            match &result {
                Some(res) => {
                    let e = res.ccdf(metric, sigma)?;
                    let dominates = e.value <= b + DOMINANCE_SE * e.std_error;
                    violations += usize::from(!dominates);
                    row.extend([num(e.value), num(e.std_error), dominates.to_string()]);
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            table.push(row);
        }
    }
    if result.is_some() {
        notes.push(format!("dominance_violations={violations}"));
    }
    Ok(vec![ctx.out.write_csv("compare.csv", &table, &ctx.meta("compare", notes))?])
}

fn arrival_rate(system: &FJSystemSpec) -> Result<f64> {
    system
        .arrival_rate()
        .ok_or_else(|| FjError::Config("optimization needs exponential inter-arrival times".into()))
}

fn rate_input(cfg: &ExperimentConfig, system: &FJSystemSpec) -> Result<RateInput> {
    if system.servers.iter().any(|s| s.pi != 1.0) {
        return Err(FjError::Config("selection probabilities cannot be combined with a strategy".into()));
    }
    if let Some(model) = cfg.rate_model {
        return Ok(RateInput::Heterogeneous(RateSource::Model(model)));
    }
    if let Some(mu) = system.homogeneous_rate() {
        return Ok(RateInput::Homogeneous(mu));
    }
    let rates = system
        .exponential_rates()
        .ok_or_else(|| FjError::Config("optimization needs exponential service times".into()))?;
    Ok(RateInput::Heterogeneous(RateSource::Fixed(rates)))
}

pub fn cmd_optimize(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let settings = cfg
        .optimize
        .as_ref()
        .ok_or_else(|| FjError::Config("optimize needs an optimize section".into()))?;
    let system = cfg.fj_system()?;
    let n = system.n();
    let lambda = arrival_rate(&system)?;
    let phi = system.phi;

    let (sigma, sigma_source) = match settings.sigma {
        Some(s) if s >= 0.0 && s.is_finite() => (s, "fixed"),
        Some(s) => return Err(FjError::Config(format!("optimize.sigma must be finite and >= 0, got {s}"))),
        None => {
            let reference = cfg.strategy.clone().unwrap_or(StrategySpec::binomial(n, 1.0)?);
            let model = BoundModel::for_system(&system, Some(&reference), cfg.rate_model.as_ref())?;
            (model.invert(settings.metric, settings.tail_target)?, "inverted")
        }
    };

    let mut report = json!({
        "objective": settings.objective,
        "metric": settings.metric,
        "sigma": sigma,
        "sigma_source": sigma_source,
        "tail_target": settings.tail_target,
        "n": n,
    });
    let extra = match settings.objective {
        Objective::Pmf => {
            let opt = optimize_pmf(n, &rate_input(cfg, &system)?, lambda, phi, sigma, settings.metric)?;
            json!({ "s_opt": opt.servers, "value": opt.value, "per_vertex": opt.per_vertex })
        }
        Objective::Binomial => {
            let RateInput::Homogeneous(mu) = rate_input(cfg, &system)? else {
                return Err(FjError::Config("the binomial objective needs identical exponential servers".into()));
            };
            let opt = optimize_binomial_p(n, mu, lambda, phi, sigma, settings.grid_resolution, settings.metric)?;
            json!({
                "p_opt": opt.p_opt,
                "value": opt.value,
                "certified": opt.certificate.as_ref().map(|c| c.certified),
                "certificate": opt.certificate,
            })
        }
        Objective::Budget => {
            let budget = settings
                .budget
                .ok_or_else(|| FjError::Config("the budget objective needs optimize.budget".into()))?;
            let RateInput::Homogeneous(mu) = rate_input(cfg, &system)? else {
                return Err(FjError::Config("the budget objective needs identical exponential servers".into()));
            };
            let opt = optimize_budget(n, budget, mu, lambda, sigma)?;
            json!({
                "budget": budget,
                "p_star": opt.p_star,
                "expected_servers": opt.expected_servers,
                "value": opt.value,
            })
        }
    };
    if let (Value::Object(base), Value::Object(more)) = (&mut report, extra) {
        base.extend(more);
    }
    Ok(vec![ctx.out.write_json("optimize.json", &report, &ctx.meta("optimize", Vec::new()))?])
}

/// One point of a sweep: `None` keeps the base experiment's value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub phi: Option<f64>,
    pub p: Option<f64>,
    pub pi: Option<f64>,
}

fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

pub fn sweep_points(sweep: &SweepSettings) -> Vec<SweepPoint> {
    let pis = sweep.pi.as_ref().map(|p| p.values.clone()).unwrap_or_default();
    let mut points = Vec::new();
    for n in axis(&sweep.n) {
        for lambda in axis(&sweep.lambda) {
            for phi in axis(&sweep.phi) {
                for p in axis(&sweep.p) {
                    for pi in axis(&pis) {
                        points.push(SweepPoint { n, lambda, phi, p, pi });
                    }
                }
            }
        }
    }
    points
}

fn resize_strategy(st: &StrategySpec, n: usize) -> Result<StrategySpec> {
    match *st {
        StrategySpec::Deterministic { s, .. } => StrategySpec::deterministic(n, s.min(n)),
        StrategySpec::Uniform { .. } => StrategySpec::uniform(n),
        StrategySpec::Binomial { p, .. } => StrategySpec::binomial(n, p),
        _ => Err(FjError::Config("only deterministic, uniform and binomial strategies can follow a server-count sweep".into())),
    }
}

/// System and strategy of one sweep point.
pub fn apply_point(cfg: &ExperimentConfig, point: &SweepPoint) -> Result<(FJSystemSpec, Option<StrategySpec>)> {
    let mut system = cfg.fj_system()?;
    if let Some(n) = point.n {
        if n == 0 {
            return Err(FjError::Config("sweep server counts must be positive".into()));
        }
        system.servers = vec![system.servers[0]; n];
    }
    if let Some(lambda) = point.lambda {
        system.arrival = DistributionSpec::exponential(lambda).map_err(|e| FjError::Config(e.to_string()))?;
    }
    if let Some(phi) = point.phi {
        system.phi = phi;
    }
    if let (Some(pi), Some(sweep)) = (point.pi, cfg.sweep.as_ref().and_then(|s| s.pi.as_ref())) {
        let server = system
            .servers
            .get_mut(sweep.server)
            .ok_or_else(|| FjError::Config(format!("sweep.pi.server {} is out of range", sweep.server)))?;
        server.pi = pi;
    }
    system.validate().map_err(|e| FjError::Config(e.to_string()))?;
    let strategy = match (point.p, &cfg.strategy) {
        (Some(p), _) => Some(StrategySpec::binomial(system.n(), p).map_err(|e| FjError::Config(e.to_string()))?),
        (None, Some(st)) if st.n() != system.n() => Some(resize_strategy(st, system.n())?),
        (None, st) => st.clone(),
    };
    Ok((system, strategy))
}

pub fn cmd_sweep(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| FjError::Config("sweep needs a sweep section".into()))?;
    let settings = cfg.simulation_settings()?;
    let points = sweep_points(sweep);

    let mut table = CsvTable::new(&[
        "point", "n", "lambda", "phi", "p", "pi", "expected_servers", "mean_waiting", "mean_waiting_std_error",
        "mean_response", "p50", "p90", "p99", "p99_9", "bound_sigma_p99_9",
    ]);
    let mut per_rep = CsvTable::new(&["point", "replication", "p50", "p90", "p99", "p99_9"]);
    let mut notes = Vec::new();
    let mut growth_points = Vec::new();
    for (i, point) in points.iter().enumerate() {
        let (system, strategy) = apply_point(cfg, point)?;
        let sim = SimulationConfig {
            system: system.clone(),
            strategy: strategy.clone(),
            rate_model: cfg.rate_model,
            mode: settings.mode,
            n_jobs: settings.n_jobs,
            warmup: settings.warmup,
            replications: settings.replications,
            seed: ctx.seed,
        };
        let res = simulate(&sim)?;
        report_warnings(&res);
        notes.extend(res.warnings.iter().map(|w| format!("warning: point {i}: {w}")));

        let expected = strategy.as_ref().map_or(system.n() as f64, StrategySpec::expected_servers);
        let mean_w = res.mean(Metric::Waiting)?;
        let mean_r = res.mean(Metric::Response)?;
        let pct = res.percentiles(Metric::Waiting, &REPORT_PERCENTILES)?;
        // Vacuous or inapplicable bounds leave the column empty.
        let bound_sigma = BoundModel::for_system(&system, strategy.as_ref(), cfg.rate_model.as_ref())
            .and_then(|m| m.invert(Metric::Waiting, 1e-3))
            .ok();

        if let Some(g) = &sweep.growth {
            let x = match g.axis {
                GrowthAxis::ServerCount => system.n() as f64,
                GrowthAxis::ExpectedServers => expected,
            };
            growth_points.push((x, res.percentiles(Metric::Waiting, &[g.level])?[0]));
        }

        let mut row = vec![
            i.to_string(),
            system.n().to_string(),
            opt_num(system.arrival_rate()),
            num(system.phi),
            opt_num(point.p),
            opt_num(point.pi),
            num(expected),
            num(mean_w.value),
            num(mean_w.std_error),
            num(mean_r.value),
        ];
        row.extend(pct.iter().copied().map(num));
        row.push(opt_num(bound_sigma));
        table.push(row);

        for (r, q) in res.percentiles_per_replication(Metric::Waiting, &REPORT_PERCENTILES)?.into_iter().enumerate() {
            let mut row = vec![i.to_string(), r.to_string()];
            row.extend(q.into_iter().map(num));
            per_rep.push(row);
        }
    }

    let meta = ctx.meta("sweep", notes);
    let mut written = vec![
        ctx.out.write_csv("sweep.csv", &table, &meta)?,
        ctx.out.write_csv("sweep_replications.csv", &per_rep, &meta)?,
    ];
    if let Some(g) = &sweep.growth {
        let fit = fit_log_growth(&growth_points)?;
        let body = json!({ "axis": g.axis, "level": g.level, "points": growth_points, "fit": fit });
        written.push(ctx.out.write_json("sweep_fit.json", &body, &meta)?);
    }
    Ok(written)
}
