//! Jobs behind the `rbsde` binary.
//!
//! Every job computes first and writes afterwards, so a failing job leaves
//! no partial tables behind. Exit codes: 0 success, 1 failed check or job
//! error, 2 usage or configuration error.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;

use crate::bsde::{pathwise_residual, solve_bsde};
use crate::chain::{check_contraction, martingale_path, simulate_path, ChainSpec};
use crate::config::RunConfig;
use crate::export;
use crate::hedge::{contraction_report, discounted_value_check, extract_hedge, price_american, replicate_forward};
use crate::market::{sdf_dynamics_residual, stock_curves, stock_sde_residual, MarketSpec, StockCurves};
use crate::mc::{
    deflated_gains_check, european_consistency, isometry_check, mc_estimate, mc_samples, CheckRow,
};
use crate::rbsde::{penalization_limit, skorokhod_integral, snell_oracle, solve_reflected, TOUCH_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Simulate,
    SolveBsde,
    SolveRbsde,
    PriceAmerican,
    Hedge,
    Verify,
    PlotData,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Validate,
        Command::Simulate,
        Command::SolveBsde,
        Command::SolveRbsde,
        Command::PriceAmerican,
        Command::Hedge,
        Command::Verify,
        Command::PlotData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::SolveBsde => "solve-bsde",
            Command::SolveRbsde => "solve-rbsde",
            Command::PriceAmerican => "price-american",
            Command::Hedge => "hedge",
            Command::Verify => "verify",
            Command::PlotData => "plot-data",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand {s:?}")))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub strict_contraction: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.solver.seed = seed;
        }
        if let Some(steps) = self.steps {
            cfg.solver.steps = steps;
        }
        if let Some(paths) = self.paths {
            cfg.solver.n_paths = paths;
        }
        cfg.solver.strict_contraction |= self.strict_contraction;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// False when a check reported failure.
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub checks: Vec<CheckRow>,
}

#[derive(Debug)]
pub enum Failure {
    /// Unreadable or inconsistent configuration, bad arguments.
    Usage(Error),
    /// A job that could not complete.
    Job(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Job(_) => 1,
        }
    }

    pub fn error(&self) -> &Error {
        match self {
            Failure::Usage(e) | Failure::Job(e) => e,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "configuration error: {e}"),
            Failure::Job(e) => write!(f, "job failed: {e}"),
        }
    }
}

pub fn exit_code(result: &std::result::Result<Outcome, Failure>) -> i32 {
    match result {
        Ok(o) if o.passed => 0,
        Ok(_) => 1,
        Err(f) => f.exit_code(),
    }
}

/// Loaded configuration with its validated model objects.
struct Setup {
    cfg: RunConfig,
    chain: ChainSpec,
    market: Option<MarketSpec>,
}

impl Setup {
    fn load(config: &Path, overrides: &Overrides) -> std::result::Result<Self, Failure> {
        let mut cfg = RunConfig::load(config).map_err(Failure::Usage)?;
        overrides.apply(&mut cfg);
        cfg.validate().map_err(Failure::Usage)?;
        let chain = cfg.chain_spec().map_err(Failure::Usage)?;
        let market = cfg.market_spec().map_err(Failure::Usage)?;
        Ok(Self { cfg, chain, market })
    }

    fn market(&self) -> Result<&MarketSpec> {
        self.market.as_ref().ok_or_else(|| Error::Config("this subcommand needs a [market] section".into()))
    }

    fn curves(&self) -> Result<Option<StockCurves>> {
        self.market
            .as_ref()
            .map(|m| stock_curves(m, self.cfg.solver.steps, self.cfg.horizon_extension()))
            .transpose()
    }

    fn out(&self) -> &Path {
        &self.cfg.output.dir
    }
}

/// A table to be written once the job has succeeded.
enum Table {
    Checks(Vec<CheckRow>),
    KeyValues(Vec<(String, String)>),
    Path(crate::chain::ChainPath),
    StateGrid(&'static str, crate::StateGridFunction),
    Rbsde(Box<crate::rbsde::RbsdeSolution>, crate::StateGridFunction),
    Trace(Vec<(u64, f64)>),
    Curves(Box<StockCurves>),
    Hedge(Box<crate::rbsde::RbsdeSolution>, Box<crate::hedge::HedgeStrategy>),
}

fn write_tables(dir: &Path, tables: Vec<(String, Table)>) -> Result<Vec<PathBuf>> {
    let mut files = Vec::with_capacity(tables.len());
    for (name, table) in tables {
        let path = dir.join(&name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        match &table {
            Table::Checks(rows) => export::write_checks(&path, rows)?,
            Table::KeyValues(rows) => export::write_key_values(&path, rows)?,
            Table::Path(p) => export::write_path(&path, p)?,
            Table::StateGrid(col, f) => export::write_state_grid(&path, col, f)?,
            Table::Rbsde(s, g) => export::write_rbsde(&path, s, g)?,
            Table::Trace(t) => export::write_trace(&path, t)?,
            Table::Curves(c) => export::write_stock_curves(&path, c)?,
            Table::Hedge(s, h) => export::write_hedge(&path, s, h)?,
        }
        files.push(path);
    }
    Ok(files)
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn kf(key: &str, value: f64) -> (String, String) {
    (key.to_string(), export::fmt_f64(value))
}

/// Runs one subcommand. `config` may be omitted only for `plot-data`, which
/// then reads from `overrides.out`.
pub fn run(config: Option<&Path>, command: Command, overrides: &Overrides) -> std::result::Result<Outcome, Failure> {
    if command == Command::PlotData {
        let dir = match (config, &overrides.out) {
            (_, Some(out)) => out.clone(),
            (Some(path), None) => RunConfig::load(path).map_err(Failure::Usage)?.output.dir,
            (None, None) => return Err(Failure::Usage(Error::Config("plot-data needs --out or --config".into()))),
        };
        let files = emit_plot_data(&dir).map_err(Failure::Job)?;
        return Ok(Outcome { passed: true, files, checks: Vec::new() });
    }
    let config = config.ok_or_else(|| Failure::Usage(Error::Config(format!("{command} needs --config"))))?;
    let setup = Setup::load(config, overrides)?;
    let (passed, checks, tables) = match command {
        Command::Validate => validate(&setup),
        Command::Simulate => simulate(&setup),
        Command::SolveBsde => solve_bsde_job(&setup),
        Command::SolveRbsde => solve_rbsde_job(&setup),
        Command::PriceAmerican => price_job(&setup, false),
        Command::Hedge => price_job(&setup, true),
        Command::Verify => verify(&setup),
        Command::PlotData => unreachable!(),
    }
    .map_err(|e| match e {
        Error::Config(_) => Failure::Usage(e),
        other => Failure::Job(other),
    })?;
    let files = write_tables(setup.out(), tables).map_err(Failure::Job)?;
    Ok(Outcome { passed, files, checks })
}

type JobOutput = (bool, Vec<CheckRow>, Vec<(String, Table)>);

fn validate(setup: &Setup) -> Result<JobOutput> {
    let cfg = &setup.cfg;
    let driver = cfg.driver(setup.market.as_ref())?;
    let report = check_contraction(&setup.chain, driver.lipschitz_z(), cfg.solver.steps)?;
    let mut rows = vec![
        kv("n_states", setup.chain.n_states()),
        kf("horizon", setup.chain.horizon()),
        kf("m", report.m),
        kf("lipschitz_y", driver.lipschitz_y()),
        kf("lipschitz_z", driver.lipschitz_z()),
        kf("max_pinv_frobenius", report.max_pinv_norm),
        kf("contraction_margin", report.worst_margin),
        kf("contraction_worst_time", report.worst_time),
        kv("contraction_worst_state", report.worst_state),
        kv("contraction_holds", report.holds),
    ];
    let mut passed = report.holds;
    if let Some(market) = &setup.market {
        let (r_min, r_max) = market.check_rate_bounds()?;
        let hedge = contraction_report(market, cfg.solver.steps)?;
        let curves = setup.curves()?.expect("market present");
        rows.extend([
            kf("short_rate_min", r_min),
            kf("short_rate_max", r_max),
            kf("c1", hedge.constants.c1),
            kf("c4", hedge.constants.c4),
            kf("c5", hedge.constants.c5),
            kf("c6", hedge.constants.c6),
            kf("hedge_contraction_margin", hedge.contraction.worst_margin),
            kv("hedge_contraction_holds", hedge.contraction.holds),
            kf("stock_price_min", curves.lower_bound),
            kf("stock_price_max", curves.upper_bound),
        ]);
        if let Some(sv) = curves.min_phi_singular_value {
            rows.push(kf("min_phi_singular_value", sv));
        }
        passed &= hedge.contraction.holds;
    }
    Ok((passed, Vec::new(), vec![("validate_report.csv".into(), Table::KeyValues(rows))]))
}

fn simulate(setup: &Setup) -> Result<JobOutput> {
    let seed = setup.cfg.solver.seed;
    let tables = (0..setup.cfg.solver.simulate_paths)
        .map(|k| {
            let path = simulate_path(&setup.chain, seed.wrapping_add(k as u64));
            (format!("paths/path_{k:05}.csv"), Table::Path(path))
        })
        .collect();
    Ok((true, Vec::new(), tables))
}

fn require_terminal(cfg: &RunConfig) -> Result<DVector<f64>> {
    cfg.terminal()?.ok_or_else(|| Error::Config("this subcommand needs a `terminal` vector".into()))
}

fn solve_bsde_job(setup: &Setup) -> Result<JobOutput> {
    let cfg = &setup.cfg;
    let driver = cfg.driver(setup.market.as_ref())?;
    let terminal = require_terminal(cfg)?;
    let solution = solve_bsde(&setup.chain, &*driver, &terminal, cfg.solve_options())?;
    let residual = pathwise_residual(&solution, &simulate_path(&setup.chain, cfg.solver.seed), &setup.chain, &*driver, &terminal);
    let report = vec![
        kv("scheme", format!("{:?}", solution.scheme)),
        kv("steps", solution.steps),
        kf("initial_value", solution.initial_value(setup.chain.initial_state())),
        kf("pathwise_residual", residual),
    ];
    Ok((true, Vec::new(), vec![
        ("bsde_value.csv".into(), Table::StateGrid("y", solution.y)),
        ("bsde_report.csv".into(), Table::KeyValues(report)),
    ]))
}

fn solve_rbsde_job(setup: &Setup) -> Result<JobOutput> {
    let cfg = &setup.cfg;
    let driver = cfg.driver(setup.market.as_ref())?;
    let grid = cfg.grid()?;
    let curves = setup.curves()?;
    let obstacle = cfg
        .obstacle(grid, curves.as_ref())?
        .ok_or_else(|| Error::Config("solve-rbsde needs an [obstacle] section".into()))?;
    let terminal = cfg.terminal()?.unwrap_or_else(|| obstacle.g.terminal().clone());
    let steps = cfg.solver.steps;
    let solution = solve_reflected(&setup.chain, &*driver, &terminal, &obstacle, steps)?;
    let oracle = snell_oracle(&setup.chain, &*driver, &terminal, &obstacle, steps)?;
    let mut report = vec![
        kf("initial_value", solution.initial_value(setup.chain.initial_state())),
        kf("min_margin", solution.min_margin(&obstacle)),
        kv("k_valid", solution.k_is_valid()),
        kf("skorokhod_integral", skorokhod_integral(&solution, &obstacle)),
        kf("snell_oracle_distance", solution.v.sup_distance(&oracle)),
    ];
    let mut tables = Vec::new();
    if cfg.solver.penalization {
        let limit = penalization_limit(&setup.chain, &*driver, &terminal, &obstacle, steps, cfg.solver.penalization_tol)?;
        report.push(kf("penalization_distance", limit.v.sup_distance(&solution.v)));
        let trace = limit.penalization_trace.clone().unwrap_or_default();
        tables.push(("penalization.csv".into(), Table::Trace(trace)));
        tables.push(("rbsde_penalized.csv".into(), Table::Rbsde(Box::new(limit), obstacle.g.clone())));
    }
    tables.insert(0, ("rbsde.csv".into(), Table::Rbsde(Box::new(solution), obstacle.g.clone())));
    tables.push(("rbsde_report.csv".into(), Table::KeyValues(report)));
    Ok((true, Vec::new(), tables))
}

fn price_job(setup: &Setup, hedge: bool) -> Result<JobOutput> {
    let cfg = &setup.cfg;
    let market = setup.market()?;
    let curves = setup.curves()?.expect("market present");
    let payoff = cfg
        .payoff(curves.grid, Some(&curves))?
        .ok_or_else(|| Error::Config("this subcommand needs a [payoff] section".into()))?;
    let solution = price_american(market, &payoff)?;
    let contraction = contraction_report(market, cfg.solver.steps)?;
    let mut tables = vec![
        ("american.csv".to_string(), Table::Rbsde(Box::new(solution.clone()), payoff.g.clone())),
        ("stock_curves.csv".to_string(), Table::Curves(Box::new(curves.clone()))),
        (
            "contraction_report.csv".to_string(),
            Table::KeyValues(vec![
                kf("c6", contraction.constants.c6),
                kf("margin", contraction.contraction.worst_margin),
                kv("holds", contraction.contraction.holds),
            ]),
        ),
    ];
    if !hedge {
        return Ok((true, Vec::new(), tables));
    }
    let strategy = extract_hedge(market, &curves, &solution)?;
    let checks = hedge_checks(setup, market, &curves, &payoff, &solution, &strategy);
    let passed = checks.iter().all(|c| c.pass);
    tables.push(("hedge.csv".into(), Table::Hedge(Box::new(solution), Box::new(strategy))));
    tables.push(("replication.csv".into(), Table::Checks(checks.clone())));
    Ok((passed, checks, tables))
}

fn hedge_checks(
    setup: &Setup,
    market: &MarketSpec,
    curves: &StockCurves,
    payoff: &crate::hedge::Payoff,
    solution: &crate::rbsde::RbsdeSolution,
    strategy: &crate::hedge::HedgeStrategy,
) -> Vec<CheckRow> {
    let cfg = &setup.cfg;
    let reports = mc_samples(market.chain(), cfg.verify.replication_paths, cfg.solver.seed, |path| {
        replicate_forward(market, curves, strategy, solution, payoff, path)
    });
    let max_gap = reports.iter().map(|r| r.max_gap).fold(0.0, f64::max);
    let dominated = reports.iter().filter(|r| r.dominates).count();
    vec![
        CheckRow::bound("hedge_phi_residual", strategy.phi_residual, 1e-12),
        CheckRow::bound("hedge_accounting_residual", strategy.accounting_residual(curves, solution), 1e-9),
        CheckRow::bound("replication_max_gap", max_gap, cfg.verify.replication_tol),
        CheckRow::exact("replication_dominating_paths", dominated as f64, reports.len() as f64, 0.0),
    ]
}

fn verify(setup: &Setup) -> Result<JobOutput> {
    let cfg = &setup.cfg;
    let chain = &setup.chain;
    let n = chain.n_states();
    let (n_paths, seed) = (cfg.solver.n_paths, cfg.solver.seed);
    let mut checks = Vec::new();

    let z = match &cfg.verify.isometry_z {
        Some(z) => DVector::from_column_slice(z),
        None => crate::chain::unit(n, 0),
    };
    let iso = isometry_check(chain, &z, n_paths, seed)?;
    checks.push(CheckRow {
        name: "isometry".into(),
        lhs: iso.lhs.mean,
        rhs: iso.rhs.mean,
        std_error: iso.difference.std_error,
        pass: iso.passes,
    });
    for i in 0..n {
        let est = mc_estimate(
            chain,
            |path| martingale_path(path, chain, 1).map(|m| m[1][i]).unwrap_or(f64::NAN),
            n_paths,
            seed,
        )?;
        checks.push(CheckRow::statistical(format!("martingale_mean_{i}"), 0.0, &est));
    }

    if let Some(market) = &setup.market {
        let curves = setup.curves()?.expect("market present");
        let (r_min, r_max) = market.check_rate_bounds()?;
        checks.push(CheckRow::bound("short_rate_nonnegative", -r_min, 0.0));
        checks.push(CheckRow::bound("short_rate_bounded", r_max, market.r_max()));
        let payoff = cfg.payoff(curves.grid, Some(&curves))?;
        let claim = match (&cfg.verify.european_claim, &payoff) {
            (Some(c), _) => DVector::from_column_slice(c),
            (None, Some(p)) => p.terminal().clone(),
            (None, None) => DVector::from_element(n, 1.0),
        };
        checks.push(european_consistency(market, &claim, n_paths, cfg.solver.steps, seed)?);
        for j in 0..market.n_stocks() {
            checks.push(deflated_gains_check(market, &curves, j, n_paths, seed)?);
        }
        let residuals = mc_samples(chain, cfg.verify.replication_paths, seed, |path| {
            let sdf = sdf_dynamics_residual(market, path, cfg.solver.steps).unwrap_or(f64::NAN);
            (sdf, stock_sde_residual(market, &curves, path))
        });
        let worst = |f: fn(&(f64, f64)) -> f64| residuals.iter().map(f).fold(0.0, |a: f64, b| a.max(b));
        checks.push(CheckRow::bound("sdf_dynamics_residual", worst(|r| r.0), cfg.verify.residual_tol));
        checks.push(CheckRow::bound("stock_sde_residual", worst(|r| r.1), cfg.verify.residual_tol));

        if let Some(payoff) = payoff {
            let solution = price_american(market, &payoff)?;
            checks.push(CheckRow::bound("american_min_margin", -solution.min_margin(&payoff.obstacle()), TOUCH_TOL));
            let discounted = discounted_value_check(market, &payoff, &solution, n_paths, seed)?;
            checks.push(CheckRow::statistical("discounted_representation", discounted.value, &discounted.stopped));
            checks.push(CheckRow::bound("discounted_domination", -discounted.min_discounted_margin, 1e-9));
            if market.n_stocks() == n {
                let strategy = extract_hedge(market, &curves, &solution)?;
                checks.extend(hedge_checks(setup, market, &curves, &payoff, &solution, &strategy));
            }
        }
    }
    let passed = checks.iter().all(|c| c.pass);
    for c in &checks {
        log::info!("{} lhs={:.6e} rhs={:.6e} se={:.3e} pass={}", c.name, c.lhs, c.rhs, c.std_error, c.pass);
    }
    Ok((passed, checks.clone(), vec![("verify.csv".into(), Table::Checks(checks))]))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("not a number: {s:?}")))
}

/// Turns the tables of earlier runs in `dir` into plot-ready data:
/// `value_vs_time.csv`, `exercise_boundary.csv` and
/// `penalization_convergence.csv`, each written only when its inputs exist.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let sources = [("american.csv", "v"), ("rbsde.csv", "v"), ("bsde_value.csv", "y")];
    let mut value_rows = Vec::new();
    let mut boundary_rows = Vec::new();
    for (file, column) in sources {
        let path = dir.join(file);
        if !path.is_file() {
            continue;
        }
        let (header, rows) = export::read_table(&path)?;
        let col = |name: &str| header.iter().position(|h| h == name);
        let (ti, si, vi) = match (col("time"), col("state"), col(column)) {
            (Some(t), Some(s), Some(v)) => (t, s, v),
            _ => return Err(Error::MissingInputs { dir: dir.to_path_buf(), detail: format!("{file} lacks columns") }),
        };
        let source = file.trim_end_matches(".csv");
        let mut first_touch: std::collections::BTreeMap<usize, Option<String>> = Default::default();
        for row in &rows {
            value_rows.push([source.to_string(), row[ti].clone(), row[si].clone(), row[vi].clone()]);
            if let Some(gi) = col("g") {
                let state: usize = row[si].parse().map_err(|_| Error::Config(format!("bad state {:?}", row[si])))?;
                let entry = first_touch.entry(state).or_insert(None);
                if entry.is_none() && parse_f64(&row[vi])? <= parse_f64(&row[gi])? + TOUCH_TOL {
                    *entry = Some(row[ti].clone());
                }
            }
        }
        for (state, t) in first_touch {
            boundary_rows.push([source.to_string(), state.to_string(), t.unwrap_or_default()]);
        }
    }
    let trace_path = dir.join("penalization.csv");
    let trace = if trace_path.is_file() { Some(export::read_table(&trace_path)?.1) } else { None };
    if value_rows.is_empty() && trace.is_none() {
        return Err(Error::MissingInputs {
            dir: dir.to_path_buf(),
            detail: "no american.csv, rbsde.csv, bsde_value.csv or penalization.csv".into(),
        });
    }
    let mut files = Vec::new();
    let mut write = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let path = dir.join(name);
        let mut w = ::csv::Writer::from_path(&path).map_err(|e| Error::Config(e.to_string()))?;
        w.write_record(header).map_err(|e| Error::Config(e.to_string()))?;
        for r in rows {
            w.write_record(&r).map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush()?;
        files.push(path);
        Ok(())
    };
    if !value_rows.is_empty() {
        write("value_vs_time.csv", &["source", "time", "state", "value"], value_rows.into_iter().map(Vec::from).collect())?;
    }
    if !boundary_rows.is_empty() {
        write(
            "exercise_boundary.csv",
            &["source", "state", "first_exercise_time"],
            boundary_rows.into_iter().map(Vec::from).collect(),
        )?;
    }
    if let Some(trace) = trace {
        write("penalization_convergence.csv", &["n", "sup_distance"], trace)?;
    }
    Ok(files)
}
