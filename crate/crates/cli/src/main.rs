use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use essprk::experiments::{
    max_tvd_sigma, run_tvd, tvd_sequence, vdp_convergence, vdp_convergence_single, write_sigma_csv, BurgersGrid,
    Profile, SigmaRow, SIGMA_TOL,
};
use essprk::integrator::CompositeScheme;
use essprk::methods::{catalog, lookup};
use essprk::optimizer::{optimize_main, optimize_start_stop, SearchConfig, SearchError};
use essprk::order_conditions::{
    beta_weights, classical_order, effective_order, elementary_weights, BetaSlot, EffectiveOrderSpec,
    DEFAULT_ORDER_TOL,
};
use essprk::ssp::{ssp_coefficient, DEFAULT_BISECTION_TOL};
use essprk::tableau::{emit_tableau, parse_tableau, validate, ButcherTableau, Severity, TableauDocument};

#[derive(Parser)]
#[command(name = "essprk", version, about = "SSP Runge–Kutta methods of effective order")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Orders, perturbation weights and SSP coefficient of a method.
    Check {
        /// Tableau file or catalog label.
        scheme: String,
        #[arg(long, default_value_t = DEFAULT_ORDER_TOL)]
        tol: f64,
    },
    /// SSP coefficient with its certificate, as JSON.
    Ssp {
        scheme: String,
        #[arg(long, default_value_t = DEFAULT_BISECTION_TOL)]
        tol: f64,
    },
    /// Search for an optimal SSP method.
    Optimize {
        #[arg(long)]
        s: usize,
        #[arg(long)]
        q: u32,
        #[arg(long)]
        p: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
        /// Output tableau file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also search for starting and stopping methods, written next to
        /// `--out` with `_R` and `_T` suffixes.
        #[arg(long, requires = "out")]
        start_stop: bool,
    },
    /// List the shipped methods with recomputed properties.
    Catalog,
    /// van der Pol convergence table (n, dt, error) as CSV.
    Convergence {
        #[arg(long)]
        scheme: String,
        #[arg(long)]
        start: Option<PathBuf>,
        #[arg(long)]
        stop: Option<PathBuf>,
        /// Use the main method for every step.
        #[arg(long)]
        main_only: bool,
    },
    /// Burgers' equation total variation series (step, t, TV) as CSV.
    Burgers {
        #[arg(long)]
        scheme: String,
        #[arg(long, value_enum)]
        ic: Ic,
        #[arg(long)]
        sigma: f64,
        /// Final time; 1.62 for continuous and 0.6 for square-wave data.
        #[arg(long)]
        tf: Option<f64>,
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long)]
        start: Option<PathBuf>,
        #[arg(long)]
        stop: Option<PathBuf>,
    },
    /// Largest observed TVD step for every catalog composite, as CSV.
    SigmaTable {
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 0.6)]
        tf: f64,
        #[arg(long, default_value_t = SIGMA_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Ic::Square)]
        ic: Ic,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Ic {
    Continuous,
    Square,
}

impl Ic {
    fn profile(self) -> Profile {
        match self {
            Ic::Continuous => Profile::Continuous,
            Ic::Square => Profile::SquareWave,
        }
    }

    fn default_tf(self) -> f64 {
        match self {
            Ic::Continuous => 1.62,
            Ic::Square => 0.6,
        }
    }
}

enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

struct Resolved {
    label: String,
    main: ButcherTableau,
    start: Option<ButcherTableau>,
    stop: Option<ButcherTableau>,
    q: Option<u32>,
    p: Option<u32>,
}

fn read_tableau(path: &Path) -> anyhow::Result<(TableauDocument, ButcherTableau)> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_tableau(&bytes).with_context(|| format!("malformed tableau file {}", path.display()))
}

/// A file path if one exists, otherwise a catalog label.
fn resolve(name: &str, start: Option<&Path>, stop: Option<&Path>) -> anyhow::Result<Resolved> {
    let mut out = if Path::new(name).is_file() {
        let (doc, main) = read_tableau(Path::new(name))?;
        Resolved { label: doc.label, main, start: None, stop: None, q: doc.q, p: doc.p }
    } else if name.ends_with(".json") {
        return Err(anyhow!("no such file: {name}"));
    } else {
        let e = lookup(name)?;
        Resolved {
            label: e.label.clone(),
            main: e.main.clone(),
            start: e.r.clone(),
            stop: e.t.clone(),
            q: Some(e.q),
            p: Some(e.p),
        }
    };
    if let Some(path) = start {
        out.start = Some(read_tableau(path)?.1);
    }
    if let Some(path) = stop {
        out.stop = Some(read_tableau(path)?.1);
    }
    Ok(out)
}

impl Resolved {
    fn orders(&self) -> (u32, u32) {
        let q = self.q.unwrap_or_else(|| effective_order(&self.main, DEFAULT_ORDER_TOL));
        let p = self.p.unwrap_or_else(|| classical_order(&self.main, DEFAULT_ORDER_TOL).order);
        (q, p)
    }

    /// Composite scheme when starting and stopping methods are available.
    fn scheme(&self) -> anyhow::Result<Option<CompositeScheme>> {
        let (q, p) = self.orders();
        match (&self.start, &self.stop) {
            (Some(r), Some(t)) => {
                let spec = EffectiveOrderSpec::new(q, p.min(q.saturating_sub(1)))?;
                Ok(Some(CompositeScheme::new(r.clone(), self.main.clone(), t.clone(), spec)?))
            }
            (None, None) if p >= q && q >= 3 => Ok(Some(CompositeScheme::classical(self.main.clone(), q)?)),
            (None, None) => Ok(None),
            _ => Err(anyhow!("both --start and --stop are needed")),
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct CheckReport {
    label: String,
    stages: usize,
    classical_order: u32,
    effective_order: u32,
    /// `beta_1..beta_K`; `null` marks entries left free by the conditions.
    beta: Option<Vec<Option<f64>>>,
    ssp: essprk::ssp::SSPResult,
    notes: Vec<String>,
}

fn check(scheme: &str, tol: f64) -> Outcome {
    let m = resolve(scheme, None, None)?;
    let t = &m.main;
    let cls = classical_order(t, tol);
    let eff = effective_order(t, tol);
    let ssp = ssp_coefficient(t, DEFAULT_BISECTION_TOL);
    let mut notes: Vec<String> = validate(t, tol)
        .iter()
        .map(|v| match v.severity {
            Severity::Error => format!("error: {v}"),
            Severity::Warning => format!("warning: {v}"),
        })
        .collect();
    if let Some((i, b)) = t.b().iter().enumerate().find(|(_, b)| **b < 0.0) {
        notes.push(format!(
            "weight b_{} = {b} is negative: K (I + rA)^-1 has a negative entry for every r > 0, so the SSP coefficient is 0",
            i + 1
        ));
    }
    let beta = match EffectiveOrderSpec::new(eff, cls.order) {
        Ok(spec) => {
            let w = beta_weights(&elementary_weights(t), spec, tol)?;
            Some(
                w.slots()
                    .iter()
                    .map(|s| match s {
                        BetaSlot::Fixed(x) => Some(*x),
                        BetaSlot::Free => None,
                    })
                    .collect(),
            )
        }
        Err(_) => {
            if eff == cls.order && eff >= 3 {
                notes.push("effective order equals classical order; the zero perturbation is admissible".into());
            }
            None
        }
    };
    print_json(&CheckReport {
        label: m.label,
        stages: t.stages(),
        classical_order: cls.order,
        effective_order: eff,
        beta,
        ssp,
        notes,
    })?;
    Ok(())
}

fn ssp(scheme: &str, tol: f64) -> Outcome {
    if !(tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    let m = resolve(scheme, None, None)?;
    print_json(&ssp_coefficient(&m.main, tol))?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.json"))
}

#[allow(clippy::too_many_arguments)]
fn optimize(
    s: usize,
    q: u32,
    p: u32,
    seed: u64,
    restarts: usize,
    max_iterations: usize,
    out: Option<PathBuf>,
    start_stop: bool,
) -> Outcome {
    if s == 0 || restarts == 0 || max_iterations == 0 {
        return Err(usage("--s, --restarts and --max-iterations must be positive"));
    }
    let spec = EffectiveOrderSpec::new(q, p).map_err(|e| usage(e.to_string()))?;
    let config = SearchConfig { restarts, seed, max_iterations, ..SearchConfig::default() };
    let label = format!("ESSPRK({s},{q},{p})");
    let main = match optimize_main(s, spec, &config) {
        Ok(m) => m,
        Err(SearchError::Infeasible { best_residual, coefficient }) => {
            return Err(Failure::Domain(anyhow!(
                "{label}: no method satisfies the order conditions (best residual {best_residual:.3e}); SSP coefficient {coefficient}"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    info!("{label}: SSP coefficient {:.6}", main.ssp.coefficient);
    let doc = TableauDocument::from_tableau(&label, &main.tableau, Some(q), Some(p));
    let Some(path) = out else {
        std::io::stdout().write_all(&emit_tableau(&doc)).map_err(anyhow::Error::from)?;
        return Ok(());
    };
    std::fs::write(&path, emit_tableau(&doc)).with_context(|| format!("cannot write {}", path.display()))?;
    let mut files = vec![path.display().to_string()];
    let mut start_stop_radius = None;
    if start_stop {
        let ss = optimize_start_stop(&main, &config)?;
        info!("starting/stopping methods: min SSP coefficient {:.6}", ss.min_radius);
        if !ss.success {
            warn!("starting/stopping methods are less SSP than the main method");
        }
        for (suffix, t) in [("R", &ss.start), ("T", &ss.stop)] {
            let f = sibling(&path, suffix);
            let d = TableauDocument::from_tableau(format!("{label} {suffix}"), t, Some(q), None);
            std::fs::write(&f, emit_tableau(&d)).with_context(|| format!("cannot write {}", f.display()))?;
            files.push(f.display().to_string());
        }
        start_stop_radius = Some(ss.min_radius);
    }
    #[derive(Serialize)]
    struct Summary {
        label: String,
        coefficient: f64,
        effective_coefficient: f64,
        start_stop_coefficient: Option<f64>,
        files: Vec<String>,
    }
    print_json(&Summary {
        label,
        coefficient: main.ssp.coefficient,
        effective_coefficient: main.ssp.effective_coefficient,
        start_stop_coefficient: start_stop_radius,
        files,
    })?;
    Ok(())
}

fn list_catalog() -> Outcome {
    #[derive(Serialize)]
    struct Row {
        #[serde(flatten)]
        check: essprk::methods::EntryCheck,
        start_stop: bool,
    }
    let rows: anyhow::Result<Vec<Row>> = catalog()
        .iter()
        .map(|e| Ok(Row { check: e.verify()?, start_stop: e.r.is_some() }))
        .collect();
    print_json(&rows?)?;
    Ok(())
}

fn convergence(scheme: &str, start: Option<PathBuf>, stop: Option<PathBuf>, main_only: bool) -> Outcome {
    if main_only && (start.is_some() || stop.is_some()) {
        return Err(usage("--main-only cannot be combined with --start/--stop"));
    }
    let m = resolve(scheme, start.as_deref(), stop.as_deref())?;
    let report = if main_only {
        vdp_convergence_single(&m.main)?
    } else {
        match m.scheme()? {
            Some(s) => vdp_convergence(&s)?,
            None => {
                warn!("{} has no starting/stopping methods; running the main method alone", m.label);
                vdp_convergence_single(&m.main)?
            }
        }
    };
    match report.slope {
        Some(s) => info!("{}: observed order {s:.3}", m.label),
        None => warn!("{}: too few points above reference accuracy to fit an order", m.label),
    }
    report.write_csv(std::io::stdout().lock()).map_err(anyhow::Error::from)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn burgers(
    scheme: &str,
    ic: Ic,
    sigma: f64,
    tf: Option<f64>,
    m: usize,
    start: Option<PathBuf>,
    stop: Option<PathBuf>,
) -> Outcome {
    if !(sigma > 0.0) {
        return Err(usage("--sigma must be positive"));
    }
    let tf = tf.unwrap_or(ic.default_tf());
    if !(tf > 0.0) {
        return Err(usage("--tf must be positive"));
    }
    if m < 2 {
        return Err(usage("--m must be at least 2"));
    }
    let res = resolve(scheme, start.as_deref(), stop.as_deref())?;
    let grid = BurgersGrid::new(m, ic.profile())?;
    let report = match res.scheme()? {
        Some(s) => run_tvd(&s, &grid, sigma, tf)?,
        None => {
            warn!("{} has no starting/stopping methods; running the main method alone", res.label);
            let dt = sigma * essprk::experiments::dt_fe(&grid)?;
            let n = essprk::experiments::steps_to(tf, dt).max(3);
            tvd_sequence(&res.main, &res.main, &res.main, n - 2, &grid, sigma)?
        }
    };
    info!(
        "{}: {} steps to t = {:.4}, final TV {:.12}, monotone {}, largest increase {:.3e}",
        res.label,
        report.steps,
        report.final_time,
        report.final_tv(),
        report.monotone,
        report.max_increase
    );
    report.write_csv(std::io::stdout().lock()).map_err(anyhow::Error::from)?;
    Ok(())
}

fn sigma_table(m: usize, tf: f64, tol: f64, ic: Ic) -> Outcome {
    if m < 2 || !(tf > 0.0) || !(tol > 0.0) {
        return Err(usage("--m must be at least 2 and --tf, --tol positive"));
    }
    let grid = BurgersGrid::new(m, ic.profile())?;
    let mut rows = Vec::new();
    for e in catalog().iter().filter(|e| e.r.is_some()) {
        let scheme = e.scheme()?;
        let sigma = max_tvd_sigma(&scheme, &grid, tf, tol)?;
        info!("{}: sigma {:.3} (C = {:.4})", e.label, sigma, scheme.c);
        rows.push(SigmaRow::new(e.q, e.p, &scheme, sigma));
    }
    rows.sort_by(|a, b| (a.q, a.p, a.s).cmp(&(b.q, b.p, b.s)));
    write_sigma_csv(&rows, std::io::stdout().lock()).map_err(anyhow::Error::from)?;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Check { scheme, tol } => check(&scheme, tol),
        Command::Ssp { scheme, tol } => ssp(&scheme, tol),
        Command::Optimize { s, q, p, seed, restarts, max_iterations, out, start_stop } => {
            optimize(s, q, p, seed, restarts, max_iterations, out, start_stop)
        }
        Command::Catalog => list_catalog(),
        Command::Convergence { scheme, start, stop, main_only } => convergence(&scheme, start, stop, main_only),
        Command::Burgers { scheme, ic, sigma, tf, m, start, stop } => burgers(&scheme, ic, sigma, tf, m, start, stop),
        Command::SigmaTable { m, tf, tol, ic } => sigma_table(m, tf, tol, ic),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
