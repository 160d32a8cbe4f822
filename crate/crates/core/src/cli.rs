//! `energy-sde` command line. Each subcommand writes one CSV into `--out`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiments::{
    convergence_study, coupled_errors, log_log_slope, moment_estimate, persistence_estimate,
    sensitivity_sweep, Phi,
};
use crate::io::{load_config, write_csv, Cell, CsvArtifact, RunConfig};
use crate::model::{Matrix4, Param};
use crate::sde::{simulate, simulate_ensemble, Positivity, Scheme, DEFAULT_EPS};
use crate::stability::{classify_equilibrium, find_equilibria, persistence_bound, Branch, PersistenceBound};

/// Environment variable consulted for the master seed when `--seed` is absent.
pub const SEED_ENV: &str = "ENERGY_SDE_SEED";

const COMPONENTS: [&str; 4] = ["X1", "X2", "X3", "X4"];

#[derive(Debug, Parser)]
#[command(name = "energy-sde", version, about = "Stochastic energy supply-demand model")]
struct Cli {
    /// JSON run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides ENERGY_SDE_SEED and the config).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    #[arg(long, global = true, value_name = "F")]
    dt: Option<f64>,
    #[arg(long = "t-end", global = true, value_name = "F")]
    t_end: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    paths: Option<usize>,
    #[arg(long, global = true, value_enum)]
    positivity: Option<PositivityArg>,
    /// Floor of the projection policy.
    #[arg(long, global = true, value_name = "F")]
    eps: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PositivityArg {
    Projection,
    Log,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum At {
    Origin,
    NoImport,
    ImportThreshold,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One trajectory: trajectory.csv
    Simulate,
    /// Per-time ensemble statistics: ensemble.csv
    Ensemble,
    /// Equilibrium branches: equilibria.csv
    Equilibria,
    /// Linearised stability of equilibria: stability.csv
    Stability {
        #[arg(long, value_enum, default_value = "all")]
        at: At,
    },
    /// Strong error tables for both schemes: convergence.csv
    Converge,
    /// Weak error of one coordinate: weak_error.csv
    WeakError {
        #[arg(long, value_parser = parse_phi)]
        phi: Option<Phi>,
    },
    /// p-th moment of the state norm over time: moments.csv
    Moments {
        #[arg(long)]
        p: Option<f64>,
    },
    /// Persistence bound and empirical time averages: persistence.csv
    Persistence,
    /// Normalised sensitivity indices of every parameter: sensitivity.csv
    Sensitivity,
}

fn parse_phi(s: &str) -> std::result::Result<Phi, String> {
    s.parse()
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Equilibria => "equilibria",
            Command::Stability { .. } => "stability",
            Command::Converge => "converge",
            Command::WeakError { .. } => "weak-error",
            Command::Moments { .. } => "moments",
            Command::Persistence => "persistence",
            Command::Sensitivity => "sensitivity",
        }
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit status:
/// 0 success, 1 usage or configuration error, 2 numeric failure.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                2
            } else {
                1
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    apply_overrides(&cli, &mut cfg)?;
    cfg.validate()?;

    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let ctx = Ctx {
        cfg: &cfg,
        out_dir: &out_dir,
        command: cli.command.name(),
        hash: cfg.hash(),
    };

    let artifact = match &cli.command {
        Command::Simulate => cmd_simulate(&ctx)?,
        Command::Ensemble => cmd_ensemble(&ctx)?,
        Command::Equilibria => cmd_equilibria(&ctx)?,
        Command::Stability { at } => cmd_stability(&ctx, *at)?,
        Command::Converge => cmd_converge(&ctx)?,
        Command::WeakError { phi } => cmd_weak_error(&ctx, phi.unwrap_or(cfg.experiments.weak_phi), cli.scheme)?,
        Command::Moments { p } => cmd_moments(&ctx, p.unwrap_or(cfg.experiments.moment_p))?,
        Command::Persistence => cmd_persistence(&ctx)?,
        Command::Sensitivity => cmd_sensitivity(&ctx)?,
    };
    write_csv(&artifact)?;
    println!("wrote {} ({} rows)", artifact.path.display(), artifact.rows.len());
    Ok(())
}

fn apply_overrides(cli: &Cli, cfg: &mut RunConfig) -> Result<()> {
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    } else if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.sim.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned 64-bit integer")))?;
    }
    if let Some(s) = cli.scheme {
        cfg.sim.scheme = s;
    }
    let error_study = matches!(cli.command, Command::Converge | Command::WeakError { .. });
    if let Some(dt) = cli.dt {
        if error_study {
            cfg.experiments.dt_list = vec![dt];
        } else {
            cfg.sim.dt = dt;
        }
    }
    if let Some(t) = cli.t_end {
        match cli.command {
            Command::Converge | Command::WeakError { .. } => cfg.experiments.error_t_end = t,
            Command::Sensitivity => cfg.experiments.sensitivity_t_end = t,
            _ => cfg.sim.t_end = t,
        }
    }
    if let Some(n) = cli.paths {
        match cli.command {
            Command::Converge | Command::WeakError { .. } => cfg.experiments.error_paths = n,
            Command::Sensitivity => cfg.experiments.sensitivity_paths = n,
            _ => cfg.experiments.n_paths = n,
        }
    }
    match (cli.positivity, cli.eps) {
        (Some(PositivityArg::Projection), eps) => {
            let current = match cfg.sim.positivity {
                Positivity::Projection { eps } => eps,
                _ => DEFAULT_EPS,
            };
            cfg.sim.positivity = Positivity::Projection {
                eps: eps.unwrap_or(current),
            };
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config("--eps applies only to --positivity projection".into()))
        }
        (Some(PositivityArg::Log), None) => cfg.sim.positivity = Positivity::LogDomain,
        (Some(PositivityArg::None), None) => cfg.sim.positivity = Positivity::None,
        (None, Some(eps)) => match cfg.sim.positivity {
            Positivity::Projection { .. } => cfg.sim.positivity = Positivity::Projection { eps },
            other => {
                return Err(Error::Config(format!(
                    "--eps applies only to the projection policy (configured: {})",
                    other.name()
                )))
            }
        },
        (None, None) => {}
    }
    Ok(())
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out_dir: &'a Path,
    command: &'static str,
    hash: String,
}

impl Ctx<'_> {
    fn artifact(&self, file: &str, header: &[&str]) -> CsvArtifact {
        let mut a = CsvArtifact::new(self.out_dir.join(file), header);
        a.meta("tool", format!("energy-sde {}", env!("CARGO_PKG_VERSION")))
            .meta("command", self.command)
            .meta("config_hash", &self.hash)
            .meta("seed", self.cfg.sim.seed);
        a
    }
}

fn prefixed(prefix: &str) -> Vec<String> {
    COMPONENTS.iter().map(|c| format!("{prefix}{c}")).collect()
}

fn cmd_simulate(ctx: &Ctx) -> Result<CsvArtifact> {
    let cfg = ctx.cfg;
    let traj = simulate(&cfg.sim, &cfg.model, &cfg.noise)?;
    let mut a = ctx.artifact("trajectory.csv", &["t", "X1", "X2", "X3", "X4", "clamps"]);
    a.meta("scheme", cfg.sim.scheme)
        .meta("positivity", cfg.sim.positivity.name())
        .meta("total_clamps", traj.applied_clamps);
    for ((t, x), c) in traj.times.iter().zip(&traj.states).zip(&traj.cumulative_clamps) {
        let mut row: Vec<Cell> = vec![(*t).into()];
        row.extend(x.iter().map(|&v| Cell::Float(v)));
        row.push((*c).into());
        a.push(row);
    }
    Ok(a)
}

fn cmd_ensemble(ctx: &Ctx) -> Result<CsvArtifact> {
    let cfg = ctx.cfg;
    let s = simulate_ensemble(&cfg.sim, &cfg.model, &cfg.noise, cfg.experiments.n_paths)?;
    let mut header = vec!["t".to_string()];
    for p in ["mean_", "var_", "min_", "max_"] {
        header.extend(prefixed(p));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut a = ctx.artifact("ensemble.csv", &header);
    a.meta("scheme", cfg.sim.scheme)
        .meta("positivity", cfg.sim.positivity.name())
        .meta("n_paths", s.n_paths)
        .meta("total_clamps", s.total_clamps);
    for k in 0..s.times.len() {
        let mut row: Vec<Cell> = vec![s.times[k].into()];
        for block in [&s.mean, &s.variance, &s.min, &s.max] {
            row.extend(block[k].iter().map(|&v| Cell::Float(v)));
        }
        a.push(row);
    }
    Ok(a)
}

fn cmd_equilibria(ctx: &Ctx) -> Result<CsvArtifact> {
    let cfg = ctx.cfg;
    let eqs = find_equilibria(&cfg.model)?;
    let mut a = ctx.artifact(
        "equilibria.csv",
        &["branch", "X1", "X2", "X3", "X4", "feasible", "residual", "reason"],
    );
    for e in &eqs {
        let mut row: Vec<Cell> = vec![e.branch.name().into()];
        row.extend(e.point.iter().map(|&v| Cell::Float(v)));
        row.push(e.feasible.into());
        row.push(if e.feasible { Cell::Float(e.residual(&cfg.model)) } else { Cell::Empty });
        row.push(e.infeasibility_reason.clone().into());
        a.push(row);
    }
    Ok(a)
}

fn cmd_stability(ctx: &Ctx, at: At) -> Result<CsvArtifact> {
    let cfg = ctx.cfg;
    let eqs = find_equilibria(&cfg.model)?;
    let p = cfg.experiments.lmi_p_diag.map(|d| Matrix4::from_diagonal(&d.into()));
    let mut header: Vec<String> = ["branch", "X1", "X2", "X3", "X4"].map(String::from).to_vec();
    for i in 1..=4 {
        header.push(format!("eig{i}_re"));
        header.push(format!("eig{i}_im"));
    }
    header.extend(
        ["max_real_part", "verdict", "lmi_feasible", "lmi_lambda_max", "alpha", "decay_rate_bound"]
            .map(String::from),
    );
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut a = ctx.artifact("stability.csv", &header);
    let wanted = |b: Branch| match at {
        At::Origin => b == Branch::Trivial,
        At::NoImport => b == Branch::NoImport,
        At::ImportThreshold => b == Branch::ImportThreshold,
        At::All => true,
    };
    for e in eqs.iter().filter(|e| wanted(e.branch)) {
        let mut row: Vec<Cell> = vec![e.branch.name().into()];
        row.extend(e.point.iter().map(|&v| Cell::Float(v)));
        if !e.feasible {
            eprintln!(
                "note: {} equilibrium infeasible: {}",
                e.branch,
                e.infeasibility_reason.as_deref().unwrap_or("unknown")
            );
            row.extend(std::iter::repeat_n(Cell::Empty, 9));
            row.push("infeasible".into());
            row.extend(std::iter::repeat_n(Cell::Empty, 4));
            a.push(row);
            continue;
        }
        let r = classify_equilibrium(&cfg.model, e, &cfg.noise, p.as_ref())?;
        let mut ev = r.eigenvalues;
        ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
        for z in ev {
            row.push(z.re.into());
            row.push(z.im.into());
        }
        row.push(r.max_real_part.into());
        row.push(r.verdict.name().into());
        row.push(r.lmi.feasible.into());
        row.push(r.lmi.lambda_max.into());
        row.push(r.lmi.alpha.into());
        row.push(r.lmi.decay_rate_bound.into());
        a.push(row);
    }
    Ok(a)
}

fn cmd_converge(ctx: &Ctx) -> Result<CsvArtifact> {
    let cfg = ctx.cfg;
    let setup = cfg.error_setup()?;
    let phi = cfg.experiments.weak_phi;
    let mut a = ctx.artifact(
        "convergence.csv",
        &[
            "scheme",
            "dt",
            "mean_square_error",
            "mean_square_std_error",
            "rms_error",
            "weak_phi",
            "weak_error",
            "fitted_rate",
            "mean_square_slope",
        ],
    );
    a.meta("t_end", setup.t_end)
        .meta("n_paths", setup.n_paths)
        .meta("refinement", setup.refinement)
        .meta("x0", format!("{:?}", setup.x0))
        .meta("positivity", setup.positivity.name());
    for scheme in [Scheme::EulerMaruyama, Scheme::Milstein] {
        let t = convergence_study(scheme, &cfg.model, &cfg.noise, &setup, &cfg.experiments.dt_list, Some(phi))?;
        let weak = t.weak_errors.clone().unwrap_or_default();
        for (i, &dt) in t.dt_values.iter().enumerate() {
            a.push(vec![
                scheme.name().into(),
                dt.into(),
                t.strong_errors[i].into(),
                t.strong_std_errors[i].into(),
                t.rms_errors[i].into(),
                phi.name().into(),
                weak[i].into(),
                t.fitted_rate.into(),
                t.mean_square_slope.into(),
            ]);
        }
        println!(
            "{}: strong order {}",
            scheme,
            t.fitted_rate.map_or("n/a".into(), |r| format!("{r:.3}"))
        );
    }
    Ok(a)
}

fn cmd_weak_error(ctx: &Ctx, phi: Phi, only: Option<Scheme>) -> Result<CsvArtifact> {
    let cfg = ctx.cfg;
    let setup = cfg.error_setup()?;
    let mut a = ctx.artifact(
        "weak_error.csv",
        &[
            "scheme",
            "phi",
            "dt",
            "weak_error",
            "std_error",
            "mean_coarse",
            "mean_reference",
            "fitted_rate",
        ],
    );
    a.meta("t_end", setup.t_end)
        .meta("n_paths", setup.n_paths)
        .meta("refinement", setup.refinement)
        .meta("x0", format!("{:?}", setup.x0));
    let schemes = match only {
        Some(s) => vec![s],
        None => vec![Scheme::EulerMaruyama, Scheme::Milstein],
    };
    let dts = &cfg.experiments.dt_list;
    for scheme in schemes {
        let rows = dts
            .iter()
            .map(|&dt| Ok(coupled_errors(scheme, &cfg.model, &cfg.noise, &setup, dt)?.weak(phi)))
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<f64> = rows.iter().map(|w| w.value).collect();
        let rate = log_log_slope(dts, &values);
        for (dt, w) in dts.iter().zip(&rows) {
            a.push(vec![
                scheme.name().into(),
                phi.name().into(),
                (*dt).into(),
                w.value.into(),
                w.std_error.into(),
                w.mean_coarse.into(),
                w.mean_reference.into(),
                rate.into(),
            ]);
        }
    }
    Ok(a)
}

fn cmd_moments(ctx: &Ctx, p: f64) -> Result<CsvArtifact> {
    let cfg = ctx.cfg;
    let r = moment_estimate(p, &cfg.sim, &cfg.model, &cfg.noise, cfg.experiments.n_paths)?;
    let mut a = ctx.artifact("moments.csv", &["t", "moment", "std_error", "running_max"]);
    a.meta("p", p)
        .meta("n_paths", cfg.experiments.n_paths)
        .meta("sup", r.sup)
        .meta("sup_std_error", r.sup_std_error)
        .meta("sup_time", r.sup_time)
        .meta("plateau", r.plateau);
    for k in 0..r.times.len() {
        a.push(vec![
            r.times[k].into(),
            r.moments[k].into(),
            r.std_errors[k].into(),
            r.running_max[k].into(),
        ]);
    }
    println!("sup E|X|^{p} = {:.6e} at t = {} (plateau: {})", r.sup, r.sup_time, r.plateau);
    Ok(a)
}

fn cmd_persistence(ctx: &Ctx) -> Result<CsvArtifact> {
    let cfg = ctx.cfg;
    let spec = cfg.persistence_spec();
    let bound = persistence_bound(&spec, &cfg.noise)?;
    let est = persistence_estimate(spec.c, &cfg.sim, &cfg.model, &cfg.noise, cfg.experiments.n_paths)?;
    let mut a = ctx.artifact("persistence.csv", &["quantity", "value"]);
    a.meta("n_paths", cfg.experiments.n_paths)
        .meta("c", format!("{:?}", spec.c))
        .meta("eta", spec.eta)
        .meta("kappa", spec.kappa);
    let (status, value) = match bound {
        PersistenceBound::Bound { value } => ("bound", Some(value)),
        PersistenceBound::ConditionFails { .. } => ("condition-fails", None),
        PersistenceBound::Unbounded { .. } => ("unbounded", None),
    };
    a.push(vec!["noise_penalty".into(), spec.noise_penalty(&cfg.noise).into()]);
    a.push(vec!["bound_status".into(), status.into()]);
    a.push(vec!["bound".into(), value.into()]);
    a.push(vec!["weighted_average".into(), est.weighted_average.into()]);
    for (name, v) in COMPONENTS.iter().zip(est.component_averages) {
        a.push(vec![format!("avg_{name}").into(), v.into()]);
    }
    Ok(a)
}

fn cmd_sensitivity(ctx: &Ctx) -> Result<CsvArtifact> {
    let cfg = ctx.cfg;
    let setup = cfg.sensitivity_setup();
    let table = sensitivity_sweep(&cfg.model, &cfg.noise, &setup)?;
    let mut a = ctx.artifact(
        "sensitivity.csv",
        &["param", "qoi", "baseline_q", "q_plus", "q_minus", "s_index", "rank", "error"],
    );
    a.meta("t_end", setup.sim.t_end)
        .meta("n_paths", setup.n_paths)
        .meta("delta_fraction", setup.delta_fraction);
    for &qoi in &cfg.experiments.qoi {
        for param in Param::ALL {
            let cell = table.cell(param, qoi).expect("sweep covers every cell");
            let rank = table.rank_of(param, qoi);
            let row = match &cell.result {
                Ok(r) => vec![
                    param.name().into(),
                    qoi.name().into(),
                    r.baseline_q.into(),
                    r.q_plus.into(),
                    r.q_minus.into(),
                    r.s_index.into(),
                    rank.into(),
                    Cell::Empty,
                ],
                Err(e) => vec![
                    param.name().into(),
                    qoi.name().into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    e.clone().into(),
                ],
            };
            a.push(row);
        }
    }
    Ok(a)
}
