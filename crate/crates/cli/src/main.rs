use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use thinlayer::evolve::{evolve, Scheme};
use thinlayer::generator2d::{assemble_generator, Flavor};
use thinlayer::harness::{
    default_initial_field, default_kurtz_elements, load_config, run_convergence_study, run_gamma_sweep,
    run_kurtz_suite, run_oracle, write_atomic, write_gamma_csv, write_oracle_csv, ConfigOverrides,
    ConvergenceSetup, Manifest, OutputFormat, Reference, RunConfig,
};
use thinlayer::limit::{GridPolicy, LumpedRate};
use thinlayer::montecarlo::{
    calibrate_crossing, simulate_limit_jump_diffusion, simulate_membrane_bm, InitialCondition, JumpRates,
    McConfig, MembraneGeometry,
};
use thinlayer::{Error, LayerField, Result, ScenarioKind, Side};

#[derive(Parser, Debug)]
#[command(name = "thinlayer", version, about = "Membrane diffusion in thin annuli and its limits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Discrete mode-0 resolvent against the closed form at several radial sizes.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1025,2049")]
        sizes: Vec<usize>,
    },
    /// One evolution of the rescaled (or physical) operator at the first thickness.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Initial field CSV (varrho,phi,side,value); defaults to cos φ on top, 0 below.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        physical: bool,
    },
    /// Error table of the thin-layer runs against their limit.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Compare the TwoCircles limit across gamma = 0.5, 1, 2 instead.
        #[arg(long)]
        gamma_sweep: bool,
        /// ThinOverFast only: angle-free data against the closed-form two-state solution.
        #[arg(long)]
        two_state: bool,
    },
    /// Fast-scale residuals and lift/slow-operator gaps along the thickness sequence.
    Kurtz {
        #[command(flatten)]
        common: Common,
    },
    /// Particle runs: membrane Brownian motion, or the limit jump-diffusion with --limit.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        limit: bool,
        /// Spacing of the occupancy curve.
        #[arg(long, default_value_t = 0.05)]
        record_every: f64,
    },
    /// Fits the crossing multiplier against the closed-form resolvent.
    CalibrateMc {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2.0)]
        cal_lambda: f64,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value_t = 4000)]
        cal_particles: usize,
        #[arg(long, default_value_t = 8)]
        max_iter: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LumpedArg {
    FluxMatched,
    Normalized,
    PaperLiteral,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    ImplicitEuler,
    CrankNicolson,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config or run manifest; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<ScenarioKind>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "big-r")]
    big_r: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    thicknesses: Option<Vec<f64>>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    nrad: Option<usize>,
    #[arg(long)]
    nang: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    lumped_rate: Option<LumpedArg>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    crossing_multiplier: Option<f64>,
    /// Use the literal CirclePoint lumped equation and ThinOverFast corrector.
    #[arg(long)]
    paper_literal: bool,
    #[arg(long)]
    format: Option<FormatArg>,
    /// Directory for CSV/JSON outputs and the run manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scenario(s: &str) -> std::result::Result<ScenarioKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            scenario: self.scenario,
            alpha: self.alpha,
            beta: self.beta,
            kappa: self.kappa,
            gamma: self.gamma,
            r: self.r,
            big_r: self.big_r,
            thicknesses: self.thicknesses.clone(),
            t: self.t,
            dt: self.dt,
            n_rad: self.nrad,
            n_ang: self.nang,
            seed: self.seed,
            lambda: self.lambda,
            scheme: self.scheme.map(|s| match s {
                SchemeArg::ImplicitEuler => Scheme::ImplicitEuler,
                SchemeArg::CrankNicolson => Scheme::CrankNicolson,
            }),
            paper_literal: self.paper_literal.then_some(true),
            lumped_rate: self.lumped_rate.map(|l| match l {
                LumpedArg::FluxMatched => LumpedRate::FluxMatched,
                LumpedArg::Normalized => LumpedRate::Normalized,
                LumpedArg::PaperLiteral => LumpedRate::PaperLiteral,
            }),
            n_particles: self.particles,
            crossing_multiplier: self.crossing_multiplier,
            format: self.format.map(|f| match f {
                FormatArg::Csv => OutputFormat::Csv,
                FormatArg::Json => OutputFormat::Json,
            }),
        }
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let (cfg, warnings) = load_config(p)?;
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                cfg
            }
            None => RunConfig::default(),
        };
        self.overrides().apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Collects outputs; prints the primary table and writes files under `--out`.
struct Sink {
    out: Option<PathBuf>,
    manifest: Manifest,
    format: OutputFormat,
}

impl Sink {
    fn new(command: &str, common: &Common, cfg: &RunConfig) -> Result<Self> {
        if let Some(dir) = &common.out {
            fs::create_dir_all(dir)?;
        }
        Ok(Self { out: common.out.clone(), manifest: Manifest::new(command, cfg), format: cfg.format })
    }

    fn file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = &self.out {
            write_atomic(&dir.join(name), bytes)?;
            self.manifest.outputs.push(name.to_string());
        }
        Ok(())
    }

    /// The main table, in the chosen format, to stdout and to `stem.csv|json`.
    fn table<T: Serialize>(&mut self, stem: &str, csv: Vec<u8>, rows: &T) -> Result<()> {
        let (bytes, ext) = match self.format {
            OutputFormat::Csv => (csv, "csv"),
            OutputFormat::Json => {
                let mut b = serde_json::to_vec_pretty(rows)?;
                b.push(b'\n');
                (b, "json")
            }
        };
        std::io::stdout().write_all(&bytes)?;
        self.file(&format!("{stem}.{ext}"), &bytes)
    }

    fn finish(self) -> Result<()> {
        if let Some(dir) = &self.out {
            self.manifest.write(dir)?;
        }
        Ok(())
    }
}

fn csv_of(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn oracle(common: &Common, sizes: &[usize]) -> Result<()> {
    let cfg = common.resolve()?;
    let rows = run_oracle(cfg.lambda, &cfg.params()?, cfg.r, cfg.big_r, sizes)?;
    let mut sink = Sink::new("oracle", common, &cfg)?;
    sink.table("oracle", csv_of(|b| write_oracle_csv(&rows, b))?, &rows)?;
    sink.finish()
}

fn solve(common: &Common, input: Option<&Path>, physical: bool) -> Result<()> {
    let cfg = common.resolve()?;
    let sc = cfg.first_scenario()?;
    let grid = cfg.policy().build(&sc)?;
    let u0 = match input {
        Some(p) => LayerField::read_csv(grid, fs::File::open(p)?)?,
        None => default_initial_field(grid),
    };
    let flavor = if physical { Flavor::Physical } else { Flavor::rescaled_for(cfg.scenario) };
    let gen = assemble_generator(&sc, flavor, &cfg.params()?, &grid)?;
    let u = if cfg.t == 0.0 { u0 } else { evolve(&gen, &u0, cfg.t, cfg.dt.min(cfg.t), cfg.scheme)? };
    let mut sink = Sink::new("solve", common, &cfg)?;
    let csv = csv_of(|b| u.write_csv(b))?;
    std::io::stdout().write_all(&csv)?;
    sink.file("field.csv", &csv)?;
    sink.finish()
}

fn converge(common: &Common, gamma_sweep: bool, two_state: bool) -> Result<()> {
    let cfg = common.resolve()?;
    let mut sink = Sink::new("converge", common, &cfg)?;
    if gamma_sweep {
        let times: Vec<f64> = (1..=10).map(|k| k as f64 * cfg.t / 10.0).collect();
        let policy = GridPolicy { n_lower: 5, n_upper: 5, n_ang: cfg.n_ang };
        let rows = run_gamma_sweep(&cfg.params()?, &[0.5, 1.0, 2.0], &times, policy, cfg.dt)?;
        sink.table("gamma_sweep", csv_of(|b| write_gamma_csv(&rows, b))?, &rows)?;
        return sink.finish();
    }
    let mut setup = ConvergenceSetup::from_config(&cfg)?;
    let grid = setup.grid()?;
    let u0 = if two_state {
        setup.reference = Reference::TwoState;
        LayerField::from_fn(grid, |s, _, _| if s == Side::Upper { 1.0 } else { 0.0 })
    } else {
        default_initial_field(grid)
    };
    let table = run_convergence_study(&setup, &u0, &cfg.thicknesses)?;
    sink.table("errors", csv_of(|b| table.write_csv(b))?, &table)?;
    sink.finish()?;
    table.check_monotone()
}

fn kurtz(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let p = cfg.params()?;
    let el = default_kurtz_elements(cfg.scenario, &p, cfg.r);
    let rep = run_kurtz_suite(cfg.scenario, &p, cfg.r, cfg.policy(), &el, &cfg.thicknesses)?;
    let mut sink = Sink::new("kurtz", common, &cfg)?;
    sink.table("kurtz", csv_of(|b| rep.write_csv(b))?, &rep)?;
    sink.finish()?;
    if rep.fast.windows(2).any(|w| w[1].residual >= w[0].residual) {
        return Err(Error::Internal("fast-scale residuals are not strictly decreasing".into()));
    }
    Ok(())
}

fn mc(common: &Common, limit: bool, record_every: f64) -> Result<()> {
    let cfg = common.resolve()?;
    let p = cfg.params()?;
    let mc_cfg = McConfig {
        n_particles: cfg.n_particles,
        t_end: cfg.t,
        dt: cfg.dt,
        record_every,
        seed: cfg.seed,
        n_bins: 8,
        crossing_multiplier: cfg.crossing_multiplier,
        mirror: false,
    };
    let summary = if limit {
        let rates = JumpRates::new(cfg.scenario, &p, cfg.r, cfg.lumped())?;
        let init = InitialCondition { side: Side::Upper, rho: 1.0, phi: None };
        simulate_limit_jump_diffusion(rates, init, &mc_cfg)?
    } else {
        let geom = MembraneGeometry::new(cfg.r, cfg.big_r)?;
        let init = InitialCondition { side: Side::Upper, rho: 0.5 * (1.0 + cfg.big_r), phi: None };
        simulate_membrane_bm(&p, geom, init, &mc_cfg)?
    };
    let mut sink = Sink::new(if limit { "mc-limit" } else { "mc" }, common, &cfg)?;
    sink.table("occupancy", csv_of(|b| summary.write_occupancy_csv(b))?, &summary)?;
    sink.file("histogram.csv", &csv_of(|b| summary.write_histogram_csv(b))?)?;
    sink.finish()
}

fn calibrate(common: &Common, lambda: f64, horizon: f64, particles: usize, max_iter: usize) -> Result<()> {
    let cfg = common.resolve()?;
    let p = cfg.params()?;
    let geom = MembraneGeometry::new(cfg.r, cfg.big_r)?;
    let init = InitialCondition { side: Side::Upper, rho: 0.5 * (1.0 + cfg.big_r), phi: None };
    let mc_cfg = McConfig {
        n_particles: particles,
        t_end: horizon,
        dt: cfg.dt,
        record_every: horizon,
        seed: cfg.seed,
        n_bins: 8,
        crossing_multiplier: 1.0,
        mirror: false,
    };
    let res = calibrate_crossing(&p, geom, init, &mc_cfg, lambda, max_iter)?;
    let calibrated = RunConfig {
        crossing_multiplier: res.multiplier,
        crossing_residual: res.residual,
        ..cfg.clone()
    };
    let mut sink = Sink::new("calibrate-mc", common, &calibrated)?;
    let json = serde_json::to_vec_pretty(&res)?;
    std::io::stdout().write_all(&json)?;
    println!();
    sink.file("calibration.json", &json)?;
    sink.file("config.json", &serde_json::to_vec_pretty(&calibrated)?)?;
    sink.finish()
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Oracle { common, sizes } => oracle(common, sizes),
        Cmd::Solve { common, input, physical } => solve(common, input.as_deref(), *physical),
        Cmd::Converge { common, gamma_sweep, two_state } => converge(common, *gamma_sweep, *two_state),
        Cmd::Kurtz { common } => kurtz(common),
        Cmd::Mc { common, limit, record_every } => mc(common, *limit, *record_every),
        Cmd::CalibrateMc { common, cal_lambda, horizon, cal_particles, max_iter } => {
            calibrate(common, *cal_lambda, *horizon, *cal_particles, *max_iter)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Internal(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
        Err(_) => ExitCode::from(2),
    }
}
