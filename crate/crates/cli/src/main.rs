//! `swayopt`: design, simulate and analyze bang-off-bang velocity commands.

mod repro;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swayopt::analysis;
use swayopt::closed_form;
use swayopt::designer::{self, DesignRequest, DesignResult};
use swayopt::io::{self as sio, PlantJson, ProfileJson};
use swayopt::plant::{self, SimOptions};
use swayopt::tdfilter::ComplexWindow;
use swayopt::{Error, Plant};

#[derive(Parser, Debug)]
#[command(
    name = "swayopt",
    version,
    about = "Minimum-time bang-off-bang commands for oscillatory plants"
)]
struct Cli {
    /// Write a reference data set (ω = 2π rad/s, V = 240 mm/s) into --out-dir.
    #[arg(long, value_enum)]
    repro: Option<repro::Figure>,
    /// Directory for --repro output.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Terminal displacement in mm; overrides the model file.
    #[arg(long, global = true)]
    xf: Option<f64>,
    /// Read model frequencies as Hz instead of rad/s.
    #[arg(long, global = true)]
    hz: bool,
    /// Worker threads (default: available parallelism, capped by SWAYOPT_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design a profile, or a table of designs with --grid.
    Design(DesignArgs),
    /// Residual energy over a range of frequency ratios for a fixed profile.
    Sweep(SweepArgs),
    /// Zeros of the designed filters over a displacement range.
    Loci(LociArgs),
    /// Displacements where the optimal switch structure changes.
    Transitions(TransitionArgs),
    /// Exact simulation of a profile.
    Simulate(SimulateArgs),
    /// Closed-form zone solutions over a displacement range.
    Zones(ZonesArgs),
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Plant model JSON.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Also null the frequency sensitivity of every mode.
    #[arg(long)]
    robust: bool,
    /// Cap on the switch count (even).
    #[arg(long, default_value_t = designer::DEFAULT_MAX_SWITCHES)]
    max_switches: usize,
    /// Use the undamped single-mode closed form.
    #[arg(long)]
    closed_form: bool,
    /// Design every displacement of `LO,HI,N` and write a CSV table.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(f64, f64, usize)>,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Profile JSON; designed from the model when absent.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Design the robust profile when no --profile is given.
    #[arg(long)]
    robust: bool,
    #[arg(long, default_value_t = 0.7)]
    ratio_min: f64,
    #[arg(long, default_value_t = 1.3)]
    ratio_max: f64,
    #[arg(long, default_value_t = 121)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct WindowArgs {
    /// Window bounds in rad/s; defaults scale with the first mode frequency.
    #[arg(long, allow_hyphen_values = true)]
    re_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    re_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    im_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    im_max: Option<f64>,
    /// Newton seeds along the real and imaginary axes.
    #[arg(long, default_value_t = 12)]
    seeds_re: usize,
    #[arg(long, default_value_t = 32)]
    seeds_im: usize,
}

impl WindowArgs {
    fn window(&self, omega: f64) -> Result<ComplexWindow<f64>, Error> {
        ComplexWindow::new(
            self.re_min.unwrap_or(-0.5 * omega),
            self.re_max.unwrap_or(0.5 * omega),
            self.im_min.unwrap_or(0.1 * omega),
            self.im_max.unwrap_or(2.0 * omega),
        )
    }
}

#[derive(Args, Debug)]
struct LociArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 0.0)]
    xf_min: f64,
    #[arg(long)]
    xf_max: f64,
    #[arg(long, default_value_t = 61)]
    steps: usize,
    /// Report the robust designs instead of the non-robust ones.
    #[arg(long)]
    robust: bool,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TransitionArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 0.0)]
    xf_min: f64,
    #[arg(long)]
    xf_max: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Profile JSON.
    #[arg(long)]
    profile: PathBuf,
    /// Uniform sampling step in s, in addition to the switch times.
    #[arg(long)]
    dt: Option<f64>,
    /// Continue at rest command up to this time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Include the frequency-sensitivity states.
    #[arg(long)]
    augmented: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ZonesArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 0.0)]
    xf_min: f64,
    #[arg(long)]
    xf_max: f64,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected LO,HI,N".into());
    }
    let lo = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let n = parts[2]
        .trim()
        .parse::<usize>()
        .map_err(|e| e.to_string())?;
    if !(hi > lo && lo >= 0.0 && n >= 1) {
        return Err("need 0 <= LO < HI and N >= 1".into());
    }
    Ok((lo, hi, n))
}

/// Failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Input(String),
    Output(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(Error::Infeasible(_)) => 2,
            Failure::Core(Error::Domain(_) | Error::Contract(_)) | Failure::Input(_) => 3,
            Failure::Core(_) | Failure::Output(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Core(Error::Infeasible(_)) => "infeasible",
            Failure::Core(Error::Domain(_)) => "domain",
            Failure::Core(Error::Contract(_)) => "contract",
            Failure::Core(Error::Solver(_)) => "solver",
            Failure::Core(Error::MissingSensitivity) => "missing_sensitivity",
            Failure::Core(Error::ZeroSearch(_)) => "zero_search",
            Failure::Input(_) => "input",
            Failure::Output(_) => "output",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Input(m) | Failure::Output(m) => m.clone(),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_plant(args: &ModelArg, cli: &Cli) -> CliResult<Plant> {
    let doc = PlantJson::parse(&read_text(&args.model)?)?;
    let plant = doc.to_plant(cli.hz)?;
    Ok(match cli.xf {
        Some(x) => plant.with_x_f(x)?,
        None => plant,
    })
}

fn load_profile(path: &Path) -> CliResult<swayopt::Profile> {
    Ok(ProfileJson::parse(&read_text(path)?)?.to_profile()?)
}

/// Writes through `f` to `path`, or to standard output.
pub fn emit(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> swayopt::Result<()>,
) -> CliResult<()> {
    match path {
        Some(p) => {
            let file = fs::File::create(p)
                .map_err(|e| Failure::Output(format!("{}: {e}", p.display())))?;
            let mut w = io::BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| Failure::Output(e.to_string()))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush().map_err(|e| Failure::Output(e.to_string()))
        }
    }
}

fn summary(r: &DesignResult) -> String {
    let mut s = format!("switches: {}\nt_f: {:.9} s\n", r.n_switches, r.t_f());
    for c in &r.constraint_residuals {
        s.push_str(&format!("residual {}: {:.3e}\n", c.label, c.value));
    }
    let pmp = match &r.pmp_certificate {
        Some(c) if c.passed => "passed".to_string(),
        Some(c) => format!(
            "FAILED (fit {:.2e}, {} sign violations)",
            c.fit_residual,
            c.violations.len()
        ),
        None => "not run".to_string(),
    };
    s.push_str(&format!("costate certificate: {pmp}\n"));
    s
}

fn run_design(args: &DesignArgs, cli: &Cli) -> CliResult<()> {
    let plant = load_plant(&args.model, cli)?;
    let req = DesignRequest::new(plant, args.robust).with_max_switches(args.max_switches);
    let one = |req: &DesignRequest| -> swayopt::Result<DesignResult> {
        if args.closed_form {
            designer::design_closed_form(req)
        } else {
            designer::design(req)
        }
    };
    if let Some((lo, hi, n)) = args.grid {
        let xs = grid_points(lo, hi, n);
        let results = if args.closed_form {
            xs.iter().map(|&x| one(&req.with_x_f(x)?)).collect()
        } else {
            designer::design_sweep(&req, &xs)
        };
        let rows: Vec<(f64, DesignResult)> = xs
            .iter()
            .zip(results)
            .map(|(&x, r)| r.map(|r| (x, r)))
            .collect::<swayopt::Result<_>>()?;
        return emit(args.out.as_deref(), |w| sio::write_designs(w, &rows));
    }
    let result = one(&req)?;
    eprint!("{}", summary(&result));
    let doc = ProfileJson::from_profile(&result.profile);
    emit(args.out.as_deref(), |w| {
        writeln!(w, "{}", doc.to_json()).map_err(|e| Error::Contract(e.to_string()))
    })
}

/// `n` points over `(lo, hi]`, or `[lo, hi]` when `lo > 0`.
pub fn grid_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    if lo > 0.0 {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    } else {
        (1..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect()
    }
}

fn run_sweep(args: &SweepArgs, cli: &Cli) -> CliResult<()> {
    let plant = load_plant(&args.model, cli)?;
    let profile = match &args.profile {
        Some(p) => load_profile(p)?,
        None => designer::design(&DesignRequest::new(plant.clone(), args.robust))?.profile,
    };
    let points = analysis::robustness_sweep(
        &profile,
        &plant,
        (args.ratio_min, args.ratio_max),
        args.points,
    )?;
    emit(args.out.as_deref(), |w| sio::write_sweep(w, &points))
}

fn run_loci(args: &LociArgs, cli: &Cli) -> CliResult<()> {
    let plant = load_plant(&args.model, cli)?;
    let window = args.window.window(plant.modes()[0].omega_n())?;
    let seeds = (args.window.seeds_re, args.window.seeds_im);
    let points = analysis::loci_sweep(
        &plant,
        (args.xf_min, args.xf_max),
        &window,
        args.steps,
        seeds,
    )?;
    let chosen: Vec<_> = points
        .into_iter()
        .filter(|p| p.robust == args.robust)
        .collect();
    emit(args.out.as_deref(), |w| sio::write_loci(w, &chosen))
}

fn run_transitions(args: &TransitionArgs, cli: &Cli) -> CliResult<()> {
    let plant = load_plant(&args.model, cli)?;
    let points = analysis::find_transitions(&plant, (args.xf_min, args.xf_max))?;
    emit(args.out.as_deref(), |w| sio::write_transitions(w, &points))
}

fn run_simulate(args: &SimulateArgs, cli: &Cli) -> CliResult<()> {
    let plant = load_plant(&args.model, cli)?;
    let profile = load_profile(&args.profile)?;
    let opts = SimOptions {
        augmented: args.augmented,
        dt: args.dt,
        t_end: args.t_end,
    };
    let traj = plant::simulate(&plant, &profile, &opts)?;
    emit(args.out.as_deref(), |w| sio::write_trajectory(w, &traj))
}

fn run_zones(args: &ZonesArgs, cli: &Cli) -> CliResult<()> {
    let plant = load_plant(&args.model, cli)?;
    if plant.modes().len() != 1 || !plant.is_undamped() {
        return Err(Error::Domain("zones need a single undamped mode".into()).into());
    }
    let xs = grid_points(args.xf_min, args.xf_max, args.points);
    let rows = closed_form::zone_sweep(&xs, plant.modes()[0].omega_n(), plant.v_max())?;
    emit(args.out.as_deref(), |w| sio::write_zones(w, &rows))
}

fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let mut n = flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Ok(v) = std::env::var("SWAYOPT_THREADS") {
        let cap: usize = v.trim().parse().map_err(|_| {
            Failure::Input(format!(
                "SWAYOPT_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        n = n.min(cap.max(1));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| Failure::Output(format!("thread pool: {e}")))
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    if let Some(fig) = cli.repro {
        return repro::run(fig, cli.xf, &cli.out_dir);
    }
    match &cli.command {
        Some(Command::Design(a)) => run_design(a, cli),
        Some(Command::Sweep(a)) => run_sweep(a, cli),
        Some(Command::Loci(a)) => run_loci(a, cli),
        Some(Command::Transitions(a)) => run_transitions(a, cli),
        Some(Command::Simulate(a)) => run_simulate(a, cli),
        Some(Command::Zones(a)) => run_zones(a, cli),
        None => Err(Failure::Input("a subcommand or --repro is required".into())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let f = Failure::Input(e.to_string().trim().to_string());
            report(&f);
            return ExitCode::from(f.code());
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(&f);
            ExitCode::from(f.code())
        }
    }
}

fn report(f: &Failure) {
    let doc =
        serde_json::json!({ "error": f.kind(), "message": f.message(), "exit_code": f.code() });
    eprintln!("{doc}");
}
