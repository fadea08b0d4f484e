//! `riddled`: command-line front end for the riddled-core pipelines.
//!
//! Every subcommand writes its outputs and a `manifest.json` into `--out`.
//! Exit codes: 0 on success, 1 on a usage or configuration error, 2 when the
//! computation itself fails (divergence where a finite run is required,
//! degenerate fits, I/O).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod manifest;
pub mod settings;

use settings::Settings;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) | CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<riddled_core::error::Error> for CliError {
    fn from(e: riddled_core::error::Error) -> Self {
        use riddled_core::error::Error as E;
        match e {
            E::Config(_) | E::Parse { .. } | E::PairCount { .. } | E::EmptyDataset | E::NotInPlusPlane(_) => {
                CliError::Usage(e.to_string())
            }
            E::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "riddled", version, about = "Gradient descent as a dynamical system: spectra, basins and uncertainty exponents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed; every random stream is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Outputs do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Flat key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write two-column plot data files.
    #[arg(long)]
    emit_plot_data: bool,
    /// Regression dataset file (hex-float pairs); the committed one by default.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Dyn {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Initialization in P₊ as plus-plane coordinates `a1,a2`.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    discard_tail: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct Grid {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Cells per axis.
    #[arg(long)]
    res: Option<usize>,
    /// Half-width of both axes.
    #[arg(long)]
    extent: Option<f64>,
    /// Plane-distance threshold D.
    #[arg(long)]
    threshold: Option<f64>,
    /// Train one quadrant and mirror it.
    #[arg(long)]
    shortcut: Option<bool>,
    /// Zoom factor about `--center`.
    #[arg(long)]
    zoom: Option<f64>,
    /// Plane coordinates `u,v` of the zoom centre.
    #[arg(long)]
    center: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct Net {
    /// Hidden layer widths, comma separated.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Training points.
    #[arg(long)]
    points: Option<usize>,
    /// Fraction of labels resampled uniformly.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    parity_threshold: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trace the attractor inside the invariant plane.
    Attractor {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dynamics: Dyn,
    },
    /// Lyapunov spectrum with longitudinal/transverse labels.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dynamics: Dyn,
    },
    /// Finite-time exponent statistics and the diffusion fit.
    Ftle {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dynamics: Dyn,
        /// Window lengths for the positive-fraction table.
        #[arg(long)]
        windows: Option<String>,
        #[arg(long)]
        t_min: Option<usize>,
        #[arg(long)]
        t_max: Option<usize>,
        #[arg(long)]
        t_step: Option<usize>,
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Destination map over a random two-dimensional plane.
    Basin {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
    },
    /// Destination maps for several learning rates on one plane.
    Regimes {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
        /// Learning rates, comma separated.
        #[arg(long)]
        etas: Option<String>,
    },
    /// Uncertainty fraction f(ε) and the fitted exponent φ.
    Uncertainty {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        eps_min: Option<f64>,
        #[arg(long)]
        eps_max: Option<f64>,
        /// Total log-spaced ε values (ignored when --points-per-decade is set).
        #[arg(long)]
        eps_points: Option<usize>,
        #[arg(long)]
        points_per_decade: Option<usize>,
        /// torus-shell, fixed-reference-cube or bit-flip.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Ensemble of single least-significant-bit flips of one initialization.
    Bitflip {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        net: Net,
        /// `mlp` or `minimal`.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        members: Option<usize>,
        /// Plane-distance threshold D (minimal model).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train the multilayer analog and report its parity destination.
    Mlp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        net: Net,
    },
}

macro_rules! flags {
    ($($key:literal => $val:expr),* $(,)?) => {
        vec![$(($key, $val.as_ref().map(|v| v.to_string()))),*]
    };
}

fn dyn_flags(d: &Dyn) -> Vec<(&'static str, Option<String>)> {
    flags!["eta" => d.eta, "epochs" => d.epochs, "start" => d.start, "discard-tail" => d.discard_tail]
}

fn grid_flags(g: &Grid) -> Vec<(&'static str, Option<String>)> {
    flags![
        "eta" => g.eta, "epochs" => g.epochs, "res" => g.res, "extent" => g.extent,
        "threshold" => g.threshold, "shortcut" => g.shortcut, "zoom" => g.zoom, "center" => g.center,
    ]
}

fn net_flags(n: &Net) -> Vec<(&'static str, Option<String>)> {
    flags![
        "hidden" => n.hidden, "eta" => n.eta, "epochs" => n.epochs, "momentum" => n.momentum,
        "weight-decay" => n.weight_decay, "batch" => n.batch, "points" => n.points,
        "noise" => n.noise, "parity-threshold" => n.parity_threshold,
    ]
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
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
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("riddled: {e}");
            e.exit_code()
        }
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    let (name, common, mut fl) = match &cmd {
        Command::Attractor { common, dynamics } => ("attractor", common, dyn_flags(dynamics)),
        Command::Spectrum { common, dynamics } => ("spectrum", common, dyn_flags(dynamics)),
        Command::Ftle {
            common,
            dynamics,
            windows,
            t_min,
            t_max,
            t_step,
            bootstrap,
        } => {
            let mut f = dyn_flags(dynamics);
            f.extend(flags![
                "windows" => windows, "t-min" => t_min, "t-max" => t_max,
                "t-step" => t_step, "bootstrap" => bootstrap,
            ]);
            ("ftle", common, f)
        }
        Command::Basin { common, grid } => ("basin", common, grid_flags(grid)),
        Command::Regimes { common, grid, etas } => {
            let mut f = grid_flags(grid);
            f.extend(flags!["etas" => etas]);
            ("regimes", common, f)
        }
        Command::Uncertainty {
            common,
            eta,
            epochs,
            pairs,
            eps_min,
            eps_max,
            eps_points,
            points_per_decade,
            mode,
            threshold,
        } => (
            "uncertainty",
            common,
            flags![
                "eta" => eta, "epochs" => epochs, "pairs" => pairs, "eps-min" => eps_min,
                "eps-max" => eps_max, "eps-points" => eps_points,
                "points-per-decade" => points_per_decade, "mode" => mode, "threshold" => threshold,
            ],
        ),
        Command::Bitflip {
            common,
            net,
            model,
            members,
            threshold,
        } => {
            let mut f = net_flags(net);
            f.extend(flags!["model" => model, "members" => members, "threshold" => threshold]);
            ("bitflip", common, f)
        }
        Command::Mlp { common, net } => ("mlp", common, net_flags(net)),
    };
    fl.extend(flags![
        "seed" => common.seed,
        "workers" => common.workers,
        "dataset" => common.dataset.as_ref().map(|p| p.display()),
    ]);
    if common.emit_plot_data {
        fl.push(("emit-plot-data", Some("true".into())));
    }
    let config = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            settings::parse_config(&text)?
        }
        None => Default::default(),
    };
    let s = Settings::resolve(&commands::defaults(name), &config, &fl)?;
    let workers: usize = s.get("workers")?;
    if workers == 0 {
        return Err(CliError::Usage("workers must be >= 1".into()));
    }
    let mut run = manifest::Run::new(&common.out, s.get("emit-plot-data")?, workers, s.get("seed")?)?;
    commands::dispatch(name, &s, &mut run)?;
    let mut echo = s.values().clone();
    echo.remove("workers");
    run.finish(name, echo, common.config.as_ref().map(|p| p.display().to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["riddled"]), 1);
        assert_eq!(run(["riddled", "frobnicate"]), 1);
        assert_eq!(run(["riddled", "spectrum", "--no-such-flag"]), 1);
        assert_eq!(run(["riddled", "spectrum", "--eta", "fast"]), 1);
        assert_eq!(run(["riddled", "-V"]), 0);
    }

    #[test]
    fn invalid_values_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["riddled", "spectrum", "--out", out, "--eta=-1"]), 1);
        assert_eq!(run(["riddled", "uncertainty", "--out", out, "--mode", "sideways"]), 1);
        assert_eq!(run(["riddled", "basin", "--out", out, "--workers", "0"]), 1);
        let cfg = dir.path().join("bad.cfg");
        std::fs::write(&cfg, "colour=blue\n").unwrap();
        assert_eq!(run(["riddled", "attractor", "--out", out, "--config", cfg.to_str().unwrap()]), 1);
    }

    #[test]
    fn numerical_failure_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        // Escapes long before the 1000 usable steps a spectrum needs.
        assert_eq!(run(["riddled", "spectrum", "--out", out, "--eta", "50", "--epochs", "5000"]), 2);
    }

    #[test]
    fn config_file_sits_between_defaults_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "# short run\nepochs = 12000\neta = 1.0\n").unwrap();
        let code = run([
            "riddled",
            "attractor",
            "--out",
            out.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--eta",
            "2.5",
        ]);
        assert_eq!(code, 0);
        let m = manifest::verify(&out).unwrap();
        assert_eq!(m.config["epochs"], "12000");
        assert_eq!(m.config["eta"], "2.5");
        assert_eq!(m.config["seed"], "0");
        assert_eq!(m.seeds["master"], 0);
    }
}
