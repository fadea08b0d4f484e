//! One function per subcommand. Seeds are derived per purpose from the
//! master seed (`seed::derive(master, purpose, 0)`) and recorded in the
//! manifest: `plane` for the slicing plane, `pairs` for uncertainty pairs,
//! `bootstrap` for FTLE bootstrap weights, `reference` for the minimal-model
//! bit-flip reference, `members` for the flipped parameters, and `data`,
//! `noise`, `init`, `shuffle` for multilayer runs.

use std::fmt::Write as _;

use serde_json::json;

use riddled_core::basin::{self, Extents};
use riddled_core::dataset;
use riddled_core::dynamics::{attractor_trace, Status, TrainConfig, DEFAULT_DISCARD_TAIL};
use riddled_core::formats;
use riddled_core::lyapunov::{self, QrBasis, SpectrumOptions};
use riddled_core::mlp::{self, ClassDataset, MlpDestination, MlpParams};
use riddled_core::model::{Dataset, ParamVec};
use riddled_core::symmetry::{self, DestinationLabel, DEFAULT_THRESHOLD_D};
use riddled_core::uncertainty::{self, SamplingMode, UncertaintyOptions};

use crate::manifest::Run;
use crate::settings::Settings;
use crate::CliError;

fn common_defaults() -> Vec<(&'static str, String)> {
    vec![
        ("seed", "0".into()),
        ("workers", riddled_core::parallel::default_workers().to_string()),
        ("emit-plot-data", "false".into()),
        ("dataset", "canonical".into()),
    ]
}

fn net_defaults() -> Vec<(&'static str, String)> {
    let c = mlp::default_config();
    let batch = match c.batch_size {
        riddled_core::dynamics::BatchSize::Size(n) => n,
        riddled_core::dynamics::BatchSize::Full => 0,
    };
    let hidden: Vec<String> = mlp::DEFAULT_HIDDEN.iter().map(|w| w.to_string()).collect();
    vec![
        ("hidden", hidden.join(",")),
        ("eta", c.eta.to_string()),
        ("epochs", c.epochs.to_string()),
        ("momentum", c.momentum.to_string()),
        ("weight-decay", c.weight_decay.to_string()),
        ("batch", batch.to_string()),
        ("points", mlp::DEFAULT_TRAIN_POINTS.to_string()),
        ("noise", mlp::DEFAULT_LABEL_NOISE.to_string()),
        ("parity-threshold", mlp::DEFAULT_PARITY_THRESHOLD.to_string()),
    ]
}

fn grid_defaults() -> Vec<(&'static str, String)> {
    vec![
        ("eta", "2.5".into()),
        ("epochs", "1000".into()),
        ("res", basin::DEFAULT_RESOLUTION.to_string()),
        ("extent", basin::DEFAULT_EXTENT.to_string()),
        ("threshold", DEFAULT_THRESHOLD_D.to_string()),
        ("shortcut", "false".into()),
        ("zoom", "1".into()),
        ("center", "0,0".into()),
    ]
}

pub fn defaults(subcommand: &str) -> Vec<(&'static str, String)> {
    let mut d = common_defaults();
    let dynamics = |epochs: &str| {
        vec![
            ("eta", "2.5".to_string()),
            ("epochs", epochs.to_string()),
            ("start", "0.5,0.5".to_string()),
            ("discard-tail", DEFAULT_DISCARD_TAIL.to_string()),
        ]
    };
    match subcommand {
        "attractor" | "spectrum" => d.extend(dynamics("100000")),
        "ftle" => {
            d.extend(dynamics("2000000"));
            d.extend([
                ("windows", "32,128,512".to_string()),
                ("t-min", "600".to_string()),
                ("t-max", "1000".to_string()),
                ("t-step", "50".to_string()),
                ("bootstrap", lyapunov::DEFAULT_BOOTSTRAP_RESAMPLES.to_string()),
            ]);
        }
        "basin" => d.extend(grid_defaults()),
        "regimes" => {
            d.extend(grid_defaults());
            d.push(("etas", "0.1,1,2,2.5,3".into()));
        }
        "uncertainty" => d.extend([
            ("eta", "2.5".to_string()),
            ("epochs", "1000".to_string()),
            ("pairs", uncertainty::DEFAULT_PAIRS.to_string()),
            ("eps-min", uncertainty::DEFAULT_EPS_MIN.to_string()),
            ("eps-max", uncertainty::DEFAULT_EPS_MAX.to_string()),
            ("eps-points", uncertainty::DEFAULT_EPS_POINTS.to_string()),
            ("points-per-decade", String::new()),
            ("mode", SamplingMode::TorusShell.name().to_string()),
            ("threshold", DEFAULT_THRESHOLD_D.to_string()),
        ]),
        "bitflip" => {
            d.extend(net_defaults());
            d.extend([
                ("model", "mlp".to_string()),
                ("members", "200".to_string()),
                ("threshold", DEFAULT_THRESHOLD_D.to_string()),
            ]);
        }
        "mlp" => d.extend(net_defaults()),
        _ => {}
    }
    d
}

pub fn dispatch(name: &str, s: &Settings, run: &mut Run) -> Result<(), CliError> {
    match name {
        "attractor" => attractor(s, run),
        "spectrum" => spectrum(s, run),
        "ftle" => ftle(s, run),
        "basin" => basin_map(s, run),
        "regimes" => regimes(s, run),
        "uncertainty" => uncertainty_curve(s, run),
        "bitflip" => bitflip(s, run),
        "mlp" => mlp_run(s, run),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

fn load_dataset(s: &Settings, run: &mut Run) -> Result<Dataset, CliError> {
    let data = match s.str("dataset") {
        "canonical" => dataset::canonical(),
        path => dataset::load(path)?,
    };
    run.dataset_sha256 = data.sha256();
    Ok(data)
}

fn start(s: &Settings) -> Result<ParamVec, CliError> {
    let a: Vec<f64> = s.list("start")?;
    if a.len() != 2 {
        return Err(CliError::Usage("start takes two plus-plane coordinates a1,a2".into()));
    }
    Ok(symmetry::from_plus_coords([a[0], a[1], 0.0, 0.0]))
}

fn pair(s: &Settings, key: &str) -> Result<(f64, f64), CliError> {
    let a: Vec<f64> = s.list(key)?;
    if a.len() != 2 {
        return Err(CliError::Usage(format!("{key} takes two comma-separated values")));
    }
    Ok((a[0], a[1]))
}

fn train_config(s: &Settings) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig::with_eta(s.get("eta")?, s.get("epochs")?);
    cfg.validate()?;
    Ok(cfg)
}

fn spectrum_options(s: &Settings) -> Result<SpectrumOptions, CliError> {
    let cfg = train_config(s)?;
    Ok(SpectrumOptions {
        discard_tail: s.get("discard-tail")?,
        ..SpectrumOptions::from_train(&cfg)
    })
}

fn attractor(s: &Settings, run: &mut Run) -> Result<(), CliError> {
    let data = load_dataset(s, run)?;
    let cfg = train_config(s)?;
    let trace = attractor_trace(&start(s)?, &data, &cfg, s.get("discard-tail")?)?;
    run.write("attractor.csv", formats::trace_csv(&trace).as_bytes())?;
    run.plot(
        "attractor.dat",
        formats::plot_data("attractor trace in the invariant plane\nu v", trace.iter().copied()),
    )
}

fn spectrum(s: &Settings, run: &mut Run) -> Result<(), CliError> {
    let data = load_dataset(s, run)?;
    let eta: f64 = s.get("eta")?;
    let theta0 = start(s)?;
    let report = lyapunov::spectrum(&theta0, eta, &data, &spectrum_options(s)?)?;
    run.write_json(
        "spectrum.json",
        &json!({
            "eta": eta,
            "start": theta0.0,
            "lambdas": report.lambdas,
            "labels": report.labels,
            "steps": report.steps,
            "diverged_at": report.diverged_at,
            "mean_log_det": report.mean_log_det,
            "max_exponent": report.max_exponent(),
        }),
    )?;
    run.plot(
        "spectrum.dat",
        formats::plot_data(
            "Lyapunov exponents\nindex lambda",
            report.lambdas.iter().enumerate().map(|(i, l)| (i as f64, *l)),
        ),
    )
}

fn ftle(s: &Settings, run: &mut Run) -> Result<(), CliError> {
    let data = load_dataset(s, run)?;
    let eta: f64 = s.get("eta")?;
    let theta0 = start(s)?;
    let opts = spectrum_options(s)?;
    let (t_min, t_max, t_step): (usize, usize, usize) = (s.get("t-min")?, s.get("t-max")?, s.get("t-step")?);
    if t_step == 0 || t_min == 0 || t_min > t_max {
        return Err(CliError::Usage("need 0 < t-min <= t-max and t-step >= 1".into()));
    }
    let windows: Vec<usize> = s.list("windows")?;
    let stream = lyapunov::log_stream(&theta0, eta, &data, &QrBasis::plus_adapted(), &opts)?;
    let leak = stream.max_longitudinal_leak;
    let mut table = Vec::new();
    for &w in &windows {
        let series = lyapunov::ftle_from_stream(&stream.log_diag, w, 2)?;
        run.write(&format!("ftle_T{w}.csv"), formats::ftle_csv(&series).as_bytes())?;
        run.plot(
            &format!("ftle_T{w}.dat"),
            formats::plot_data(
                &format!("finite-time transverse exponent, T = {w}\nwindow_index lambda3_T"),
                series.values.iter().enumerate().map(|(k, v)| (k as f64, *v)),
            ),
        )?;
        table.push(json!({
            "T": w,
            "windows": series.values.len(),
            "positive_fraction": series.positive_fraction(),
            "mean": series.mean,
            "mean_sq_fluctuation": series.mean_sq_fluctuation,
        }));
    }
    let fit_series = (t_min..=t_max)
        .step_by(t_step)
        .map(|t| lyapunov::ftle_from_stream(&stream.log_diag, t, 2))
        .collect::<Result<Vec<_>, _>>()?;
    let fit = lyapunov::diffusion_fit(&fit_series, (t_min, t_max), s.get("bootstrap")?, run.seed("bootstrap"))?;
    let report = lyapunov::report_from_stream(stream, false);
    run.write_json(
        "ftle.json",
        &json!({
            "eta": eta,
            "start": theta0.0,
            "steps": report.steps,
            "diverged_at": report.diverged_at,
            "lambdas": report.lambdas,
            "labels": report.labels,
            "max_longitudinal_leak": leak,
            "positive_fractions": table,
            "diffusion": {
                "D": fit.d,
                "stderr": fit.stderr,
                "r_squared": fit.r_squared,
                "points": fit.points,
            },
        }),
    )?;
    run.plot(
        "msf.dat",
        formats::plot_data(
            "inverse mean-squared FTLE fluctuation\nT inv_msf",
            fit.points.iter().map(|(t, y, _)| (*t as f64, *y)),
        ),
    )
}

fn plane(s: &Settings, run: &mut Run) -> Result<basin::PlaneSpec, CliError> {
    let res: usize = s.get("res")?;
    let plane = basin::make_plane(run.seed("plane"), Extents::symmetric(s.get("extent")?), (res, res))?;
    let zoom: f64 = s.get("zoom")?;
    let center = pair(s, "center")?;
    if zoom == 1.0 && center == (0.0, 0.0) {
        Ok(plane)
    } else {
        Ok(basin::magnify(&plane, center, zoom, (res, res))?)
    }
}

fn grid_summary(g: &basin::BasinGrid) -> serde_json::Value {
    let counts = g.counts();
    let fractions = g.fractions();
    let by_label: serde_json::Map<String, serde_json::Value> = DestinationLabel::ALL
        .iter()
        .map(|l| {
            let c = l.code() as usize;
            (l.name().to_string(), json!({"cells": counts[c], "fraction": fractions[c]}))
        })
        .collect();
    json!({
        "eta": g.eta,
        "resolution": [g.plane.resolution.0, g.plane.resolution.1],
        "trainings": g.trainings,
        "destinations": by_label,
    })
}

fn basin_map(s: &Settings, run: &mut Run) -> Result<(), CliError> {
    let data = load_dataset(s, run)?;
    let cfg = train_config(s)?;
    let plane = plane(s, run)?;
    let grid = basin::sweep(&plane, &data, &cfg, s.get("threshold")?, s.get("shortcut")?, run.workers)?;
    run.write("basin.grid", grid.to_text().as_bytes())?;
    run.write("basin.ppm", basin::to_ppm(&grid).as_bytes())?;
    run.write_json("basin.json", &grid_summary(&grid))?;
    let fr = grid.fractions();
    run.plot(
        "basin_fractions.dat",
        formats::plot_data(
            "destination fractions (0 PlusPlane, 1 MinusPlane, 2 Divergent, 3 Other)\ncode fraction",
            fr.iter().enumerate().map(|(c, f)| (c as f64, *f)),
        ),
    )
}

fn regimes(s: &Settings, run: &mut Run) -> Result<(), CliError> {
    let data = load_dataset(s, run)?;
    let etas: Vec<f64> = s.list("etas")?;
    let cfg = TrainConfig::with_eta(etas.first().copied().unwrap_or(1.0), s.get("epochs")?);
    let plane = plane(s, run)?;
    let grids = basin::regime_sweep(
        &etas,
        &plane,
        &data,
        &cfg,
        s.get("threshold")?,
        s.get("shortcut")?,
        run.workers,
    )?;
    let mut summary = Vec::new();
    for (k, g) in grids.iter().enumerate() {
        run.write(&format!("regime_{k}.grid"), g.to_text().as_bytes())?;
        run.write(&format!("regime_{k}.ppm"), basin::to_ppm(g).as_bytes())?;
        summary.push(grid_summary(g));
    }
    run.write_json("regimes.json", &summary)?;
    for l in DestinationLabel::ALL {
        run.plot(
            &format!("regimes_{}.dat", l.name()),
            formats::plot_data(
                &format!("fraction of {} cells against learning rate\neta fraction", l.name()),
                grids.iter().map(|g| (g.eta, g.fractions()[l.code() as usize])),
            ),
        )?;
    }
    Ok(())
}

fn uncertainty_curve(s: &Settings, run: &mut Run) -> Result<(), CliError> {
    let data = load_dataset(s, run)?;
    let cfg = train_config(s)?;
    let mode = SamplingMode::parse(s.str("mode"))?;
    let (lo, hi): (f64, f64) = (s.get("eps-min")?, s.get("eps-max")?);
    let eps = match s.optional::<usize>("points-per-decade")? {
        Some(ppd) => uncertainty::eps_grid_per_decade(lo, hi, ppd)?,
        None => uncertainty::eps_grid(lo, hi, s.get("eps-points")?)?,
    };
    let opts = UncertaintyOptions {
        n_pairs: s.get("pairs")?,
        mode,
        seed: run.seed("pairs"),
        threshold_d: s.get("threshold")?,
        workers: run.workers,
        reference: None,
    };
    let curve = uncertainty::uncertainty_curve(&eps, &data, &cfg, &opts)?;
    run.write("curve.csv", formats::curve_csv(&curve).as_bytes())?;
    let fit = if mode == SamplingMode::BitFlip {
        None
    } else {
        Some(uncertainty::fit_uncertainty_exponent(&curve)?)
    };
    run.write_json(
        "fit.json",
        &json!({
            "eta": cfg.eta,
            "mode": mode.name(),
            "pairs": opts.n_pairs,
            "phi": fit.as_ref().map(|f| f.phi),
            "phi_stderr": fit.as_ref().map(|f| f.phi_stderr),
            "intercept": fit.as_ref().map(|f| f.intercept),
            "fit_range": fit.as_ref().map(|f| [f.fit_range.0, f.fit_range.1]),
            "n_points": fit.as_ref().map(|f| f.n_points),
            "excluded": fit.as_ref().map(|f| f.excluded.clone()),
            "boundary_dimension": fit.as_ref().map(|f| f.boundary_dimension(4)),
        }),
    )?;
    run.plot(
        "curve.dat",
        formats::plot_data(
            "uncertainty fraction against perturbation size\nepsilon f",
            curve.points.iter().map(|p| (p.epsilon, p.f)),
        ),
    )
}

struct NetSetup {
    data: ClassDataset,
    params: MlpParams,
    cfg: TrainConfig,
    threshold: f64,
}

fn net_setup(s: &Settings, run: &mut Run) -> Result<NetSetup, CliError> {
    let hidden: Vec<usize> = s.list("hidden")?;
    let batch: usize = s.get("batch")?;
    let clean = mlp::blobs(s.get("points")?, run.seed("data"))?;
    let data = mlp::inject_label_noise(&clean, s.get("noise")?, run.seed("noise"))?;
    let params = MlpParams::random(&mlp::layer_widths(&hidden), run.seed("init"))?;
    let cfg = TrainConfig {
        eta: s.get("eta")?,
        epochs: s.get("epochs")?,
        momentum: s.get("momentum")?,
        weight_decay: s.get("weight-decay")?,
        batch_size: if batch == 0 {
            riddled_core::dynamics::BatchSize::Full
        } else {
            riddled_core::dynamics::BatchSize::Size(batch)
        },
        shuffle_seed: run.seed("shuffle"),
        ..mlp::default_config()
    };
    cfg.validate()?;
    run.dataset_sha256 = data.sha256();
    Ok(NetSetup {
        data,
        params,
        cfg,
        threshold: s.get("parity-threshold")?,
    })
}

fn describe(d: &MlpDestination) -> String {
    match d {
        MlpDestination::Diverged => "diverged".into(),
        MlpDestination::Parity(key) => key
            .iter()
            .map(|(l, js)| {
                let js: Vec<String> = js.iter().map(|j| j.to_string()).collect();
                format!("{l}:{{{}}}", js.join(","))
            })
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn bitflip(s: &Settings, run: &mut Run) -> Result<(), CliError> {
    let members: usize = s.get("members")?;
    let mut lines = String::from("# member flipped_parameter destination\n");
    let report = match s.str("model") {
        "mlp" => {
            let n = net_setup(s, run)?;
            let seed = run.seed("members");
            let idx = uncertainty::flip_indices(n.params.len(), members, seed);
            let (report, dests) =
                mlp::mlp_bitflip_ensemble(&n.params, &n.data, &n.cfg, n.threshold, members, seed, run.workers)?;
            for (m, d) in dests.iter().enumerate() {
                let _ = writeln!(lines, "{m} {} {}", idx[m], describe(d));
            }
            report
        }
        "minimal" => {
            let data = load_dataset(s, run)?;
            let cfg = train_config(s)?;
            let theta = uncertainty::sample_shell(run.seed("reference"));
            let seed = run.seed("members");
            let threshold: f64 = s.get("threshold")?;
            let idx = uncertainty::flip_indices(4, members, seed);
            let report = uncertainty::bitflip_ensemble(&theta, &data, &cfg, threshold, members, seed, run.workers)?;
            for (m, &k) in idx.iter().enumerate() {
                let mut t = theta;
                t[k] = uncertainty::flip_lsb(t[k]);
                let _ = writeln!(lines, "{m} {k} {}", basin::destination(&t, &data, &cfg, threshold).name());
            }
            report
        }
        other => return Err(CliError::Usage(format!("unknown model '{other}' (mlp or minimal)"))),
    };
    run.write("destinations.txt", lines.as_bytes())?;
    run.write_json(
        "bitflip.json",
        &json!({
            "model": s.str("model"),
            "members": report.members,
            "p": report.p,
            "f_pred": report.f_pred,
            "f_emp": report.f_emp,
            "stderr": report.stderr,
            "deviation_in_stderr": (report.f_emp - report.f_pred).abs() / report.stderr,
            "destination_counts": report.destination_counts,
        }),
    )?;
    run.plot(
        "bitflip_counts.dat",
        formats::plot_data(
            "members per destination, most common first\nrank members",
            report.destination_counts.iter().enumerate().map(|(k, c)| (k as f64, *c as f64)),
        ),
    )
}

fn mlp_run(s: &Settings, run: &mut Run) -> Result<(), CliError> {
    let n = net_setup(s, run)?;
    let cfg = TrainConfig {
        record_every: 1,
        ..n.cfg
    };
    let out = mlp::mlp_train(&n.params, &n.data, &cfg)?;
    let parity = mlp::detect_parity(&out.final_theta, n.threshold);
    let dest = mlp::mlp_destination(&out, n.threshold);
    mlp::write_checkpoint(&out.final_theta, run.path("checkpoint.bin"))?;
    run.record("checkpoint.bin")?;
    run.record("checkpoint.bin.json")?;
    run.write("parity.txt", parity.report().as_bytes())?;
    let diverged_at = match out.status {
        Status::Diverged { at_epoch } => Some(at_epoch),
        Status::Finite => None,
    };
    let finite = !out.diverged();
    run.write_json(
        "mlp.json",
        &json!({
            "widths": n.params.widths(),
            "n_weights": n.params.len(),
            "init_sha256": n.params.sha256(),
            "final_sha256": out.final_theta.sha256(),
            "diverged_at": diverged_at,
            "accuracy": if finite { Some(mlp::accuracy(&out.final_theta, &n.data)?) } else { None },
            "loss": if finite { Some(mlp::mlp_loss(&out.final_theta, &n.data, None)?) } else { None },
            "destination": describe(&dest),
            "parity": parity,
        }),
    )?;
    let mut losses = vec![(0.0, mlp::mlp_loss(&n.params, &n.data, None)?)];
    for (e, p) in out.samples.iter().filter(|(e, _)| *e > 0) {
        losses.push((*e as f64, mlp::mlp_loss(p, &n.data, None)?));
    }
    run.plot("loss.dat", formats::plot_data("training loss\nepoch loss", losses))
}
