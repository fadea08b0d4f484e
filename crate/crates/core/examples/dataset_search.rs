//! Screens generated datasets for a chaotic attractor in P₊ at η = 2.5 with
//! transversely stable exponents and a riddled basin.
//!
//! cargo run --release --example dataset_search -- <first seed> <count>

use riddled_core::dataset::generate;
use riddled_core::dynamics::TrainConfig;
use riddled_core::lyapunov::{diffusion_fit, ftle_from_stream, log_stream, QrBasis, SpectrumOptions};
use riddled_core::parallel::{default_workers, map_indexed};
use riddled_core::symmetry::from_plus_coords;
use riddled_core::uncertainty::{eps_grid, fit_uncertainty_exponent, uncertainty_curve, UncertaintyOptions};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (first, count) = (args.first().copied().unwrap_or(0), args.get(1).copied().unwrap_or(16));
    let lines = map_indexed(count as usize, default_workers(), |k| {
        let seed = first + k as u64;
        let data = generate(seed, 8);
        let theta0 = from_plus_coords([0.5, 0.5, 0.0, 0.0]);
        let opts = SpectrumOptions {
            epochs: 400_000,
            min_steps: 1,
            ..Default::default()
        };
        let s = match log_stream(&theta0, 2.5, &data, &QrBasis::plus_adapted(), &opts) {
            Ok(s) => s,
            Err(e) => return format!("{seed}: {e}"),
        };
        let n = s.log_diag.len();
        let mut lam = [0.0; 4];
        for d in &s.log_diag {
            for i in 0..4 {
                lam[i] += d[i] / n as f64;
            }
        }
        let frac: Vec<f64> = [32, 128, 512]
            .iter()
            .map(|&t| ftle_from_stream(&s.log_diag, t, 2).map(|f| f.positive_fraction()).unwrap_or(f64::NAN))
            .collect();
        let series: Vec<_> = (600..=1000)
            .step_by(50)
            .filter_map(|t| ftle_from_stream(&s.log_diag, t, 2).ok())
            .collect();
        let fit = diffusion_fit(&series, (600, 1000), 200, 0);
        let (d, r2) = fit.map(|f| (f.d, f.r_squared)).unwrap_or((f64::NAN, f64::NAN));
        let mut phis = Vec::new();
        if lam[0] > 0.0 && lam[2] < 0.0 && lam[3] < 0.0 && s.diverged_at.is_none() {
            for eta in [2.5, 0.1] {
                let cfg = TrainConfig::with_eta(eta, 1000);
                let o = UncertaintyOptions {
                    n_pairs: 300,
                    seed: 1,
                    ..Default::default()
                };
                let c = uncertainty_curve(&eps_grid(1e-12, 1e-1, 13).unwrap(), &data, &cfg, &o).unwrap();
                let fs: Vec<String> = c.points.iter().map(|p| format!("{:.3}", p.f)).collect();
                let phi = fit_uncertainty_exponent(&c).map(|f| f.phi).unwrap_or(f64::NAN);
                phis.push(format!("phi({eta})={phi:.4} f=[{}]", fs.join(" ")));
            }
        }
        format!(
            "{seed}: steps={n} div={:?} lam=[{:.4} {:.4} {:.4} {:.4}] pos=[{:.3} {:.3} {:.3}] D={d:.4} R2={r2:.3} {}",
            s.diverged_at,
            lam[0],
            lam[1],
            lam[2],
            lam[3],
            frac[0],
            frac[1],
            frac[2],
            phis.join(" ")
        )
    });
    for l in lines {
        println!("{l}");
    }
}
