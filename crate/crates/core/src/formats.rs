//! Plain-text output formats: CSV tables and two-column plot data.
//!
//! Destination grids have their own format in [`crate::basin`] and network
//! checkpoints in [`crate::mlp`].

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lyapunov::FtleSeries;
use crate::model::ParamVec;
use crate::uncertainty::{CurvePoint, SamplingMode, UncertaintyCurve};

/// `epoch,p1,p2,p3,p4`, values in shortest round-trip decimal.
pub fn trajectory_csv(samples: &[(usize, ParamVec)]) -> String {
    let mut s = String::from("epoch,p1,p2,p3,p4\n");
    for (e, t) in samples {
        let _ = writeln!(s, "{e},{:?},{:?},{:?},{:?}", t[0], t[1], t[2], t[3]);
    }
    s
}

/// `u,v` coordinates of an attractor trace.
pub fn trace_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("u,v\n");
    for (u, v) in points {
        let _ = writeln!(s, "{u:?},{v:?}");
    }
    s
}

/// `window_index,T,lambda3_T`
pub fn ftle_csv(series: &FtleSeries) -> String {
    let mut s = String::from("window_index,T,lambda3_T\n");
    for (k, v) in series.values.iter().enumerate() {
        let _ = writeln!(s, "{k},{},{v:?}", series.window);
    }
    s
}

/// `epsilon,f,stderr,n_pairs`
pub fn curve_csv(curve: &UncertaintyCurve) -> String {
    let mut s = String::from("epsilon,f,stderr,n_pairs\n");
    for p in &curve.points {
        let _ = writeln!(s, "{:?},{:?},{:?},{}", p.epsilon, p.f, p.stderr, p.n_pairs);
    }
    s
}

pub fn parse_curve_csv(text: &str, mode: SamplingMode) -> Result<UncertaintyCurve> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epsilon,f,stderr,n_pairs")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected header epsilon,f,stderr,n_pairs".into(),
            })
        }
    }
    let mut points = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: n + 1, msg };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        }
        let num = |c: &str| c.trim().parse::<f64>().map_err(|e| err(e.to_string()));
        points.push(CurvePoint {
            epsilon: num(cols[0])?,
            f: num(cols[1])?,
            stderr: num(cols[2])?,
            n_pairs: cols[3].trim().parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
        });
    }
    Ok(UncertaintyCurve {
        points,
        sampling_mode: mode,
    })
}

/// Whitespace-separated two-column data with a comment header, as read by
/// gnuplot.
pub fn plot_data(header: &str, rows: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut s = String::new();
    for h in header.lines() {
        let _ = writeln!(s, "# {h}");
    }
    for (x, y) in rows {
        let _ = writeln!(s, "{x:?} {y:?}");
    }
    s
}
