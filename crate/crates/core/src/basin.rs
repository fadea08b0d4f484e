//! Destination maps over planes of initializations.
//!
//! A plane through `origin` is spanned by a unit vector `e_par` inside `P₊`
//! and a unit vector `e_perp` transverse to it. Every grid cell `(u, v)` is
//! trained from `origin + u e_par + v e_perp` and classified.
//!
//! With the origin at zero, reflecting `v` is the neuron swap and reflecting
//! `u` is the reflection across `P₋` (swap composed with a global sign
//! change). Both commute with the training map and leave `d₊` and `d₋`
//! unchanged, so the map is symmetric under either reflection without any
//! relabelling. The quadrant shortcut trains only `u ≥ 0, v ≥ 0` and mirrors.

use std::fmt::Write as _;

use crate::dynamics::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::hexfloat;
use crate::model::{Dataset, ParamVec};
use crate::parallel::map_indexed;
use crate::seed;
use crate::symmetry::{self, classify, DestinationLabel, Sign};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extents {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Extents {
    pub fn symmetric(half: f64) -> Self {
        Extents {
            u_min: -half,
            u_max: half,
            v_min: -half,
            v_max: half,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.u_min, self.u_max, self.v_min, self.v_max]
    }

    fn is_symmetric(&self) -> bool {
        self.u_min == -self.u_max && self.v_min == -self.v_max
    }
}

pub const DEFAULT_EXTENT: f64 = 2.0;
pub const DEFAULT_RESOLUTION: usize = 257;

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSpec {
    pub origin: ParamVec,
    pub e_par: ParamVec,
    pub e_perp: ParamVec,
    pub extents: Extents,
    /// `(n_u, n_v)`
    pub resolution: (usize, usize),
    pub seed: u64,
    /// Angles of `e_par` in `span{e₁, e₂}` and of `e_perp` in `span{e₃, e₄}`.
    pub angles: (f64, f64),
}

/// Coordinate of index `i` on an axis with `n ≥ 2` points. Indices mirrored
/// about the centre map to exactly negated offsets.
fn axis_coord(min: f64, max: f64, n: usize, i: usize) -> f64 {
    let mid = 0.5 * (min + max);
    let half = 0.5 * (max - min);
    let k = 2.0 * i as f64 - (n - 1) as f64;
    mid + k / (n - 1) as f64 * half
}

impl PlaneSpec {
    pub fn cell_count(&self) -> usize {
        self.resolution.0 * self.resolution.1
    }

    pub fn u(&self, i: usize) -> f64 {
        axis_coord(self.extents.u_min, self.extents.u_max, self.resolution.0, i)
    }

    pub fn v(&self, j: usize) -> f64 {
        axis_coord(self.extents.v_min, self.extents.v_max, self.resolution.1, j)
    }

    /// Initialization at plane coordinates `(u, v)`.
    pub fn point(&self, u: f64, v: f64) -> ParamVec {
        ParamVec(std::array::from_fn(|k| {
            self.origin[k] + u * self.e_par[k] + v * self.e_perp[k]
        }))
    }

    /// Initialization of cell `(i, j)`: column `i` along `u`, row `j` along `v`.
    pub fn cell(&self, i: usize, j: usize) -> ParamVec {
        self.point(self.u(i), self.v(j))
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution.0 < 2 || self.resolution.1 < 2 {
            return Err(Error::Config("resolution must be at least 2 per axis".into()));
        }
        let e = &self.extents;
        if !(e.u_min < e.u_max && e.v_min < e.v_max) {
            return Err(Error::Config("extents must satisfy min < max".into()));
        }
        Ok(())
    }
}

/// A plane through the origin with `e_par = cos a e₁ + sin a e₂` and
/// `e_perp = cos b e₃ + sin b e₄`, angles drawn from the seeded generator.
pub fn make_plane(seed: u64, extents: Extents, resolution: (usize, usize)) -> Result<PlaneSpec> {
    use rand::Rng;
    let mut rng = seed::rng(seed, "plane", 0);
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let b: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let plane = PlaneSpec {
        origin: ParamVec::ZERO,
        e_par: symmetry::from_plus_coords([a.cos(), a.sin(), 0.0, 0.0]),
        e_perp: symmetry::from_plus_coords([0.0, 0.0, b.cos(), b.sin()]),
        extents,
        resolution,
        seed,
        angles: (a, b),
    };
    plane.validate()?;
    Ok(plane)
}

/// Same axes, extents centred on `center` with each range divided by `zoom`.
pub fn magnify(plane: &PlaneSpec, center: (f64, f64), zoom: f64, resolution: (usize, usize)) -> Result<PlaneSpec> {
    if !(zoom > 0.0 && zoom.is_finite()) {
        return Err(Error::Config(format!("zoom must be positive, got {zoom}")));
    }
    let hu = 0.5 * (plane.extents.u_max - plane.extents.u_min) / zoom;
    let hv = 0.5 * (plane.extents.v_max - plane.extents.v_min) / zoom;
    let out = PlaneSpec {
        extents: Extents {
            u_min: center.0 - hu,
            u_max: center.0 + hu,
            v_min: center.1 - hv,
            v_max: center.1 + hv,
        },
        resolution,
        ..plane.clone()
    };
    out.validate()?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasinGrid {
    /// Row-major: index `j * n_u + i` for column `i` (u) and row `j` (v).
    pub labels: Vec<DestinationLabel>,
    pub plane: PlaneSpec,
    pub eta: f64,
    pub epochs: usize,
    pub threshold_d: f64,
    pub train_config_sha: String,
    pub dataset_sha: String,
    /// Number of training runs performed to build the grid.
    pub trainings: usize,
}

impl BasinGrid {
    pub fn label(&self, i: usize, j: usize) -> DestinationLabel {
        self.labels[j * self.plane.resolution.0 + i]
    }

    /// Cell counts indexed by label code.
    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for l in &self.labels {
            c[l.code() as usize] += 1;
        }
        c
    }

    pub fn fractions(&self) -> [f64; 4] {
        let n = self.labels.len() as f64;
        self.counts().map(|c| c as f64 / n)
    }
}

/// Label of one initialization.
pub fn destination(theta0: &ParamVec, data: &Dataset, cfg: &TrainConfig, threshold_d: f64) -> DestinationLabel {
    classify(&train(theta0, data, cfg), threshold_d).label
}

/// Trains and classifies every cell of `plane`.
///
/// With `quadrant_shortcut`, only cells with `u ≥ 0` and `v ≥ 0` are trained
/// and the rest are copied from their mirror images; this needs the plane
/// through the origin, symmetric extents and odd resolutions.
pub fn sweep(
    plane: &PlaneSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    threshold_d: f64,
    quadrant_shortcut: bool,
    workers: usize,
) -> Result<BasinGrid> {
    plane.validate()?;
    cfg.validate()?;
    let (nu, nv) = plane.resolution;
    let labels = if quadrant_shortcut {
        if plane.origin != ParamVec::ZERO {
            return Err(Error::Config("quadrant shortcut needs the plane origin at zero".into()));
        }
        if nu % 2 == 0 || nv % 2 == 0 {
            return Err(Error::Config("quadrant shortcut needs odd resolutions".into()));
        }
        if !plane.extents.is_symmetric() {
            return Err(Error::Config("quadrant shortcut needs extents symmetric about zero".into()));
        }
        let (cu, cv) = (nu / 2, nv / 2);
        let qu = nu - cu;
        let qv = nv - cv;
        let quadrant = map_indexed(qu * qv, workers, |k| {
            let (i, j) = (cu + k % qu, cv + k / qu);
            destination(&plane.cell(i, j), data, cfg, threshold_d)
        });
        let mirror = |i: usize, c: usize| if i >= c { i - c } else { c - i };
        let mut labels = Vec::with_capacity(nu * nv);
        for j in 0..nv {
            for i in 0..nu {
                labels.push(quadrant[mirror(j, cv) * qu + mirror(i, cu)]);
            }
        }
        (labels, qu * qv)
    } else {
        let labels = map_indexed(nu * nv, workers, |k| {
            destination(&plane.cell(k % nu, k / nu), data, cfg, threshold_d)
        });
        (labels, nu * nv)
    };
    Ok(BasinGrid {
        labels: labels.0,
        plane: plane.clone(),
        eta: cfg.eta,
        epochs: cfg.epochs,
        threshold_d,
        train_config_sha: cfg.sha256(),
        dataset_sha: data.sha256(),
        trainings: labels.1,
    })
}

/// One destination map per learning rate, all on the same plane.
pub fn regime_sweep(
    etas: &[f64],
    plane: &PlaneSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    threshold_d: f64,
    quadrant_shortcut: bool,
    workers: usize,
) -> Result<Vec<BasinGrid>> {
    if etas.is_empty() {
        return Err(Error::Config("no learning rates given".into()));
    }
    etas.iter()
        .map(|&eta| {
            let c = TrainConfig { eta, ..*cfg };
            sweep(plane, data, &c, threshold_d, quadrant_shortcut, workers)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConvergenceCell {
    Diverged,
    Near { plane: Sign, distance: f64 },
}

/// Nearest permutation plane (by `d±`) and its distance after training;
/// diverged cells are flagged.
pub fn convergence_map(plane: &PlaneSpec, data: &Dataset, cfg: &TrainConfig, workers: usize) -> Result<Vec<ConvergenceCell>> {
    plane.validate()?;
    cfg.validate()?;
    let nu = plane.resolution.0;
    Ok(map_indexed(plane.cell_count(), workers, |k| {
        let out = train(&plane.cell(k % nu, k / nu), data, cfg);
        if out.diverged() {
            return ConvergenceCell::Diverged;
        }
        nearest_plane(&out.final_theta)
    }))
}

pub fn nearest_plane(theta: &ParamVec) -> ConvergenceCell {
    let p = symmetry::dist_metric_unchecked(theta, Sign::Plus);
    let m = symmetry::dist_metric_unchecked(theta, Sign::Minus);
    if p <= m {
        ConvergenceCell::Near {
            plane: Sign::Plus,
            distance: p,
        }
    } else {
        ConvergenceCell::Near {
            plane: Sign::Minus,
            distance: m,
        }
    }
}

// ---- grid file -------------------------------------------------------------

const GRID_MAGIC: &str = "# riddled destination grid v1";
const GRID_LEGEND: &str = "# labels: 0=PlusPlane 1=MinusPlane 2=Divergent 3=Other; rows run along v (row 0 = v_min), columns along u";

impl BasinGrid {
    /// Text form: header lines, then one space-separated row of label codes
    /// per line. Real values in the header are hex floats.
    pub fn to_text(&self) -> String {
        let p = &self.plane;
        let mut s = String::new();
        s.push_str(GRID_MAGIC);
        s.push('\n');
        s.push_str(GRID_LEGEND);
        s.push('\n');
        let _ = writeln!(
            s,
            "# plane: origin={}, e_par={}, e_perp={}, extents={}, resolution=[{},{}], eta={}, dataset_sha={}, seed={}, angles={}, epochs={}, threshold_d={}, train_config_sha={}, trainings={}",
            hexfloat::format_list(&p.origin.0),
            hexfloat::format_list(&p.e_par.0),
            hexfloat::format_list(&p.e_perp.0),
            hexfloat::format_list(&p.extents.to_array()),
            p.resolution.0,
            p.resolution.1,
            hexfloat::format(self.eta),
            self.dataset_sha,
            p.seed,
            hexfloat::format_list(&[p.angles.0, p.angles.1]),
            self.epochs,
            hexfloat::format(self.threshold_d),
            self.train_config_sha,
            self.trainings,
        );
        let nu = p.resolution.0;
        for row in self.labels.chunks(nu) {
            let codes: Vec<String> = row.iter().map(|l| l.code().to_string()).collect();
            s.push_str(&codes.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<BasinGrid> {
        let mut fields: Vec<(String, String)> = Vec::new();
        let mut rows: Vec<Vec<DestinationLabel>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let perr = |msg: String| Error::Parse { line: idx + 1, msg };
            if let Some(rest) = line.strip_prefix("# plane: ") {
                fields = split_header(rest).map_err(perr)?;
            } else if line.starts_with('#') || line.trim().is_empty() {
                continue;
            } else {
                let row = line
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<u8>()
                            .ok()
                            .and_then(DestinationLabel::from_code)
                            .ok_or_else(|| perr(format!("bad label {t:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(row);
            }
        }
        let get = |k: &str| -> Result<&str> {
            fields
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    msg: format!("missing header field {k}"),
                })
        };
        let herr = |msg: String| Error::Parse { line: 0, msg };
        let list4 = |k: &str| -> Result<[f64; 4]> {
            let v = hexfloat::parse_list(get(k)?).map_err(herr)?;
            v.try_into().map_err(|_| herr(format!("{k} must have 4 entries")))
        };
        let res: Vec<usize> = get("resolution")?
            .trim_matches(|c| c == '[' || c == ']')
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| herr(e.to_string())))
            .collect::<Result<_>>()?;
        if res.len() != 2 {
            return Err(herr("resolution must have 2 entries".into()));
        }
        let ext = list4("extents")?;
        let angles = hexfloat::parse_list(get("angles")?).map_err(herr)?;
        if angles.len() != 2 {
            return Err(herr("angles must have 2 entries".into()));
        }
        let plane = PlaneSpec {
            origin: ParamVec(list4("origin")?),
            e_par: ParamVec(list4("e_par")?),
            e_perp: ParamVec(list4("e_perp")?),
            extents: Extents {
                u_min: ext[0],
                u_max: ext[1],
                v_min: ext[2],
                v_max: ext[3],
            },
            resolution: (res[0], res[1]),
            seed: get("seed")?.parse().map_err(|e: std::num::ParseIntError| herr(e.to_string()))?,
            angles: (angles[0], angles[1]),
        };
        if rows.len() != plane.resolution.1 || rows.iter().any(|r| r.len() != plane.resolution.0) {
            return Err(herr(format!(
                "label block is not {} rows of {} columns",
                plane.resolution.1, plane.resolution.0
            )));
        }
        Ok(BasinGrid {
            labels: rows.into_iter().flatten().collect(),
            eta: hexfloat::parse(get("eta")?).map_err(herr)?,
            epochs: get("epochs")?.parse().map_err(|e: std::num::ParseIntError| herr(e.to_string()))?,
            threshold_d: hexfloat::parse(get("threshold_d")?).map_err(herr)?,
            train_config_sha: get("train_config_sha")?.to_string(),
            dataset_sha: get("dataset_sha")?.to_string(),
            trainings: get("trainings")?.parse().map_err(|e: std::num::ParseIntError| herr(e.to_string()))?,
            plane,
        })
    }
}

/// Splits `key=value, key=[a,b], ...` at top-level commas.
fn split_header(s: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    let bytes = s.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'[' => depth += 1,
            b']' => depth -= 1,
            b',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out.into_iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| format!("bad header item {kv:?}"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// RGB colour of each label in rendered images.
pub fn palette(label: DestinationLabel) -> [u8; 3] {
    match label {
        DestinationLabel::PlusPlane => [31, 119, 180],
        DestinationLabel::MinusPlane => [255, 127, 14],
        DestinationLabel::Divergent => [255, 255, 255],
        DestinationLabel::Other => [128, 128, 128],
    }
}

/// Plain-text pixmap (P3) of the grid, `v_max` at the top.
pub fn to_ppm(grid: &BasinGrid) -> String {
    let (nu, nv) = grid.plane.resolution;
    let mut s = format!(
        "P3\n# PlusPlane=31,119,180 MinusPlane=255,127,14 Divergent=255,255,255 Other=128,128,128\n{nu} {nv}\n255\n"
    );
    for j in (0..nv).rev() {
        let px: Vec<String> = (0..nu)
            .map(|i| {
                let [r, g, b] = palette(grid.label(i, j));
                format!("{r} {g} {b}")
            })
            .collect();
        s.push_str(&px.join(" "));
        s.push('\n');
    }
    s
}

/// Pixmap of a convergence map: blue for `P₊`, red for `P₋`, intensity
/// fading with distance, white for diverged cells.
pub fn convergence_ppm(cells: &[ConvergenceCell], resolution: (usize, usize)) -> String {
    let (nu, nv) = resolution;
    let max_d = cells
        .iter()
        .filter_map(|c| match c {
            ConvergenceCell::Near { distance, .. } => Some(*distance),
            ConvergenceCell::Diverged => None,
        })
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut s = format!("P3\n# P+=blue P-=red, intensity=1-d/max_d, diverged=white\n{nu} {nv}\n255\n");
    for j in (0..nv).rev() {
        let px: Vec<String> = (0..nu)
            .map(|i| {
                let [r, g, b] = match cells[j * nu + i] {
                    ConvergenceCell::Diverged => [255, 255, 255],
                    ConvergenceCell::Near { plane, distance } => {
                        let t = 1.0 - (distance / max_d).clamp(0.0, 1.0);
                        let fade = (255.0 * (1.0 - t)).round() as u8;
                        match plane {
                            Sign::Plus => [fade, fade, 255],
                            Sign::Minus => [255, fade, fade],
                        }
                    }
                };
                format!("{r} {g} {b}")
            })
            .collect();
        s.push_str(&px.join(" "));
        s.push('\n');
    }
    s
}
