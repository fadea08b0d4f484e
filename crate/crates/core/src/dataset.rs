//! The canonical regression dataset and its text format: one `x y` pair per
//! line as C99 hex-float literals, `#` starting a comment line.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hexfloat;
use crate::model::Dataset;

pub const CANONICAL_LEN: usize = 8;
/// Generator seed the committed canonical dataset was drawn with.
pub const CANONICAL_SEED: u64 = 9;

const CANONICAL_TEXT: &str = include_str!("../data/canonical_dataset.txt");

/// The committed dataset shipped with the crate.
pub fn canonical() -> Dataset {
    parse(CANONICAL_TEXT, Some(CANONICAL_LEN)).expect("committed dataset is valid")
}

/// Text of the committed dataset file.
pub fn canonical_text() -> &'static str {
    CANONICAL_TEXT
}

/// Loads a dataset file that must hold exactly the canonical number of pairs.
pub fn load_canonical_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse(&text, Some(CANONICAL_LEN))
}

/// Loads a dataset file with any positive number of pairs.
pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse(&text, None)
}

pub fn parse(text: &str, expected: Option<usize>) -> Result<Dataset> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected two values, found {}", fields.len()),
            });
        }
        let x = hexfloat::parse_at(fields[0], idx + 1)?;
        let y = hexfloat::parse_at(fields[1], idx + 1)?;
        pairs.push((x, y));
    }
    if let Some(n) = expected {
        if pairs.len() != n {
            return Err(Error::PairCount {
                expected: n,
                found: pairs.len(),
            });
        }
    }
    Dataset::new(pairs)
}

pub fn to_text(data: &Dataset, header: &str) -> String {
    let mut out = String::new();
    for line in header.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    for &(x, y) in data.pairs() {
        out.push_str(&hexfloat::format(x));
        out.push(' ');
        out.push_str(&hexfloat::format(y));
        out.push('\n');
    }
    out
}

pub fn write(data: &Dataset, header: &str, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_text(data, header))?;
    Ok(())
}

/// Draws `n` pairs with `x, y ~ N(0, 1)` from a ChaCha8 stream, `x` before `y`
/// within each pair.
pub fn generate(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            (x, y)
        })
        .collect();
    Dataset::new(pairs).expect("normal draws are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_has_eight_pairs() {
        assert_eq!(canonical().len(), 8);
    }

    #[test]
    fn seven_rows_rejected() {
        let data = canonical();
        let short = Dataset::new(data.pairs()[..7].to_vec()).unwrap();
        let text = to_text(&short, "short");
        let err = parse(&text, Some(CANONICAL_LEN)).unwrap_err();
        assert_eq!(err.to_string(), "expected 8 pairs, found 7");
    }

    #[test]
    fn write_then_load_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        let data = canonical();
        write(&data, "round trip", &path).unwrap();
        let back = load_canonical_dataset(&path).unwrap();
        for (a, b) in data.pairs().iter().zip(back.pairs()) {
            assert_eq!(a.0.to_bits(), b.0.to_bits());
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }

    #[test]
    fn garbage_is_a_parse_error() {
        assert!(matches!(parse("0x1p+0\n", None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("0x1p+0 zz\n", None), Err(Error::Parse { .. })));
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(generate(9, 8), generate(9, 8));
    }

    #[test]
    fn canonical_comes_from_seed_nine() {
        assert_eq!(canonical(), generate(CANONICAL_SEED, CANONICAL_LEN));
    }
}
