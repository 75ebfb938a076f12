//! Experiment manifests: schema, validation, parameter defaults, and the
//! digest that stamps every output file.

use std::fmt;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shellwalk::discrepancy::sqrt_rational;
use shellwalk::torus::TorusPoint;

/// Harness-level failure with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad manifest, bad flags, missing files, or invalid parameters.
    #[error("{0}")]
    Validation(String),
    /// A configured budget was exhausted before the experiment finished.
    #[error("{0}")]
    Budget(String),
    /// I/O or other environmental failure.
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    pub fn validation(msg: impl fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub const KINDS: &[&str] =
    &["enumerate", "exponent", "shrink", "spectral", "boundary", "discrepancy", "ergodic"];

/// One experiment: a kind, an optional group document, an output directory,
/// and the kind-specific parameter object.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub out_dir: String,
    #[serde(default = "empty_params")]
    pub params: serde_json::Value,
}

fn empty_params() -> serde_json::Value {
    serde_json::Value::Object(serde_json::Map::new())
}

impl Manifest {
    pub fn from_file(path: &Path) -> Result<(Self, PathBuf), CliError> {
        if !path.exists() {
            return Err(CliError::validation(format!(
                "manifest file not found: {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("manifest {}: {e}", path.display())))?;
        manifest.check_kind()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok((manifest, base))
    }

    pub fn check_kind(&self) -> Result<(), CliError> {
        if KINDS.contains(&self.kind.as_str()) {
            Ok(())
        } else {
            Err(CliError::validation(format!(
                "unknown experiment kind {:?} (expected one of {})",
                self.kind,
                KINDS.join(", ")
            )))
        }
    }

    /// Canonical serialization: struct fields in declaration order, object
    /// keys sorted.  The hex SHA-256 of these bytes identifies the experiment
    /// and is stamped into every output file.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("manifest serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn typed_params<T: serde::de::DeserializeOwned>(&self) -> Result<T, CliError> {
        serde_json::from_value(self.params.clone())
            .map_err(|e| CliError::validation(format!("{} params: {e}", self.kind)))
    }
}

/// A torus point given either by coordinate literals or by a seed for the
/// uniform `2^-64` grid sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl PointSpec {
    pub fn from_seed(seed: u64) -> Self {
        PointSpec { coords: None, seed: Some(seed) }
    }

    /// Resolves to a point of the given dimension.  Coordinate literals may
    /// be integers, fractions `a/b`, decimals, or `sqrtN` with an optional
    /// rational tail (for example `sqrt2-1`); square roots are expanded to
    /// `sqrt_bits` fractional bits and put the point in real mode.
    pub fn resolve(&self, dim: usize, sqrt_bits: u32) -> Result<TorusPoint, CliError> {
        match (&self.coords, self.seed) {
            (Some(_), Some(_)) => {
                Err(CliError::validation("point spec: give coords or seed, not both"))
            }
            (None, None) => Err(CliError::validation("point spec: give coords or a seed")),
            (None, Some(seed)) => Ok(TorusPoint::random_uniform(dim, seed)),
            (Some(texts), None) => {
                if texts.len() != dim {
                    return Err(CliError::validation(format!(
                        "point spec: expected {dim} coordinates, got {}",
                        texts.len()
                    )));
                }
                let mut coords = Vec::with_capacity(dim);
                let mut any_sqrt = false;
                for t in texts {
                    let (value, used_sqrt) = parse_coord(t, sqrt_bits)
                        .map_err(|e| CliError::validation(format!("coordinate {t:?}: {e}")))?;
                    any_sqrt |= used_sqrt;
                    coords.push(value);
                }
                Ok(if any_sqrt { TorusPoint::real(coords) } else { TorusPoint::exact(coords) })
            }
        }
    }
}

/// Parses one coordinate literal; the boolean reports whether a square root
/// was expanded (the point is then an approximant, not an exact rational).
pub fn parse_coord(text: &str, sqrt_bits: u32) -> Result<(BigRational, bool), String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("empty literal".into());
    }
    let (negate, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest.trim()),
        None => (false, t),
    };
    let (value, used_sqrt) = if let Some(rest) = body.strip_prefix("sqrt") {
        let split = rest.find(|c| c == '+' || c == '-');
        let (n_text, tail) = match split {
            Some(i) => (&rest[..i], Some((rest.as_bytes()[i] == b'-', &rest[i + 1..]))),
            None => (rest, None),
        };
        let n: u64 = n_text
            .trim()
            .parse()
            .map_err(|_| format!("bad radicand {n_text:?} (expected a nonnegative integer)"))?;
        let mut v = sqrt_rational(n, sqrt_bits);
        if let Some((tail_neg, tail_text)) = tail {
            let tail_value = parse_plain(tail_text)?;
            if tail_neg {
                v -= tail_value;
            } else {
                v += tail_value;
            }
        }
        (v, true)
    } else {
        (parse_plain(body)?, false)
    };
    Ok((if negate { -value } else { value }, used_sqrt))
}

/// Integer, fraction `a/b`, or decimal literal (no sign; the caller strips
/// it).
fn parse_plain(text: &str) -> Result<BigRational, String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("empty literal".into());
    }
    if let Some((n, d)) = t.split_once('/') {
        let num: BigInt =
            n.trim().parse().map_err(|_| format!("bad numerator {:?}", n.trim()))?;
        let den: BigInt =
            d.trim().parse().map_err(|_| format!("bad denominator {:?}", d.trim()))?;
        if den.is_zero() {
            return Err("zero denominator".into());
        }
        return Ok(BigRational::new(num, den));
    }
    if let Some((int, frac)) = t.split_once('.') {
        if !frac.bytes().all(|b| b.is_ascii_digit()) || frac.is_empty() {
            return Err(format!("bad decimal {t:?}"));
        }
        let int_part: BigInt = if int.is_empty() {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| format!("bad integer part {int:?}"))?
        };
        let scale = BigInt::from(10u8).pow(frac.len() as u32);
        let frac_part: BigInt = frac.parse().expect("digit string parses");
        return Ok(BigRational::from_integer(int_part)
            + BigRational::new(frac_part, scale));
    }
    let v: BigInt = t.parse().map_err(|_| format!("bad integer {t:?}"))?;
    Ok(BigRational::from_integer(v))
}

fn default_max_elements() -> u64 {
    10_000_000
}
fn default_sqrt_bits() -> u32 {
    160
}
fn default_true_dim() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerateParams {
    pub radius: u32,
    #[serde(default = "default_max_elements")]
    pub max_elements: u64,
}

fn default_alphas() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 1.5]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentParams {
    pub radius: u32,
    pub x: PointSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<PointSpec>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_max_elements")]
    pub max_elements: u64,
    #[serde(default = "default_sqrt_bits")]
    pub sqrt_bits: u32,
}

fn default_target() -> String {
    "ball".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShrinkParams {
    pub max_radius: u32,
    pub x: PointSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<PointSpec>,
    /// Target family: `ball` or `box`.
    #[serde(default = "default_target")]
    pub target: String,
    pub psi_a: f64,
    #[serde(default)]
    pub psi_b: f64,
    #[serde(default = "default_max_elements")]
    pub max_elements: u64,
    #[serde(default = "default_sqrt_bits")]
    pub sqrt_bits: u32,
}

fn default_window() -> u32 {
    40
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    300
}
fn default_norm_seed() -> u64 {
    12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralParams {
    /// Shell radii whose uniform measures get a norm estimate.
    pub lengths: Vec<u32>,
    #[serde(default = "default_window")]
    pub window: u32,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_norm_seed")]
    pub seed: u64,
    #[serde(default = "default_max_elements")]
    pub max_elements: u64,
}

fn default_dense_budget() -> u64 {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryParams {
    #[serde(default = "default_true_dim")]
    pub rank: usize,
    /// `(r, n)` pairs to certify.
    pub pairs: Vec<(u32, u32)>,
    #[serde(default = "default_dense_budget")]
    pub dense_budget: u64,
    #[serde(default)]
    pub slack: u32,
}

fn default_steps() -> u32 {
    8
}
fn default_fourier_window() -> u32 {
    16
}
fn default_walk_budget() -> usize {
    200_000
}
fn default_scan_budget() -> usize {
    5_000
}
fn default_q_cutoff() -> u64 {
    1_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancyParams {
    pub x: PointSpec,
    #[serde(default = "default_steps")]
    pub steps: u32,
    #[serde(default = "default_fourier_window")]
    pub window: u32,
    #[serde(default = "default_walk_budget")]
    pub walk_budget: usize,
    #[serde(default = "default_scan_budget")]
    pub scan_budget: usize,
    #[serde(default = "default_q_cutoff")]
    pub q_cutoff: u64,
    #[serde(default = "default_sqrt_bits")]
    pub sqrt_bits: u32,
}

fn default_freqs() -> Vec<Vec<i64>> {
    vec![vec![1, 0], vec![1, 1]]
}
fn default_samples() -> usize {
    100_000
}
fn default_mc_seed() -> u64 {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicParams {
    pub radius: u32,
    #[serde(default = "default_freqs")]
    pub freqs: Vec<Vec<i64>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_mc_seed")]
    pub seed: u64,
    #[serde(default = "default_max_elements")]
    pub max_elements: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn coordinate_literals() {
        assert_eq!(parse_coord("1/3", 32).unwrap(), (rat(1, 3), false));
        assert_eq!(parse_coord("-2/7", 32).unwrap(), (rat(-2, 7), false));
        assert_eq!(parse_coord("0.25", 32).unwrap(), (rat(1, 4), false));
        assert_eq!(parse_coord("-1.5", 32).unwrap(), (rat(-3, 2), false));
        assert_eq!(parse_coord("3", 32).unwrap(), (rat(3, 1), false));
        let (s, used) = parse_coord("sqrt2-1", 64).unwrap();
        assert!(used);
        let v = shellwalk::interval::rational_to_f64(&s);
        assert!((v - (2f64.sqrt() - 1.0)).abs() < 1e-12, "{v}");
        let (s, _) = parse_coord("-sqrt9", 32).unwrap();
        assert_eq!(s, rat(-3, 1));
        let (s, _) = parse_coord("sqrt4+1/2", 32).unwrap();
        assert_eq!(s, rat(5, 2));
        assert!(parse_coord("sqrtx", 32).is_err());
        assert!(parse_coord("1/0", 32).is_err());
        assert!(parse_coord("", 32).is_err());
    }

    #[test]
    fn point_spec_modes() {
        let p = PointSpec { coords: Some(vec!["1/3".into(), "1/7".into()]), seed: None };
        let x = p.resolve(2, 64).unwrap();
        assert_eq!(x.mode(), shellwalk::torus::CoordMode::Exact);
        let p = PointSpec { coords: Some(vec!["sqrt2-1".into(), "0".into()]), seed: None };
        let x = p.resolve(2, 64).unwrap();
        assert_eq!(x.mode(), shellwalk::torus::CoordMode::Real);
        let p = PointSpec::from_seed(9);
        let x = p.resolve(2, 64).unwrap();
        assert_eq!(x.dim(), 2);
        assert!(PointSpec { coords: None, seed: None }.resolve(2, 64).is_err());
        assert!(PointSpec { coords: Some(vec!["0".into()]), seed: Some(1) }
            .resolve(1, 64)
            .is_err());
    }

    #[test]
    fn digest_is_stable_and_key_order_free() {
        let a: Manifest = serde_json::from_str(
            r#"{"kind":"enumerate","group":"g.json","out_dir":"o","params":{"radius":4,"max_elements":10}}"#,
        )
        .unwrap();
        let b: Manifest = serde_json::from_str(
            r#"{"params":{"max_elements":10,"radius":4},"out_dir":"o","kind":"enumerate","group":"g.json"}"#,
        )
        .unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
        let c: Manifest = serde_json::from_str(
            r#"{"kind":"enumerate","group":"g.json","out_dir":"o","params":{"radius":5}}"#,
        )
        .unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let m: Manifest =
            serde_json::from_str(r#"{"kind":"florble","out_dir":"o","params":{}}"#).unwrap();
        assert!(m.check_kind().is_err());
    }
}
