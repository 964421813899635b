use std::path::Path;

use levyou::density::{default_grid, DensityField, GridSpec};
use levyou::{Atom, Error, LevyMeasure, Matrix, OuModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Failure to turn a config file into a model.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("assumption {assumption} violated: {detail}")]
    Assumption { assumption: &'static str, detail: String },
}

fn field(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub location: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum PiConfig {
    Null,
    FiniteAtomic {
        atoms: Vec<AtomConfig>,
    },
    AlphaStable {
        alpha: f64,
        atoms: Vec<AtomConfig>,
    },
    /// `rate` times a density sampled on a grid (row-major values).
    CompoundPoissonDensity {
        rate: f64,
        halfwidth: Vec<f64>,
        n: Vec<usize>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub halfwidth: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    pub pi: PiConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(rename = "degreeCap", default = "default_degree")]
    pub degree_cap: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_degree() -> usize {
    6
}

/// A parsed config together with the model it describes.
pub struct Loaded {
    pub config: ModelConfig,
    pub model: OuModel,
}

impl Loaded {
    pub fn grid(&self) -> GridSpec {
        match &self.config.grid {
            Some(g) => GridSpec::new(g.halfwidth.clone(), g.n.clone()),
            None => default_grid(&self.model),
        }
    }

    /// SHA-256 of the canonical re-serialization of the config.
    pub fn model_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.config).expect("serializable");
        format!("{:x}", Sha256::digest(bytes))
    }

    /// Fails with the `polynomial` diagnostic unless `Pi` has moments up to `order`.
    pub fn require_polynomial(&self, order: usize) -> Result<(), ConfigError> {
        let diag = self.model.diagnostics();
        match (1..=order).find(|&n| !diag.poly_moment(n)) {
            None => Ok(()),
            Some(n) => Err(ConfigError::Assumption {
                assumption: "polynomial",
                detail: format!("Pi has no finite moment of order {n} (degree cap {order})"),
            }),
        }
    }
}

fn matrix(path: &str, d: usize, v: &[f64]) -> Result<Matrix, ConfigError> {
    if v.len() != d * d {
        return Err(field(path, format!("expected {} entries (row-major {d}x{d}), got {}", d * d, v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(field(path, "entries must be finite"));
    }
    Ok(Matrix::from_row_slice(d, d, v))
}

fn atoms(path: &str, d: usize, list: &[AtomConfig]) -> Result<Vec<Atom>, ConfigError> {
    list.iter()
        .enumerate()
        .map(|(k, a)| {
            if a.location.len() != d {
                return Err(field(
                    &format!("{path}[{k}].location"),
                    format!("expected {d} coordinates, got {}", a.location.len()),
                ));
            }
            Ok(Atom::new(a.location.clone(), a.weight))
        })
        .collect()
}

fn measure(d: usize, pi: &PiConfig) -> Result<LevyMeasure, ConfigError> {
    Ok(match pi {
        PiConfig::Null => LevyMeasure::Null { dim: d },
        PiConfig::FiniteAtomic { atoms: a } => LevyMeasure::FiniteAtomic { atoms: atoms("pi.atoms", d, a)? },
        PiConfig::AlphaStable { alpha, atoms: a } => LevyMeasure::AlphaStable {
            alpha: *alpha,
            atoms: atoms("pi.atoms", d, a)?,
        },
        PiConfig::CompoundPoissonDensity { rate, halfwidth, n, values } => {
            if halfwidth.len() != d || n.len() != d {
                return Err(field("pi", format!("halfwidth and n need {d} entries")));
            }
            let len: usize = n.iter().product();
            if values.len() != len {
                return Err(field("pi.values", format!("expected {len} values, got {}", values.len())));
            }
            let grid = GridSpec::new(halfwidth.clone(), n.clone());
            LevyMeasure::CompoundPoissonDensity {
                rate: *rate,
                density: DensityField::new(grid, values.clone(), "jump density"),
            }
        }
    })
}

fn model_error(e: Error) -> ConfigError {
    match e {
        Error::HypoellipticityFailure { .. } => ConfigError::Assumption { assumption: "(1)", detail: e.to_string() },
        Error::UnstableDrift { .. } => ConfigError::Assumption { assumption: "(2)", detail: e.to_string() },
        Error::InvalidMeasure(ref m) if m.contains("log moment") => {
            ConfigError::Assumption { assumption: "(2)", detail: e.to_string() }
        }
        Error::InvalidMeasure(m) => field("pi", m),
        Error::DimensionMismatch(m) if m.contains("symmetric") => field("Q", m),
        other => field("model", other.to_string()),
    }
}

pub fn parse(text: &str) -> Result<ModelConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        field(if path.is_empty() { "." } else { &path }, e.into_inner().to_string())
    })
}

pub fn build(config: ModelConfig) -> Result<Loaded, ConfigError> {
    let d = config.d;
    if d == 0 {
        return Err(field("d", "dimension must be positive"));
    }
    let q = matrix("Q", d, &config.q)?;
    let b = matrix("B", d, &config.b)?;
    if let Some(g) = &config.grid {
        if g.halfwidth.len() != d || g.n.len() != d {
            return Err(field("grid", format!("halfwidth and n need {d} entries")));
        }
        if g.halfwidth.iter().any(|&h| h.is_nan() || h <= 0.0) || g.n.iter().any(|&n| n < 4 || n % 2 != 0) {
            return Err(field("grid", "halfwidths must be positive and node counts even and >= 4"));
        }
    }
    let pi = measure(d, &config.pi)?;
    let model = OuModel::new(q, b, pi).map_err(model_error)?;
    Ok(Loaded { config, model })
}

pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    build(parse(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"d": 1, "Q": [1.0], "B": [-1.0], "pi": {"type": "Null"}}"#;

    fn err(text: &str) -> String {
        match parse(text).and_then(build) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("accepted {text}"),
        }
    }

    #[test]
    fn defaults_apply() {
        let c = parse(GOOD).unwrap();
        assert_eq!(c.degree_cap, 6);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(err(r#"{"d": 1, "Q": [1.0], "B": [-1.0], "pi": {"type": "Null"}, "extra": 1}"#).contains("extra"));
        let e = err(r#"{"d": 1, "Q": [1.0], "B": [-1.0], "pi": {"type": "FiniteAtomic", "atoms": [{"location": [1.0], "weight": 1.0, "w": 2}]}}"#);
        assert!(e.starts_with("pi") && e.contains("`w`"), "{e}");
    }

    #[test]
    fn missing_b_names_the_field() {
        assert!(err(r#"{"d": 1, "Q": [1.0], "pi": {"type": "Null"}}"#).contains("`B`"));
    }

    #[test]
    fn assumptions_are_named() {
        assert!(err(r#"{"d": 1, "Q": [1.0], "B": [1.0], "pi": {"type": "Null"}}"#).contains("assumption (2)"));
        assert!(err(r#"{"d": 2, "Q": [1, 0, 0, 0], "B": [-1, 0, 0, -1], "pi": {"type": "Null"}}"#).contains("assumption (1)"));
        let stable = r#"{"d": 1, "Q": [1.0], "B": [-1.0], "pi": {"type": "AlphaStable", "alpha": 1.5, "atoms": [{"location": [1.0], "weight": 1.0}]}}"#;
        let loaded = build(parse(stable).unwrap()).unwrap();
        assert!(loaded.require_polynomial(1).is_ok());
        assert!(loaded.require_polynomial(6).unwrap_err().to_string().contains("assumption polynomial"));
    }

    #[test]
    fn shape_errors_carry_paths() {
        assert!(err(r#"{"d": 2, "Q": [1.0], "B": [-1, 0, 0, -1], "pi": {"type": "Null"}}"#).starts_with("Q:"));
        assert!(err(r#"{"d": 1, "Q": [1.0], "B": [-1.0], "pi": {"type": "Null"}, "grid": {"halfwidth": [1, 2], "n": [8]}}"#).starts_with("grid:"));
    }

    #[test]
    fn hash_depends_on_content() {
        let a = build(parse(GOOD).unwrap()).unwrap();
        let b = build(parse(&GOOD.replace("-1.0", "-2.0")).unwrap()).unwrap();
        assert_eq!(a.model_hash().len(), 64);
        assert_ne!(a.model_hash(), b.model_hash());
    }
}
