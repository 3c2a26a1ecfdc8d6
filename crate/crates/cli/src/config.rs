//! Run configuration: a JSON document with one section per concern.
//!
//! Matrices are row-major nested arrays. Every section except `params` is
//! optional; missing fields take the defaults documented on each struct.
//! The SHA-256 of the raw configuration text is kept alongside the parsed
//! value so that every artifact can name the exact input that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use affine_hjm::acceptance::AcceptanceConfig;
use affine_hjm::{
    AdmissibleParams, InitialCurve, MeasureChange, ParamsSpec, PsdMatrix, Scheme, SymMatrix, VolatilitySpec,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// The configuration used when `--config` is not given.
pub const BUNDLED_DEFAULT: &str = include_str!("../configs/default.json");

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSpec,
    #[serde(default)]
    pub vol: Option<VolatilitySpec>,
    #[serde(default)]
    pub initial_curve: Option<CurveSource>,
    #[serde(default)]
    pub mc_settings: McSettings,
    #[serde(default)]
    pub measure_change: MeasureChange,
    #[serde(default)]
    pub simulate: SimulateSettings,
    #[serde(default)]
    pub riccati: RiccatiSettings,
    #[serde(default)]
    pub curve: CurveSettings,
    #[serde(default)]
    pub longterm: LongtermSettings,
    #[serde(default)]
    pub accept: AcceptanceConfig,
}

/// The initial forward curve: a bare number is a flat rate, `{"file": ...}`
/// names a two-column CSV `(T, rate)` relative to the configuration file,
/// and `{"flat": r}` or `{"nodes": [[T, r], ...]}` give the curve inline.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum CurveSource {
    Flat(f64),
    File { file: PathBuf },
    Inline(InitialCurve),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub t_end: f64,
    /// Initial state; the identity when absent.
    pub x0: Option<SymMatrix>,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_paths: 1000,
            dt: 2f64.powi(-8),
            seed: 1,
            scheme: Scheme::EulerProject,
            t_end: 1.0,
            x0: None,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    /// Number of leading paths written to `simulate_paths.csv`.
    pub dump_paths: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiccatiSettings {
    /// The transform argument; the identity when absent.
    pub u: Option<SymMatrix>,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for RiccatiSettings {
    fn default() -> Self {
        Self {
            u: None,
            t_end: 1.0,
            dt: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSettings {
    pub n_paths: usize,
    /// Observation times; each must lie on the simulation grid.
    pub t_obs: Vec<f64>,
    /// Explicit maturity grid. When absent the grid runs from 0 to
    /// `max_maturity` in steps of `maturity_step`.
    pub maturities: Option<Vec<f64>>,
    pub max_maturity: f64,
    pub maturity_step: f64,
}

impl Default for CurveSettings {
    fn default() -> Self {
        Self {
            n_paths: 10,
            t_obs: vec![0.0, 0.5, 1.0],
            maturities: None,
            max_maturity: 10.0,
            maturity_step: 0.25,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongtermSettings {
    pub n_paths: usize,
    /// Times at which the yield ladder is evaluated and extrapolated.
    pub t_obs: Vec<f64>,
    /// Maturities of the yield ladder.
    pub ladder: Vec<f64>,
    /// Long-term level at time 0; taken from the initial curve when absent.
    pub ell0: Option<f64>,
}

impl Default for LongtermSettings {
    fn default() -> Self {
        Self {
            n_paths: 10,
            t_obs: vec![0.5, 1.0],
            ladder: affine_hjm::longterm::DEFAULT_LADDER.to_vec(),
            ell0: None,
        }
    }
}

/// A parsed configuration together with where it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    /// Directory against which relative file references resolve.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    /// Reads and parses `path`, or the bundled default when `path` is `None`.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                let base_dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Self::parse(&text, &p.display().to_string(), base_dir)
            }
            None => Self::parse(BUNDLED_DEFAULT, "<bundled default>", PathBuf::from(".")),
        }
    }

    /// Parses configuration text; `origin` labels parse errors.
    pub fn parse(text: &str, origin: &str, base_dir: PathBuf) -> CliResult<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| CliError::ConfigParse {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Ok(Self {
            config,
            sha256: sha256_hex(text.as_bytes()),
            base_dir,
        })
    }

    /// Replaces every seed in the configuration.
    pub fn override_seed(&mut self, seed: u64) {
        self.config.mc_settings.seed = seed;
        self.config.accept.seed = seed;
    }

    pub fn params(&self) -> CliResult<AdmissibleParams> {
        Ok(AdmissibleParams::try_from(self.config.params.clone())?)
    }

    pub fn x0(&self, dim: usize) -> CliResult<PsdMatrix> {
        match &self.config.mc_settings.x0 {
            Some(x) => {
                x.check_dim(dim)?;
                Ok(PsdMatrix::new(x.clone())?)
            }
            None => Ok(PsdMatrix::identity(dim)),
        }
    }

    pub fn vol(&self, dim: usize) -> CliResult<&VolatilitySpec> {
        let vol = self
            .config
            .vol
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a `vol` section".into()))?;
        vol.sigma0.check_dim(dim)?;
        Ok(vol)
    }

    pub fn initial_curve(&self) -> CliResult<InitialCurve> {
        match &self.config.initial_curve {
            None => Err(CliError::Config("this command needs an `initial_curve` section".into())),
            Some(CurveSource::Flat(r)) => Ok(InitialCurve::flat(*r)?),
            Some(CurveSource::Inline(c)) => Ok(c.clone()),
            Some(CurveSource::File { file }) => read_curve_csv(&self.base_dir.join(file)),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads `(T, rate)` rows. Lines starting with `#` are comments and a
/// non-numeric first row is taken as a header.
pub fn read_curve_csv(path: &Path) -> CliResult<InitialCurve> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut nodes = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != 2 {
            return Err(CliError::Config(format!(
                "{}: row {}: expected 2 columns (T, rate), found {}",
                path.display(),
                row + 1,
                record.len()
            )));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(t), Ok(r)) => nodes.push((t, r)),
            _ if row == 0 => continue,
            _ => {
                return Err(CliError::Config(format!(
                    "{}: row {}: cannot parse `{}`, `{}` as numbers",
                    path.display(),
                    row + 1,
                    &record[0],
                    &record[1]
                )))
            }
        }
    }
    Ok(InitialCurve::from_nodes(nodes)?)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Config(format!("{}: {other:?}", path.display())),
    }
}
