//! Run configuration: a plain-text `key = value` file with `[section]`
//! headers, layered under command-line overrides.
//!
//! | section      | key            | default              |
//! |--------------|----------------|----------------------|
//! | `array`      | `M`            | 10                   |
//! | `array`      | `N`            | 10                   |
//! | `array`      | `d_t`          | 0.5                  |
//! | `array`      | `rx_aperture`  | 5                    |
//! | `array`      | `geometry_seed`| 1                    |
//! | `beamspace`  | `K`            | 4                    |
//! | `beamspace`  | `sector_min_deg` / `sector_max_deg` | −15 / 15 |
//! | `beamspace`  | `grid_step_deg`| 0.1                  |
//! | `scene`      | `angles_deg`   | `-15,15`             |
//! | `scene`      | `dopplers`     | `0.1,-0.25`          |
//! | `simulation` | `Q`            | 64                   |
//! | `simulation` | `snr_db`       | 5 (`inf` = noiseless)|
//! | `experiment` | `trials`       | 500                  |
//! | `experiment` | `snr_grid_db`  | `-10,-5,0,5,10,15,20`|
//! | `experiment` | `seed`         | 2024                 |
//! | `als`        | `max_iter`     | 500                  |
//! | `als`        | `tol`          | 1e-8                 |
//! | `als`        | `init`         | `dtld`               |
//! | `doa`        | `max_candidates`| 4                   |
//! | `output`     | `dir`          | `out`                |
//! | `output`     | `tensor`       | (none)               |
//!
//! Key names are unique across sections, so a key may also appear before any
//! header. Unknown sections and keys are rejected. Lines starting with `#` or
//! `;` are comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::array::Sector;
use crate::cp::InitStrategy;
use crate::doa::DoaConfig;
use crate::error::{Error, Result};
use crate::experiments::{AlsSettings, McConfig, SceneTemplate, SystemConfig};
use crate::Complex64;

/// Doppler shifts handed out when a scene's angles are given without them.
pub const DEFAULT_DOPPLERS: [f64; 5] = [0.1, -0.25, 0.3, -0.4, 0.2];

/// Every accepted key with its section.
pub const KEYS: &[(&str, &str)] = &[
    ("array", "M"),
    ("array", "N"),
    ("array", "d_t"),
    ("array", "rx_aperture"),
    ("array", "geometry_seed"),
    ("beamspace", "K"),
    ("beamspace", "sector_min_deg"),
    ("beamspace", "sector_max_deg"),
    ("beamspace", "grid_step_deg"),
    ("scene", "angles_deg"),
    ("scene", "dopplers"),
    ("simulation", "Q"),
    ("simulation", "snr_db"),
    ("experiment", "trials"),
    ("experiment", "snr_grid_db"),
    ("experiment", "seed"),
    ("als", "max_iter"),
    ("als", "tol"),
    ("als", "init"),
    ("doa", "max_candidates"),
    ("output", "dir"),
    ("output", "tensor"),
];

/// Fully resolved settings for one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub scene: SceneTemplate,
    /// SNR of single-CPI subcommands.
    #[serde(with = "snr_value")]
    pub snr_db: f64,
    /// SNR grid of the sweeps.
    #[serde(with = "snr_list")]
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub als: AlsSettings,
    pub max_candidates: usize,
    pub out_dir: PathBuf,
    pub tensor_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            scene: SceneTemplate {
                angles_deg: vec![-15.0, 15.0],
                dopplers: vec![0.1, -0.25],
            },
            snr_db: 5.0,
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 500,
            seed: 2024,
            als: AlsSettings::default(),
            max_candidates: DoaConfig::default().max_candidates,
            out_dir: PathBuf::from("out"),
            tensor_path: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snr_db: Option<f64>,
    pub snr_grid_db: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub beams: Option<usize>,
    pub targets: Option<Vec<f64>>,
    pub dopplers: Option<Vec<f64>>,
    pub tensor_path: Option<PathBuf>,
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: expected {what}"))
}

fn parse_num<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, value, what))
}

fn parse_real(key: &str, value: &str) -> Result<f64> {
    let x: f64 = parse_num(key, value, "a number")?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(key, value, "a finite number"))
    }
}

/// SNR in dB; `inf` selects the noiseless case.
fn parse_snr(key: &str, value: &str) -> Result<f64> {
    let x: f64 = parse_num(key, value, "a number or inf")?;
    if x.is_nan() || x == f64::NEG_INFINITY {
        Err(bad(key, value, "a number or inf"))
    } else {
        Ok(x)
    }
}

fn parse_list(key: &str, value: &str, item: fn(&str, &str) -> Result<f64>) -> Result<Vec<f64>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| item(key, v)).collect()
}

/// Comma-separated finite reals, as used by `--targets`.
pub fn parse_real_list(value: &str) -> Result<Vec<f64>> {
    parse_list("list", value, parse_real)
}

/// Comma-separated SNR values, `inf` allowed.
pub fn parse_snr_list(value: &str) -> Result<Vec<f64>> {
    parse_list("list", value, parse_snr)
}

/// `{:?}`-style float text that reads back exactly, with `inf` for infinity.
fn real_text(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{x:?}")
    }
}

fn list_text(xs: &[f64]) -> String {
    xs.iter()
        .map(|&x| real_text(x))
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Parses config text on top of the defaults (no validation).
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        let mut dopplers_given = false;
        for (section, props) in ini.iter() {
            if let Some(s) = section {
                if !KEYS.iter().any(|(sec, _)| *sec == s) {
                    return Err(Error::Config(format!("unknown section [{s}]")));
                }
            }
            for (key, value) in props.iter() {
                let expected = KEYS
                    .iter()
                    .find(|(_, k)| *k == key)
                    .map(|(s, _)| *s)
                    .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
                if let Some(s) = section {
                    if s != expected {
                        return Err(Error::Config(format!(
                            "key {key:?} belongs in [{expected}], found in [{s}]"
                        )));
                    }
                }
                dopplers_given |= key == "dopplers";
                cfg.set(key, value)?;
            }
        }
        if !dopplers_given {
            cfg.fill_dopplers()?;
        }
        Ok(cfg)
    }

    /// Reads and parses a config file (no validation).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    /// File (or defaults when `path` is `None`), then overrides, then validation.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |what| parse_num::<usize>(key, value, what);
        match key {
            "M" => self.system.tx_elements = int("a positive integer")?,
            "N" => self.system.rx_elements = int("a positive integer")?,
            "d_t" => self.system.tx_spacing = parse_real(key, value)?,
            "rx_aperture" => self.system.rx_aperture = parse_real(key, value)?,
            "geometry_seed" => self.system.geometry_seed = parse_num(key, value, "an integer")?,
            "K" => self.system.beams = int("a positive integer")?,
            "sector_min_deg" => self.system.sector.min_deg = parse_real(key, value)?,
            "sector_max_deg" => self.system.sector.max_deg = parse_real(key, value)?,
            "grid_step_deg" => self.system.beam_grid_step = parse_real(key, value)?,
            "angles_deg" => self.scene.angles_deg = parse_list(key, value, parse_real)?,
            "dopplers" => self.scene.dopplers = parse_list(key, value, parse_real)?,
            "Q" => self.system.pulses = int("a positive integer")?,
            "snr_db" => self.snr_db = parse_snr(key, value)?,
            "trials" => self.trials = int("a positive integer")?,
            "snr_grid_db" => self.snr_grid_db = parse_list(key, value, parse_snr)?,
            "seed" => self.seed = parse_num(key, value, "an integer")?,
            "max_iter" => self.als.max_iter = int("a positive integer")?,
            "tol" => self.als.tol = parse_real(key, value)?,
            "init" => {
                self.als.init = value
                    .trim()
                    .parse::<InitStrategy>()
                    .map_err(|_| bad(key, value, "random, data-driven or dtld"))?
            }
            "max_candidates" => self.max_candidates = int("a positive integer")?,
            "dir" => self.out_dir = PathBuf::from(value.trim()),
            "tensor" => self.tensor_path = Some(PathBuf::from(value.trim())),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Gives the scene default Doppler shifts when their count does not match.
    fn fill_dopplers(&mut self) -> Result<()> {
        let l = self.scene.angles_deg.len();
        if self.scene.dopplers.len() != l {
            if l > DEFAULT_DOPPLERS.len() {
                return Err(Error::Config(format!(
                    "{l} targets need explicit dopplers (defaults cover {})",
                    DEFAULT_DOPPLERS.len()
                )));
            }
            self.scene.dopplers = DEFAULT_DOPPLERS[..l].to_vec();
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.snr_db {
            self.snr_db = v;
        }
        if let Some(v) = &o.snr_grid_db {
            self.snr_grid_db = v.clone();
        }
        if let Some(v) = o.trials {
            self.trials = v;
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
        if let Some(v) = o.beams {
            self.system.beams = v;
        }
        if let Some(v) = &o.tensor_path {
            self.tensor_path = Some(v.clone());
        }
        if let Some(v) = &o.targets {
            self.scene.angles_deg = v.clone();
        }
        if let Some(v) = &o.dopplers {
            self.scene.dopplers = v.clone();
        } else if o.targets.is_some() {
            self.fill_dopplers()?;
        }
        Ok(())
    }

    /// Checks every invariant a subcommand relies on.
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let positive = [
            ("M", s.tx_elements),
            ("N", s.rx_elements),
            ("K", s.beams),
            ("Q", s.pulses),
            ("trials", self.trials),
            ("max_iter", self.als.max_iter),
            ("max_candidates", self.max_candidates),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if s.tx_elements < 2 {
            return Err(Error::Config("M must be at least 2".into()));
        }
        if s.beams > s.tx_elements {
            return Err(Error::Config(format!(
                "K = {} exceeds M = {}",
                s.beams, s.tx_elements
            )));
        }
        if !(s.tx_spacing > 0.0 && s.tx_spacing <= 0.5) {
            return Err(Error::Config(format!(
                "d_t = {} must lie in (0, 0.5] for an unambiguous angle map",
                s.tx_spacing
            )));
        }
        if !(s.rx_aperture >= 0.0) {
            return Err(Error::Config("rx_aperture must be non-negative".into()));
        }
        if !(s.beam_grid_step > 0.0) {
            return Err(Error::Config("grid_step_deg must be positive".into()));
        }
        if !(self.als.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr_grid_db is empty".into()));
        }
        Sector::new(s.sector.min_deg, s.sector.max_deg)
            .map_err(|e| Error::Config(e.to_string()))?;
        let l = self.scene.len();
        if l > 5 {
            return Err(Error::Config(format!(
                "at most 5 targets supported, got {l}"
            )));
        }
        self.scene
            .realize(&vec![Complex64::new(1.0, 0.0); l])
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.scene.dopplers.len() != l {
            return Err(Error::Config(format!(
                "{l} angles but {} dopplers",
                self.scene.dopplers.len()
            )));
        }
        Ok(())
    }

    pub fn doa(&self) -> DoaConfig {
        DoaConfig {
            tx_spacing: self.system.tx_spacing,
            max_candidates: self.max_candidates,
        }
    }

    /// Monte-Carlo view of the configuration.
    pub fn mc(&self) -> McConfig {
        McConfig {
            system: self.system.clone(),
            scene: self.scene.clone(),
            trials: self.trials,
            snr_grid_db: self.snr_grid_db.clone(),
            master_seed: self.seed,
            als: self.als,
            doa: self.doa(),
        }
    }

    /// Config-file text that parses back to `self`.
    pub fn to_ini_string(&self) -> String {
        let s = &self.system;
        let init = match self.als.init {
            InitStrategy::Random => "random",
            InitStrategy::DataDriven => "data-driven",
            InitStrategy::Dtld => "dtld",
        };
        let mut out = String::new();
        let mut section = |name: &str, kv: &[(&str, String)]| {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in kv {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        };
        section(
            "array",
            &[
                ("M", s.tx_elements.to_string()),
                ("N", s.rx_elements.to_string()),
                ("d_t", real_text(s.tx_spacing)),
                ("rx_aperture", real_text(s.rx_aperture)),
                ("geometry_seed", s.geometry_seed.to_string()),
            ],
        );
        section(
            "beamspace",
            &[
                ("K", s.beams.to_string()),
                ("sector_min_deg", real_text(s.sector.min_deg)),
                ("sector_max_deg", real_text(s.sector.max_deg)),
                ("grid_step_deg", real_text(s.beam_grid_step)),
            ],
        );
        section(
            "scene",
            &[
                ("angles_deg", list_text(&self.scene.angles_deg)),
                ("dopplers", list_text(&self.scene.dopplers)),
            ],
        );
        section(
            "simulation",
            &[
                ("Q", s.pulses.to_string()),
                ("snr_db", real_text(self.snr_db)),
            ],
        );
        section(
            "experiment",
            &[
                ("trials", self.trials.to_string()),
                ("snr_grid_db", list_text(&self.snr_grid_db)),
                ("seed", self.seed.to_string()),
            ],
        );
        section(
            "als",
            &[
                ("max_iter", self.als.max_iter.to_string()),
                ("tol", real_text(self.als.tol)),
                ("init", init.to_string()),
            ],
        );
        section(
            "doa",
            &[("max_candidates", self.max_candidates.to_string())],
        );
        let mut output = vec![("dir", self.out_dir.display().to_string())];
        if let Some(t) = &self.tensor_path {
            output.push(("tensor", t.display().to_string()));
        }
        section("output", &output);
        out.pop();
        out
    }
}

/// JSON numbers cannot hold infinity, so it travels as the string `"inf"`.
pub(crate) mod snr_value {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(super) enum Repr {
        Num(f64),
        Text(String),
    }

    pub(super) fn to_repr(x: f64) -> Repr {
        if x.is_finite() {
            Repr::Num(x)
        } else {
            Repr::Text(super::real_text(x))
        }
    }

    pub(super) fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(E::custom(format!("invalid SNR {t:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

pub(crate) mod snr_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::snr_value::{from_repr, to_repr, Repr};

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        xs.iter()
            .map(|&x| to_repr(x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(from_repr)
            .collect()
    }
}
