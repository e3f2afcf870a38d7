//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected. [`RunConfig::to_map`] produces the fully resolved key set, which
//! is what run manifests echo; parsing that map reproduces the same run.

use crate::kernels::{AngularMeasure, KernelError, Mollifier, MollifierShape, SpeedFactor};
use crate::picard::{PicardConfig, Seeding, DEFAULT_DICTIONARY_SIZE};
use crate::simulator::{
    CollisionRule, InitialLaw, Kernels, Mode, PartnerUpdate, PositionLaw, SimConfig, VelocityLaw,
    DEFAULT_EVENT_BUDGET,
};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {0:?} given twice")]
    DuplicateKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub const KEYS: &[&str] = &[
    "mode",
    "n_particles",
    "horizon",
    "q.family",
    "q.theta_min",
    "q.mass",
    "q.coefficient",
    "q.exponent",
    "q.table",
    "sigma.family",
    "sigma.value",
    "sigma.scale",
    "sigma.table",
    "sigma.lipschitz",
    "beta.radius",
    "beta.shape",
    "partner_update",
    "collision_rule",
    "truncation_j",
    "output_times",
    "seed",
    "event_budget",
    "out_dir",
    "frozen_law",
    "init.velocity",
    "init.velocity.scale",
    "init.velocity.shift",
    "init.velocity.spread",
    "init.position",
    "init.position.scale",
    "picard.max_iters",
    "picard.tol",
    "picard.seeding",
    "picard.dictionary_size",
    "picard.noise_se",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PicardSettings {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub seeding: Option<Seeding>,
    pub dictionary_size: Option<usize>,
    pub noise_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub out_dir: PathBuf,
    pub frozen_law: Option<PathBuf>,
    pub picard: PicardSettings,
}

impl RunConfig {
    pub fn picard_config(&self) -> PicardConfig {
        let mut cfg = PicardConfig::new(self.sim.clone());
        cfg.max_iters = self.picard.max_iters.unwrap_or(cfg.max_iters);
        cfg.tol = self.picard.tol.unwrap_or(cfg.tol);
        cfg.seeding = self.picard.seeding.unwrap_or(cfg.seeding);
        cfg.dictionary_size = self
            .picard
            .dictionary_size
            .unwrap_or(DEFAULT_DICTIONARY_SIZE);
        cfg.noise_se = self.picard.noise_se;
        cfg
    }

    /// Every key with its resolved value, except `out_dir`.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let s = &self.sim;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put(
            "mode",
            match s.mode {
                Mode::MeanField => "mean_field",
                Mode::Frozen => "frozen",
            }
            .into(),
        );
        put("n_particles", s.particle_count.to_string());
        put("horizon", fmt_f64(s.horizon));
        let q = &s.kernels.angular;
        put("q.theta_min", fmt_f64(q.theta_min()));
        match q.family() {
            crate::kernels::AngularFamily::Uniform { mass } => {
                put("q.family", "uniform".into());
                put("q.mass", fmt_f64(*mass));
            }
            crate::kernels::AngularFamily::PowerLaw {
                coefficient,
                exponent,
            } => {
                put("q.family", "power_law".into());
                put("q.coefficient", fmt_f64(*coefficient));
                put("q.exponent", fmt_f64(*exponent));
            }
            crate::kernels::AngularFamily::Table { nodes } => {
                put("q.family", "custom_table".into());
                put("q.table", fmt_table(nodes));
            }
        }
        match s.kernels.speed.family() {
            crate::kernels::SpeedFamily::Constant { value } => {
                put("sigma.family", "constant".into());
                put("sigma.value", fmt_f64(*value));
            }
            crate::kernels::SpeedFamily::SmoothSaturating { scale } => {
                put("sigma.family", "smooth_saturating".into());
                put("sigma.scale", fmt_f64(*scale));
            }
            crate::kernels::SpeedFamily::Table { nodes } => {
                put("sigma.family", "custom_table".into());
                put("sigma.table", fmt_table(nodes));
                put(
                    "sigma.lipschitz",
                    fmt_f64(s.kernels.speed.lipschitz_bound()),
                );
            }
        }
        put("beta.radius", fmt_f64(s.kernels.mollifier.support_radius()));
        put(
            "beta.shape",
            match s.kernels.mollifier.shape() {
                MollifierShape::Bump => "bump",
                MollifierShape::CosineTaper => "cosine_taper",
            }
            .into(),
        );
        put(
            "partner_update",
            match s.partner_update {
                PartnerUpdate::OneSided => "one_sided",
                PartnerUpdate::Symmetric => "symmetric",
            }
            .into(),
        );
        put(
            "collision_rule",
            match s.collision_rule {
                CollisionRule::Elastic => "elastic",
                CollisionRule::Reversed => "reversed",
            }
            .into(),
        );
        put(
            "truncation_j",
            s.truncation_level.map_or("none".into(), |j| j.to_string()),
        );
        put(
            "output_times",
            s.output_times
                .iter()
                .map(|t| fmt_f64(*t))
                .collect::<Vec<_>>()
                .join(","),
        );
        put("seed", s.master_seed.to_string());
        put("event_budget", s.event_budget.to_string());
        match s.initial.velocity {
            VelocityLaw::Maxwellian { scale } => {
                put("init.velocity", "maxwellian".into());
                put("init.velocity.scale", fmt_f64(scale));
            }
            VelocityLaw::TwoPoint { shift, spread } => {
                put("init.velocity", "two_point".into());
                put("init.velocity.shift", fmt_f64(shift));
                put("init.velocity.spread", fmt_f64(spread));
            }
        }
        match s.initial.position {
            PositionLaw::Gaussian { scale } => {
                put("init.position", "gaussian".into());
                put("init.position.scale", fmt_f64(scale));
            }
            PositionLaw::UniformBox { half_width } => {
                put("init.position", "uniform_box".into());
                put("init.position.scale", fmt_f64(half_width));
            }
        }
        if let Some(p) = &self.frozen_law {
            put("frozen_law", p.display().to_string());
        }
        let pc = &self.picard;
        if let Some(v) = pc.max_iters {
            put("picard.max_iters", v.to_string());
        }
        if let Some(v) = pc.tol {
            put("picard.tol", fmt_f64(v));
        }
        if let Some(v) = pc.seeding {
            put(
                "picard.seeding",
                match v {
                    Seeding::Fresh => "fresh",
                    Seeding::Common => "common",
                }
                .into(),
            );
        }
        if let Some(v) = pc.dictionary_size {
            put("picard.dictionary_size", v.to_string());
        }
        if let Some(v) = pc.noise_se {
            put("picard.noise_se", fmt_f64(v));
        }
        m
    }
}

/// Shortest decimal that parses back to the same `f64`.
fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}

fn fmt_table(nodes: &[(f64, f64)]) -> String {
    nodes
        .iter()
        .map(|(a, b)| format!("{}:{}", fmt_f64(*a), fmt_f64(*b)))
        .collect::<Vec<_>>()
        .join(";")
}

/// Splits config text into key/value pairs; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::DuplicateKey(k.to_string()));
        }
    }
    Ok(map)
}

/// Parses config text; relative paths resolve against `base_dir`.
pub fn parse_str(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    from_map(&parse_pairs(text)?, base_dir)
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: reason.into(),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => parse_f64(v).ok_or_else(|| Self::bad(key, v, "not a number")),
        }
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key)
            .map(|v| parse_f64(v).ok_or_else(|| Self::bad(key, v, "not a number")))
            .transpose()
    }

    fn int_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .replace('_', "")
                .parse()
                .map_err(|_| Self::bad(key, v, "not a non-negative integer")),
        }
    }

    fn opt_int<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.replace('_', "")
                    .parse()
                    .map_err(|_| Self::bad(key, v, "not a non-negative integer"))
            })
            .transpose()
    }

    fn choice<'c>(
        &self,
        key: &str,
        default: &'c str,
        options: &[&'c str],
    ) -> Result<&'c str, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => options.iter().find(|o| **o == v).copied().ok_or_else(|| {
                Self::bad(key, v, format!("expected one of {}", options.join(", ")))
            }),
        }
    }

    fn table(&self, key: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
        let v = self
            .raw(key)
            .ok_or_else(|| Self::bad(key, "", "required for custom_table"))?;
        v.split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|node| {
                let (a, b) = node
                    .split_once(':')
                    .ok_or_else(|| Self::bad(key, v, "nodes are `x:y` pairs"))?;
                match (parse_f64(a.trim()), parse_f64(b.trim())) {
                    (Some(a), Some(b)) => Ok((a, b)),
                    _ => Err(Self::bad(key, v, "nodes are `x:y` pairs")),
                }
            })
            .collect()
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "infinity" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse::<f64>().ok().filter(|x| !x.is_nan()),
    }
}

pub fn from_map(map: &BTreeMap<String, String>, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }
    let r = Reader { map };
    let mode = match r.choice("mode", "mean_field", &["mean_field", "frozen"])? {
        "frozen" => Mode::Frozen,
        _ => Mode::MeanField,
    };
    let particle_count = r.int_or("n_particles", 10_000usize)?;
    let horizon = r.f64_or("horizon", 2.0)?;

    let theta_min = r.f64_or("q.theta_min", 0.0)?;
    let angular = match r.choice(
        "q.family",
        "uniform",
        &["uniform", "maxwellian_power", "power_law", "custom_table"],
    )? {
        "maxwellian_power" => {
            AngularMeasure::maxwellian_power(r.f64_or("q.coefficient", 1.0)?, theta_min)?
        }
        "power_law" => AngularMeasure::power_law(
            r.f64_or("q.coefficient", 1.0)?,
            r.f64_or("q.exponent", 1.5)?,
            theta_min,
        )?,
        "custom_table" => AngularMeasure::table(r.table("q.table")?)?,
        _ => AngularMeasure::uniform(r.f64_or("q.mass", 1.0)?, theta_min)?,
    };
    let speed = match r.choice(
        "sigma.family",
        "constant",
        &["constant", "smooth_saturating", "custom_table"],
    )? {
        "smooth_saturating" => SpeedFactor::smooth_saturating(r.f64_or("sigma.scale", 1.0)?)?,
        "custom_table" => SpeedFactor::table(
            r.table("sigma.table")?,
            r.f64_or("sigma.lipschitz", f64::INFINITY)?,
        )?,
        _ => SpeedFactor::constant(r.f64_or("sigma.value", 1.0)?)?,
    };
    let shape = match r.choice("beta.shape", "bump", &["bump", "cosine_taper"])? {
        "cosine_taper" => MollifierShape::CosineTaper,
        _ => MollifierShape::Bump,
    };
    let mollifier = Mollifier::new(r.f64_or("beta.radius", 0.5)?, shape)?;

    let partner_update =
        match r.choice("partner_update", "one_sided", &["one_sided", "symmetric"])? {
            "symmetric" => PartnerUpdate::Symmetric,
            _ => PartnerUpdate::OneSided,
        };
    let collision_rule = match r.choice("collision_rule", "elastic", &["elastic", "reversed"])? {
        "reversed" => CollisionRule::Reversed,
        _ => CollisionRule::Elastic,
    };
    let truncation_level = match r.raw("truncation_j") {
        None | Some("none") => None,
        Some(_) => r.opt_int::<u32>("truncation_j")?,
    };
    let output_times = match r.raw("output_times") {
        None => vec![0.0, 0.5 * horizon, horizon],
        Some(v) => v
            .split(',')
            .map(|s| {
                parse_f64(s)
                    .ok_or_else(|| Reader::bad("output_times", v, "comma-separated numbers"))
            })
            .collect::<Result<_, _>>()?,
    };

    let velocity = match r.choice("init.velocity", "maxwellian", &["maxwellian", "two_point"])? {
        "two_point" => VelocityLaw::TwoPoint {
            shift: r.f64_or("init.velocity.shift", 1.0)?,
            spread: r.f64_or("init.velocity.spread", 0.5)?,
        },
        _ => VelocityLaw::Maxwellian {
            scale: r.f64_or("init.velocity.scale", 1.0)?,
        },
    };
    let position = match r.choice("init.position", "gaussian", &["gaussian", "uniform_box"])? {
        "uniform_box" => PositionLaw::UniformBox {
            half_width: r.f64_or("init.position.scale", 1.0)?,
        },
        _ => PositionLaw::Gaussian {
            scale: r.f64_or("init.position.scale", 1.0)?,
        },
    };

    let sim = SimConfig {
        mode,
        particle_count,
        horizon,
        kernels: Kernels {
            angular,
            speed,
            mollifier,
        },
        partner_update,
        truncation_level,
        output_times,
        master_seed: r.int_or("seed", 1u64)?,
        initial: InitialLaw { velocity, position },
        event_budget: r.int_or("event_budget", DEFAULT_EVENT_BUDGET)?,
        collision_rule,
    };
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base_dir.join(p)
        }
    };
    let seeding = match r.raw("picard.seeding") {
        None => None,
        Some(_) => Some(
            match r.choice("picard.seeding", "fresh", &["fresh", "common"])? {
                "common" => Seeding::Common,
                _ => Seeding::Fresh,
            },
        ),
    };
    Ok(RunConfig {
        sim,
        out_dir: resolve(r.raw("out_dir").unwrap_or("enskog_out")),
        frozen_law: r.raw("frozen_law").map(|p| {
            let p = resolve(p);
            p.canonicalize().unwrap_or(p)
        }),
        picard: PicardSettings {
            max_iters: r.opt_int("picard.max_iters")?,
            tol: r.opt_f64("picard.tol")?,
            seeding,
            dictionary_size: r.opt_int("picard.dictionary_size")?,
            noise_se: r.opt_f64("picard.noise_se")?,
        },
    })
}
