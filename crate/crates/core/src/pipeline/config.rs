//! Run configuration: flat `key = value` documents, validation and replay.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::complete::{CompletionParams, RegularityCost, Synthesis};
use crate::integrate::{Roi, UpAxis};
use crate::mask::DEFAULT_DILATION;
use crate::mesh::TexturedMesh;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("bad value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("exactly one of mask, bboxes, detect-cmd must be given (got {0})")]
    MaskSourceCount(usize),
    #[error("roi is not well ordered: {0}")]
    BadRoi(String),
    #[error("gsd must be positive, got {0}")]
    BadGsd(f64),
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
}

/// Every key a config document may hold.
pub const KEYS: &[&str] = &[
    "input",
    "roi",
    "gsd",
    "up-axis",
    "mask",
    "bboxes",
    "detect-cmd",
    "dilation",
    "out",
    "seed",
    "patch-size",
    "lambda1",
    "lambda2",
    "iters",
    "levels",
    "edge-threshold",
    "synthesis",
    "directional-guidance",
    "linear-ordering",
    "regularity-cost",
    "eval-ref",
    "dump-debug",
];

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped
/// and later keys replace earlier ones.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let key = k.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse_config_text(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    Image(PathBuf),
    Boxes(PathBuf),
    Command(String),
}

/// Ground rectangle plus an optional height range; the height range
/// defaults to the mesh's extent along the up axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiSpec {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub z: Option<(f64, f64)>,
}

impl std::str::FromStr for RoiSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: String| ConfigError::BadValue {
            key: "roi".into(),
            msg,
        };
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| bad(format!("`{t}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != 4 && v.len() != 6 {
            return Err(bad(format!("expected 4 or 6 numbers, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad("values must be finite".into()));
        }
        Ok(Self {
            x_min: v[0],
            y_min: v[1],
            x_max: v[2],
            y_max: v[3],
            z: (v.len() == 6).then(|| (v[4], v[5])),
        })
    }
}

impl std::fmt::Display for RoiSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x_min, self.y_min, self.x_max, self.y_max)?;
        if let Some((a, b)) = self.z {
            write!(f, ",{a},{b}")?;
        }
        Ok(())
    }
}

impl RoiSpec {
    fn check(&self) -> Result<(), ConfigError> {
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(ConfigError::BadRoi(self.to_string()));
        }
        if let Some((a, b)) = self.z {
            if a > b {
                return Err(ConfigError::BadRoi(self.to_string()));
            }
        }
        Ok(())
    }

    /// World-space box for `mesh`.
    pub fn to_roi(&self, up: UpAxis, mesh: &TexturedMesh) -> Roi {
        let (a, b, u) = up.axes();
        let (zlo, zhi) = self.z.unwrap_or_else(|| match Roi::bounding(mesh) {
            Some(r) => (r.min[u], r.max[u]),
            None => (0.0, 0.0),
        });
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        min[a] = self.x_min;
        max[a] = self.x_max;
        min[b] = self.y_min;
        max[b] = self.y_max;
        min[u] = zlo;
        max[u] = zhi;
        Roi::new(min, max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    /// Whole mesh when absent.
    pub roi: Option<RoiSpec>,
    pub gsd: f64,
    pub up_axis: UpAxis,
    pub mask: MaskSource,
    pub dilation: f64,
    pub out: PathBuf,
    /// Root seed; stage seeds are derived from it.
    pub seed: u64,
    pub completion: CompletionParams,
    pub eval_ref: Option<PathBuf>,
    pub dump_debug: bool,
}

fn parse<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .map(|v| {
            v.parse::<T>().map_err(|e| ConfigError::BadValue {
                key: key.to_string(),
                msg: format!("`{v}`: {e}"),
            })
        })
        .transpose()
}

fn parse_bool(map: &BTreeMap<String, String>, key: &str) -> Result<Option<bool>, ConfigError> {
    map.get(key)
        .map(|v| match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(ConfigError::BadValue {
                key: key.to_string(),
                msg: format!("`{v}` is not a boolean"),
            }),
        })
        .transpose()
}

impl PipelineConfig {
    /// Builds and validates a config from merged key/value settings.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let input: PathBuf = parse(map, "input")?.ok_or(ConfigError::Missing("input"))?;
        let out: PathBuf = parse(map, "out")?.ok_or(ConfigError::Missing("out"))?;
        let gsd: f64 = parse(map, "gsd")?.ok_or(ConfigError::Missing("gsd"))?;
        if !(gsd > 0.0 && gsd.is_finite()) {
            return Err(ConfigError::BadGsd(gsd));
        }
        let roi: Option<RoiSpec> = parse(map, "roi")?;
        if let Some(r) = &roi {
            r.check()?;
        }
        let sources: Vec<MaskSource> = [
            map.get("mask").map(|v| MaskSource::Image(v.into())),
            map.get("bboxes").map(|v| MaskSource::Boxes(v.into())),
            map.get("detect-cmd").map(|v| MaskSource::Command(v.clone())),
        ]
        .into_iter()
        .flatten()
        .collect();
        if sources.len() != 1 {
            return Err(ConfigError::MaskSourceCount(sources.len()));
        }
        let dilation = parse(map, "dilation")?.unwrap_or(DEFAULT_DILATION);
        if !(0.0..=1.0).contains(&dilation) {
            return Err(ConfigError::BadValue {
                key: "dilation".into(),
                msg: format!("{dilation} is outside [0, 1]"),
            });
        }
        let seed = parse(map, "seed")?.unwrap_or(0u64);

        let d = CompletionParams::default();
        let regularity_cost = match map.get("regularity-cost").map(|s| s.as_str()) {
            None | Some("undirected") => RegularityCost::Undirected,
            Some("literal") => RegularityCost::Literal,
            Some(other) => {
                return Err(ConfigError::BadValue {
                    key: "regularity-cost".into(),
                    msg: format!("`{other}` (expected undirected or literal)"),
                })
            }
        };
        let completion = CompletionParams {
            patch_size: parse(map, "patch-size")?.unwrap_or(d.patch_size),
            lambda1: parse(map, "lambda1")?.unwrap_or(d.lambda1),
            lambda2: parse(map, "lambda2")?.unwrap_or(d.lambda2),
            iterations: parse(map, "iters")?.unwrap_or(d.iterations),
            max_levels: parse(map, "levels")?.unwrap_or(d.max_levels),
            edge_threshold: parse(map, "edge-threshold")?.unwrap_or(d.edge_threshold),
            synthesis: parse::<Synthesis>(map, "synthesis")?.unwrap_or(d.synthesis),
            directional_guidance: parse_bool(map, "directional-guidance")?.unwrap_or(d.directional_guidance),
            linear_ordering: parse_bool(map, "linear-ordering")?.unwrap_or(d.linear_ordering),
            regularity_cost,
            keep_levels: false,
            ..d
        };
        completion.validate().map_err(|e| ConfigError::BadValue {
            key: "completion".into(),
            msg: e.to_string(),
        })?;
        Ok(Self {
            input,
            roi,
            gsd,
            up_axis: parse(map, "up-axis")?.unwrap_or_default(),
            mask: sources.into_iter().next().expect("one source"),
            dilation,
            out,
            seed,
            completion,
            eval_ref: parse(map, "eval-ref")?,
            dump_debug: parse_bool(map, "dump-debug")?.unwrap_or(false),
        })
    }

    /// Every effective setting, defaults included.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("input", self.input.display().to_string());
        if let Some(r) = &self.roi {
            put("roi", r.to_string());
        }
        put("gsd", self.gsd.to_string());
        put("up-axis", self.up_axis.to_string());
        match &self.mask {
            MaskSource::Image(p) => put("mask", p.display().to_string()),
            MaskSource::Boxes(p) => put("bboxes", p.display().to_string()),
            MaskSource::Command(c) => put("detect-cmd", c.clone()),
        }
        put("dilation", self.dilation.to_string());
        put("out", self.out.display().to_string());
        put("seed", self.seed.to_string());
        let c = &self.completion;
        put("patch-size", c.patch_size.to_string());
        put("lambda1", c.lambda1.to_string());
        put("lambda2", c.lambda2.to_string());
        put("iters", c.iterations.to_string());
        put("levels", c.max_levels.to_string());
        put("edge-threshold", c.edge_threshold.to_string());
        put("synthesis", c.synthesis.to_string());
        put("directional-guidance", c.directional_guidance.to_string());
        put("linear-ordering", c.linear_ordering.to_string());
        put(
            "regularity-cost",
            match c.regularity_cost {
                RegularityCost::Undirected => "undirected",
                RegularityCost::Literal => "literal",
            }
            .into(),
        );
        if let Some(p) = &self.eval_ref {
            put("eval-ref", p.display().to_string());
        }
        put("dump-debug", self.dump_debug.to_string());
        m
    }

    /// Config document that reproduces this run.
    pub fn to_config_text(&self) -> String {
        self.to_map().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BTreeMap<String, String> {
        parse_config_text("input = a.obj\nout = o\ngsd = 0.05\nbboxes = b.json # boxes\n").unwrap()
    }

    #[test]
    fn defaults_and_round_trip() {
        let c = PipelineConfig::from_map(&base()).unwrap();
        assert_eq!(c.completion, CompletionParams::default());
        assert_eq!(c.up_axis, UpAxis::Z);
        let again = PipelineConfig::from_map(&parse_config_text(&c.to_config_text()).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn validation() {
        let mut m = base();
        m.insert("roi".into(), "5,0,1,4".into());
        assert!(matches!(PipelineConfig::from_map(&m), Err(ConfigError::BadRoi(_))));
        let mut m = base();
        m.insert("mask".into(), "m.png".into());
        assert_eq!(PipelineConfig::from_map(&m), Err(ConfigError::MaskSourceCount(2)));
        let mut m = base();
        m.insert("gsd".into(), "0".into());
        assert_eq!(PipelineConfig::from_map(&m), Err(ConfigError::BadGsd(0.0)));
        let mut m = base();
        m.insert("patch-size".into(), "20".into());
        assert!(PipelineConfig::from_map(&m).is_err());
        assert!(matches!(parse_config_text("colour = red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(parse_config_text("gsd 3"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn roi_forms() {
        let r: RoiSpec = "0,1,2,3".parse().unwrap();
        assert_eq!(r.z, None);
        let r: RoiSpec = "0, 1, 2, 3, -1, 4".parse().unwrap();
        assert_eq!(r.z, Some((-1.0, 4.0)));
        assert!("0,1,2".parse::<RoiSpec>().is_err());
    }
}
