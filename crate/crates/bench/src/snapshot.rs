//! Policy snapshots: a text header terminated by an `end` line, then the
//! parameters and normalizer statistics as little-endian f64.
//!
//! ```text
//! raps-snapshot 1
//! task-spec {"name":"lift-block",...}
//! mode raps
//! dof position-only
//! obs-mode state
//! primitives lift,drop,...
//! shape <obs_dim> <hidden> <num_primitives> <arg_dim>
//! end
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use raps_core::rl::{NetShape, ObsNormalizer, PolicyParams};
use raps_core::{DofMode, ObsMode, TaskSpec};

use crate::config::Mode;
use crate::error::{BenchError, Result};

const MAGIC: &str = "raps-snapshot 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub task: TaskSpec,
    pub mode: Mode,
    pub dof: DofMode,
    pub obs_mode: ObsMode,
    /// Library names in action-index order (empty in raw mode).
    pub primitives: Vec<String>,
    pub params: PolicyParams,
    pub normalizer: ObsNormalizer,
}

fn enum_str<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .expect("unit enum")
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Option<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
}

impl Snapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.params.shape();
        let mut out = Vec::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(
            out,
            "task-spec {}",
            serde_json::to_string(&self.task).expect("spec serializes")
        );
        let _ = writeln!(out, "mode {}", self.mode.as_str());
        let _ = writeln!(out, "dof {}", enum_str(&self.dof));
        let _ = writeln!(out, "obs-mode {}", enum_str(&self.obs_mode));
        let _ = writeln!(out, "primitives {}", self.primitives.join(","));
        let _ = writeln!(
            out,
            "shape {} {} {} {}",
            s.obs_dim, s.hidden, s.num_primitives, s.arg_dim
        );
        let _ = writeln!(out, "end");
        let floats = self
            .params
            .as_slice()
            .iter()
            .chain(&self.normalizer.mean)
            .chain(&self.normalizer.var)
            .chain(std::iter::once(&self.normalizer.count));
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| BenchError::format(path, m);
        let mut fields = std::collections::BTreeMap::new();
        let mut at = 0;
        let mut first = true;
        loop {
            let nl = bytes[at..]
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| bad("header not terminated"))?;
            let line = std::str::from_utf8(&bytes[at..at + nl]).map_err(|_| bad("header is not utf-8"))?;
            at += nl + 1;
            if first {
                if line != MAGIC {
                    return Err(bad("not a snapshot file"));
                }
                first = false;
                continue;
            }
            if line == "end" {
                break;
            }
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| bad(&format!("missing `{k}`")));
        let task: TaskSpec = serde_json::from_str(get("task-spec")?).map_err(|e| bad(&e.to_string()))?;
        let mode = match get("mode")?.as_str() {
            "raps" => Mode::Raps,
            "raw" => Mode::Raw,
            _ => return Err(bad("unknown mode")),
        };
        let dof = parse_enum(get("dof")?).ok_or_else(|| bad("unknown dof"))?;
        let obs_mode = parse_enum(get("obs-mode")?).ok_or_else(|| bad("unknown obs-mode"))?;
        let prims = get("primitives")?;
        let primitives = if prims.is_empty() {
            vec![]
        } else {
            prims.split(',').map(str::to_string).collect()
        };
        let dims: Vec<usize> = get("shape")?
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad shape"))?;
        let [obs_dim, hidden, num_primitives, arg_dim] = dims[..] else {
            return Err(bad("bad shape"));
        };
        let shape = NetShape {
            obs_dim,
            hidden,
            num_primitives,
            arg_dim,
        };
        let body = &bytes[at..];
        if !body.len().is_multiple_of(8) {
            return Err(bad("truncated body"));
        }
        let floats: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let n = PolicyParams::zeros(shape).len();
        if floats.len() != n + 2 * obs_dim + 1 {
            return Err(bad("body length does not match the shape"));
        }
        let params = PolicyParams::from_raw(shape, floats[..n].to_vec()).expect("length checked");
        let normalizer = ObsNormalizer {
            mean: floats[n..n + obs_dim].to_vec(),
            var: floats[n + obs_dim..n + 2 * obs_dim].to_vec(),
            count: floats[n + 2 * obs_dim],
        };
        Ok(Self {
            task,
            mode,
            dof,
            obs_mode,
            primitives,
            params,
            normalizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(BenchError::io("cannot write", path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(BenchError::io("cannot read", path))?;
        Self::from_bytes(&bytes, path)
    }
}
