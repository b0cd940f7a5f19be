//! Binary snapshot of a solved policy: `V*`, `π` and the configuration it
//! was solved for, behind a versioned header.
//!
//! Layout, little endian:
//!
//! ```text
//! magic "SMPOLICY" | version u32 | kind u8 | converged u8 | reserved u16
//! states u64 | actions u32 | sweeps u32 | gamma f64 | eta f64 | residual f64
//! config_len u32 | config (TOML, UTF-8) | values f64 × states | policy u16 × states
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::MissionConfig;
use crate::error::{Error, Result};
use crate::mdp::{self, MdpModel, Solution, SolveOptions, ValueFunction};

pub const MAGIC: &[u8; 8] = b"SMPOLICY";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Uav,
    Fleet,
}

impl ModelKind {
    fn code(self) -> u8 {
        match self {
            ModelKind::Uav => 0,
            ModelKind::Fleet => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(ModelKind::Uav),
            1 => Ok(ModelKind::Fleet),
            _ => Err(Error::Snapshot(format!("unknown model kind {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub kind: ModelKind,
    pub config: MissionConfig,
    pub action_count: usize,
    pub gamma: f64,
    pub eta: f64,
    pub residual: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub values: Vec<f64>,
    pub policy: Vec<u16>,
}

impl PolicySnapshot {
    pub fn from_solution(kind: ModelKind, config: &MissionConfig, model: &MdpModel, sol: &Solution, eta: f64) -> Self {
        let policy = mdp::extract_policy(model, &sol.value)
            .into_iter()
            .map(|a| a as u16)
            .collect();
        Self {
            kind,
            config: config.clone(),
            action_count: model.action_count(),
            gamma: model.gamma(),
            eta,
            residual: sol.value.residual,
            sweeps: sol.value.sweeps,
            converged: sol.converged(),
            values: sol.value.values.clone(),
            policy,
        }
    }

    pub fn state_count(&self) -> usize {
        self.values.len()
    }

    pub fn value_function(&self) -> ValueFunction {
        ValueFunction {
            values: self.values.clone(),
            residual: self.residual,
            sweeps: self.sweeps,
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let cfg = self.config.to_toml_string();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[self.kind.code(), self.converged as u8, 0, 0])?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        w.write_all(&(self.action_count as u32).to_le_bytes())?;
        w.write_all(&(self.sweeps as u32).to_le_bytes())?;
        for x in [self.gamma, self.eta, self.residual] {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(cfg.as_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 10);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.policy {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Snapshot("not a policy snapshot (bad magic)".into()));
        }
        let version = u32::from_le_bytes(cur.array()?);
        if version != FORMAT_VERSION {
            return Err(Error::Snapshot(format!(
                "snapshot format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let [kind, converged, _, _] = cur.array::<4>()?;
        let kind = ModelKind::from_code(kind)?;
        let n = u64::from_le_bytes(cur.array()?) as usize;
        let action_count = u32::from_le_bytes(cur.array()?) as usize;
        let sweeps = u32::from_le_bytes(cur.array()?) as usize;
        let gamma = f64::from_le_bytes(cur.array()?);
        let eta = f64::from_le_bytes(cur.array()?);
        let residual = f64::from_le_bytes(cur.array()?);
        let cfg_len = u32::from_le_bytes(cur.array()?) as usize;
        let cfg_text = std::str::from_utf8(cur.take(cfg_len)?)
            .map_err(|_| Error::Snapshot("embedded config is not UTF-8".into()))?;
        let config = MissionConfig::from_toml_str(cfg_text)?;
        let expected = n
            .checked_mul(10)
            .ok_or_else(|| Error::Snapshot("state count overflows".into()))?;
        if bytes.len() - cur.pos != expected {
            return Err(Error::Snapshot(format!(
                "payload is {} bytes, header implies {expected}",
                bytes.len() - cur.pos
            )));
        }
        let values = cur
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let policy: Vec<u16> = cur
            .take(2 * n)?
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if policy.iter().any(|&a| a as usize >= action_count) {
            return Err(Error::Snapshot("policy names an action beyond the action count".into()));
        }
        Ok(Self {
            kind,
            config,
            action_count,
            gamma,
            eta,
            residual,
            sweeps,
            converged: converged != 0,
            values,
            policy,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

/// Builds the model of `kind` for `config`, solves it and packages the result.
pub fn solve_snapshot(kind: ModelKind, config: &MissionConfig, opts: &SolveOptions) -> Result<(PolicySnapshot, Solution)> {
    let model = match kind {
        ModelKind::Uav => crate::uav::build_uav_mdp(config)?.mdp,
        ModelKind::Fleet => crate::fleet::build_fleet_mdp(config)?.mdp,
    };
    let sol = mdp::solve(&model, opts)?;
    log::info!(
        "{kind:?} model: {} states, {} sweeps, residual {:e}, converged {}",
        model.state_count(),
        sol.value.sweeps,
        sol.value.residual,
        sol.converged()
    );
    Ok((PolicySnapshot::from_solution(kind, config, &model, &sol, opts.eta), sol))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Snapshot("snapshot is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}
