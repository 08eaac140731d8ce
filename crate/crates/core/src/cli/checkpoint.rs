//! Binary checkpoint: policy spec, full ES state and the resolved config.
//!
//! Layout: magic `ESDTCKPT`, `u32` version, spec, state (as on the wire),
//! 32-byte SHA-256 of the config text, then the config text itself.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dist::wire::{get_state, put_state, Reader, Writer};
use crate::error::{check_len, Error, Result};
use crate::es::EsState;
use crate::nn::{param_count, Architecture, DtSpec, PolicySpec};

const MAGIC: &[u8; 8] = b"ESDTCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: PolicySpec,
    pub state: EsState,
    /// Resolved run configuration the state was produced under.
    pub config_text: String,
}

pub fn config_digest(text: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(text.as_bytes()));
    out
}

fn put_spec(w: &mut Writer, spec: &PolicySpec) {
    w.u32(spec.obs_dim as u32);
    w.u32(spec.act_dim as u32);
    match &spec.arch {
        Architecture::Feedforward { hidden } => {
            w.u8(0);
            w.len_prefix(hidden.len());
            hidden.iter().for_each(|&h| w.u32(h as u32));
        }
        Architecture::DecisionTransformer(d) => {
            w.u8(1);
            for v in [
                d.embed_dim,
                d.n_layers,
                d.n_heads,
                d.context_len,
                d.ff_dim,
                d.max_ep_len,
            ] {
                w.u32(v as u32);
            }
        }
    }
}

fn get_spec(r: &mut Reader<'_>) -> Result<PolicySpec> {
    let obs_dim = r.u32()? as usize;
    let act_dim = r.u32()? as usize;
    let arch = match r.u8()? {
        0 => {
            let n = r.count(4)?;
            Architecture::Feedforward {
                hidden: (0..n)
                    .map(|_| r.u32().map(|h| h as usize))
                    .collect::<Result<_, _>>()?,
            }
        }
        1 => {
            let mut v = [0usize; 6];
            for x in &mut v {
                *x = r.u32()? as usize;
            }
            Architecture::DecisionTransformer(DtSpec {
                embed_dim: v[0],
                n_layers: v[1],
                n_heads: v[2],
                context_len: v[3],
                ff_dim: v[4],
                max_ep_len: v[5],
            })
        }
        k => {
            return Err(Error::Config(format!(
                "unknown architecture tag {k} in checkpoint"
            )))
        }
    };
    Ok(PolicySpec {
        obs_dim,
        act_dim,
        arch,
    })
}

impl Checkpoint {
    pub fn new(spec: PolicySpec, state: EsState, config_text: String) -> Result<Self> {
        check_len("checkpoint theta", param_count(&spec)?, state.theta.len())?;
        Ok(Checkpoint {
            spec,
            state,
            config_text,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(VERSION);
        put_spec(&mut w, &self.spec);
        put_state(&mut w, &self.state);
        w.buf.extend_from_slice(&config_digest(&self.config_text));
        w.str(&self.config_text);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != MAGIC {
            return Err(Error::Config("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let spec = get_spec(&mut r)?;
        spec.validate()?;
        let state = get_state(&mut r)?;
        let digest = r.take(32)?.to_vec();
        let config_text = r.str()?;
        r.finish()?;
        if digest != config_digest(&config_text) {
            return Err(Error::Config("checkpoint config digest mismatch".into()));
        }
        state.validate()?;
        Self::new(spec, state, config_text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
