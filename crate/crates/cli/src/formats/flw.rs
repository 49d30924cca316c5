//! FLW1: `"FLW1" | version u32 = 1 | arch u32 (0 NICE, 1 Glow) | dim u32 |`
//! hyperparameters, then the optional provenance trailer.
//!
//! NICE hyperparameters: `couplings u32 | hidden_layers u32 | hidden_width u32`.
//! Glow hyperparameters: `levels u32 | depth u32 | hidden_layers u32 |
//! hidden_width u32 | actnorm_initialized u8`, then for every step in order
//! its permutation `u32[width]` and LU signs `f64[width]`.
//!
//! Both end with `n_params u64 | f64[n_params]` in the model's parameter
//! traversal order: NICE visits each coupling net (per dense layer: weight
//! row-major, then bias) and then the diagonal log-scale; Glow visits per
//! step actnorm (bias, log-scale), the LU layer (lower, upper, log-diagonal)
//! and the coupling net.

use std::path::Path;

use isodr_core::flows::{FlowArch, FlowModel, GlowConfig, NiceConfig};
use isodr_core::rng::SplitMix64;

use super::{malformed, narrow_u32, write_file, DecodeResult, Reader, Writer};
use crate::error::Result;
use crate::provenance::{Provenance, ReadLog};

const MAGIC: &[u8; 4] = b"FLW1";
const VERSION: u32 = 1;

pub fn encode_flow(model: &FlowModel, prov: Option<&Provenance>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    match model {
        FlowModel::Nice(m) => {
            let c = m.config();
            w.u32(0);
            w.u32(narrow_u32(m.dim(), "dim")?);
            for v in [c.couplings, c.hidden_layers, c.hidden_width] {
                w.u32(narrow_u32(v, "hyperparameter")?);
            }
        }
        FlowModel::Glow(m) => {
            let c = m.config();
            w.u32(1);
            w.u32(narrow_u32(m.dim(), "dim")?);
            for v in [c.levels, c.depth, c.hidden_layers, c.hidden_width] {
                w.u32(narrow_u32(v, "hyperparameter")?);
            }
            w.u8(u8::from(m.actnorm_initialized()));
            for (perm, sign) in m.fixed_state() {
                for p in perm {
                    w.u32(narrow_u32(p, "permutation index")?);
                }
                w.f64s(&sign);
            }
        }
    }
    let params = model.flat_params();
    w.u64(params.len() as u64);
    w.f64s(&params);
    w.trailer(prov);
    Ok(w.buf)
}

fn hyper(r: &mut Reader<'_>) -> DecodeResult<usize> {
    r.usize_u32("hyperparameter")
}

pub fn decode_flow(bytes: &[u8]) -> DecodeResult<(FlowModel, Option<Provenance>)> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let arch = r.u32("arch tag")?;
    let dim = r.usize_u32("dim")?;
    // Structure is rebuilt from the hyperparameters; every stored value is
    // then overwritten, so the init stream is irrelevant.
    let mut rng = SplitMix64::new(0);
    let mut model = match arch {
        0 => {
            let cfg = NiceConfig { couplings: hyper(&mut r)?, hidden_layers: hyper(&mut r)?, hidden_width: hyper(&mut r)? };
            FlowArch::Nice(cfg).build(dim, &mut rng)?
        }
        1 => {
            let cfg = GlowConfig {
                levels: hyper(&mut r)?,
                depth: hyper(&mut r)?,
                hidden_layers: hyper(&mut r)?,
                hidden_width: hyper(&mut r)?,
            };
            let initialized = match r.u8("actnorm flag")? {
                0 => false,
                1 => true,
                b => return Err(malformed(format!("actnorm flag must be 0 or 1, got {b}"))),
            };
            let mut model = FlowArch::Glow(cfg).build(dim, &mut rng)?;
            if let FlowModel::Glow(m) = &mut model {
                let mut state = m.fixed_state();
                for (perm, sign) in &mut state {
                    let width = perm.len();
                    for p in perm.iter_mut() {
                        *p = r.usize_u32("permutation index")?;
                    }
                    *sign = r.f64s(width, "LU signs")?;
                }
                m.set_fixed_state(&state)?;
                m.set_actnorm_initialized(initialized);
            }
            model
        }
        t => return Err(malformed(format!("unknown arch tag {t}"))),
    };
    let n = r.usize_u64("parameter count")?;
    if n != model.param_count() {
        return Err(malformed(format!("{n} parameters stored, architecture needs {}", model.param_count())));
    }
    let params = r.f64s(n, "parameters")?;
    model.set_flat_params(&params)?;
    let prov = r.trailer()?;
    Ok((model, prov))
}

pub fn save_flow(model: &FlowModel, prov: Option<&Provenance>, path: &Path) -> Result<()> {
    write_file(path, &encode_flow(model, prov)?)
}

pub fn load_flow(path: &Path, log: &mut ReadLog) -> Result<(FlowModel, Option<Provenance>)> {
    let bytes = log.read(path)?;
    decode_flow(&bytes).map_err(|e| e.at(path))
}
