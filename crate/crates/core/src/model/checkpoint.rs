//! Checkpoint container.
//!
//! ```text
//! magic "CAEC" | version u16
//! arch:      backbone u8 | c,h,w u32×3 | d1,d2,d3 u32×3 | 3 × (kh,kw,sh,sw u32×4)
//! rng_seed u64
//! layernorm: mode u8 | epsilon f32 | has_frozen u8 | frozen_mean f32 | frozen_var f32
//! params:    count u32, then per param in declaration order:
//!            name (u16 len + UTF-8) | rank u8 | dims u32×rank | value f32×n | m f32×n | v f32×n | step u64
//! bn stats:  count u32, then per batch-norm layer:
//!            name | channels u32 | momentum f32 | eps f32 | running_mean f32×c | running_var f32×c
//! ```
//!
//! Gradients are not stored; a loaded model has zero gradients.

use sha2::{Digest, Sha256};

use super::arch::{ArchSpec, Backbone, BlockGeometry};
use super::cae::{build_model, CaeModel};
use crate::data::bin::{self, ByteReader};
use crate::error::{Error, Result};
use crate::ops::{Kernel, LayerNormConfig, LayerNormMode, Stride};
use crate::tensor::MapDims;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CAEC";
pub const CHECKPOINT_VERSION: u16 = 1;
const KIND: &str = "checkpoint";

fn put_usize(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    bin::put_u32(out, bin::to_u32(v, what, KIND)?);
    Ok(())
}

fn write_arch(out: &mut Vec<u8>, spec: &ArchSpec) -> Result<()> {
    out.push(spec.backbone.tag());
    for v in [spec.input.c, spec.input.h, spec.input.w, spec.d1, spec.d2, spec.d3] {
        put_usize(out, v, "arch field")?;
    }
    for b in &spec.blocks {
        for v in [b.kernel.h, b.kernel.w, b.stride.h, b.stride.w] {
            put_usize(out, v, "block field")?;
        }
    }
    Ok(())
}

fn read_arch(r: &mut ByteReader<'_>) -> Result<ArchSpec> {
    let tag = r.u8("backbone")?;
    let backbone = Backbone::from_tag(tag)
        .ok_or_else(|| Error::format(KIND, format!("unknown backbone tag {tag}")))?;
    let mut f = [0usize; 6];
    for v in &mut f {
        *v = r.u32("arch field")? as usize;
    }
    let mut blocks = [BlockGeometry::new(Kernel::new(1, 1), Stride::new(1, 1)); 3];
    for b in &mut blocks {
        let kh = r.u32("kernel h")? as usize;
        let kw = r.u32("kernel w")? as usize;
        let sh = r.u32("stride h")? as usize;
        let sw = r.u32("stride w")? as usize;
        *b = BlockGeometry::new(Kernel::new(kh, kw), Stride::new(sh, sw));
    }
    Ok(ArchSpec {
        backbone,
        input: MapDims::new(f[0], f[1], f[2]),
        d1: f[3],
        d2: f[4],
        d3: f[5],
        blocks,
    })
}

pub fn save_checkpoint(model: &CaeModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    bin::put_u16(&mut out, CHECKPOINT_VERSION);
    write_arch(&mut out, &model.spec)?;
    bin::put_u64(&mut out, model.rng_seed);

    let ln = &model.layernorm;
    out.push(match ln.mode {
        LayerNormMode::PerSample => 0,
        LayerNormMode::FrozenStats => 1,
    });
    bin::put_f32s(&mut out, &[ln.epsilon]);
    match (ln.frozen_mean, ln.frozen_var) {
        (Some(m), Some(v)) => {
            out.push(1);
            bin::put_f32s(&mut out, &[m, v]);
        }
        _ => {
            out.push(0);
            bin::put_f32s(&mut out, &[0.0, 0.0]);
        }
    }

    let params = model.params();
    put_usize(&mut out, params.len(), "param count")?;
    for p in params {
        bin::put_string(&mut out, &p.name, KIND)?;
        out.push(p.shape.len() as u8);
        for &d in &p.shape {
            put_usize(&mut out, d, "param dim")?;
        }
        bin::put_f32s(&mut out, &p.value);
        bin::put_f32s(&mut out, &p.m);
        bin::put_f32s(&mut out, &p.v);
        bin::put_u64(&mut out, p.step_count);
    }

    let states = model.bn_states();
    put_usize(&mut out, states.len(), "batch-norm count")?;
    for (name, st) in states {
        bin::put_string(&mut out, name, KIND)?;
        put_usize(&mut out, st.running_mean.len(), "channels")?;
        bin::put_f32s(&mut out, &[st.momentum, st.eps]);
        bin::put_f32s(&mut out, &st.running_mean);
        bin::put_f32s(&mut out, &st.running_var);
    }
    Ok(out)
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<CaeModel> {
    let mut r = ByteReader::new(KIND, bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            KIND,
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let spec = read_arch(&mut r)?;
    let seed = r.u64("rng seed")?;
    let mut model = build_model(spec, seed)
        .map_err(|e| Error::format(KIND, format!("stored architecture is invalid: {e}")))?;

    let mode = match r.u8("layernorm mode")? {
        0 => LayerNormMode::PerSample,
        1 => LayerNormMode::FrozenStats,
        t => return Err(Error::format(KIND, format!("unknown layernorm mode {t}"))),
    };
    let epsilon = r.f32("layernorm epsilon")?;
    let has_frozen = r.u8("layernorm frozen flag")? == 1;
    let (fm, fv) = (r.f32("frozen mean")?, r.f32("frozen var")?);
    model.layernorm = LayerNormConfig {
        epsilon,
        mode,
        frozen_mean: has_frozen.then_some(fm),
        frozen_var: has_frozen.then_some(fv),
    };
    model
        .layernorm
        .validate()
        .map_err(|e| Error::format(KIND, e.to_string()))?;

    let count = r.u32("param count")? as usize;
    let mut params = model.params_mut();
    if count != params.len() {
        return Err(Error::format(
            KIND,
            format!("{count} parameters stored, architecture has {}", params.len()),
        ));
    }
    for p in params.iter_mut() {
        let name = r.string("param name")?;
        if name != p.name {
            return Err(Error::format(
                KIND,
                format!("expected parameter {}, found {name}", p.name),
            ));
        }
        let rank = r.u8("param rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("param dim")? as usize);
        }
        if shape != p.shape {
            return Err(Error::format(
                KIND,
                format!("{name}: stored shape {shape:?}, expected {:?}", p.shape),
            ));
        }
        let n = p.len();
        p.value = r.f32s(n, &format!("{name} values"))?;
        p.m = r.f32s(n, &format!("{name} first moment"))?;
        p.v = r.f32s(n, &format!("{name} second moment"))?;
        p.step_count = r.u64(&format!("{name} step count"))?;
        p.zero_grad();
    }
    drop(params);

    let count = r.u32("batch-norm count")? as usize;
    let names: Vec<String> = model.bn_states().iter().map(|(n, _)| n.to_string()).collect();
    if count != names.len() {
        return Err(Error::format(
            KIND,
            format!("{count} batch-norm layers stored, architecture has {}", names.len()),
        ));
    }
    for (st, expected) in model.bn_states_mut().into_iter().zip(&names) {
        let name = r.string("batch-norm name")?;
        if &name != expected {
            return Err(Error::format(
                KIND,
                format!("expected batch-norm stats for {expected}, found {name}"),
            ));
        }
        let c = r.u32("channels")? as usize;
        if c != st.running_mean.len() {
            return Err(Error::format(KIND, format!("{name}: {c} channels stored")));
        }
        st.momentum = r.f32("momentum")?;
        st.eps = r.f32("eps")?;
        st.running_mean = r.f32s(c, &format!("{name} running mean"))?;
        st.running_var = r.f32s(c, &format!("{name} running var"))?;
    }
    r.finish()?;
    Ok(model)
}

impl CaeModel {
    /// First 8 bytes of the SHA-256 of the serialized checkpoint; stamped
    /// into descriptor files produced by this model.
    pub fn checksum(&self) -> Result<[u8; 8]> {
        let digest = Sha256::digest(save_checkpoint(self)?);
        Ok(digest[..8].try_into().unwrap())
    }
}
