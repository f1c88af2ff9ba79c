//! The `.hsdm` model container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    4 bytes   "HSDM"
//! version  u16       currently 1
//! config:
//!   obs rank u8, then one u32 per dimension
//!   action tag u8 (0 discrete, 1 continuous), action size u32
//!   u32 x10: patch, base_dim, base_codebook, latent_width, cells,
//!            codebook, rec_hidden, pi_hidden, batch_size, epochs
//!   u64 seed
//!   f64 x4: beta, huber_delta, learn_rate, pixel_noise_std
//! tensors, repeated until end of file:
//!   name length u16, name bytes (utf-8)
//!   rank u8 (always 2 here), one u32 per dimension
//!   row-major f32 payload
//! ```
//!
//! Parameters are trained in f64 but stored as f32; loading a saved model
//! therefore reproduces the f32-rounded parameters exactly, and state
//! encodings performed before and after a save/load round trip agree.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::dataset::{ActionSpace, ObsShape};

use super::model::{HsdModel, Params};
use super::{HsdConfig, HsdError};

pub const HSDM_MAGIC: [u8; 4] = *b"HSDM";
pub const HSDM_VERSION: u16 = 1;

pub fn save_model(model: &HsdModel, path: &Path) -> Result<(), HsdError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<HsdModel, HsdError> {
    let mut r = BufReader::new(File::open(path)?);
    read_model(&mut r)
}

pub fn write_model<W: Write>(model: &HsdModel, w: &mut W) -> Result<(), HsdError> {
    let cfg = model.config();
    w.write_all(&HSDM_MAGIC)?;
    w.write_all(&HSDM_VERSION.to_le_bytes())?;

    let dims = &cfg.obs_shape.0;
    w.write_all(&[dims.len() as u8])?;
    for d in dims {
        w.write_all(&(*d as u32).to_le_bytes())?;
    }
    let (tag, size) = match cfg.action_space {
        ActionSpace::Discrete { n_actions } => (0u8, n_actions as u32),
        ActionSpace::Continuous { dim } => (1u8, dim as u32),
    };
    w.write_all(&[tag])?;
    w.write_all(&size.to_le_bytes())?;
    for v in [
        cfg.patch,
        cfg.base_dim,
        cfg.base_codebook,
        cfg.latent_width,
        cfg.cells,
        cfg.codebook,
        cfg.rec_hidden,
        cfg.pi_hidden,
        cfg.batch_size,
        cfg.epochs,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&cfg.seed.to_le_bytes())?;
    for v in [cfg.beta, cfg.huber_delta, cfg.learn_rate, cfg.pixel_noise_std] {
        w.write_all(&v.to_le_bytes())?;
    }

    for (name, tensor) in model.params.named() {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[2u8])?;
        w.write_all(&(tensor.nrows() as u32).to_le_bytes())?;
        w.write_all(&(tensor.ncols() as u32).to_le_bytes())?;
        for v in tensor.iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<HsdModel, HsdError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof_as_format("magic"))?;
    if magic != HSDM_MAGIC {
        return Err(HsdError::Format(format!("bad magic {magic:02x?}")));
    }
    let version = read_u16(r)?;
    if version != HSDM_VERSION {
        return Err(HsdError::Format(format!("unsupported version {version}")));
    }

    let rank = read_u8(r)? as usize;
    if rank == 0 || rank > 8 {
        return Err(HsdError::Format(format!("implausible observation rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(read_u32(r)? as usize);
    }
    let obs_shape = ObsShape(dims);
    let action_space = match read_u8(r)? {
        0 => ActionSpace::Discrete { n_actions: read_u32(r)? as usize },
        1 => ActionSpace::Continuous { dim: read_u32(r)? as usize },
        t => return Err(HsdError::Format(format!("unknown action tag {t}"))),
    };
    let mut ints = [0usize; 10];
    for v in ints.iter_mut() {
        *v = read_u32(r)? as usize;
    }
    let seed = read_u64(r)?;
    let mut floats = [0f64; 4];
    for v in floats.iter_mut() {
        *v = read_f64(r)?;
    }
    let cfg = HsdConfig {
        obs_shape,
        action_space,
        patch: ints[0],
        base_dim: ints[1],
        base_codebook: ints[2],
        latent_width: ints[3],
        cells: ints[4],
        codebook: ints[5],
        rec_hidden: ints[6],
        pi_hidden: ints[7],
        batch_size: ints[8],
        epochs: ints[9],
        beta: floats[0],
        huber_delta: floats[1],
        learn_rate: floats[2],
        pixel_noise_std: floats[3],
        seed,
    };
    cfg.validate().map_err(|e| HsdError::Format(format!("stored config invalid: {e}")))?;

    let mut params = Params::zeros(&cfg);
    let mut seen: Vec<&'static str> = Vec::new();
    loop {
        // A clean EOF before a tensor header means we're done.
        let mut len_buf = [0u8; 2];
        match read_fully_or_eof(r, &mut len_buf)? {
            0 => break,
            2 => {}
            _ => return Err(HsdError::Format("truncated tensor header".into())),
        }
        let name_len = u16::from_le_bytes(len_buf) as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf).map_err(eof_as_format("tensor name"))?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| HsdError::Format("tensor name is not utf-8".into()))?;
        let rank = read_u8(r)?;
        if rank != 2 {
            return Err(HsdError::Format(format!("tensor {name} has rank {rank}, expected 2")));
        }
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        let slot = params
            .named_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| HsdError::Format(format!("unknown tensor {name}")))?;
        let (slot_name, tensor) = slot;
        if seen.contains(&slot_name) {
            return Err(HsdError::Format(format!("duplicate tensor {name}")));
        }
        if tensor.nrows() != rows || tensor.ncols() != cols {
            return Err(HsdError::Format(format!(
                "tensor {name} is {rows}x{cols}, the config implies {}x{}",
                tensor.nrows(),
                tensor.ncols()
            )));
        }
        let mut data = vec![0f32; rows * cols];
        let mut byte_buf = vec![0u8; rows * cols * 4];
        r.read_exact(&mut byte_buf).map_err(eof_as_format("tensor payload"))?;
        for (v, chunk) in data.iter_mut().zip(byte_buf.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
        *tensor = Array2::from_shape_vec((rows, cols), data.into_iter().map(f64::from).collect())
            .expect("shape matches payload");
        seen.push(slot_name);
    }
    if seen.len() != HsdModel::tensor_names().len() {
        let missing: Vec<&str> = HsdModel::tensor_names()
            .into_iter()
            .filter(|n| !seen.contains(n))
            .collect();
        return Err(HsdError::Format(format!("missing tensors: {}", missing.join(", "))));
    }
    Ok(HsdModel::from_parts(cfg, params))
}

fn eof_as_format(what: &'static str) -> impl Fn(io::Error) -> HsdError {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            HsdError::Format(format!("file ends inside {what}"))
        } else {
            HsdError::Io(e)
        }
    }
}

/// Reads as many bytes as possible into `buf`; returns how many were read
/// (0 on immediate EOF).
fn read_fully_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize, HsdError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(HsdError::Io(e)),
        }
    }
    Ok(filled)
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8, HsdError> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(eof_as_format("header"))?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, HsdError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(eof_as_format("header"))?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, HsdError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(eof_as_format("header"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, HsdError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(eof_as_format("header"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, HsdError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(eof_as_format("header"))?;
    Ok(f64::from_le_bytes(b))
}
