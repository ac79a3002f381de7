//! Bit-exact parameter serialization: named-tensor manifest followed by raw
//! IEEE-754 bit patterns, all little-endian.

use std::path::Path;
use std::sync::Arc;

use crate::policy::{Manifest, ParamVector, TensorSpec};

use super::reader::{put_string, Reader};
use super::TransportError;

pub const PARAM_FILE_MAGIC: [u8; 4] = *b"RGP1";

/// Structural caps so hostile input cannot trigger huge allocations before
/// validation; generous against real manifests (nine tensors, short names).
const MAX_TENSORS: usize = 4096;
const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 16;
const MAX_DIM: u64 = (1 << 31) - 1;

pub fn encode_param_wire(params: &ParamVector, out: &mut Vec<u8>) {
    let manifest = params.manifest();
    out.extend_from_slice(&(manifest.tensor_count() as u32).to_le_bytes());
    for spec in manifest.specs() {
        put_string(out, &spec.name);
        out.extend_from_slice(&(spec.dims.len() as u32).to_le_bytes());
        for &d in &spec.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &v in params.values() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

/// Decodes a parameter vector from the front of `bytes`; returns it (version
/// 0; versions travel in message payloads) plus the bytes consumed.
pub fn decode_param_wire(bytes: &[u8]) -> Result<(ParamVector, usize), TransportError> {
    let mut r = Reader::new(bytes);
    let tensor_count = r.u32("tensor count").map_err(TransportError::Wire)? as usize;
    if tensor_count > MAX_TENSORS {
        return Err(TransportError::Wire(format!(
            "tensor count {tensor_count} exceeds the {MAX_TENSORS} cap"
        )));
    }
    let mut specs = Vec::with_capacity(tensor_count);
    for i in 0..tensor_count {
        let name = r
            .string(&format!("tensor {i} name"), MAX_NAME_LEN)
            .map_err(TransportError::Wire)?
            .to_string();
        let rank = r
            .u32(&format!("tensor {i} rank"))
            .map_err(TransportError::Wire)? as usize;
        if rank > MAX_RANK {
            return Err(TransportError::Wire(format!(
                "tensor {i} rank {rank} exceeds the {MAX_RANK} cap"
            )));
        }
        let mut dims = Vec::with_capacity(rank);
        for j in 0..rank {
            let d = r
                .u64(&format!("tensor {i} dim {j}"))
                .map_err(TransportError::Wire)?;
            if d == 0 || d > MAX_DIM {
                return Err(TransportError::Wire(format!(
                    "tensor {i} dim {j} is {d}, outside [1, {MAX_DIM}]"
                )));
            }
            dims.push(d as usize);
        }
        specs.push(TensorSpec::new(name, dims));
    }
    let manifest = Manifest::new(specs)?;
    let declared = r.u64("value count").map_err(TransportError::Wire)?;
    if declared != manifest.len() as u64 {
        return Err(TransportError::Wire(format!(
            "declared value count {declared} disagrees with the manifest total {}",
            manifest.len()
        )));
    }
    let value_bytes = declared.checked_mul(8);
    if value_bytes.is_none() || value_bytes.unwrap() > r.remaining() as u64 {
        return Err(TransportError::Wire(format!(
            "value block of {declared} entries exceeds the {} remaining bytes",
            r.remaining()
        )));
    }
    let mut values = Vec::with_capacity(declared as usize);
    for i in 0..declared {
        values.push(f64::from_bits(
            r.u64(&format!("value {i}")).map_err(TransportError::Wire)?,
        ));
    }
    let params = ParamVector::from_values(Arc::new(manifest), values)?;
    Ok((params, r.pos()))
}

pub fn encode_params_file(params: &ParamVector) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&PARAM_FILE_MAGIC);
    encode_param_wire(params, &mut out);
    out
}

pub fn decode_params_file(bytes: &[u8]) -> Result<ParamVector, TransportError> {
    if bytes.len() < 4 || bytes[..4] != PARAM_FILE_MAGIC {
        return Err(TransportError::BadFileMagic);
    }
    let (params, consumed) = decode_param_wire(&bytes[4..])?;
    if 4 + consumed != bytes.len() {
        return Err(TransportError::Wire(format!(
            "parameter file carries {} trailing bytes",
            bytes.len() - 4 - consumed
        )));
    }
    Ok(params)
}

pub fn write_params_file(path: &Path, params: &ParamVector) -> Result<(), TransportError> {
    std::fs::write(path, encode_params_file(params))?;
    Ok(())
}

pub fn read_params_file(path: &Path) -> Result<ParamVector, TransportError> {
    decode_params_file(&std::fs::read(path)?)
}
