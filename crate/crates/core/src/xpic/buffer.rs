//! Packed byte images exchanged between the two solvers.
//!
//! Layout, little-endian: u32 kind (0 moments, 1 fields), u32 nx,
//! u32 row_start, u32 rows, then planes of `nx·rows` f64 values. Moments carry
//! rho, jx, jy, jz; fields carry ex, ey followed by the three components of B.

use super::grid::{FieldBlock, Moments};
use super::XpicError;

pub const HEADER_BYTES: usize = 16;
const KIND_MOMENTS: u32 = 0;
const KIND_FIELDS: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterfaceBuffer {
    pub bytes: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub kind: u32,
    pub nx: usize,
    pub row_start: usize,
    pub rows: usize,
}

pub fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    out.reserve(8 * v.len());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn get_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn header(kind: u32, nx: usize, row_start: usize, rows: usize) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_BYTES);
    for v in [kind, nx as u32, row_start as u32, rows as u32] {
        h.extend_from_slice(&v.to_le_bytes());
    }
    h
}

impl InterfaceBuffer {
    pub fn header(&self) -> Result<Header, XpicError> {
        if self.bytes.len() < HEADER_BYTES {
            return Err(XpicError::Buffer("truncated header".into()));
        }
        let u = |i: usize| u32::from_le_bytes(self.bytes[4 * i..4 * i + 4].try_into().unwrap());
        Ok(Header {
            kind: u(0),
            nx: u(1) as usize,
            row_start: u(2) as usize,
            rows: u(3) as usize,
        })
    }

    pub fn size_for_moments(cells: usize) -> usize {
        HEADER_BYTES + 8 * 4 * cells
    }

    pub fn size_for_fields(cells: usize) -> usize {
        HEADER_BYTES + 8 * (2 * cells + 3)
    }
}

/// Pack moments (owned rows only, no ghost).
pub fn cpy_to_arr_moments(m: &Moments) -> InterfaceBuffer {
    let mut bytes = header(KIND_MOMENTS, m.nx, m.row_start, m.rows);
    for plane in m.planes() {
        put_f64s(&mut bytes, &plane[..m.nx * m.rows]);
    }
    InterfaceBuffer { bytes }
}

/// Pack the rows `[lo, hi)` of the electric field and the uniform B.
pub fn cpy_to_arr_fields(f: &FieldBlock, lo: usize, hi: usize) -> InterfaceBuffer {
    let a = (lo - f.row_start) * f.nx;
    let b = (hi - f.row_start) * f.nx;
    let mut bytes = header(KIND_FIELDS, f.nx, lo, hi - lo);
    put_f64s(&mut bytes, &f.ex[a..b]);
    put_f64s(&mut bytes, &f.ey[a..b]);
    put_f64s(&mut bytes, &f.b);
    InterfaceBuffer { bytes }
}

fn checked(buf: &InterfaceBuffer, kind: u32, planes: usize, extra: usize) -> Result<Header, XpicError> {
    let h = buf.header()?;
    if h.kind != kind {
        return Err(XpicError::Buffer(format!("expected kind {kind}, found {}", h.kind)));
    }
    let cells = h.nx.checked_mul(h.rows).ok_or_else(|| XpicError::Buffer("shape overflow".into()))?;
    let want = HEADER_BYTES + 8 * (planes * cells + extra);
    if buf.bytes.len() != want {
        return Err(XpicError::Buffer(format!(
            "shape {}x{} needs {want} bytes, buffer has {}",
            h.nx,
            h.rows,
            buf.bytes.len()
        )));
    }
    Ok(h)
}

pub fn cpy_from_arr_moments(buf: &InterfaceBuffer) -> Result<Moments, XpicError> {
    let h = checked(buf, KIND_MOMENTS, 4, 0)?;
    let n = h.nx * h.rows;
    let v = get_f64s(&buf.bytes[HEADER_BYTES..]);
    let mut m = Moments::zeros(h.nx, h.row_start, h.rows);
    for (k, plane) in m.planes_mut().into_iter().enumerate() {
        plane.copy_from_slice(&v[k * n..(k + 1) * n]);
    }
    Ok(m)
}

/// Unpacked field piece: rows of ex, ey and the uniform B.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPiece {
    pub nx: usize,
    pub row_start: usize,
    pub rows: usize,
    pub ex: Vec<f64>,
    pub ey: Vec<f64>,
    pub b: [f64; 3],
}

pub fn cpy_from_arr_fields(buf: &InterfaceBuffer) -> Result<FieldPiece, XpicError> {
    let h = checked(buf, KIND_FIELDS, 2, 3)?;
    let n = h.nx * h.rows;
    let v = get_f64s(&buf.bytes[HEADER_BYTES..]);
    Ok(FieldPiece {
        nx: h.nx,
        row_start: h.row_start,
        rows: h.rows,
        ex: v[..n].to_vec(),
        ey: v[n..2 * n].to_vec(),
        b: [v[2 * n], v[2 * n + 1], v[2 * n + 2]],
    })
}
