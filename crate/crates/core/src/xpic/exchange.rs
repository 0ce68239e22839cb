//! Non-blocking transfer of interface buffers across the inter-communicator.
//! Each side sends every partner rank the rows their blocks share.

use crate::mprt::{InterComm, Process, Request};

use super::buffer::{
    cpy_from_arr_fields, cpy_from_arr_moments, cpy_to_arr_fields, cpy_to_arr_moments,
    InterfaceBuffer,
};
use super::grid::{Decomp, FieldBlock, Moments};
use super::{tags, XpicError};

fn check_sizes(inter: &InterComm, mine: &Decomp, theirs: &Decomp) -> Result<(), XpicError> {
    if inter.local_size() != mine.ranks || inter.remote_size() != theirs.ranks {
        return Err(XpicError::PartnerMismatch {
            local: inter.local_size(),
            remote: inter.remote_size(),
        });
    }
    Ok(())
}

/// Particle side: send this rank's moment rows to the field ranks.
pub fn booster_to_cluster(
    p: &mut Process,
    inter: &InterComm,
    mine: &Decomp,
    theirs: &Decomp,
    rank: usize,
    m: &Moments,
) -> Result<Vec<Request>, XpicError> {
    check_sizes(inter, mine, theirs)?;
    let mut reqs = Vec::new();
    for (peer, lo, hi) in mine.overlaps(rank, theirs) {
        let buf = cpy_to_arr_moments(&m.slice_rows(lo, hi));
        reqs.push(p.isend(inter, peer, tags::MOMENTS, buf.bytes)?);
    }
    Ok(reqs)
}

/// Field side: send E rows and B to the particle ranks.
pub fn cluster_to_booster(
    p: &mut Process,
    inter: &InterComm,
    mine: &Decomp,
    theirs: &Decomp,
    rank: usize,
    f: &FieldBlock,
) -> Result<Vec<Request>, XpicError> {
    check_sizes(inter, mine, theirs)?;
    let mut reqs = Vec::new();
    for (peer, lo, hi) in mine.overlaps(rank, theirs) {
        let buf = cpy_to_arr_fields(f, lo, hi);
        reqs.push(p.isend(inter, peer, tags::FIELDS, buf.bytes)?);
    }
    Ok(reqs)
}

/// Post receives for the pieces partners send under `tag`.
pub fn expect(
    p: &mut Process,
    inter: &InterComm,
    mine: &Decomp,
    theirs: &Decomp,
    rank: usize,
    tag: i32,
) -> Result<Vec<Request>, XpicError> {
    check_sizes(inter, mine, theirs)?;
    mine.overlaps(rank, theirs)
        .into_iter()
        .map(|(peer, _, _)| p.irecv(inter, peer, tag).map_err(XpicError::from))
        .collect()
}

fn tiling(mine: &Decomp, rank: usize, got: &[(usize, usize, usize)]) -> Result<(), XpicError> {
    let (mut next, end) = mine.rows(rank);
    for &(nx, lo, rows) in got {
        if nx != mine.nx || lo != next {
            return Err(XpicError::Tiling(format!(
                "piece at row {lo} (nx {nx}) where row {next} (nx {}) was expected",
                mine.nx
            )));
        }
        next += rows;
    }
    if next != end {
        return Err(XpicError::Tiling(format!("pieces end at row {next}, block ends at {end}")));
    }
    Ok(())
}

/// Assemble this rank's moment rows from received pieces (in partner order).
pub fn assemble_moments(
    payloads: Vec<Vec<u8>>,
    mine: &Decomp,
    rank: usize,
) -> Result<Moments, XpicError> {
    let pieces = payloads
        .into_iter()
        .map(|bytes| cpy_from_arr_moments(&InterfaceBuffer { bytes }))
        .collect::<Result<Vec<_>, _>>()?;
    tiling(
        mine,
        rank,
        &pieces.iter().map(|m| (m.nx, m.row_start, m.rows)).collect::<Vec<_>>(),
    )?;
    let (r0, r1) = mine.rows(rank);
    let mut out = Moments::zeros(mine.nx, r0, r1 - r0);
    let mut at = 0;
    for m in pieces {
        let n = m.rho.len();
        for (dst, src) in out.planes_mut().into_iter().zip(m.planes()) {
            dst[at..at + n].copy_from_slice(src);
        }
        at += n;
    }
    Ok(out)
}

/// Write received E rows and B into `f`.
pub fn assemble_fields(
    payloads: Vec<Vec<u8>>,
    mine: &Decomp,
    rank: usize,
    f: &mut FieldBlock,
) -> Result<(), XpicError> {
    let pieces = payloads
        .into_iter()
        .map(|bytes| cpy_from_arr_fields(&InterfaceBuffer { bytes }))
        .collect::<Result<Vec<_>, _>>()?;
    tiling(
        mine,
        rank,
        &pieces.iter().map(|f| (f.nx, f.row_start, f.rows)).collect::<Vec<_>>(),
    )?;
    let mut at = 0;
    for piece in pieces {
        let n = piece.ex.len();
        f.ex[at..at + n].copy_from_slice(&piece.ex);
        f.ey[at..at + n].copy_from_slice(&piece.ey);
        f.b = piece.b;
        at += n;
    }
    Ok(())
}
