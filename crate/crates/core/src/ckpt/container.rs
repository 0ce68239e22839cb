//! One-file-per-node container bundling the checkpoint blocks of every rank
//! on that node. Layout (little-endian): magic "CBCK", u32 version, u32 block
//! count, index entries of (u32 rank, u64 offset, u64 length, u64 checksum),
//! then the payloads.

use super::CkptError;

pub const MAGIC: [u8; 4] = *b"CBCK";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 12;
pub const ENTRY_BYTES: usize = 28;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointBlock {
    pub rank: u32,
    pub epoch: u64,
    pub payload: Vec<u8>,
    pub checksum: u64,
}

impl CheckpointBlock {
    pub fn new(rank: u32, epoch: u64, payload: Vec<u8>) -> Self {
        let checksum = fnv1a64(&payload);
        CheckpointBlock {
            rank,
            epoch,
            payload,
            checksum,
        }
    }
}

/// Pack blocks of one epoch into a container image. Blocks keep their order.
pub fn container_pack(blocks: &[CheckpointBlock]) -> Result<Vec<u8>, CkptError> {
    if let Some(first) = blocks.first() {
        if let Some(b) = blocks.iter().find(|b| b.epoch != first.epoch) {
            return Err(CkptError::MixedEpoch {
                expected: first.epoch,
                found: b.epoch,
            });
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for b in blocks {
        if !seen.insert(b.rank) {
            return Err(CkptError::DuplicateRank(b.rank));
        }
    }
    let index_end = HEADER_BYTES + ENTRY_BYTES * blocks.len();
    let total = index_end + blocks.iter().map(|b| b.payload.len()).sum::<usize>();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    let mut offset = index_end as u64;
    for b in blocks {
        out.extend_from_slice(&b.rank.to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(b.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&b.checksum.to_le_bytes());
        offset += b.payload.len() as u64;
    }
    for b in blocks {
        out.extend_from_slice(&b.payload);
    }
    Ok(out)
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Unpack a container. The file name carries the epoch, so the caller
/// supplies it.
pub fn container_unpack(bytes: &[u8], epoch: u64) -> Result<Vec<CheckpointBlock>, CkptError> {
    if bytes.len() < HEADER_BYTES {
        return Err(CkptError::Truncated(format!("{} bytes, header needs {HEADER_BYTES}", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(CkptError::BadHeader("magic".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(CkptError::BadHeader(format!("version {version}")));
    }
    let count = u32_at(bytes, 8) as usize;
    let index_end = count
        .checked_mul(ENTRY_BYTES)
        .and_then(|n| n.checked_add(HEADER_BYTES))
        .ok_or_else(|| CkptError::BadHeader(format!("block count {count}")))?;
    if bytes.len() < index_end {
        return Err(CkptError::Truncated(format!("index of {count} entries cut short")));
    }
    let mut entries = Vec::with_capacity(count);
    for k in 0..count {
        let at = HEADER_BYTES + k * ENTRY_BYTES;
        entries.push((u32_at(bytes, at), u64_at(bytes, at + 4), u64_at(bytes, at + 12), u64_at(bytes, at + 20)));
    }
    let mut spans: Vec<(u64, u64)> = entries.iter().map(|e| (e.1, e.2)).collect();
    spans.sort_unstable();
    let mut prev_end = index_end as u64;
    for (off, len) in spans {
        if off < prev_end {
            return Err(CkptError::BadHeader(format!("block at {off} overlaps")));
        }
        prev_end = off
            .checked_add(len)
            .ok_or_else(|| CkptError::BadHeader("block length".into()))?;
        if prev_end > bytes.len() as u64 {
            return Err(CkptError::Truncated(format!(
                "block ends at {prev_end}, file has {} bytes",
                bytes.len()
            )));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    for (rank, off, len, checksum) in entries {
        if !seen.insert(rank) {
            return Err(CkptError::DuplicateRank(rank));
        }
        let payload = bytes[off as usize..(off + len) as usize].to_vec();
        if fnv1a64(&payload) != checksum {
            return Err(CkptError::ChecksumMismatch { rank });
        }
        out.push(CheckpointBlock {
            rank,
            epoch,
            payload,
            checksum,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_container_is_header_only() {
        let img = container_pack(&[]).unwrap();
        assert_eq!(img, [b'C', b'B', b'C', b'K', 1, 0, 0, 0, 0, 0, 0, 0]);
        assert!(container_unpack(&img, 3).unwrap().is_empty());
    }

    #[test]
    fn layout_offsets() {
        let blocks = vec![
            CheckpointBlock::new(7, 1, vec![1, 2, 3]),
            CheckpointBlock::new(2, 1, vec![9; 5]),
        ];
        let img = container_pack(&blocks).unwrap();
        let index_end = 12 + 2 * 28;
        assert_eq!(img.len(), index_end + 8);
        assert_eq!(u32_at(&img, 12), 7);
        assert_eq!(u64_at(&img, 16), index_end as u64);
        assert_eq!(u64_at(&img, 24), 3);
        assert_eq!(u64_at(&img, 12 + 28 + 4), index_end as u64 + 3);
        assert_eq!(&img[index_end..index_end + 3], &[1, 2, 3]);
    }

    #[test]
    fn rejects_mixed_epochs_and_duplicates() {
        let a = CheckpointBlock::new(0, 1, vec![]);
        let b = CheckpointBlock::new(1, 2, vec![]);
        assert!(matches!(
            container_pack(&[a.clone(), b]),
            Err(CkptError::MixedEpoch { expected: 1, found: 2 })
        ));
        assert_eq!(container_pack(&[a.clone(), a]), Err(CkptError::DuplicateRank(0)));
    }

    #[test]
    fn truncation_detected() {
        let img = container_pack(&[CheckpointBlock::new(0, 0, vec![5; 64])]).unwrap();
        for cut in [0, 5, 11, 20, img.len() - 1] {
            assert!(
                matches!(container_unpack(&img[..cut], 0), Err(CkptError::Truncated(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut img = container_pack(&[]).unwrap();
        img[0] = b'X';
        assert!(matches!(container_unpack(&img, 0), Err(CkptError::BadHeader(_))));
        let mut img = container_pack(&[]).unwrap();
        img[4] = 2;
        assert!(matches!(container_unpack(&img, 0), Err(CkptError::BadHeader(_))));
    }
}
