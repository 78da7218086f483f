//! On-disk Kloosterman rows.
//!
//! Layout (little endian):
//!   magic `PTRSKLS\0`, version byte, row count u64,
//!   per row: modulus c u64 then c values S(j, 1; c) for j = 0..c as f64,
//!   CRC-32 of everything before it as u32.
//!
//! A row for c determines S(m, n; c) for every residue pair (m mod c, n mod c)
//! through Selberg's identity. Anything that fails to parse, has a bad
//! checksum or a row that disagrees with the direct sum is discarded.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use petersson_core::arith::KloostermanCache;

pub const MAGIC: &[u8; 8] = b"PTRSKLS\0";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadOutcome {
    Missing,
    Loaded(usize),
    Discarded,
}

fn decode(bytes: &[u8]) -> Option<Vec<(u64, Vec<f64>)>> {
    let body_len = bytes.len().checked_sub(4)?;
    let (body, crc) = bytes.split_at(body_len);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().ok()?) {
        return None;
    }
    let rest = body.strip_prefix(MAGIC.as_slice())?;
    let (&version, mut rest) = rest.split_first()?;
    if version != VERSION {
        return None;
    }
    let take_u64 = |rest: &mut &[u8]| -> Option<u64> {
        let (head, tail) = rest.split_at_checked(8)?;
        *rest = tail;
        Some(u64::from_le_bytes(head.try_into().ok()?))
    };
    let count = take_u64(&mut rest)?;
    let mut rows = Vec::new();
    for _ in 0..count {
        let c = take_u64(&mut rest)?;
        let len = usize::try_from(c).ok()?.checked_mul(8)?;
        let (data, tail) = rest.split_at_checked(len)?;
        rest = tail;
        let row = data
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        rows.push((c, row));
    }
    rest.is_empty().then_some(rows)
}

pub fn load(path: &Path, cache: &KloostermanCache) -> io::Result<LoadOutcome> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(LoadOutcome::Missing),
        Err(e) => return Err(e),
    };
    let Some(rows) = decode(&bytes) else {
        return Ok(LoadOutcome::Discarded);
    };
    // Validate every row before trusting any of them.
    let probe = KloostermanCache::new();
    if !rows.iter().all(|(c, row)| probe.import_row(*c, row.clone())) {
        return Ok(LoadOutcome::Discarded);
    }
    let n = rows.len();
    for (c, row) in rows {
        cache.import_row(c, row);
    }
    Ok(LoadOutcome::Loaded(n))
}

pub fn encode(cache: &KloostermanCache) -> Vec<u8> {
    let rows = cache.export_rows();
    let mut out = Vec::with_capacity(21 + rows.iter().map(|(c, _)| 8 + 8 * *c as usize).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for (c, row) in &rows {
        out.extend_from_slice(&c.to_le_bytes());
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Writes through a sibling temporary file so a crash never leaves a torn cache.
pub fn save(path: &Path, cache: &KloostermanCache) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(&encode(cache))?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
