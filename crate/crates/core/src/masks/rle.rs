//! Column-major run-length encoding as used by COCO.
//!
//! Runs alternate background/foreground and always start with background,
//! so a mask whose first pixel is set begins with a zero-length run.

use crate::error::{Error, Result};
use crate::masks::BinaryMask;

pub fn decode_rle(counts: &[u32], width: usize, height: usize) -> Result<BinaryMask> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total != (width * height) as u64 {
        return Err(Error::Invariant(format!("RLE counts sum to {total}, expected {}", width * height)));
    }
    let mut mask = BinaryMask::empty(width, height);
    let mut k = 0usize;
    for (run, &c) in counts.iter().enumerate() {
        let c = c as usize;
        if run % 2 == 1 {
            for idx in k..k + c {
                mask.set(idx / height, idx % height, true);
            }
        }
        k += c;
    }
    Ok(mask)
}

pub fn encode_rle(mask: &BinaryMask) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(x, y);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    counts
}

/// Decodes COCO's compact RLE string: 5-bit little-endian groups offset by
/// 48, with runs after the second stored as deltas from two runs back.
pub fn decompress_counts(s: &str) -> Result<Vec<u32>> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            let b = *bytes.get(p).ok_or_else(|| Error::Invariant("truncated compressed RLE".into()))?;
            if !(48..48 + 64).contains(&b) {
                return Err(Error::Invariant(format!("invalid byte {b:#x} in compressed RLE")));
            }
            let c = (b - 48) as i64;
            if k >= 12 {
                return Err(Error::Invariant("compressed RLE run too long".into()));
            }
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts
        .into_iter()
        .map(|c| u32::try_from(c).map_err(|_| Error::Invariant(format!("invalid run length {c}"))))
        .collect()
}

pub fn compress_counts(counts: &[u32]) -> String {
    let mut out = String::new();
    for i in 0..counts.len() {
        let mut x = counts[i] as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut c = x & 0x1f;
            x >>= 5;
            let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                c |= 0x20;
            }
            out.push((c as u8 + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}
