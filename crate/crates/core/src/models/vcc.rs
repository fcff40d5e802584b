//! Hashed bag-of-tokens features for the VCCFinder-style linear model.

use std::hash::Hasher;

use fnv::FnvHasher;

pub const DEFAULT_HASH_BITS: u32 = 18;

/// Lowercased alphanumeric runs.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sparse vector sorted by bucket, without zero entries.
pub type SparseVector = Vec<(usize, f64)>;

fn bucket_and_sign(token: &str, bits: u32) -> (usize, f64) {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    let h = h.finish();
    let bucket = (h & ((1u64 << bits) - 1)) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

pub fn hash_tokens<S: AsRef<str>>(tokens: &[S], bits: u32) -> SparseVector {
    let mut entries: Vec<(usize, f64)> = tokens.iter().map(|t| bucket_and_sign(t.as_ref(), bits)).collect();
    entries.sort_by_key(|e| e.0);
    let mut out: SparseVector = Vec::with_capacity(entries.len());
    for (b, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == b => last.1 += v,
            _ => out.push((b, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

/// Message tokens plus the tokens of the given added/removed code lines,
/// hashed into `2^DEFAULT_HASH_BITS` signed buckets.
pub fn tokenize_for_vcc<S: AsRef<str>>(message: &str, code_change: &[S]) -> SparseVector {
    let mut all = tokens(message);
    for line in code_change {
        all.extend(tokens(line.as_ref()));
    }
    hash_tokens(&all, DEFAULT_HASH_BITS)
}
