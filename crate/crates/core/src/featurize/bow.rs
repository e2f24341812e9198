use super::{Grid, ScoredTweet, ROWS};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the seed's little-endian bytes followed by the token bytes.
pub fn hash_token(token: &str, seed: u64) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(token.as_bytes())
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Hashed bag-of-words counts of each row's stemmed tokens.
pub fn bow_matrix(buckets: &[Vec<ScoredTweet>], dim: usize, seed: u64) -> Grid {
    assert!(dim > 0, "bag-of-words dimension must be positive");
    let mut g = Grid::zeros(ROWS, dim);
    for (r, group) in buckets.iter().enumerate().take(ROWS) {
        for tok in group.iter().flat_map(|t| t.tokens.iter()) {
            let c = (hash_token(tok, seed) % dim as u64) as usize;
            g.data[r * dim + c] += 1.0;
        }
    }
    g
}
