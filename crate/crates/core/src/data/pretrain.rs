//! Toy masked-LM and next-sentence examples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tokenizer::{Vocab, MASK_ID, SPECIALS};

/// How selected tokens are corrupted; the three fractions sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskRatios {
    pub mask: f64,
    pub random: f64,
    pub keep: f64,
}

impl Default for MaskRatios {
    fn default() -> Self {
        MaskRatios {
            mask: 0.8,
            random: 0.1,
            keep: 0.1,
        }
    }
}

/// Returns corrupted ids and labels: the original id at selected positions, `None` elsewhere.
pub fn mlm_mask(
    ids: &[u32],
    vocab: &Vocab,
    mask_prob: f64,
    ratios: MaskRatios,
    seed: u64,
) -> (Vec<u32>, Vec<Option<u32>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first_plain = SPECIALS.len() as u32;
    let mut out = ids.to_vec();
    let mut labels = vec![None; ids.len()];
    for (k, &id) in ids.iter().enumerate() {
        if Vocab::is_special(id) || rng.random::<f64>() >= mask_prob {
            continue;
        }
        labels[k] = Some(id);
        let r: f64 = rng.random();
        if r < ratios.mask {
            out[k] = MASK_ID;
        } else if r < ratios.mask + ratios.random && (vocab.len() as u32) > first_plain {
            out[k] = rng.random_range(first_plain..vocab.len() as u32);
        }
    }
    (out, labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NspPair {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub is_next: bool,
}

/// `n_pairs` pairs, half (rounded up) true continuations, in shuffled order.
/// A negative's second segment is never the one that follows its first.
pub fn nsp_pairs(segments: &[Vec<u32>], n_pairs: usize, seed: u64) -> Result<Vec<NspPair>> {
    let n = segments.len();
    if n < 2 {
        return Err(Error::Config(format!("nsp needs at least 2 segments, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = n_pairs.div_ceil(2);
    let mut out = Vec::with_capacity(n_pairs);
    for k in 0..n_pairs {
        let is_next = k < positives;
        let (a, b) = if is_next {
            let a = rng.random_range(0..n - 1);
            (a, a + 1)
        } else {
            let a = rng.random_range(0..n);
            let choices: Vec<usize> = (0..n).filter(|&b| b != a + 1).collect();
            (a, choices[rng.random_range(0..choices.len())])
        };
        out.push(NspPair {
            a: segments[a].clone(),
            b: segments[b].clone(),
            is_next,
        });
    }
    out.shuffle(&mut rng);
    Ok(out)
}
