//! Exhaustive enumeration of diagonal energy functions over all bitstrings.
//!
//! The index range is split into chunks that fix the high bits; inside a chunk
//! the low bits are walked in Gray-code order so that each step only needs the
//! energy change of a single bit flip. Chunks run in parallel and are merged in
//! index order, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default maximum number of binary variables for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 26;

const CHUNK_BITS: usize = 14;
// Drift allowance while walking a chunk; candidates are re-evaluated exactly.
const WALK_SLACK: f64 = 1e-6;

/// Two energies are considered degenerate when they agree within this
/// tolerance, relative to the magnitude of the minimum (absolute below 1).
pub(crate) fn degenerate(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Extrema {
    pub min: f64,
    pub max: f64,
    /// Ascending list of minimizing bitstrings.
    pub ground: Vec<u64>,
}

pub(crate) fn check_limit(num_vars: usize, limit: usize) -> Result<()> {
    if num_vars > limit || num_vars > 62 {
        return Err(Error::TooManyVariables {
            qubits: num_vars,
            limit,
        });
    }
    Ok(())
}

/// Enumerates all `2^n` bitstrings. `full(z)` evaluates from scratch and
/// `flip(z, k)` returns the energy change from flipping bit `k` of `z`.
pub(crate) fn extrema<F, D>(n: usize, full: F, flip: D) -> Extrema
where
    F: Fn(u64) -> f64 + Sync,
    D: Fn(u64, usize) -> f64 + Sync,
{
    let low = n.min(CHUNK_BITS);
    let chunks: u64 = 1u64 << (n - low);

    let partial: Vec<(f64, f64, Vec<u64>)> = (0..chunks)
        .into_par_iter()
        .map(|high| {
            let mut z = high << low;
            let mut e = full(z);
            let mut min = e;
            let mut max = e;
            let mut cands = vec![z];
            for step in 1u64..(1u64 << low) {
                let k = step.trailing_zeros() as usize;
                e += flip(z, k);
                z ^= 1 << k;
                if e > max {
                    max = e;
                }
                if e < min - WALK_SLACK {
                    min = e;
                    cands.clear();
                    cands.push(z);
                } else if e <= min + WALK_SLACK {
                    min = min.min(e);
                    cands.push(z);
                }
            }
            // Re-evaluate survivors exactly and drop walk drift.
            let exact: Vec<(u64, f64)> = cands
                .into_iter()
                .filter_map(|c| {
                    let v = full(c);
                    (v <= min + 2.0 * WALK_SLACK).then_some((c, v))
                })
                .collect();
            let best = exact.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let ground = exact
                .into_iter()
                .filter(|&(_, v)| degenerate(v, best))
                .map(|(c, _)| c)
                .collect();
            (best, max, ground)
        })
        .collect();

    let min = partial.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max = partial
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut ground: Vec<u64> = partial
        .into_iter()
        .filter(|p| degenerate(p.0, min))
        .flat_map(|p| p.2)
        .collect();
    ground.sort_unstable();
    Extrema { min, max, ground }
}

/// Expands a bitstring index into a bool vector, bit `n` = variable `n`.
pub fn index_to_bits(z: u64, n: usize) -> Vec<bool> {
    (0..n).map(|k| (z >> k) & 1 == 1).collect()
}

/// Packs a bool slice into an index, variable `n` = bit `n`.
pub fn bits_to_index(bits: &[bool]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (k, &b)| if b { acc | (1 << k) } else { acc })
}

/// Renders a bitstring with variable 0 first.
pub fn format_bits(z: u64, n: usize) -> String {
    (0..n)
        .map(|k| if (z >> k) & 1 == 1 { '1' } else { '0' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walk_matches_direct_scan() {
        // E(z) = popcount weighted by position, minus a pair bonus.
        let n = 17;
        let full = |z: u64| {
            let mut e = 0.0;
            for k in 0..n {
                if (z >> k) & 1 == 1 {
                    e += (k as f64) - 8.0;
                }
            }
            if z & 1 == 1 && (z >> 16) & 1 == 1 {
                e -= 3.0;
            }
            e
        };
        let flip = |z: u64, k: usize| full(z ^ (1 << k)) - full(z);
        let got = extrema(n, full, flip);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for z in 0..(1u64 << n) {
            let e = full(z);
            min = min.min(e);
            max = max.max(e);
        }
        let ground: Vec<u64> = (0..(1u64 << n))
            .filter(|&z| degenerate(full(z), min))
            .collect();
        assert_eq!(got.min, min);
        assert_eq!(got.max, max);
        assert_eq!(got.ground, ground);
    }

    #[test]
    fn bit_helpers_agree() {
        let bits = vec![true, false, true, true];
        assert_eq!(bits_to_index(&bits), 0b1101);
        assert_eq!(index_to_bits(0b1101, 4), bits);
        assert_eq!(format_bits(0b1101, 4), "1011");
    }
}
