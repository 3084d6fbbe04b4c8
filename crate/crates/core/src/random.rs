//! Seeded generators for randomized checks.
//!
//! Every trial gets its own ChaCha8 stream derived from the run seed and the
//! trial index, so serial and parallel runs see identical inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::space::{Alphabet, Caps, Observable, PastConfig, Window};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(trial)))
}

/// Observable with i.i.d. uniform `[0, 1)` table entries.
pub fn random_observable<R: Rng>(
    support: Window,
    alphabet: &Alphabet,
    caps: &Caps,
    rng: &mut R,
) -> Result<Observable> {
    let size = caps.check(alphabet.size(), support.len())?;
    let table = (0..size).map(|_| rng.gen::<f64>()).collect();
    Observable::new(support, alphabet, table)
}

pub fn random_past<R: Rng>(len: usize, alphabet: &Alphabet, rng: &mut R) -> PastConfig {
    let symbols = (0..len).map(|_| rng.gen_range(0..alphabet.size())).collect();
    PastConfig::new(symbols, alphabet).expect("symbols drawn from the alphabet")
}

/// Probability vector with entries bounded away from zero by `floor / n`.
pub fn random_probabilities<R: Rng>(n: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw
        .iter()
        .map(|r| floor / n as f64 + (1.0 - floor) * r / total)
        .collect();
    // put the rounding residue on the largest entry
    let residue = 1.0 - row.iter().sum::<f64>();
    let argmax = (0..n)
        .max_by(|&a, &b| row[a].total_cmp(&row[b]))
        .unwrap_or(0);
    row[argmax] += residue;
    row
}

/// Random general-table kernel on `alphabet` with memory depth `depth`.
pub fn random_table_kernel<R: Rng>(
    alphabet: &Alphabet,
    depth: usize,
    floor: f64,
    rng: &mut R,
) -> Result<KernelSpec> {
    let rows = alphabet.size().pow(depth as u32);
    let table = (0..rows)
        .map(|_| random_probabilities(alphabet.size(), floor, rng))
        .collect();
    KernelSpec::table(alphabet.clone(), depth, table)
}

/// Random metric on `n` symbols with off-diagonal entries in `[0.5, 1]`;
/// any such table satisfies the triangle inequality.
pub fn random_metric<R: Rng>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let d = rng.gen_range(0.5..=1.0);
            rows[a][b] = d;
            rows[b][a] = d;
        }
    }
    rows
}
