#![allow(dead_code)]

use convland_core::{ActivationKind, LayerSpec, NetworkSpec, PatchLayout};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Rank by Gaussian elimination with partial pivoting; pivots below
/// `1e-10 * max|a|` count as zero.
pub fn elimination_rank(a: &DMatrix<f64>) -> usize {
    let mut m = a.clone();
    let (rows, cols) = m.shape();
    let cutoff = 1e-10 * m.amax();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (piv, val) = (rank..rows)
            .map(|r| (r, m[(r, c)].abs()))
            .fold((rank, -1.0), |b, x| if x.1 > b.1 { x } else { b });
        if val <= cutoff {
            continue;
        }
        m.swap_rows(rank, piv);
        for r in rank + 1..rows {
            let f = m[(r, c)] / m[(rank, c)];
            if f != 0.0 {
                for j in c..cols {
                    m[(r, j)] -= f * m[(rank, j)];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Smallest gap between an entry of row `i` and an entry of row `j`, over `i != j`.
pub fn min_cross_sample_gap(f: &DMatrix<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..f.nrows() {
        for j in i + 1..f.nrows() {
            for a in f.row(i).iter() {
                for b in f.row(j).iter() {
                    best = best.min((a - b).abs());
                }
            }
        }
    }
    best
}

/// 1-D conv layer, then a dense wide layer, then a scalar output.
pub fn conv_dense_net(act: ActivationKind, wide: usize) -> NetworkSpec {
    NetworkSpec::new(
        12,
        vec![
            LayerSpec::conv(PatchLayout::conv1d(12, 3, 1).unwrap(), 2, act),
            LayerSpec::dense(wide, act),
            LayerSpec::output(1),
        ],
    )
    .unwrap()
}

/// Dense network with the given hidden widths and output width.
pub fn dense_net(input: usize, hidden: &[usize], out: usize, act: ActivationKind) -> NetworkSpec {
    let mut layers: Vec<LayerSpec> = hidden.iter().map(|&w| LayerSpec::dense(w, act)).collect();
    layers.push(LayerSpec::output(out));
    NetworkSpec::new(input, layers).unwrap()
}

/// Balanced labels `0, 1, .., m-1, 0, 1, ..`.
pub fn balanced_labels(n: usize, m: usize) -> Vec<usize> {
    (0..n).map(|i| i % m).collect()
}
