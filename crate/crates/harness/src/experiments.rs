//! Experiment runners and the reference architectures.

use convland_core::analysis::{estimate_rank, RankReport};
use convland_core::forward::forward_prefix;
use convland_core::{ActivationKind, Dataset, LayerSpec, NetworkSpec, Params, PatchLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{HarnessError, Result};
use crate::report::CsvTable;
use crate::train::{train, TrainConfig};

/// The 28x28 network with two conv + max-pool stages, a dense layer and 10 outputs.
/// Widths: 784, 676·T_1, 169·T_1, 2880, 720, 100, 10.
pub fn mnist_cnn_spec(t1: usize, act: ActivationKind) -> Result<NetworkSpec> {
    Ok(NetworkSpec::new(
        784,
        vec![
            LayerSpec::conv(PatchLayout::conv2d(28, 28, 1, 3, 1)?, t1, act),
            LayerSpec::max_pool(PatchLayout::pool2d(26, 26, t1, 2, 2)?),
            LayerSpec::conv(PatchLayout::conv2d(13, 13, t1, 2, 1)?, 20, act),
            LayerSpec::max_pool(PatchLayout::pool2d(12, 12, 20, 2, 2)?),
            LayerSpec::dense(100, act),
            LayerSpec::output(10),
        ],
    )?)
}

/// [`mnist_cnn_spec`] with each max-pool replaced by a stride-2 2x2 convolution keeping the
/// channel count, so the whole network is differentiable. Same widths.
pub fn sweep_cnn_spec(t1: usize, act: ActivationKind) -> Result<NetworkSpec> {
    Ok(NetworkSpec::new(
        784,
        vec![
            LayerSpec::conv(PatchLayout::conv2d(28, 28, 1, 3, 1)?, t1, act),
            LayerSpec::conv(PatchLayout::conv2d(26, 26, t1, 2, 2)?, t1, act),
            LayerSpec::conv(PatchLayout::conv2d(13, 13, t1, 2, 1)?, 20, act),
            LayerSpec::conv(PatchLayout::conv2d(12, 12, 20, 2, 2)?, 20, act),
            LayerSpec::dense(100, act),
            LayerSpec::output(10),
        ],
    )?)
}

/// Weights and biases i.i.d. `N(0, std^2)`.
pub fn gaussian_params<R: Rng>(spec: &NetworkSpec, std: f64, rng: &mut R) -> Params {
    let mut p = Params::zeros(spec);
    p.for_each_mut(|_, v| *v = std * rng.sample::<f64, _>(StandardNormal));
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTrial {
    pub seed: u64,
    pub report: RankReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankGenericity {
    pub samples: usize,
    pub trials: Vec<RankTrial>,
}

impl RankGenericity {
    pub fn full_rank_count(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.report.estimated_rank == self.samples)
            .count()
    }

    pub fn fraction(&self) -> f64 {
        self.full_rank_count() as f64 / self.trials.len().max(1) as f64
    }

    pub const SCHEMA: &'static str = "convland.rank-genericity/1";

    pub fn table(&self) -> CsvTable {
        let mut header = vec!["seed", "samples"];
        header.extend(RankReport::CSV_HEADER);
        let mut t = CsvTable::new(Self::SCHEMA, &header);
        for trial in &self.trials {
            let mut row = vec![trial.seed.to_string(), self.samples.to_string()];
            row.extend(trial.report.csv_record());
            t.push(row);
        }
        t
    }
}

/// For each seed, draw layers `1..=k` from `N(0, std^2)` and estimate `rank(F_k)`.
pub fn run_rank_genericity(
    spec: &NetworkSpec,
    x: &nalgebra::DMatrix<f64>,
    k: usize,
    seeds: &[u64],
    std: f64,
) -> Result<RankGenericity> {
    if k == 0 || k >= spec.depth() {
        return Err(HarnessError::Config(format!("wide layer {k} must be hidden")));
    }
    let trials = seeds
        .iter()
        .map(|&seed| {
            let params = gaussian_params(spec, std, &mut ChaCha8Rng::seed_from_u64(seed));
            let tr = forward_prefix(spec, &params, x, k)?;
            Ok(RankTrial {
                seed,
                report: estimate_rank(tr.features(k))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RankGenericity {
        samples: x.nrows(),
        trials,
    })
}

/// One line of the filter sweep, columns in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t1: usize,
    pub size_f1: (usize, usize),
    pub rank_f1: usize,
    pub sigma_min_f1: f64,
    pub size_f3: (usize, usize),
    pub rank_f3: usize,
    pub sigma_min_f3: f64,
    pub loss: f64,
    pub train_errors: usize,
    pub test_errors: Option<usize>,
}

impl SweepRow {
    pub const SCHEMA: &'static str = "convland.filter-sweep/1";
    pub const HEADER: [&'static str; 10] = [
        "T_1",
        "size(F_1)",
        "rank(F_1)",
        "sigma_min(F_1)",
        "size(F_3)",
        "rank(F_3)",
        "sigma_min(F_3)",
        "loss",
        "train_error",
        "test_error",
    ];

    pub fn record(&self) -> Vec<String> {
        vec![
            self.t1.to_string(),
            format!("{}x{}", self.size_f1.0, self.size_f1.1),
            self.rank_f1.to_string(),
            format!("{:e}", self.sigma_min_f1),
            format!("{}x{}", self.size_f3.0, self.size_f3.1),
            self.rank_f3.to_string(),
            format!("{:e}", self.sigma_min_f3),
            format!("{:e}", self.loss),
            self.train_errors.to_string(),
            self.test_errors.map_or_else(String::new, |e| e.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub row: SweepRow,
    /// `rank(F_1)` at the initial parameters.
    pub initial_rank_f1: usize,
    pub epochs_run: usize,
    pub params: Params,
}

pub fn sweep_table(entries: &[SweepEntry]) -> CsvTable {
    let mut t = CsvTable::new(SweepRow::SCHEMA, &SweepRow::HEADER);
    for e in entries {
        t.push(e.row.record());
    }
    t
}

/// Train [`sweep_cnn_spec`] for every `T_1` and record ranks of `F_1` and `F_3`.
pub fn run_filter_sweep(
    t1_values: &[usize],
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    init_seed: u64,
    act: ActivationKind,
) -> Result<Vec<SweepEntry>> {
    t1_values
        .iter()
        .map(|&t1| {
            let spec = sweep_cnn_spec(t1, act)?;
            let init = Params::scaled_gaussian(&spec, &mut ChaCha8Rng::seed_from_u64(init_seed ^ t1 as u64));
            let f1 = forward_prefix(&spec, &init, &train_set.x, 1)?;
            let initial_rank_f1 = estimate_rank(f1.features(1))?.estimated_rank;
            let res = train(&spec, &init, train_set, test_set, cfg)?;
            let tr = forward_prefix(&spec, &res.params, &train_set.x, 3)?;
            let r1 = estimate_rank(tr.features(1))?;
            let r3 = estimate_rank(tr.features(3))?;
            Ok(SweepEntry {
                row: SweepRow {
                    t1,
                    size_f1: (r1.rows, r1.cols),
                    rank_f1: r1.estimated_rank,
                    sigma_min_f1: r1.sigma_min,
                    size_f3: (r3.rows, r3.cols),
                    rank_f3: r3.estimated_rank,
                    sigma_min_f3: r3.sigma_min,
                    loss: res.final_loss(),
                    train_errors: res.train_errors,
                    test_errors: res.test_errors,
                },
                initial_rank_f1,
                epochs_run: res.epochs_run,
                params: res.params,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_and_strided_widths_agree() {
        let a = mnist_cnn_spec(100, ActivationKind::Sigmoid).unwrap().widths();
        assert_eq!(a, vec![784, 67600, 16900, 2880, 720, 100, 10]);
        let b = sweep_cnn_spec(100, ActivationKind::Sigmoid).unwrap().widths();
        assert_eq!(a, b);
        assert_eq!(sweep_cnn_spec(10, ActivationKind::Sigmoid).unwrap().width(1), 6760);
    }
}
