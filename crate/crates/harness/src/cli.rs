//! `convland` command line. Exit codes: 0 success, 1 a checked property failed or the
//! computation errored, 2 usage or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use convland_core::analysis::{estimate_rank, gradient_bounds, s_k_membership, width_audit, BoundReport};
use convland_core::assumptions::{check_architecture, check_conv_structure, check_distinct_patches};
use convland_core::backprop::{backward_with, loss, BackwardOptions};
use convland_core::constructions::{
    expressivity_fit, independence_construction_detailed, with_output_layer, zero_loss_construction,
    ConstructionParams, ZeroLossCase,
};
use convland_core::{forward, netspec_file, ActivationKind, Dataset, LayerSpec, NetworkSpec, PatchLayout};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::data::synthesize_dataset;
use crate::error::{HarnessError, Result};
use crate::experiments::{
    mnist_cnn_spec, gaussian_params, run_rank_genericity, run_filter_sweep, sweep_table,
};
use crate::report::CsvTable;
use crate::train::train;

#[derive(Debug, Parser)]
#[command(name = "convland", version, about = "Loss-landscape experiments on generalized CNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network spec file; overrides the config.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file for CSV reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of samples for synthetic data.
    #[arg(long)]
    n: Option<usize>,
    /// Wide layer.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check conv structure, distinct patches and the architecture conditions.
    CheckAssumptions {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Build parameters with rank-N features at the wide layer.
    ConstructIndependent {
        #[command(flatten)]
        common: Common,
    },
    /// Build an exact zero-loss point.
    ConstructZeroloss {
        #[command(flatten)]
        common: Common,
        /// 1: wide layer is the last hidden one, 2: second to last, 3: deeper.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
        case: u8,
    },
    /// Interpolate random scalar targets exactly.
    FitExpressivity {
        #[command(flatten)]
        common: Common,
    },
    /// Rank of F_k at random parameters, one row per seed.
    RankGenericity {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Train the filter sweep network and report feature ranks.
    #[command(name = "table2-sweep")]
    FilterSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        t1: Option<Vec<usize>>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate the gradient bounds at random points.
    GradBounds {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Train a network and write its loss curve.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Layer widths, the widest layer and the pyramidal tail.
    WidthAudit {
        #[command(flatten)]
        common: Common,
    },
}

enum Outcome {
    Pass,
    Fail(String),
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail(msg)) => {
            let _ = writeln!(out, "FAIL: {msg}");
            1
        }
        Err(e @ (HarnessError::Config(_) | HarnessError::Io { .. })) => {
            let _ = writeln!(out, "error: {e}");
            2
        }
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            1
        }
    }
}

fn config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if common.spec.is_some() {
        cfg.spec = common.spec.clone();
    }
    if common.out.is_some() {
        cfg.output = common.out.clone();
    }
    if let Some(k) = common.k {
        cfg.wide_layer = Some(k);
    }
    Ok(cfg)
}

fn load_spec(path: &Path) -> Result<NetworkSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    netspec_file::from_toml(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn spec_or(cfg: &ExperimentConfig, default: impl FnOnce() -> Result<NetworkSpec>) -> Result<NetworkSpec> {
    match &cfg.spec {
        Some(p) => load_spec(p),
        None => default(),
    }
}

/// 10x10 input, 3x3 conv with three sigmoid filters (192 units), then `tail`.
/// Two filters would give a lifted matrix of rank 92 < 100 for every filter choice.
fn desk_conv(tail: Vec<LayerSpec>) -> Result<NetworkSpec> {
    let mut layers = vec![LayerSpec::conv(PatchLayout::conv2d(10, 10, 1, 3, 1)?, 3, ActivationKind::Sigmoid)];
    layers.extend(tail);
    Ok(NetworkSpec::new(100, layers)?)
}

fn dense(input: usize, hidden: &[usize], out: usize) -> Result<NetworkSpec> {
    let mut layers: Vec<LayerSpec> = hidden
        .iter()
        .map(|&w| LayerSpec::dense(w, ActivationKind::Sigmoid))
        .collect();
    layers.push(LayerSpec::output(out));
    Ok(NetworkSpec::new(input, layers)?)
}

/// Data from the config, or synthetic data sized for `spec`.
fn dataset(cfg: &ExperimentConfig, common: &Common, spec: &NetworkSpec, n: usize, classes: usize) -> Result<Dataset> {
    if cfg.data.is_some() {
        let (train, _) = cfg.load_data()?;
        return Ok(train);
    }
    let n = common.n.unwrap_or(n);
    synthesize_dataset(n, spec.input_width(), classes, common.seed.unwrap_or(0), 1e-5)
}

fn construction_params(common: &Common) -> ConstructionParams {
    ConstructionParams::with_seed(common.seed.unwrap_or(0))
}

/// First hidden layer at least as wide as the sample count.
fn wide_layer(cfg: &ExperimentConfig, spec: &NetworkSpec, n: usize) -> Result<usize> {
    if let Some(k) = cfg.wide_layer {
        return Ok(k);
    }
    (1..spec.depth())
        .find(|&k| spec.width(k) >= n && !spec.layers()[k - 1].is_pool())
        .ok_or_else(|| HarnessError::Config(format!("no hidden layer has width >= N = {n}")))
}

fn write_table(table: &CsvTable, cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    match &cfg.output {
        Some(p) => table.write(p),
        None => {
            let s = table.to_csv_string()?;
            out.write_all(s.as_bytes()).map_err(|e| HarnessError::io("<stdout>", e))
        }
    }
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|e| HarnessError::io("<stdout>", e))?
    };
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<Outcome> {
    match cmd {
        Command::CheckAssumptions { common, trials } => {
            let cfg = config(&common)?;
            let spec = spec_or(&cfg, || desk_conv(vec![LayerSpec::output(1)]))?;
            let data = dataset(&cfg, &common, &spec, 64, 2)?;
            let mut failures = Vec::new();
            for k in 1..=spec.depth() {
                if spec.layers()[k - 1].is_pool() {
                    continue;
                }
                let r = check_conv_structure(&spec, k, trials, common.seed.unwrap_or(0))?;
                say!(out, "layer {k}: full-rank fraction {:.3}", r.full_rank_fraction);
                if !r.holds {
                    failures.push(format!("layer {k} never lifted to full rank"));
                }
            }
            let layout = spec.input_layout()?;
            let d = check_distinct_patches(&data.x, &layout, 0.0)?;
            say!(out, "distinct patches: {} {:?}", d.holds, d.witness);
            if !d.holds {
                failures.push("input patches collide".into());
            }
            match wide_layer(&cfg, &spec, data.len()).map(|k| (k, check_architecture(&spec, k, data.len()))) {
                Ok((k, Ok(()))) => say!(out, "architecture: wide layer {k} satisfies all conditions"),
                Ok((k, Err(e))) => say!(out, "architecture at wide layer {k}: {e}"),
                Err(e) => say!(out, "architecture: {e}"),
            }
            Ok(if failures.is_empty() {
                Outcome::Pass
            } else {
                Outcome::Fail(failures.join("; "))
            })
        }
        Command::ConstructIndependent { common } => {
            let cfg = config(&common)?;
            let spec = spec_or(&cfg, || desk_conv(vec![LayerSpec::output(1)]))?;
            let data = dataset(&cfg, &common, &spec, 64, 2)?;
            let k = wide_layer(&cfg, &spec, data.len())?;
            let built = independence_construction_detailed(&spec, &data.x, k, &construction_params(&common))?;
            let r = estimate_rank(&built.features)?;
            say!(out, "N = {}, k = {k}, alpha = {}, beta = {}", data.len(), built.alpha, built.beta);
            say!(out, "rank(F_k) = {}, sigma_min = {:e}", r.estimated_rank, r.sigma_min);
            Ok(if r.estimated_rank == data.len() {
                Outcome::Pass
            } else {
                Outcome::Fail(format!("rank {} < N = {}", r.estimated_rank, data.len()))
            })
        }
        Command::ConstructZeroloss { common, case } => {
            let cfg = config(&common)?;
            let spec = spec_or(&cfg, || match case {
                1 => dense(5, &[6, 10], 2),
                2 => dense(5, &[10, 4], 2),
                _ => dense(5, &[10, 8, 6, 4], 2),
            })?;
            let data = dataset(&cfg, &common, &spec, 8, spec.output_width())?;
            let k = match cfg.wide_layer {
                Some(k) => k,
                None if cfg.spec.is_none() => [2, 1, 1][case as usize - 1],
                None => wide_layer(&cfg, &spec, data.len())?,
            };
            let params = zero_loss_construction(&spec, &data, k, &construction_params(&common))?;
            let tr = forward(&spec, &params, &data.x)?;
            let phi = loss(&tr, &data.y)?;
            let member = s_k_membership(&spec, &params, &tr, k)?;
            let opts = BackwardOptions {
                from_layer: k + 1,
                lifted: true,
                keep_deltas: false,
            };
            let g = backward_with(&spec, &params, &tr, &data.y, opts)?;
            let gn = g.layer(k + 1).and_then(|l| l.grad_u.as_ref()).map_or(0.0, |m| m.norm());
            let bound = 1e-14 * (1.0 + data.y.norm_squared());
            say!(out, "case {:?}, N = {}, k = {k}", ZeroLossCase::of(spec.depth(), k), data.len());
            say!(out, "Phi = {phi:e} (bound {bound:e})");
            say!(out, "in S_k = {}", member.in_s_k);
            say!(out, "||grad_U_(k+1)|| = {gn:e}");
            Ok(if phi <= bound && member.in_s_k {
                Outcome::Pass
            } else {
                Outcome::Fail("zero-loss point not reached".into())
            })
        }
        Command::FitExpressivity { common } => {
            let cfg = config(&common)?;
            let spec = spec_or(&cfg, || desk_conv(vec![LayerSpec::output(1)]))?;
            let data = dataset(&cfg, &common, &spec, 64, 2)?;
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed.unwrap_or(0) ^ 0x7a7);
            let y = DVector::from_iterator(data.len(), gaussian_targets(data.len(), &mut rng));
            let (params, lambda) = expressivity_fit(&spec, &data.x, &y, &construction_params(&common))?;
            let full = with_output_layer(params, DMatrix::from_column_slice(lambda.len(), 1, lambda.as_slice()));
            let fitted = forward(&spec, &full, &data.x)?;
            let worst = (0..data.len())
                .map(|i| (fitted.output()[(i, 0)] - y[i]).abs() / (1.0 + y[i].abs()))
                .fold(0.0, f64::max);
            say!(out, "N = {}, max |f(x_i) - y_i| / (1 + |y_i|) = {worst:e}", data.len());
            Ok(if worst <= 1e-8 {
                Outcome::Pass
            } else {
                Outcome::Fail(format!("residual {worst:e} > 1e-8"))
            })
        }
        Command::RankGenericity { common, trials } => {
            let cfg = config(&common)?;
            let spec = spec_or(&cfg, || desk_conv(vec![LayerSpec::output(1)]))?;
            let data = dataset(&cfg, &common, &spec, 64, 2)?;
            let k = wide_layer(&cfg, &spec, data.len())?;
            let base = common.seed.unwrap_or(0);
            let seeds: Vec<u64> = if cfg.seeds.is_empty() {
                (0..trials as u64).map(|s| base + s).collect()
            } else {
                cfg.seeds.clone()
            };
            let res = run_rank_genericity(&spec, &data.x, k, &seeds, 1.0)?;
            write_table(&res.table(), &cfg, out)?;
            say!(
                out,
                "full rank {}/{} (fraction {:.2})",
                res.full_rank_count(),
                res.trials.len(),
                res.fraction()
            );
            Ok(Outcome::Pass)
        }
        Command::FilterSweep { common, t1, epochs } => {
            let mut cfg = config(&common)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if cfg.n_subset.is_none() && cfg.data.is_none() {
                cfg.n_subset = Some(common.n.unwrap_or(256));
            }
            let n = cfg.n_subset.unwrap_or(256);
            let (train_set, test_set) = if cfg.data.is_some() {
                cfg.load_data()?
            } else {
                let all = synthesize_dataset(2 * n, 784, 10, common.seed.unwrap_or(0), 1e-5)?;
                (all.head(n), Some(all.slice(n, n)))
            };
            let t1 = t1.or(cfg.t1_values.clone()).unwrap_or_else(|| vec![2, 4, 8, 16]);
            let entries = run_filter_sweep(
                &t1,
                &train_set,
                test_set.as_ref(),
                &cfg.train,
                common.seed.unwrap_or(0),
                ActivationKind::Sigmoid,
            )?;
            write_table(&sweep_table(&entries), &cfg, out)?;
            Ok(Outcome::Pass)
        }
        Command::GradBounds { common, points } => {
            let cfg = config(&common)?;
            let spec = spec_or(&cfg, || dense(8, &[32, 16, 8], 4))?;
            let data = dataset(&cfg, &common, &spec, 16, spec.output_width())?;
            let k = wide_layer(&cfg, &spec, data.len())?;
            let mut header = vec!["point"];
            header.extend(BoundReport::CSV_HEADER);
            let mut table = CsvTable::new("convland.grad-bounds/1", &header);
            let mut broken = 0;
            for p in 0..points {
                let seed = common.seed.unwrap_or(0).wrapping_add(p as u64);
                let params = gaussian_params(&spec, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
                let tr = forward(&spec, &params, &data.x)?;
                let b = gradient_bounds(&spec, &params, &tr, &data.y, k)?;
                if !b.sandwich_holds(1e-8) {
                    broken += 1;
                }
                let mut row = vec![p.to_string()];
                row.extend(b.csv_record());
                table.push(row);
            }
            write_table(&table, &cfg, out)?;
            Ok(if broken == 0 {
                Outcome::Pass
            } else {
                Outcome::Fail(format!("{broken} of {points} points violate the bounds"))
            })
        }
        Command::Train { common, epochs } => {
            let mut cfg = config(&common)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let spec = spec_or(&cfg, || desk_conv(vec![LayerSpec::dense(16, ActivationKind::Sigmoid), LayerSpec::output(2)]))?;
            let data = dataset(&cfg, &common, &spec, 64, spec.output_width())?;
            let init = convland_core::Params::scaled_gaussian(&spec, &mut ChaCha8Rng::seed_from_u64(common.seed.unwrap_or(0)));
            let res = train(&spec, &init, &data, None, &cfg.train)?;
            let mut table = CsvTable::new("convland.loss-curve/1", &["epoch", "loss"]);
            for (e, l) in res.loss_curve.iter().enumerate() {
                table.push(vec![e.to_string(), format!("{l:e}")]);
            }
            write_table(&table, &cfg, out)?;
            say!(out, "epochs {}, final loss {:e}, train errors {}", res.epochs_run, res.final_loss(), res.train_errors);
            Ok(Outcome::Pass)
        }
        Command::WidthAudit { common } => {
            let cfg = config(&common)?;
            let spec = spec_or(&cfg, || mnist_cnn_spec(100, ActivationKind::Sigmoid))?;
            let n = common
                .n
                .ok_or_else(|| HarnessError::Config("width-audit needs --n".into()))?;
            let a = width_audit(&spec, n);
            let widths: Vec<String> = a.widths.iter().map(usize::to_string).collect();
            say!(out, "widths = {}", widths.join(", "));
            say!(out, "M={} at layer {}", a.max_width, a.arg_layer);
            say!(out, "wide_enough={}", a.wide_enough);
            match a.pyramidal_from {
                Some(k) => say!(out, "pyramidal_from={k}"),
                None => say!(out, "pyramidal_from=none"),
            }
            Ok(Outcome::Pass)
        }
    }
}

fn gaussian_targets(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand::Rng;
    (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

