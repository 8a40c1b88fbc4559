//! `nmk`: command-line driver for the nmk-core experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nmk_core::bench::{bench_kernels, fig6_table, DEFAULT_DIMS, DEFAULT_REPS};
use nmk_core::data::{load_idx, Dataset};
use nmk_core::layers::{Activation, ImageShape};
use nmk_core::nms::{build_nms, export_nms, ExportFormat, DEFAULT_GRID, DEFAULT_KAPPA};
use nmk_core::train::{
    grad_check, grad_check_encoder_block, metrics_csv, read_manifest, read_tensor, save_checkpoint, solve_xor,
    train_with, xor_forward, GradTarget, HeadKind, ModelSpec, TrainConfig,
};
use nmk_core::yat::{axiom_check, seeded_triangle_case, Measure, DEFAULT_EPSILON};
use nmk_core::{Error, Result, RngState};

#[derive(Parser)]
#[command(name = "nmk", version, about = "Activation-free yat-product networks", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for every random draw; NMK_SEED overrides it when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "nmk-out")]
    out: PathBuf,
}

impl Common {
    fn seed(&self) -> Result<u64> {
        match std::env::var("NMK_SEED") {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("NMK_SEED={s:?} is not an unsigned integer"))),
            Err(_) => Ok(self.seed),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a single yat neuron to XOR and write its decision grid.
    Xor {
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train a classifier on IDX images.
    Train(TrainArgs),
    /// Neural-matter state report for one layer of a checkpoint.
    Nms {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Layer name such as `layer2`, or a tensor name such as `layer2.kernel`.
        #[arg(long)]
        layer: String,
        #[arg(long, default_value_t = DEFAULT_KAPPA)]
        kappa: f64,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
        formats: Vec<String>,
        #[arg(long, default_value = "nmk-out")]
        out: PathBuf,
    },
    /// Count metric-axiom violations of E or Ē on random triples.
    Axioms {
        /// `e` or `ebar`.
        #[arg(long, default_value = "e")]
        measure: String,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Also check a full-width encoder block on sampled coordinates.
        #[arg(long)]
        block_width: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// FLOP counts and kernel throughput.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DIMS)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_REPS)]
        reps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Dot versus yat ranking of diagonal neurons against (6, 6).
    Fig6 {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arch {
    /// Bias-free yat MLP.
    EMlp,
    /// ReLU MLP with biases.
    Mlp,
    /// Affine stack without activations.
    Linear,
    /// Yat vision transformer.
    EVit,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    arch: Arch,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, requires = "test_labels")]
    test_images: Option<PathBuf>,
    #[arg(long, requires = "test_images")]
    test_labels: Option<PathBuf>,
    /// JSON file with TrainConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use only the first N training samples.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "128,64")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    patch: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[command(flatten)]
    common: Common,
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run_xor(restarts: usize, common: &Common) -> Result<()> {
    let (sol, grid, _) = solve_xor(restarts, RngState::new(common.seed()?))?;
    out_dir(&common.out)?;
    let inputs = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let correct = inputs
        .iter()
        .zip([0.0, 1.0, 1.0, 0.0])
        .filter(|(x, t)| (xor_forward(sol.weights, sol.bias, sol.epsilon, **x) > 0.5) == (*t > 0.5))
        .count();
    let mut csv = String::from("x,y,value\n");
    let step = (grid.max - grid.min) / (grid.size - 1) as f64;
    for (i, v) in grid.values.iter().enumerate() {
        let y = grid.min + step * (i / grid.size) as f64;
        let x = grid.min + step * (i % grid.size) as f64;
        csv.push_str(&format!("{x},{y},{v}\n"));
    }
    write(&common.out.join("decision_grid.csv"), csv)?;
    write(&common.out.join("xor.json"), serde_json::to_string_pretty(&sol)?)?;
    println!(
        "accuracy {correct}/4  w = ({:.6}, {:.6})  b = {:.6}  mse = {:.3e}  restart {}",
        sol.weights[0], sol.weights[1], sol.bias, sol.mse, sol.restart
    );
    for (x, y) in inputs.iter().zip(sol.outputs) {
        println!("  f({}, {}) = {y:.6}", x[0], x[1]);
    }
    Ok(())
}

fn load_split(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let d = load_idx(images, labels)?;
    Ok(match limit {
        Some(n) => d.head(n),
        None => d,
    })
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let seed = a.common.seed()?;
    let train_set = load_split(&a.images, &a.labels, a.limit)?;
    let test_set = match (&a.test_images, &a.test_labels) {
        (Some(i), Some(l)) => load_split(i, l, a.test_limit)?,
        _ => train_set.head(0),
    };
    let dense = matches!(a.arch, Arch::Mlp | Arch::Linear);
    let mut config = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<TrainConfig>(&text)?
        }
        None if dense => TrainConfig {
            head: HeadKind::Softmax,
            bias_in_head: true,
            ..TrainConfig::default()
        },
        None => TrainConfig::default(),
    };
    config.seed = seed;
    let spec = match a.arch {
        Arch::EMlp => ModelSpec::e_mlp(&a.hidden),
        Arch::Mlp => ModelSpec::dense_mlp(&a.hidden, Activation::ReLU),
        Arch::Linear => ModelSpec::dense_mlp(&a.hidden, Activation::None),
        Arch::EVit => {
            let side = (train_set.dim() as f64).sqrt().round() as usize;
            if side * side != train_set.dim() {
                return Err(Error::Config(format!(
                    "e-vit expects square single-channel images, got {} features",
                    train_set.dim()
                )));
            }
            ModelSpec::e_vit(ImageShape::gray(side, side), a.patch, a.width, a.heads, a.blocks)
        }
    };
    out_dir(&a.common.out)?;
    let report = train_with(&spec, &train_set, &test_set, &config, RngState::new(seed), &mut |m| {
        println!(
            "epoch {:>3}  loss {:.6}  train_acc {:.4}  test_acc {:.4}",
            m.epoch, m.loss, m.train_acc, m.test_acc
        );
    })?;
    write(&a.common.out.join("metrics.csv"), metrics_csv(&report.epochs))?;
    save_checkpoint(&a.common.out.join("checkpoint"), &report.model)?;
    let mut json = serde_json::to_value(&report)?;
    if let Some(obj) = json.as_object_mut() {
        // weights live in the checkpoint
        obj.remove("model");
    }
    write(&a.common.out.join("report.json"), serde_json::to_string_pretty(&json)?)?;
    println!("parameters {}  wall clock {:.1}s", report.param_count, report.wall_clock_seconds);
    Ok(())
}

fn run_nms(checkpoint: &Path, layer: &str, kappa: f64, grid: usize, formats: &[String], out: &Path) -> Result<()> {
    let formats: Vec<ExportFormat> = formats.iter().map(|f| f.parse()).collect::<Result<_>>()?;
    let manifest = read_manifest(checkpoint)?;
    let base = layer
        .strip_suffix(".kernel")
        .or_else(|| layer.strip_suffix(".weight"))
        .unwrap_or(layer);
    let entry = manifest.layers.iter().find(|l| l.name == base).ok_or_else(|| {
        let names: Vec<&str> = manifest.layers.iter().map(|l| l.name.as_str()).collect();
        Error::Config(format!("no layer {layer:?}; available: {}", names.join(", ")))
    })?;
    let tensor = if entry.kind == "yat" {
        format!("{base}.kernel")
    } else {
        format!("{base}.weight")
    };
    let kernel = read_tensor(checkpoint, &tensor)?;
    let epsilon = entry.epsilon.unwrap_or(DEFAULT_EPSILON);
    let report = build_nms(&kernel, epsilon, kappa, grid)?.named(base);
    for f in export_nms(&report, out, &formats)? {
        println!("wrote {}", f.display());
    }
    println!(
        "{base}: {} neurons, median similarity {:.4e}, {} flagged pairs",
        kernel.rows(),
        report.median_similarity,
        report.collapse_pairs.len()
    );
    Ok(())
}

fn run_axioms(measure: &str, samples: u64, dim: usize, epsilon: f64, common: &Common) -> Result<()> {
    let measure: Measure = measure.parse()?;
    let seeded = [seeded_triangle_case()];
    let (report, _) = axiom_check(measure, samples, dim, epsilon, RngState::new(common.seed()?), &seeded)?;
    out_dir(&common.out)?;
    let path = common.out.join("axioms.json");
    write(&path, serde_json::to_string_pretty(&report)?)?;
    let v = &report.violations;
    println!(
        "{measure:?} dim {dim}, {samples} triples: non_negativity {} symmetry {} identity_forward {} identity_reverse {} triangle {}",
        v.non_negativity, v.symmetry, v.identity_forward, v.identity_reverse, v.triangle
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn run_gradcheck(trials: usize, tolerance: f64, block_width: Option<usize>, common: &Common) -> Result<bool> {
    let mut state = RngState::new(common.seed()?);
    let mut reports = Vec::new();
    for target in GradTarget::ALL {
        let (r, s) = grad_check(target, trials, tolerance, state)?;
        state = s;
        println!(
            "{:<16} {:>7} entries  max rel err {:.3e}  {}",
            serde_json::to_value(target)?.as_str().unwrap_or("?"),
            r.checked,
            r.max_rel_err,
            if r.passed() { "ok" } else { "FAILED" }
        );
        reports.push(r);
    }
    if let Some(w) = block_width {
        let r = grad_check_encoder_block(w, 2, 4 * w, 8, 200, tolerance, state.fork(1))?;
        println!(
            "block width {w:<5} {:>7} entries  max rel err {:.3e}  {}",
            r.checked,
            r.max_rel_err,
            if r.passed() { "ok" } else { "FAILED" }
        );
        reports.push(r);
    }
    out_dir(&common.out)?;
    write(&common.out.join("gradcheck.json"), serde_json::to_string_pretty(&reports)?)?;
    Ok(reports.iter().all(|r| r.passed()))
}

fn run_bench(dims: &[usize], reps: usize, common: &Common) -> Result<()> {
    let (report, _) = bench_kernels(dims, reps, RngState::new(common.seed()?))?;
    out_dir(&common.out)?;
    write(&common.out.join("bench.json"), serde_json::to_string_pretty(&report)?)?;
    let mut csv = String::from("d,counted_dot,counted_yat,model_dot,model_yat,model_ratio,throughput_dot,throughput_yat,measured_ratio\n");
    println!("# {}", report.convention);
    println!("# {}", report.environment);
    println!("{:>6} {:>9} {:>9} {:>9} {:>9} {:>8} {:>12} {:>12} {:>8}", "d", "cnt_dot", "cnt_yat", "mdl_dot", "mdl_yat", "mdl_r", "dot/s", "yat/s", "meas_r");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.d,
            r.counted_flops_dot_neuron,
            r.counted_flops_yat_neuron,
            r.model_flops_dot_neuron,
            r.model_flops_yat_neuron,
            r.model_ratio,
            r.throughput_dot,
            r.throughput_yat,
            r.measured_ratio
        ));
        println!(
            "{:>6} {:>9} {:>9} {:>9} {:>9} {:>8.4} {:>12.4e} {:>12.4e} {:>8.4}",
            r.d,
            r.counted_flops_dot_neuron,
            r.counted_flops_yat_neuron,
            r.model_flops_dot_neuron,
            r.model_flops_yat_neuron,
            r.model_ratio,
            r.throughput_dot,
            r.throughput_yat,
            r.measured_ratio
        );
    }
    write(&common.out.join("bench.csv"), csv)?;
    Ok(())
}

fn run_fig6(out: Option<&Path>) -> Result<()> {
    let table = fig6_table();
    let csv = table.to_csv();
    print!("{csv}");
    println!(
        "dot argmax ({}, {}) = {}; yat argmax ({}, {}) = {:.6}",
        table.top_by_dot().neuron[0],
        table.top_by_dot().neuron[1],
        table.top_by_dot().dot,
        table.top_by_yat().neuron[0],
        table.top_by_yat().neuron[1],
        table.top_by_yat().yat
    );
    if let Some(dir) = out {
        out_dir(dir)?;
        write(&dir.join("fig6.csv"), csv)?;
        write(&dir.join("fig6.json"), serde_json::to_string_pretty(&table)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Xor { restarts, common } => run_xor(restarts, &common)?,
        Command::Train(a) => run_train(&a)?,
        Command::Nms {
            checkpoint,
            layer,
            kappa,
            grid,
            formats,
            out,
        } => run_nms(&checkpoint, &layer, kappa, grid, &formats, &out)?,
        Command::Axioms {
            measure,
            samples,
            dim,
            epsilon,
            common,
        } => run_axioms(&measure, samples, dim, epsilon, &common)?,
        Command::Gradcheck {
            trials,
            tolerance,
            block_width,
            common,
        } => return run_gradcheck(trials, tolerance, block_width, &common),
        Command::Bench { dims, reps, common } => run_bench(&dims, reps, &common)?,
        Command::Fig6 { out } => run_fig6(out.as_deref())?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
