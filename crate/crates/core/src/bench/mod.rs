//! FLOP counting, kernel throughput, and the dot-versus-yat ranking table.

mod counted;

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};
use crate::linalg::{dot, DrawKind, RngState};
use crate::yat::{flop_model, yat_product, DEFAULT_EPSILON};

pub use counted::{dot_neuron, yat_neuron, Counted, Scalar};

pub const DEFAULT_DIMS: [usize; 4] = [16, 64, 256, 1024];
pub const DEFAULT_REPS: usize = 5;

/// Counting convention written into every report.
pub const FLOP_CONVENTION: &str = "one FLOP per scalar add, sub, mul, div; ReLU counts 1; \
the layer scale (sqrt/log) is computed once per layer and excluded";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub d: usize,
    pub counted_flops_dot_neuron: u64,
    pub counted_flops_yat_neuron: u64,
    pub model_flops_dot_neuron: u64,
    pub model_flops_yat_neuron: u64,
    pub model_ratio: f64,
    /// Neuron evaluations per second.
    pub throughput_dot: f64,
    pub throughput_yat: f64,
    pub measured_ratio: f64,
}

impl BenchRow {
    pub fn counts_match_model(&self) -> bool {
        self.counted_flops_dot_neuron == self.model_flops_dot_neuron
            && self.counted_flops_yat_neuron == self.model_flops_yat_neuron
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub convention: String,
    pub environment: String,
    pub reps: usize,
    pub rows: Vec<BenchRow>,
}

pub fn environment_note() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "{}-{}, {} logical cores available, kernels run on 1 thread, debug_assertions={}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cores,
        cfg!(debug_assertions)
    )
}

/// Instrumented per-neuron counts `(dot neuron, yat neuron)` for input width `d`.
pub fn counted_flops(d: usize) -> Result<(u64, u64)> {
    if d == 0 {
        return Err(domain_err!("input dimension must be at least 1"));
    }
    let w: Vec<Counted> = (0..d).map(|i| Counted(0.5 + i as f64)).collect();
    let x: Vec<Counted> = (0..d).map(|i| Counted(1.0 - i as f64)).collect();
    let (_, dot_count) = Counted::count(|| dot_neuron(&w, &x, Counted(0.1)));
    let (_, yat_count) = Counted::count(|| yat_neuron(&w, &x, Counted(DEFAULT_EPSILON)));
    Ok((dot_count, yat_count))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median-of-`reps` evaluations per second after one warm-up pass.
fn throughput(batch: &[f64], d: usize, mut kernel: impl FnMut(&[f64]) -> f64, reps: usize) -> f64 {
    let rows = batch.len() / d;
    let mut pass = || {
        let mut acc = 0.0;
        for x in batch.chunks_exact(d) {
            acc += kernel(black_box(x));
        }
        black_box(acc);
    };
    pass();
    let times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            pass();
            t.elapsed().as_secs_f64()
        })
        .collect();
    rows as f64 / median(times).max(1e-12)
}

pub fn bench_kernels(dims: &[usize], reps: usize, state: RngState) -> Result<(BenchReport, RngState)> {
    if dims.is_empty() {
        return Err(domain_err!("no dimensions to benchmark"));
    }
    if reps == 0 {
        return Err(domain_err!("reps must be at least 1"));
    }
    let mut state = state;
    let mut rows = Vec::with_capacity(dims.len());
    for &d in dims {
        let (dot_count, yat_count) = counted_flops(d)?;
        let model = flop_model(d as u64)?;
        let batch_rows = (1usize << 18).div_ceil(d).max(64);
        let (batch, s) = state.draw(DrawKind::StandardNormal, batch_rows * d)?;
        let (w, s) = s.draw(DrawKind::StandardNormal, d)?;
        state = s;
        let throughput_dot = throughput(&batch, d, |x| dot_neuron(&w, x, 0.1), reps);
        let throughput_yat = throughput(&batch, d, |x| yat_neuron(&w, x, DEFAULT_EPSILON), reps);
        rows.push(BenchRow {
            d,
            counted_flops_dot_neuron: dot_count,
            counted_flops_yat_neuron: yat_count,
            model_flops_dot_neuron: model.traditional,
            model_flops_yat_neuron: model.yat,
            model_ratio: model.ratio,
            throughput_dot,
            throughput_yat,
            measured_ratio: throughput_dot / throughput_yat,
        });
    }
    Ok((
        BenchReport {
            convention: FLOP_CONVENTION.to_string(),
            environment: environment_note(),
            reps,
            rows,
        },
        state,
    ))
}

pub const FIG6_QUERY: [f64; 2] = [6.0, 6.0];
pub const FIG6_NEURONS: [[f64; 2]; 7] = [
    [1.0, 1.0],
    [2.0, 2.0],
    [3.0, 3.0],
    [4.0, 4.0],
    [5.0, 5.0],
    [8.0, 8.0],
    [9.0, 9.0],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig6Row {
    pub neuron: [f64; 2],
    pub dot: f64,
    pub yat: f64,
    pub dot_rank: usize,
    pub yat_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig6Table {
    pub query: [f64; 2],
    pub epsilon: f64,
    pub rows: Vec<Fig6Row>,
}

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

/// Dot and yat scores of the fixed diagonal neuron set against `(6, 6)`.
pub fn fig6_table() -> Fig6Table {
    let dots: Vec<f64> = FIG6_NEURONS.iter().map(|n| dot(n, &FIG6_QUERY)).collect();
    let yats: Vec<f64> = FIG6_NEURONS
        .iter()
        .map(|n| yat_product(n, &FIG6_QUERY, DEFAULT_EPSILON).expect("fixed 2-D inputs"))
        .collect();
    let dr = ranks(&dots);
    let yr = ranks(&yats);
    Fig6Table {
        query: FIG6_QUERY,
        epsilon: DEFAULT_EPSILON,
        rows: FIG6_NEURONS
            .iter()
            .enumerate()
            .map(|(i, n)| Fig6Row {
                neuron: *n,
                dot: dots[i],
                yat: yats[i],
                dot_rank: dr[i],
                yat_rank: yr[i],
            })
            .collect(),
    }
}

impl Fig6Table {
    pub fn top_by_dot(&self) -> &Fig6Row {
        self.rows.iter().find(|r| r.dot_rank == 1).expect("non-empty table")
    }

    pub fn top_by_yat(&self) -> &Fig6Row {
        self.rows.iter().find(|r| r.yat_rank == 1).expect("non-empty table")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("neuron_x,neuron_y,dot,dot_rank,yat,yat_rank\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.neuron[0], r.neuron[1], r.dot, r.dot_rank, r.yat, r.yat_rank
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_counts_match_model() {
        for d in [1usize, 2, 16, 128] {
            let (dot, _) = counted_flops(d).unwrap();
            assert_eq!(dot, 2 * d as u64 + 1);
        }
    }

    #[test]
    fn yat_counts_are_five_d_plus_one() {
        for d in [1usize, 2, 16, 128] {
            let (_, yat) = counted_flops(d).unwrap();
            assert_eq!(yat, 5 * d as u64 + 1);
        }
    }

    #[test]
    fn fig6_rankings() {
        let t = fig6_table();
        assert_eq!(t.top_by_yat().neuron, [5.0, 5.0]);
        assert_eq!(t.top_by_dot().neuron, [9.0, 9.0]);
        assert_eq!(t.top_by_dot().dot, 108.0);
        let far = t.rows.iter().find(|r| r.neuron == [9.0, 9.0]).unwrap();
        assert!((far.yat - 108.0 * 108.0 / (18.0 + 1e-6)).abs() < 1e-9);
        assert!((far.yat - 648.0).abs() < 1e-4);
    }

    #[test]
    fn bench_small() {
        let (r, _) = bench_kernels(&[4, 8], 1, RngState::new(0)).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|row| row.throughput_dot > 0.0 && row.throughput_yat > 0.0));
        assert!(bench_kernels(&[], 1, RngState::new(0)).is_err());
        assert!(bench_kernels(&[4], 0, RngState::new(0)).is_err());
    }
}
