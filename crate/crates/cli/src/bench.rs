//! Timing sweeps: BVH against linear scan, reverse mode against finite
//! differences, and learning rates on the camera experiment.

use std::time::Instant;

use difftrace::autodiff::{finite_difference_gradient, GradConfig};
use difftrace::inverse::{Objective, OptimizerKind, Status};
use difftrace::prelude::*;
use difftrace::render::render_with_stats;
use difftrace::scene::builtin::{ad_bench_world, bench_world};
use serde::Serialize;

use crate::alloc::{self, AllocCount};
use crate::experiments;

pub const BVH_SIZES: [usize; 5] = [32, 64, 128, 256, 512];
pub const LR_SWEEP: [f64; 4] = [0.01, 0.05, 0.1, 0.5];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Stat::default();
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BvhRow {
    pub size: usize,
    pub accel: &'static str,
    pub trials: usize,
    pub triangles: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub build_ms: f64,
    pub primitive_tests: u64,
    pub node_visits: u64,
    pub allocations: u64,
    pub alloc_bytes: u64,
}

/// Renders the bench mesh at each `size`² with and without the BVH.
/// One untimed warm-up render, then linear and BVH trials interleaved so
/// drift affects both alike.
pub fn bvh_suite<R: Real>(sizes: &[usize], trials: usize) -> Result<Vec<BvhRow>> {
    let mut rows = Vec::new();
    for &size in sizes {
        let world = bench_world::<R>(size, size);
        let prims = &world.scene.primitives;
        let t = Instant::now();
        let bvh = Bvh::build(prims)?;
        let build_ms = t.elapsed().as_secs_f64() * 1e3;

        let mut times = [Vec::new(), Vec::new()];
        let mut stats = [Default::default(), Default::default()];
        let mut allocs = [AllocCount::default(); 2];
        render_with_stats(&world, Accel::Bvh(&bvh), 2)?;
        for _ in 0..trials.max(1) {
            for (k, accel) in [Accel::Linear, Accel::Bvh(&bvh)].into_iter().enumerate() {
                let a0 = alloc::snapshot();
                let t = Instant::now();
                let (_, s) = render_with_stats(&world, accel, 2)?;
                times[k].push(t.elapsed().as_secs_f64() * 1e3);
                allocs[k] = alloc::snapshot() - a0;
                stats[k] = s;
            }
        }
        for (k, name) in ["linear", "bvh"].into_iter().enumerate() {
            let s = Stat::of(&times[k]);
            let st: difftrace::render::TraceStats = stats[k];
            rows.push(BvhRow {
                size,
                accel: name,
                trials: times[k].len(),
                triangles: prims.len(),
                mean_ms: s.mean,
                std_ms: s.std,
                build_ms: if k == 1 { build_ms } else { 0.0 },
                primitive_tests: st.primitive_tests,
                node_visits: st.node_visits,
                allocations: allocs[k].allocations,
                alloc_bytes: allocs[k].bytes,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct AdRow {
    pub triangles: usize,
    pub params: usize,
    pub trials: usize,
    pub forward_ms: f64,
    pub forward_std_ms: f64,
    pub backward_ms: f64,
    pub backward_std_ms: f64,
    pub fd_ms: f64,
    pub fd_std_ms: f64,
    pub tape_nodes: usize,
    pub max_abs_diff: f64,
}

/// Gradient of the MSE against a black target with respect to every vertex
/// and material slot, by one reverse sweep and by central differences.
pub fn ad_suite<R: Real>(counts: &[usize], size: usize, trials: usize, seed: u64) -> Result<Vec<AdRow>> {
    let mut rows = Vec::new();
    for &n in counts {
        let world = ad_bench_world::<R>(seed, n, size, size);
        let target = Image::filled(size, size, Vec3::zero());
        let objective = Objective::new(&world, &target, LossKind::Mse)?;
        let selection = Selection::parse("triangles,materials", &world)?;
        let params = pack_params(&world, &selection)?;
        let (mut fw, mut bw, mut fd) = (Vec::new(), Vec::new(), Vec::new());
        let mut nodes = 0;
        let mut diff = 0.0f64;
        objective.value_and_gradient(&params)?;
        for _ in 0..trials.max(1) {
            let eval = objective.value_and_gradient(&params)?;
            fw.push(eval.forward.as_secs_f64() * 1e3);
            bw.push(eval.backward.as_secs_f64() * 1e3);
            nodes = eval.tape_nodes;

            let t = Instant::now();
            let grad = finite_difference_gradient(
                |x: &[R]| objective.value(&params.with_values(x.to_vec())).unwrap_or_else(|_| R::nan()),
                &params.values,
                GradConfig::new(R::of(R::DEFAULT_FD_DELTA))?,
            );
            fd.push(t.elapsed().as_secs_f64() * 1e3);
            diff = eval
                .gradient
                .iter()
                .zip(&grad)
                .map(|(a, b)| (*a - *b).as_f64().abs())
                .fold(0.0, f64::max);
        }
        let (f, b, d) = (Stat::of(&fw), Stat::of(&bw), Stat::of(&fd));
        rows.push(AdRow {
            triangles: n,
            params: params.len(),
            trials: fw.len(),
            forward_ms: f.mean,
            forward_std_ms: f.std,
            backward_ms: b.mean,
            backward_std_ms: b.std,
            fd_ms: d.mean,
            fd_std_ms: d.std,
            tape_nodes: nodes,
            max_abs_diff: diff,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct LrRow {
    pub optimizer: &'static str,
    pub learning_rate: f64,
    pub iteration: usize,
    pub loss: f64,
    pub status: &'static str,
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Converged => "converged",
        Status::MaxIterations => "max_iterations",
        Status::NumericalFailure => "numerical_failure",
    }
}

/// Loss histories of the camera experiment for each optimizer and rate.
pub fn lr_suite<R: Real>(rates: &[f64], max_iter: usize) -> Result<Vec<LrRow>> {
    let mut rows = Vec::new();
    for (kind, name) in [(OptimizerKind::Adam, "adam"), (OptimizerKind::Sgd, "sgd")] {
        for &lr in rates {
            let mut exp = experiments::camera::<R>();
            exp.config.optimizer = kind;
            exp.config.learning_rate = lr;
            exp.config.max_iter = max_iter;
            exp.tolerance_ratio = None;
            let run = exp.run(|_| {})?;
            let status = status_name(run.outcome.status);
            for (i, loss) in run.outcome.history.iter().enumerate() {
                rows.push(LrRow {
                    optimizer: name,
                    learning_rate: lr,
                    iteration: i + 1,
                    loss: loss.as_f64(),
                    status,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_matches_hand_computation() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - 1.2909944487358056).abs() < 1e-12);
        assert_eq!(Stat::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn bvh_suite_emits_two_rows_per_size() {
        let rows = bvh_suite::<f32>(&[8], 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].triangles, 137);
        assert!(rows[1].primitive_tests < rows[0].primitive_tests);
    }

    #[test]
    fn ad_suite_counts_twenty_params_per_triangle() {
        let rows = ad_suite::<f64>(&[2], 8, 1, 3).unwrap();
        assert_eq!(rows[0].params, 40);
        assert!(rows[0].max_abs_diff.is_finite());
    }
}
