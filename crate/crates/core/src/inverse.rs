//! Gradient-based recovery of scene parameters from a target image.
//!
//! Each iteration renders with the current parameters on an AD tape, reduces
//! the image to a loss, sweeps the tape backward, takes an optimizer step and
//! projects the result back into its boxes.
//!
//! Loss and gradient evaluation is split into fixed bands of rows, each with
//! its own tape. Bands run in parallel and their contributions are summed in
//! band order, so results do not depend on the thread count.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{Real, Scalar, Vec3};
use crate::render::{render, Accel, TraceContext, TraceLog};
use crate::scene::params::{lift, CameraField, LightField, MaterialField};
use crate::scene::{unpack_params, ParamTarget, ParamVector, Selection, World};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean over all pixel channels of the squared difference.
    #[default]
    Mse,
    /// Sum over all pixel channels of the squared difference.
    Ssd,
}

impl LossKind {
    fn scale(self, channels: usize) -> f64 {
        match self {
            LossKind::Mse => 1.0 / channels as f64,
            LossKind::Ssd => 1.0,
        }
    }
}

fn squared_error<S: Scalar>(pixels: &[Vec3<S>], target: &[Vec3<S::Real>]) -> S {
    let mut acc = S::zero();
    for (p, t) in pixels.iter().zip(target) {
        let d = *p - Vec3::from_real(*t);
        acc = acc + d.dot(d);
    }
    acc
}

pub fn ssd_loss<R: Real>(a: &Image<R>, b: &Image<R>) -> Result<R> {
    a.same_shape(b)?;
    Ok(squared_error(&a.pixels, &b.pixels))
}

pub fn mse_loss<R: Real>(a: &Image<R>, b: &Image<R>) -> Result<R> {
    Ok(ssd_loss(a, b)? * R::of(LossKind::Mse.scale(a.pixels.len() * 3)))
}

pub fn loss<R: Real>(kind: LossKind, a: &Image<R>, b: &Image<R>) -> Result<R> {
    match kind {
        LossKind::Mse => mse_loss(a, b),
        LossKind::Ssd => ssd_loss(a, b),
    }
}

/// A loss value, its gradient and where the time went.
#[derive(Clone, Debug)]
pub struct Evaluation<R> {
    pub loss: R,
    pub gradient: Vec<R>,
    /// Summed over bands: rendering on tapes.
    pub forward: Duration,
    /// Summed over bands: reverse sweeps.
    pub backward: Duration,
    pub wall: Duration,
    pub tape_nodes: usize,
}

/// Image-space loss of a world against a target as a function of the
/// selected parameters.
#[derive(Clone, Debug)]
pub struct Objective<'a, R: Real> {
    pub world: &'a World<R>,
    pub target: &'a Image<R>,
    pub loss: LossKind,
    pub depth: u32,
    pub use_bvh: bool,
    /// Rows per tape.
    pub tile_rows: usize,
}

pub const DEFAULT_TILE_ROWS: usize = 8;

impl<'a, R: Real> Objective<'a, R> {
    pub fn new(world: &'a World<R>, target: &'a Image<R>, loss: LossKind) -> Result<Self> {
        let cam = &world.camera;
        if (cam.width, cam.height) != (target.width, target.height) {
            return Err(Error::DimensionMismatch(format!(
                "camera renders {}x{} but target is {}x{}",
                cam.width, cam.height, target.width, target.height
            )));
        }
        Ok(Objective {
            world,
            target,
            loss,
            depth: 2,
            use_bvh: false,
            tile_rows: DEFAULT_TILE_ROWS,
        })
    }

    /// The world with `params` written into it.
    pub fn world_at(&self, params: &ParamVector<R>) -> Result<World<R>> {
        let mut w = self.world.clone();
        unpack_params(params, &mut w)?;
        w.validate()?;
        Ok(w)
    }

    pub fn render_at(&self, params: &ParamVector<R>) -> Result<Image<R>> {
        let w = self.world_at(params)?;
        let bvh = self.bvh_for(&w)?;
        render(&w, accel(&bvh), self.depth)
    }

    /// Loss without a tape.
    pub fn value(&self, params: &ParamVector<R>) -> Result<R> {
        loss(self.loss, &self.render_at(params)?, self.target)
    }

    fn bvh_for(&self, w: &World<R>) -> Result<Option<Bvh<R>>> {
        if self.use_bvh && !w.scene.primitives.is_empty() {
            Ok(Some(Bvh::build(&w.scene.primitives)?))
        } else {
            Ok(None)
        }
    }

    pub fn value_and_gradient(&self, params: &ParamVector<R>) -> Result<Evaluation<R>> {
        let start = Instant::now();
        let world = self.world_at(params)?;
        let bvh = self.bvh_for(&world)?;
        let accel = accel(&bvh);
        let (width, height) = (world.camera.width, world.camera.height);
        let tile = self.tile_rows.max(1);
        let bands: Vec<(usize, usize)> = (0..height).step_by(tile).map(|r| (r, (r + tile).min(height))).collect();

        let parts = bands
            .par_iter()
            .map(|&(r0, r1)| -> Result<Band<R>> {
                let t0 = Instant::now();
                let tape = Tape::with_capacity((r1 - r0) * width * 256);
                let (lifted, vars) = lift(&world, &tape, params)?;
                let basis = lifted.camera.basis()?;
                let ctx = TraceContext {
                    world: &lifted,
                    values: &world.scene.primitives,
                    accel,
                };
                let pixels = ctx.trace_rows(&basis, r0..r1, self.depth, &mut TraceLog::default());
                let part = squared_error(&pixels, &self.target.pixels[r0 * width..r1 * width]);
                if let Some((node, op)) = tape.first_nan() {
                    return Err(Error::NanInForward { node, op });
                }
                let forward = t0.elapsed();
                let t1 = Instant::now();
                let adj = tape.backward(part);
                let gradient = vars.iter().map(|&v| adj.wrt(v)).collect();
                Ok(Band {
                    loss: part.value(),
                    gradient,
                    forward,
                    backward: t1.elapsed(),
                    nodes: tape.len(),
                })
            })
            .collect::<Vec<_>>();

        let scale = R::of(self.loss.scale(width * height * 3));
        let mut eval = Evaluation {
            loss: R::of(0.0),
            gradient: vec![R::of(0.0); params.len()],
            forward: Duration::ZERO,
            backward: Duration::ZERO,
            wall: Duration::ZERO,
            tape_nodes: 0,
        };
        for part in parts {
            let part = part?;
            eval.loss += part.loss;
            for (g, p) in eval.gradient.iter_mut().zip(&part.gradient) {
                *g += *p;
            }
            eval.forward += part.forward;
            eval.backward += part.backward;
            eval.tape_nodes += part.nodes;
        }
        eval.loss = eval.loss * scale;
        for g in &mut eval.gradient {
            *g = *g * scale;
        }
        eval.wall = start.elapsed();
        Ok(eval)
    }
}

struct Band<R> {
    loss: R,
    gradient: Vec<R>,
    forward: Duration,
    backward: Duration,
    nodes: usize,
}

fn accel<R: Real>(bvh: &Option<Bvh<R>>) -> Accel<'_, R> {
    match bvh {
        Some(b) => Accel::Bvh(b),
        None => Accel::Linear,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Box constraint on every slot matched by `select`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClampRule {
    pub select: String,
    pub lo: f64,
    pub hi: f64,
}

/// Learning rate override for every slot matched by `select`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub select: String,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub max_iter: usize,
    /// Converged once the loss drops below this.
    pub tolerance: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: LossKind,
    pub projection: Vec<ClampRule>,
    pub group_learning_rates: Vec<GroupRate>,
    /// Observer snapshot period in iterations; 0 disables.
    pub snapshot_every: usize,
    pub depth: u32,
    pub use_bvh: bool,
    pub tile_rows: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iter: 100,
            tolerance: 0.0,
            learning_rate: 0.1,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss: LossKind::Mse,
            projection: Vec::new(),
            group_learning_rates: Vec::new(),
            snapshot_every: 0,
            depth: 2,
            use_bvh: false,
            tile_rows: DEFAULT_TILE_ROWS,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.max_iter < 1 {
            return bad("max_iter must be >= 1".into());
        }
        if !(self.tolerance >= 0.0) {
            return bad(format!("tolerance {} must be >= 0", self.tolerance));
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("adam needs 0 <= beta < 1 and epsilon > 0".into());
        }
        for r in &self.projection {
            if !(r.lo <= r.hi) {
                return bad(format!("clamp `{}` has lo {} > hi {}", r.select, r.lo, r.hi));
            }
        }
        for g in &self.group_learning_rates {
            if !(g.learning_rate > 0.0) {
                return bad(format!("learning rate for `{}` must be > 0", g.select));
            }
        }
        Ok(())
    }
}

/// Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<R> {
    pub m: Vec<R>,
    pub v: Vec<R>,
    pub t: u32,
}

impl<R: Real> AdamState<R> {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![R::of(0.0); n],
            v: vec![R::of(0.0); n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place, with a per-parameter learning
/// rate.
pub fn adam_step<R: Real>(state: &mut AdamState<R>, params: &mut [R], grads: &[R], lr: &[R], beta1: f64, beta2: f64, eps: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let (b1, b2) = (R::of(beta1), R::of(beta2));
    let one = R::of(1.0);
    let c1 = R::of(1.0 - beta1.powi(state.t as i32));
    let c2 = R::of(1.0 - beta2.powi(state.t as i32));
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (one - b1) * g;
        state.v[i] = b2 * state.v[i] + (one - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] = params[i] - lr[i] * m_hat / (num_traits::Float::sqrt(v_hat) + R::of(eps));
    }
}

pub fn sgd_step<R: Real>(params: &mut [R], grads: &[R], lr: &[R]) {
    for i in 0..params.len() {
        params[i] = params[i] - lr[i] * grads[i];
    }
}

/// Per-slot boxes aligned with a parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection<R> {
    pub bounds: Vec<Option<(R, R)>>,
}

impl<R: Real> Projection<R> {
    /// Resolves `rules` against `world` and intersects them with the domain
    /// every slot must stay in for the scene to remain valid.
    pub fn resolve<S: Scalar<Real = R>>(rules: &[ClampRule], world: &World<S>, layout: &[ParamTarget]) -> Result<Self> {
        let mut bounds: Vec<Option<(f64, f64)>> = layout.iter().map(|t| domain(*t)).collect();
        for rule in rules {
            if !(rule.lo <= rule.hi) {
                return Err(Error::InvalidConfig(format!("clamp `{}` has lo > hi", rule.select)));
            }
            let sel = Selection::parse(&rule.select, world)?;
            for (i, t) in layout.iter().enumerate() {
                if sel.targets.contains(t) {
                    let (lo, hi) = bounds[i].unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                    bounds[i] = Some((lo.max(rule.lo), hi.min(rule.hi)));
                }
            }
        }
        Ok(Projection {
            bounds: bounds.into_iter().map(|b| b.map(|(lo, hi)| (R::of(lo), R::of(hi)))).collect(),
        })
    }

    pub fn apply(&self, values: &mut [R]) {
        for (v, b) in values.iter_mut().zip(&self.bounds) {
            if let Some((lo, hi)) = *b {
                *v = num_traits::Float::min(num_traits::Float::max(*v, lo), hi);
            }
        }
    }

    pub fn contains(&self, values: &[R]) -> bool {
        values
            .iter()
            .zip(&self.bounds)
            .all(|(v, b)| b.is_none_or(|(lo, hi)| lo <= *v && *v <= hi))
    }
}

/// Clamps `params` into `[lo, hi]` for every slot in `targets`.
pub fn project<R: Real>(params: &mut ParamVector<R>, targets: &[ParamTarget], lo: R, hi: R) {
    for (v, t) in params.values.iter_mut().zip(&params.layout) {
        if targets.contains(t) {
            *v = num_traits::Float::min(num_traits::Float::max(*v, lo), hi);
        }
    }
}

fn domain(t: ParamTarget) -> Option<(f64, f64)> {
    const TINY: f64 = 1e-6;
    match t {
        ParamTarget::Camera(CameraField::Focus) => Some((TINY, f64::INFINITY)),
        ParamTarget::Camera(CameraField::Vfov) => Some((TINY, 180.0 - TINY)),
        ParamTarget::Light {
            field: LightField::Intensity,
            ..
        } => Some((0.0, f64::INFINITY)),
        ParamTarget::Material {
            field: MaterialField::Reflection,
            ..
        } => Some((0.0, 1.0)),
        ParamTarget::Material {
            field: MaterialField::Exponent,
            ..
        } => Some((0.0, f64::INFINITY)),
        ParamTarget::SphereRadius { .. } => Some((TINY, f64::INFINITY)),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    NumericalFailure,
}

/// What the observer sees after each completed iteration.
pub struct IterationReport<'a, R> {
    /// 1-based.
    pub iteration: usize,
    /// Loss at the parameters the step started from.
    pub loss: R,
    pub gradient: &'a [R],
    /// Parameters after the step and projection.
    pub params: &'a ParamVector<R>,
    pub evaluation: &'a Evaluation<R>,
    pub elapsed: Duration,
    /// True every `snapshot_every` iterations.
    pub snapshot: bool,
}

#[derive(Clone, Debug)]
pub struct Outcome<R> {
    /// Last parameters with a finite loss.
    pub params: ParamVector<R>,
    /// One loss per completed iteration.
    pub history: Vec<R>,
    pub wall_ms: Vec<f64>,
    pub iterations: usize,
    pub status: Status,
    /// Loss at `params`.
    pub final_loss: R,
    pub message: Option<String>,
}

impl<R> Outcome<R> {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Per-slot learning rates: the global rate unless a group override matches.
pub fn learning_rates<S: Scalar>(cfg: &OptimConfig, world: &World<S>, layout: &[ParamTarget]) -> Result<Vec<S::Real>> {
    let mut lr = vec![cfg.learning_rate; layout.len()];
    for g in &cfg.group_learning_rates {
        let sel = Selection::parse(&g.select, world)?;
        for (i, t) in layout.iter().enumerate() {
            if sel.targets.contains(t) {
                lr[i] = g.learning_rate;
            }
        }
    }
    Ok(lr.into_iter().map(S::Real::of).collect())
}

/// Runs the optimization loop from `init` until the loss drops below the
/// tolerance or `max_iter` iterations complete.
pub fn optimize<R: Real>(
    world: &World<R>,
    init: &ParamVector<R>,
    target: &Image<R>,
    cfg: &OptimConfig,
    mut observer: impl FnMut(&IterationReport<'_, R>),
) -> Result<Outcome<R>> {
    cfg.validate()?;
    let mut objective = Objective::new(world, target, cfg.loss)?;
    objective.depth = cfg.depth;
    objective.use_bvh = cfg.use_bvh;
    objective.tile_rows = cfg.tile_rows;
    let projection = Projection::resolve(&cfg.projection, world, &init.layout)?;
    let lr = learning_rates(cfg, world, &init.layout)?;
    let mut adam = AdamState::new(init.len());

    let start = Instant::now();
    let mut params = init.clone();
    let mut last_good = init.clone();
    let mut history = Vec::new();
    let mut wall_ms = Vec::new();
    let mut status = Status::MaxIterations;
    let mut message = None;

    for iteration in 1..=cfg.max_iter {
        let eval = match objective.value_and_gradient(&params) {
            Ok(e) => e,
            Err(e @ Error::NanInForward { .. }) => {
                status = Status::NumericalFailure;
                message = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        if !eval.loss.is_finite() {
            status = Status::NumericalFailure;
            message = Some(format!("loss is {} at iteration {iteration}", eval.loss));
            break;
        }
        if let Some(i) = eval.gradient.iter().position(|g| !g.is_finite()) {
            status = Status::NumericalFailure;
            message = Some(Error::NanGradient(params.layout[i].to_string()).to_string());
            break;
        }
        last_good = params.clone();
        history.push(eval.loss);
        wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if eval.loss < R::of(cfg.tolerance) {
            status = Status::Converged;
            let report = IterationReport {
                iteration,
                loss: eval.loss,
                gradient: &eval.gradient,
                params: &params,
                evaluation: &eval,
                elapsed: start.elapsed(),
                snapshot: cfg.snapshot_every > 0,
            };
            observer(&report);
            break;
        }
        match cfg.optimizer {
            OptimizerKind::Adam => adam_step(&mut adam, &mut params.values, &eval.gradient, &lr, cfg.beta1, cfg.beta2, cfg.epsilon),
            OptimizerKind::Sgd => sgd_step(&mut params.values, &eval.gradient, &lr),
        }
        projection.apply(&mut params.values);
        let report = IterationReport {
            iteration,
            loss: eval.loss,
            gradient: &eval.gradient,
            params: &params,
            evaluation: &eval,
            elapsed: start.elapsed(),
            snapshot: cfg.snapshot_every > 0 && iteration % cfg.snapshot_every == 0,
        };
        observer(&report);
    }

    if status == Status::MaxIterations {
        match objective.value(&params) {
            Ok(l) if l.is_finite() => last_good = params.clone(),
            _ => {
                status = Status::NumericalFailure;
                message = Some("final parameters produce a non-finite loss".into());
            }
        }
    }
    let final_loss = objective.value(&last_good)?;
    Ok(Outcome {
        iterations: history.len(),
        params: last_good,
        history,
        wall_ms,
        status,
        final_loss,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, c: f64) -> Image<f64> {
        Image::filled(w, h, Vec3::splat(c))
    }

    #[test]
    fn loss_examples() {
        let ones = img(2, 2, 1.0);
        assert_eq!(mse_loss(&ones, &ones).unwrap(), 0.0);
        assert_eq!(mse_loss(&ones, &img(2, 2, 0.0)).unwrap(), 1.0);
        let a = Image::new(1, 1, vec![Vec3::new(0.5, 0.0, 0.0)]).unwrap();
        assert!((mse_loss(&a, &img(1, 1, 0.0)).unwrap() - 0.25 / 3.0).abs() < 1e-15);
        assert_eq!(ssd_loss(&img(2, 1, 1.0), &img(2, 1, 0.0)).unwrap(), 6.0);
        assert!(mse_loss(&ones, &img(1, 2, 0.0)).is_err());
        assert!(ssd_loss(&ones, &img(1, 2, 0.0)).is_err());
    }

    #[test]
    fn ssd_is_mse_times_channels() {
        let a = Image::new(3, 1, vec![Vec3::new(0.1, 0.7, 0.3), Vec3::new(0.9, 0.2, 0.4), Vec3::splat(0.5)]).unwrap();
        let b = img(3, 1, 0.25);
        let (s, m) = (ssd_loss(&a, &b).unwrap(), mse_loss(&a, &b).unwrap());
        assert!((s - m * 9.0).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        for g in [3.0, -0.02, 1e4] {
            let mut st = AdamState::new(1);
            let mut p = [1.0];
            adam_step(&mut st, &mut p, &[g], &[0.1], 0.9, 0.999, 1e-8);
            assert!(((1.0 - p[0]).abs() - 0.1).abs() < 1e-6, "{g}: {}", p[0]);
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut st = AdamState::new(2);
        let mut p = [1.5, -2.0];
        for _ in 0..10 {
            adam_step(&mut st, &mut p, &[0.0, 0.0], &[0.1, 0.1], 0.9, 0.999, 1e-8);
        }
        assert_eq!(p, [1.5, -2.0]);
        assert!(st.v.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn adam_minimizes_a_parabola() {
        let mut st = AdamState::new(1);
        let mut p = [0.0f64];
        for _ in 0..500 {
            let g = 2.0 * (p[0] - 5.0);
            adam_step(&mut st, &mut p, &[g], &[0.1], 0.9, 0.999, 1e-8);
        }
        assert!((p[0] - 5.0).abs() < 0.01, "{}", p[0]);
    }

    #[test]
    fn config_validation() {
        assert!(OptimConfig::default().validate().is_ok());
        let bad = [
            OptimConfig { max_iter: 0, ..Default::default() },
            OptimConfig { tolerance: -1.0, ..Default::default() },
            OptimConfig { learning_rate: 0.0, ..Default::default() },
            OptimConfig {
                projection: vec![ClampRule { select: "materials".into(), lo: 1.0, hi: 0.0 }],
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        let parsed: OptimConfig = serde_json::from_str(r#"{"max_iter": 3, "loss": "ssd", "optimizer": "sgd"}"#).unwrap();
        assert_eq!((parsed.max_iter, parsed.loss, parsed.optimizer), (3, LossKind::Ssd, OptimizerKind::Sgd));
        assert!(serde_json::from_str::<OptimConfig>(r#"{"max_itr": 3}"#).is_err());
    }
}
