//! Reverse-mode gradients checked against central differences.
//!
//! A parameter whose ±δ perturbation changes which primitive a pixel sees, or
//! which side of a lighting branch it falls on, has no meaningful finite
//! difference at that step size. Such parameters are flagged as boundary and
//! excluded from the verdict. A parameter within δ of its domain edge (a
//! reflection of 0, say) is differenced on the inside only.

use serde::Serialize;

use crate::autodiff::GradConfig;
use crate::bvh::Bvh;
use crate::error::Result;
use crate::image::Image;
use crate::inverse::{LossKind, Objective, Projection};
use crate::math::Real;
use crate::render::{trace_signatures, Accel};
use crate::scene::{pack_params, Selection, World};

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckRow {
    pub path: String,
    pub value: f64,
    pub ad: f64,
    pub fd: f64,
    pub abs_err: f64,
    /// `abs_err / max(1, |fd|)`.
    pub rel_err: f64,
    pub boundary: bool,
    /// Differenced on one side because the other left the domain.
    pub one_sided: bool,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub rows: Vec<GradcheckRow>,
    pub loss: f64,
}

impl GradcheckReport {
    /// True when every non-boundary parameter is within tolerance.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.boundary || r.pass)
    }

    pub fn checked(&self) -> usize {
        self.rows.iter().filter(|r| !r.boundary).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,value,ad,fd,abs_err,rel_err,boundary,one_sided,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{},{},{}\n",
                r.path, r.value, r.ad, r.fd, r.abs_err, r.rel_err, r.boundary, r.one_sided, r.pass
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckConfig<R> {
    pub delta: R,
    /// Pass iff `|ad − fd| ≤ rtol · max(1, |fd|)`.
    pub rtol: f64,
    pub loss: LossKind,
    pub depth: u32,
    /// Added to the reverse-mode partial of the named parameter; only for
    /// exercising the failure path.
    pub corrupt: Option<(String, f64)>,
}

impl<R: Real> Default for GradcheckConfig<R> {
    fn default() -> Self {
        GradcheckConfig {
            delta: R::of(R::DEFAULT_FD_DELTA),
            rtol: 1e-2,
            loss: LossKind::Mse,
            depth: 2,
            corrupt: None,
        }
    }
}

fn signatures<R: Real>(world: &World<R>, depth: u32) -> Result<Vec<u64>> {
    let bvh = if world.scene.primitives.is_empty() { None } else { Some(Bvh::build(&world.scene.primitives)?) };
    let accel = bvh.as_ref().map_or(Accel::Linear, Accel::Bvh);
    trace_signatures(world, accel, depth)
}

pub fn gradcheck<R: Real>(
    world: &World<R>,
    selection: &Selection,
    target: &Image<R>,
    cfg: &GradcheckConfig<R>,
) -> Result<GradcheckReport> {
    GradConfig::new(cfg.delta)?;
    let mut objective = Objective::new(world, target, cfg.loss)?;
    objective.depth = cfg.depth;
    let params = pack_params(world, selection)?;
    let eval = objective.value_and_gradient(&params)?;
    let mut ad = eval.gradient.clone();
    if let Some((path, bump)) = &cfg.corrupt {
        if let Some(i) = params.layout.iter().position(|t| t.to_string() == *path) {
            ad[i] += R::of(*bump);
        }
    }

    let domain = Projection::resolve(&[], world, &params.layout)?;
    let base = signatures(world, cfg.depth)?;
    let mut rows = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let mut boundary = false;
        let mut samples = Vec::with_capacity(2);
        for sign in [1.0, -1.0] {
            let mut x = params.values.clone();
            x[i] += cfg.delta * R::of(sign);
            if !domain.contains(&x) {
                continue;
            }
            let p = params.with_values(x);
            boundary |= signatures(&objective.world_at(&p)?, cfg.depth)? != base;
            samples.push((R::of(sign), objective.value(&p)?));
        }
        let one_sided = samples.len() < 2;
        let fd = match samples[..] {
            [(_, hi), (_, lo)] => (hi - lo) / (cfg.delta + cfg.delta),
            [(sign, v)] => sign * (v - eval.loss) / cfg.delta,
            _ => R::nan(),
        };
        let (a, f) = (ad[i].as_f64(), fd.as_f64());
        let abs_err = (a - f).abs();
        let rel_err = abs_err / f.abs().max(1.0);
        rows.push(GradcheckRow {
            path: params.layout[i].to_string(),
            value: params.values[i].as_f64(),
            ad: a,
            fd: f,
            abs_err,
            rel_err,
            boundary,
            one_sided,
            pass: rel_err <= cfg.rtol,
        });
    }
    Ok(GradcheckReport {
        rows,
        loss: eval.loss.as_f64(),
    })
}
