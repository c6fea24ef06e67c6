//! Self-consistency inverse-rendering setups.
//!
//! Each experiment renders a target from known parameters, starts the
//! optimizer from a perturbed copy of the world and reports how close the
//! recovered parameters land.

use std::time::Instant;

use difftrace::inverse::{optimize, ClampRule, GroupRate, IterationReport, LossKind, Objective, OptimConfig, Outcome};
use difftrace::prelude::*;
use difftrace::scene::builtin::tree_mesh;

pub struct Experiment<R> {
    pub name: &'static str,
    pub truth: World<R>,
    pub guess: World<R>,
    pub selection: &'static str,
    pub config: OptimConfig,
    /// Convergence threshold as a fraction of the initial loss; overrides
    /// `config.tolerance` when set.
    pub tolerance_ratio: Option<f64>,
}

pub struct Run<R> {
    pub outcome: Outcome<R>,
    pub initial_loss: f64,
    pub truth: ParamVector<R>,
    pub init: ParamVector<R>,
    pub config: OptimConfig,
    pub seconds: f64,
}

impl<R: Real> Run<R> {
    /// Largest absolute error over the slots whose path starts with `prefix`.
    pub fn max_error(&self, prefix: &str) -> f64 {
        self.outcome
            .params
            .layout
            .iter()
            .enumerate()
            .filter(|(_, t)| t.to_string().starts_with(prefix))
            .map(|(i, _)| (self.outcome.params.values[i] - self.truth.values[i]).as_f64().abs())
            .fold(0.0, f64::max)
    }

    pub fn value(&self, path: &str) -> Option<f64> {
        let i = self.outcome.params.layout.iter().position(|t| t.to_string() == path)?;
        Some(self.outcome.params.values[i].as_f64())
    }

    pub fn truth_value(&self, path: &str) -> Option<f64> {
        let i = self.truth.layout.iter().position(|t| t.to_string() == path)?;
        Some(self.truth.values[i].as_f64())
    }

    pub fn loss_ratio(&self) -> f64 {
        self.outcome.final_loss.as_f64() / self.initial_loss
    }
}

impl<R: Real> Experiment<R> {
    pub fn target(&self) -> Result<Image<R>> {
        render(&self.truth, Accel::Linear, self.config.depth)
    }

    pub fn run(&self, observer: impl FnMut(&IterationReport<'_, R>)) -> Result<Run<R>> {
        let start = Instant::now();
        let target = self.target()?;
        let selection = Selection::parse(self.selection, &self.guess)?;
        let init = pack_params(&self.guess, &selection)?;
        let truth = pack_params(&self.truth, &selection)?;
        let mut objective = Objective::new(&self.guess, &target, self.config.loss)?;
        objective.depth = self.config.depth;
        let initial_loss = objective.value(&init)?.as_f64();
        let mut config = self.config.clone();
        if let Some(r) = self.tolerance_ratio {
            config.tolerance = r * initial_loss;
        }
        let outcome = optimize(&self.guess, &init, &target, &config, observer)?;
        Ok(Run {
            outcome,
            initial_loss,
            truth,
            init,
            config,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

fn rectangle_world<R: Real>(lookfrom: [f64; 3], focus: f64) -> World<R> {
    let mut scene = Scene::new();
    let green = scene.add_material("green", Material::diffuse(Vec3::lit(0.0, 1.0, 0.0)));
    let tri = |a: [f64; 3], b: [f64; 3], c: [f64; 3]| {
        let v = |p: [f64; 3]| Vec3::lit(p[0], p[1], p[2]);
        Primitive::Triangle(Triangle::new(v(a), v(b), v(c), green).expect("rectangle half"))
    };
    scene.push(tri([20.0, 10.0, 0.0], [20.0, -10.0, 0.0], [-20.0, 10.0, 0.0]));
    scene.push(tri([-20.0, -10.0, 0.0], [20.0, -10.0, 0.0], [-20.0, 10.0, 0.0]));
    let cam = Camera::new(
        Vec3::lit(lookfrom[0], lookfrom[1], lookfrom[2]),
        Vec3::zero(),
        Vec3::lit(0.0, 1.0, 0.0),
        R::of(90.0),
        R::of(focus),
        100,
        75,
    )
    .expect("valid camera");
    let light = Light::point(Vec3::lit(1.0, 0.0, 0.0), R::of(1e5), Vec3::lit(0.0, 0.0, -10.0));
    World::new(cam, vec![light], scene)
}

/// Camera position and focus from a green rectangle lit in red.
pub fn camera<R: Real>() -> Experiment<R> {
    Experiment {
        name: "camera",
        truth: rectangle_world([0.0, 0.0, -30.0], 1.0),
        guess: rectangle_world([5.0, -4.0, -20.0], 3.0),
        selection: "camera.lookfrom,camera.focus",
        config: OptimConfig {
            max_iter: 500,
            learning_rate: 0.1,
            loss: LossKind::Mse,
            ..OptimConfig::default()
        },
        tolerance_ratio: Some(100.0 / 5705.98),
    }
}

fn lit_tree<R: Real>(intensity: f64, position: [f64; 3]) -> World<R> {
    let mut scene = Scene::new();
    let m = scene.add_material("tree", Material::default());
    for t in tree_mesh(m) {
        scene.push(Primitive::Triangle(t));
    }
    let cam = Camera::new(Vec3::lit(0.0, 6.0, -10.0), Vec3::lit(0.0, 2.0, 0.0), Vec3::lit(0.0, 1.0, 0.0), R::of(45.0), R::of(0.5), 64, 64)
        .expect("valid camera");
    let light = Light::point(Vec3::splat(R::of(1.0)), R::of(intensity), Vec3::lit(position[0], position[1], position[2]));
    World::new(cam, vec![light], scene)
}

/// Point light intensity and position over the bundled tree.
pub fn light<R: Real>() -> Experiment<R> {
    Experiment {
        name: "light",
        truth: lit_tree(20000.0, [1.0, 10.0, -50.0]),
        guess: lit_tree(1.0, [-1.0, -10.0, -50.0]),
        selection: "light[0].intensity,light[0].position",
        config: OptimConfig {
            max_iter: 300,
            learning_rate: 5.0,
            loss: LossKind::Mse,
            group_learning_rates: vec![GroupRate {
                select: "light[0].intensity".into(),
                learning_rate: 3000.0,
            }],
            ..OptimConfig::default()
        },
        tolerance_ratio: None,
    }
}

fn colored_tree<R: Real>(color: [f64; 3]) -> World<R> {
    let mut scene = Scene::new();
    let m = scene.add_material("tree", Material::diffuse(Vec3::lit(color[0], color[1], color[2])));
    for t in tree_mesh(m) {
        scene.push(Primitive::Triangle(t));
    }
    let cam = Camera::new(Vec3::lit(-2.0, 2.0, -5.0), Vec3::lit(0.0, 1.7, 0.0), Vec3::lit(0.0, 1.0, 0.0), R::of(45.0), R::of(1.0), 100, 75)
        .expect("valid camera");
    let light = Light::point(Vec3::splat(R::of(1.0)), R::of(1e6), Vec3::lit(0.15, 0.5, -10.5));
    World::new(cam, vec![light], scene)
}

pub const MATERIAL_TRUTH: [f64; 3] = [0.3, 0.7, 0.2];
pub const MATERIAL_GUESS: [f64; 3] = [0.9, 0.2, 0.6];

/// Diffuse color of the tree, clamped to the unit cube every step.
pub fn material<R: Real>() -> Experiment<R> {
    material_from(MATERIAL_GUESS)
}

pub fn material_from<R: Real>(guess: [f64; 3]) -> Experiment<R> {
    let select = "material[tree].color_diffuse";
    Experiment {
        name: "material",
        truth: colored_tree(MATERIAL_TRUTH),
        guess: colored_tree(guess),
        selection: select,
        config: OptimConfig {
            max_iter: 35,
            learning_rate: 0.05,
            loss: LossKind::Ssd,
            projection: vec![ClampRule {
                select: select.into(),
                lo: 0.0,
                hi: 1.0,
            }],
            ..OptimConfig::default()
        },
        tolerance_ratio: None,
    }
}

pub fn by_name<R: Real>(name: &str) -> Option<Experiment<R>> {
    match name {
        "camera" => Some(camera()),
        "light" => Some(light()),
        "material" => Some(material()),
        _ => None,
    }
}
