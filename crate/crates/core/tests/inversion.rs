use difftrace::inverse::{optimize, ClampRule, OptimConfig, Status};
use difftrace::prelude::*;
use difftrace::scene::builtin::tree_mesh;

fn tree(color: [f64; 3], intensity: f64) -> World<f32> {
    let mut scene = Scene::new();
    let m = scene.add_material("tree", Material::diffuse(Vec3::lit(color[0], color[1], color[2])));
    for t in tree_mesh(m) {
        scene.push(Primitive::Triangle(t));
    }
    let cam = Camera::new(Vec3::lit(-2.0, 2.0, -5.0), Vec3::lit(0.0, 1.7, 0.0), Vec3::lit(0.0, 1.0, 0.0), 45.0, 1.0, 24, 18).unwrap();
    let light = Light::point(Vec3::splat(1.0), intensity as f32, Vec3::lit(0.15, 0.5, -10.5));
    World::new(cam, vec![light], scene)
}

const COLOR: &str = "material[tree].color_diffuse";

fn clamped(max_iter: usize) -> OptimConfig {
    OptimConfig {
        max_iter,
        learning_rate: 0.05,
        loss: LossKind::Ssd,
        projection: vec![ClampRule {
            select: COLOR.into(),
            lo: 0.0,
            hi: 1.0,
        }],
        ..OptimConfig::default()
    }
}

fn setup(guess: [f64; 3]) -> (World<f32>, ParamVector<f32>, Image<f32>) {
    let truth = tree([0.3, 0.7, 0.2], 1e6);
    let target = render(&truth, Accel::Linear, 2).unwrap();
    let world = tree(guess, 1e6);
    let sel = Selection::parse(COLOR, &world).unwrap();
    let init = pack_params(&world, &sel).unwrap();
    (world, init, target)
}

#[test]
fn clamped_parameters_stay_in_their_box_every_iteration() {
    // A guess at the corner of the cube with a large step keeps pushing
    // against the bounds.
    let (world, init, target) = setup([1.0, 0.0, 1.0]);
    let cfg = OptimConfig {
        learning_rate: 0.4,
        ..clamped(40)
    };
    let mut seen = 0;
    optimize(&world, &init, &target, &cfg, |r| {
        seen += 1;
        assert!(r.params.values.iter().all(|v| (0.0..=1.0).contains(v)), "iteration {}: {:?}", r.iteration, r.params.values);
    })
    .unwrap();
    assert_eq!(seen, 40);
}

#[test]
fn identical_runs_have_identical_histories() {
    let (world, init, target) = setup([0.9, 0.2, 0.6]);
    let cfg = clamped(15);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let a = pool.install(|| optimize(&world, &init, &target, &cfg, |_| {}).unwrap());
    let b = pool.install(|| optimize(&world, &init, &target, &cfg, |_| {}).unwrap());
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
}

#[test]
fn starting_at_the_truth_converges_on_the_first_iteration() {
    let (world, init, target) = setup([0.3, 0.7, 0.2]);
    let cfg = OptimConfig {
        tolerance: 1e-9,
        ..clamped(50)
    };
    let out = optimize(&world, &init, &target, &cfg, |_| {}).unwrap();
    assert_eq!(out.status, Status::Converged);
    assert_eq!(out.iterations, 1);
    assert_eq!(out.final_loss, 0.0);
    assert_eq!(out.params, init);
}

#[test]
fn intensity_alone_recovers_within_one_percent() {
    let truth = tree([0.3, 0.7, 0.2], 1e6);
    let target = render(&truth, Accel::Linear, 2).unwrap();
    let world = tree([0.3, 0.7, 0.2], 4e5);
    let sel = Selection::parse("light[0].intensity", &world).unwrap();
    let init = pack_params(&world, &sel).unwrap();
    let cfg = OptimConfig {
        max_iter: 300,
        learning_rate: 2e4,
        ..OptimConfig::default()
    };
    let out = optimize(&world, &init, &target, &cfg, |_| {}).unwrap();
    let rel = (out.params.values[0] - 1e6).abs() / 1e6;
    assert!(rel < 0.01, "{:?}", out.params.values);
}

#[test]
fn overflowing_loss_reports_numerical_failure() {
    let (mut world, _, target) = setup([0.3, 0.7, 0.2]);
    world.lights[0] = Light::point(Vec3::splat(1.0), f32::MAX, Vec3::lit(0.15, 0.5, -10.5));
    let sel = Selection::parse(COLOR, &world).unwrap();
    let init = pack_params(&world, &sel).unwrap();
    let out = optimize(&world, &init, &target, &clamped(5), |_| {});
    match out {
        Ok(o) => assert_eq!(o.status, Status::NumericalFailure),
        Err(e) => panic!("expected a failure status, got error {e}"),
    }
}
