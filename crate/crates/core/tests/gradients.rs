use difftrace::autodiff::{finite_difference_gradient, GradConfig, Tape};
use difftrace::gradcheck::{gradcheck, GradcheckConfig};
use difftrace::inverse::Objective;
use difftrace::math::Vec3;
use difftrace::prelude::*;
use difftrace::scene::builtin::gradcheck_world;
use proptest::prelude::*;

fn selection_for(world: &World<f64>) -> Selection {
    let kind = if world.scene.triangles().next().is_some() { "triangles" } else { "spheres" };
    Selection::parse(&format!("materials,lights,camera,{kind}"), world).unwrap()
}

fn black<R: Real>(w: &World<R>) -> Image<R> {
    Image::filled(w.camera.width, w.camera.height, Vec3::zero())
}

#[test]
fn parameters_on_a_domain_edge_are_differenced_inward() {
    let mut world = gradcheck_world::<f64>(17);
    for m in &mut world.scene.materials {
        m.reflection = 0.0;
    }
    let sel = Selection::parse("materials", &world).unwrap();
    let cfg = GradcheckConfig { rtol: 1e-4, ..GradcheckConfig::default() };
    let report = gradcheck(&world, &sel, &black(&world), &cfg).unwrap();
    let edge: Vec<_> = report.rows.iter().filter(|r| r.one_sided).collect();
    assert_eq!(edge.len(), world.scene.materials.len());
    assert!(edge.iter().all(|r| r.path.ends_with(".reflection") && (r.boundary || r.pass)), "{edge:?}");
    assert!(report.passed());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn reverse_mode_matches_central_differences_in_f64(seed in 1000u64..100_000) {
        let world = gradcheck_world::<f64>(seed);
        let cfg = GradcheckConfig { rtol: 1e-4, ..GradcheckConfig::default() };
        let report = gradcheck(&world, &selection_for(&world), &black(&world), &cfg).unwrap();
        let bad: Vec<_> = report.rows.iter().filter(|r| !r.boundary && !r.pass).map(|r| &r.path).collect();
        prop_assert!(bad.is_empty(), "seed {seed}: {bad:?}");
    }

    #[test]
    fn vec3_ops_agree_on_the_tape(a in prop::array::uniform3(-10.0f64..10.0), b in prop::array::uniform3(-10.0f64..10.0)) {
        let (pa, pb) = (Vec3::from_array(a), Vec3::from_array(b));
        prop_assume!(pa.length() > 1e-3 && pb.length() > 1e-3);
        let tape = Tape::new();
        let va = Vec3::from_array(a.map(|x| tape.var(x)));
        let vb = Vec3::from_array(b.map(|x| tape.var(x)));
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-6 * x.abs().max(1.0);
        prop_assert!(close(pa.dot(pb), va.dot(vb).value()));
        for (x, y) in pa.cross(pb).to_array().iter().zip(va.cross(vb).value().to_array()) {
            prop_assert!(close(*x, y));
        }
        for (x, y) in pa.normalize().to_array().iter().zip(va.normalize().value().to_array()) {
            prop_assert!(close(*x, y));
        }
        prop_assert!(close(pa.length(), va.length().value()));
    }
}

#[test]
fn bvh_and_linear_gradients_are_identical() {
    for seed in 0..6 {
        let world = gradcheck_world::<f32>(seed);
        let sel = Selection::parse("materials,lights,camera", &world).unwrap();
        let params = pack_params(&world, &sel).unwrap();
        let target = black(&world);
        let mut obj = Objective::new(&world, &target, LossKind::Mse).unwrap();
        let linear = obj.value_and_gradient(&params).unwrap();
        obj.use_bvh = true;
        let bvh = obj.value_and_gradient(&params).unwrap();
        assert_eq!(linear.loss, bvh.loss);
        assert_eq!(linear.gradient, bvh.gradient);
    }
}

#[test]
fn gradients_do_not_depend_on_thread_count() {
    let world = gradcheck_world::<f32>(3);
    let sel = Selection::parse("materials,lights,camera", &world).unwrap();
    let params = pack_params(&world, &sel).unwrap();
    let target = black(&world);
    let mut obj = Objective::new(&world, &target, LossKind::Mse).unwrap();
    obj.tile_rows = 2;
    let eval = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| obj.value_and_gradient(&params).unwrap())
    };
    let (a, b) = (eval(1), eval(4));
    assert_eq!(a.loss, b.loss);
    assert_eq!(a.gradient, b.gradient);
}

#[test]
fn band_height_only_reorders_sums() {
    let world = gradcheck_world::<f64>(11);
    let sel = Selection::parse("materials,lights,camera", &world).unwrap();
    let params = pack_params(&world, &sel).unwrap();
    let target = black(&world);
    let mut obj = Objective::new(&world, &target, LossKind::Mse).unwrap();
    obj.tile_rows = 1;
    let a = obj.value_and_gradient(&params).unwrap();
    obj.tile_rows = world.camera.height;
    let b = obj.value_and_gradient(&params).unwrap();
    assert!((a.loss - b.loss).abs() <= 1e-12 * a.loss.abs().max(1.0));
    for (x, y) in a.gradient.iter().zip(&b.gradient) {
        assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn repeated_evaluation_is_bit_identical() {
    let world = gradcheck_world::<f32>(5);
    let sel = Selection::parse("materials,lights,camera", &world).unwrap();
    let params = pack_params(&world, &sel).unwrap();
    let target = black(&world);
    let obj = Objective::new(&world, &target, LossKind::Ssd).unwrap();
    let (a, b) = (obj.value_and_gradient(&params).unwrap(), obj.value_and_gradient(&params).unwrap());
    assert_eq!(a.gradient, b.gradient);
    assert_eq!(a.tape_nodes, b.tape_nodes);
}

#[test]
fn radius_derivative_is_positive_inside_the_silhouette() {
    let mut scene = Scene::new();
    let m = scene.add_material("m", Material::default());
    scene.push(Primitive::Sphere(Sphere::new(Vec3::zero(), 1.0f64, m).unwrap()));
    let cam = Camera::new(Vec3::new(0.0, 0.0, -5.0), Vec3::zero(), Vec3::new(0.0, 1.0, 0.0), 40.0, 1.0, 16, 16).unwrap();
    let light = Light::point(Vec3::splat(1.0), 2000.0, Vec3::new(0.0, 0.0, -5.0));
    let world = World::new(cam, vec![light], scene);
    let sel = Selection::parse("sphere[0].radius", &world).unwrap();
    let params = pack_params(&world, &sel).unwrap();
    // Brightness over the centre pixels; a larger sphere brings the surface
    // nearer the light and camera.
    let brightness = |w: &World<f64>| -> f64 {
        let img = render(w, Accel::Linear, 0).unwrap();
        (7..9).flat_map(|r| (7..9).map(move |c| (r, c))).map(|(r, c)| img.get(c, r).x).sum()
    };
    let target = Image::filled(16, 16, Vec3::splat(0.0));
    let obj = Objective::new(&world, &target, LossKind::Ssd).unwrap();
    let g = obj.value_and_gradient(&params).unwrap().gradient[0];
    let fd = finite_difference_gradient(
        |x: &[f64]| brightness(&obj.world_at(&params.with_values(x.to_vec())).unwrap()),
        &params.values,
        GradConfig::new(1e-5).unwrap(),
    )[0];
    assert!(fd > 0.0, "{fd}");
    assert!(g > 0.0, "{g}");
}
