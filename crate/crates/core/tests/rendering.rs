use difftrace::bvh::Bvh;
use difftrace::prelude::*;
use difftrace::render::{hit_distance, linear_nearest, render_with_stats, TraceStats};
use difftrace::scene::builtin::{bench_world, gradcheck_world, random_primitives, random_rays};
use proptest::prelude::*;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn nearest_hit_is_the_minimum_over_all_primitives(seed in 0u64..1_000_000, n in 1usize..=20) {
        let prims = random_primitives::<f64>(seed, n);
        for ray in random_rays::<f64>(seed ^ 0xabcdef, 50) {
            let exhaustive = prims
                .iter()
                .enumerate()
                .filter_map(|(i, p)| hit_distance(&ray, p).map(|t| (i, t)))
                .fold(None, |best: Option<(usize, f64)>, (i, t)| match best {
                    Some((_, bt)) if bt <= t => best,
                    _ => Some((i, t)),
                });
            prop_assert_eq!(linear_nearest(&prims, &ray, &mut TraceStats::default()), exhaustive);
        }
    }

    #[test]
    fn bvh_agrees_with_linear_scan(seed in 0u64..1_000_000, n in 1usize..300) {
        let prims = random_primitives::<f32>(seed, n);
        let bvh = Bvh::build(&prims).unwrap();
        for ray in random_rays::<f32>(seed.wrapping_add(17), 200) {
            let a = linear_nearest(&prims, &ray, &mut TraceStats::default());
            let b = bvh.intersect(&prims, &ray, &mut TraceStats::default());
            match (a, b) {
                (Some((i, t)), Some((j, u))) => prop_assert!(i == j && (t - u).abs() <= 1e-6),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn depth_zero_drops_every_reflection(seed in 0u64..1_000_000) {
        let reflective = gradcheck_world::<f32>(seed);
        let mut matte = reflective.clone();
        for m in &mut matte.scene.materials {
            m.reflection = 0.0;
        }
        let a = render(&reflective, Accel::Linear, 0).unwrap();
        let b = render(&matte, Accel::Linear, 2).unwrap();
        prop_assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn primary_rays_are_unit(seed in 0u64..1_000_000) {
        let world = gradcheck_world::<f32>(seed);
        let basis = world.camera.basis().unwrap();
        for row in 0..world.camera.height {
            for col in 0..world.camera.width {
                prop_assert!((basis.direction(col, row).length() - 1.0).abs() <= 1e-5);
            }
        }
    }
}

#[test]
fn no_lights_means_black() {
    for seed in 0..10 {
        let mut world = gradcheck_world::<f32>(seed);
        world.lights.clear();
        for m in &mut world.scene.materials {
            m.color_ambient = Vec3::splat(0.5);
        }
        let img = render(&world, Accel::Linear, 3).unwrap();
        assert!(img.pixels.iter().all(|p| *p == Vec3::zero()), "seed {seed}");
    }
}

#[test]
fn thread_count_does_not_change_the_frame() {
    let world = bench_world::<f32>(64, 48);
    let bvh = Bvh::build(&world.scene.primitives).unwrap();
    let one = in_pool(1, || render(&world, Accel::Bvh(&bvh), 2).unwrap());
    let four = in_pool(4, || render(&world, Accel::Bvh(&bvh), 2).unwrap());
    assert!(one.max_abs_diff(&four).unwrap() <= 1e-6);
    assert_eq!(one.encode_ppm(), four.encode_ppm());
}

#[test]
fn bvh_tests_fewer_primitives_on_the_bench_mesh() {
    let world = bench_world::<f32>(128, 128);
    let bvh = Bvh::build(&world.scene.primitives).unwrap();
    let (a, lin) = render_with_stats(&world, Accel::Linear, 2).unwrap();
    let (b, acc) = render_with_stats(&world, Accel::Bvh(&bvh), 2).unwrap();
    assert_eq!(lin.rays, acc.rays);
    assert!(acc.primitive_tests < lin.primitive_tests / 10, "{acc:?} vs {lin:?}");
    assert!(a.max_abs_diff(&b).unwrap() <= 1e-5);
}

#[test]
fn bvh_leaves_partition_the_bench_mesh() {
    let world = bench_world::<f64>(4, 4);
    let bvh = Bvh::build(&world.scene.primitives).unwrap();
    let mut seen = vec![0; world.scene.primitives.len()];
    for leaf in bvh.leaves() {
        for &i in leaf {
            seen[i as usize] += 1;
        }
    }
    assert_eq!(seen.len(), 137);
    assert!(seen.iter().all(|&c| c == 1));
}
