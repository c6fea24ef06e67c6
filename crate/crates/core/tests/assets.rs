use std::path::Path;

use difftrace::scene::builtin::tree_obj;
use difftrace::scene::obj::{load_obj, parse_obj, write_obj};

fn asset(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(name)
}

/// Triangle count implied by the face lines, counted without the loader.
fn fan_triangles(text: &str) -> usize {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix("f "))
        .map(|rest| rest.split_whitespace().count().saturating_sub(2))
        .sum()
}

#[test]
fn bundled_tree_matches_the_generator() {
    let on_disk = std::fs::read_to_string(asset("tree.obj")).unwrap();
    assert_eq!(on_disk, tree_obj());
}

#[test]
fn tree_triangle_count_matches_an_independent_scan() {
    let text = std::fs::read_to_string(asset("tree.obj")).unwrap();
    let mesh = load_obj::<f64>(asset("tree.obj"), 0).unwrap();
    assert_eq!(mesh.triangles.len(), fan_triangles(&text));
    assert_eq!(mesh.report.degenerate_dropped, 0);
    assert!((40..=60).contains(&mesh.triangles.len()));
}

#[test]
fn polygon_soup_recount() {
    let mut text = String::from("# grid of quads and pentagons\n");
    let n = 12;
    for j in 0..=n {
        for i in 0..=n {
            text += &format!("v {} {} {}\n", i as f64 * 0.5, j as f64 * 0.5, ((i * j) % 5) as f64 * 0.1);
        }
    }
    text += "vn 0 0 1\nvt 0 0\ng body\ns 1\nusemtl nothing\n";
    for j in 0..n {
        for i in 0..n {
            let k = |a: usize, b: usize| b * (n + 1) + a + 1;
            text += &format!("f {}/1/1 {}/1/1 {}/1/1 {}/1/1\n", k(i, j), k(i + 1, j), k(i + 1, j + 1), k(i, j + 1));
        }
    }
    let mesh = parse_obj::<f64>(&text, "grid", 0).unwrap();
    assert_eq!(mesh.triangles.len(), fan_triangles(&text));
    assert_eq!(mesh.triangles.len(), 2 * n * n);

    let again = parse_obj::<f64>(&write_obj(&mesh.triangles), "again", 0).unwrap();
    let verts = |m: &[difftrace::scene::Triangle<f64>]| m.iter().map(|t| t.vertices).collect::<Vec<_>>();
    assert_eq!(verts(&again.triangles), verts(&mesh.triangles));
}
