use lr_towers::delone::{classify, generate, DeloneWindow, GeneratorSpec};
use lr_towers::towers::{
    build_tower, mat_mul, matrix_diagnostics, verify_zoom, TileShape, TowerError, TowerParams,
    TowerSystem,
};
use std::sync::OnceLock;

fn fib(extent: f64) -> DeloneWindow {
    generate(&GeneratorSpec::fibonacci(), extent).unwrap()
}

fn small_tower() -> &'static (DeloneWindow, TowerSystem) {
    static T: OnceLock<(DeloneWindow, TowerSystem)> = OnceLock::new();
    T.get_or_init(|| {
        let x = fib(8000.0);
        let t = build_tower(&x, &TowerParams::new(3.0, 5.0, 3, 2.6)).unwrap();
        (x, t)
    })
}

/// Level-`n` class-`i` trusted punctures inside the deepest valid region.
fn representatives(t: &TowerSystem, n: usize) -> Vec<(usize, usize)> {
    let region = t.deepest_valid_region();
    let lv = &t.levels[n];
    (0..lv.t())
        .filter_map(|i| {
            lv.trusted_in(&region)
                .find(|(_, p)| p.class == Some(i))
                .map(|(k, _)| (i, k))
        })
        .collect()
}

#[test]
fn integer_lattice_has_one_unit_tile_per_level() {
    let x = generate(&GeneratorSpec::lattice(1), 200.0).unwrap();
    let mut p = TowerParams::new(1.0, 3.0, 2, 1.5);
    assert!(matches!(
        build_tower(&x, &p),
        Err(TowerError::PeriodicInput)
    ));
    p.allow_periodic = true;
    let t = build_tower(&x, &p).unwrap();
    assert_eq!(t.levels.len(), 3);
    for lv in &t.levels {
        assert_eq!(lv.t(), 1);
        let g = &lv.geometry[0];
        assert!((g.measure - 1.0).abs() < 1e-12);
        assert!((g.bbox.min.x + 0.5).abs() < 1e-9 && (g.bbox.max.x - 0.5).abs() < 1e-9);
    }
    for m in &t.matrices {
        assert_eq!(m.entries, vec![vec![1]]);
    }
}

#[test]
fn base_classes_match_all_pairs_classification() {
    let (x, t) = small_tower();
    let lv = &t.levels[0];
    let region = x.patch_region(lv.k_n);
    let patches: Vec<_> = lv
        .punctures
        .iter()
        .filter(|p| p.trusted && region.contains(p.position))
        .map(|p| x.patch_at(p.position, lv.k_n).unwrap())
        .collect();
    let oracle = classify(&patches).unwrap();
    assert_eq!(oracle.classes.len(), lv.t());
    // Same partition: class ids agree up to a bijection.
    let mut map = vec![None; lv.t()];
    let tagged = lv
        .punctures
        .iter()
        .filter(|p| p.trusted && region.contains(p.position));
    for (p, &o) in tagged.zip(&oracle.ids) {
        let c = p.class.unwrap();
        assert_eq!(*map[c].get_or_insert(o), o);
    }
}

#[test]
fn zooms_verify_on_fibonacci() {
    let (_, t) = small_tower();
    assert_eq!(t.levels.len(), 4);
    for n in 1..t.levels.len() {
        let r = verify_zoom(&t.levels[n - 1], &t.levels[n], t.matrix(n));
        assert!(r.all_pass(), "level {n}: {:?}", r.failures);
    }
}

#[test]
fn tile_measures_satisfy_volume_recursion() {
    let (_, t) = small_tower();
    for n in 1..t.levels.len() {
        let m = t.matrix(n);
        for (i, g) in t.levels[n].geometry.iter().enumerate() {
            let union_len: f64 = g.pieces.iter().map(|c| c.hi() - c.lo()).sum();
            let rec: f64 = m.entries[i]
                .iter()
                .zip(&t.levels[n - 1].geometry)
                .map(|(&k, h)| k as f64 * h.measure)
                .sum();
            assert!((union_len - rec).abs() / rec < 1e-9, "level {n} class {i}");
        }
    }
}

#[test]
fn matrices_equal_puncture_in_tile_recount() {
    let (_, t) = small_tower();
    for n in 1..t.levels.len() {
        let (prev, lv) = (&t.levels[n - 1], &t.levels[n]);
        for (i, k) in representatives(t, n) {
            let anchor = lv.punctures[k].position;
            let g = &lv.geometry[i];
            let mut row = vec![0u64; prev.t()];
            for q in &prev.punctures {
                let rel = q.position - anchor;
                if g.pieces.iter().any(|c| c.lo() < rel.x && rel.x < c.hi()) {
                    row[q.class.unwrap()] += 1;
                }
            }
            assert_eq!(row, t.matrix(n).entries[i], "level {n} class {i}");
        }
    }
}

#[test]
fn products_count_descendants() {
    let (_, t) = small_tower();
    let top = t.levels.len() - 1;
    for m in 0..top {
        let mut p = t.matrix(top).entries.clone();
        for k in (m + 1..top).rev() {
            p = mat_mul(&p, &t.matrix(k).entries);
        }
        for (i, k) in representatives(t, top) {
            let mut frontier = vec![k];
            for lvl in (m + 1..=top).rev() {
                frontier = frontier
                    .iter()
                    .flat_map(|&f| {
                        t.levels[lvl].punctures[f]
                            .children
                            .iter()
                            .map(|&c| c as usize)
                    })
                    .collect();
            }
            let mut row = vec![0u64; t.levels[m].t()];
            for f in &frontier {
                row[t.levels[m].punctures[*f].class.unwrap()] += 1;
                assert_eq!(t.ancestor(m, *f, top), Some(k));
            }
            assert_eq!(row, p[i], "P({top},{m}) row {i}");
        }
    }
}

#[test]
fn deleting_a_tile_breaks_coverage() {
    let (_, t) = small_tower();
    let mut next = t.levels[2].clone();
    let region = next.valid_region;
    let k = next.trusted_in(&region).map(|(k, _)| k).nth(1).unwrap();
    next.punctures.remove(k);
    let r = verify_zoom(&t.levels[1], &next, t.matrix(2));
    assert!(!r.z4);
    assert!(!r.all_pass());
}

#[test]
fn perturbed_shape_breaks_consistency() {
    let (_, t) = small_tower();
    let mut next = t.levels[1].clone();
    if let TileShape::Union { placements } = &mut next.shapes[0] {
        placements[0].offset.x += 0.25;
    }
    let r = verify_zoom(&t.levels[0], &next, t.matrix(1));
    assert!(!r.z1);
}

#[test]
fn json_round_trip() {
    let (_, t) = small_tower();
    let back = TowerSystem::from_json(&t.to_json()).unwrap();
    assert_eq!(&back, t);
    assert_eq!(back.to_json(), t.to_json());
}

#[test]
fn parents_and_children_agree() {
    let (_, t) = small_tower();
    for n in 1..t.levels.len() {
        for (i, p) in t.levels[n].punctures.iter().enumerate() {
            for &c in &p.children {
                assert_eq!(t.levels[n - 1].punctures[c as usize].parent, Some(i as u32));
            }
        }
    }
}

#[test]
fn diagnostics_flag_shallow_towers() {
    let (_, t) = small_tower();
    let mut shallow = t.clone();
    shallow.levels.truncate(1);
    shallow.matrices.clear();
    let rep = matrix_diagnostics(&shallow);
    assert!(rep.note.is_some());
    let full = matrix_diagnostics(t);
    assert!(full.note.is_none());
    assert!(full.levels.iter().all(|l| l.row_sum_ok));
}

#[test]
fn window_exhaustion_reports_deepest_level() {
    let x = fib(2000.0);
    match build_tower(&x, &TowerParams::new(3.0, 8.0, 6, 2.6)) {
        Err(TowerError::WindowExhausted { deepest }) => assert!((1..6).contains(&deepest)),
        other => panic!(
            "expected exhaustion, got {:?}",
            other.map(|t| t.levels.len())
        ),
    }
}

#[test]
fn product_tower_builds_and_verifies() {
    let f = GeneratorSpec::fibonacci();
    let x = generate(&GeneratorSpec::product(f.clone(), f), 150.0).unwrap();
    let t = build_tower(&x, &TowerParams::new(2.0, 8.0, 1, 2.6)).unwrap();
    let r = verify_zoom(&t.levels[0], &t.levels[1], t.matrix(1));
    assert!(r.all_pass(), "{:?}", r.failures);
    for (i, g) in t.levels[1].geometry.iter().enumerate() {
        let pieces: f64 = g.pieces.iter().map(|c| c.measure()).sum();
        let rec: f64 = t.matrix(1).entries[i]
            .iter()
            .zip(&t.levels[0].geometry)
            .map(|(&k, h)| k as f64 * h.measure)
            .sum();
        assert!((pieces - rec).abs() / rec < 1e-9);
    }
}
