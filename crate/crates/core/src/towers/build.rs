use super::bounds::record_ledger;
use super::shape::{same_placements, sort_placements};
use super::{
    LevelStats, Placement, Puncture, SourceInfo, TileGeometry, TileShape, TowerError, TowerLevel,
    TowerParams, TowerSystem, TransitionMatrix, TOWER_SCHEMA_VERSION,
};
use crate::delone::{canonical_form, DeloneWindow, PatternClassId};
use crate::geometry::{radii, star_assign_partial, voronoi_cells, Aabb, ConvexCell, Point};
use rayon::prelude::*;

/// The return set of the origin's `s`-patch inside the window.
#[derive(Clone, Debug)]
pub struct Cylinder {
    pub s: f64,
    /// Indices into the window's points.
    pub indices: Vec<usize>,
    pub positions: Vec<Point>,
    /// Packing radius `r(C)`.
    pub r: f64,
    /// Covering radius `R(C)`.
    pub big_r: f64,
    /// Centres whose `s`-ball fits in the window.
    pub region: Aabb,
}

pub fn cylinder(x: &DeloneWindow, s: f64) -> Result<Cylinder, TowerError> {
    let region = x.patch_region(s);
    if region.is_empty() || !region.contains(Point::ORIGIN) {
        return Err(TowerError::WindowTooSmall(format!(
            "no room for radius-{s} patches"
        )));
    }
    let rep = x.patch_at(Point::ORIGIN, s)?;
    let indices = x.occurrence_indices(&rep, &region)?;
    let positions: Vec<Point> = indices.iter().map(|&i| x.points[i]).collect();
    if positions.len() < 3 {
        return Err(TowerError::WindowTooSmall(format!(
            "the origin's radius-{s} patch occurs {} times",
            positions.len()
        )));
    }
    let rr = radii(&positions, &region)?;
    Ok(Cylinder {
        s,
        indices,
        positions,
        r: rr.packing_r,
        big_r: rr.covering_r,
        region,
    })
}

/// `k`-patch classes of the cylinder's points, with the origin's class first.
fn classify_cylinder(
    x: &DeloneWindow,
    cyl: &Cylinder,
    k: f64,
) -> Result<(Vec<Option<usize>>, Vec<PatternClassId>), TowerError> {
    let region = x.patch_region(k);
    if !region.contains(Point::ORIGIN) {
        return Err(TowerError::WindowTooSmall(format!(
            "no room for radius-{k} patches"
        )));
    }
    let inside: Vec<usize> = (0..cyl.indices.len())
        .filter(|&p| region.contains(cyl.positions[p]))
        .collect();
    let idx: Vec<usize> = inside.iter().map(|&p| cyl.indices[p]).collect();
    let (ids, reps) = x.classify_indices(&idx, k)?;
    let origin_pos = idx
        .iter()
        .position(|&i| i == x.origin_index())
        .ok_or_else(|| TowerError::WindowTooSmall("origin is not classified".into()))?;
    let co = ids[origin_pos];
    let relabel = |c: usize| -> usize {
        if c == co {
            0
        } else if c < co {
            c + 1
        } else {
            c
        }
    };
    let mut classes: Vec<PatternClassId> = reps
        .iter()
        .enumerate()
        .map(|(c, p)| PatternClassId {
            id: relabel(c),
            canonical_form: canonical_form(&p.relative_points, x.eps),
        })
        .collect();
    classes.sort_by_key(|c| c.id);
    let mut out = vec![None; cyl.positions.len()];
    for (&p, &c) in inside.iter().zip(&ids) {
        out[p] = Some(relabel(c));
    }
    Ok((out, classes))
}

/// Drop classes without a trusted puncture and renumber (keeping class 0 first).
fn compact_classes(
    punctures: &mut [Puncture],
    classes: Vec<PatternClassId>,
    reps: Vec<Option<(usize, TileShape)>>,
) -> (Vec<PatternClassId>, Vec<TileShape>) {
    let mut map = vec![None; classes.len()];
    let mut kept = Vec::new();
    let mut shapes = Vec::new();
    for (c, (mut cls, rep)) in classes.into_iter().zip(reps).enumerate() {
        if let Some((_, shape)) = rep {
            map[c] = Some(kept.len());
            cls.id = kept.len();
            kept.push(cls);
            shapes.push(shape);
        }
    }
    for p in punctures.iter_mut() {
        p.class = p.class.and_then(|c| map[c]);
        if p.class.is_none() {
            p.trusted = false;
        }
    }
    (kept, shapes)
}

fn stats_of(geometry: &[TileGeometry], k: f64) -> LevelStats {
    LevelStats {
        r_int: geometry
            .iter()
            .map(|g| g.r_inner)
            .fold(f64::INFINITY, f64::min),
        r_ext: geometry.iter().map(|g| g.r_outer).fold(0.0, f64::max),
        rec: k,
    }
}

/// Window shrunk so that no untrusted or unseen tile reaches inside.
fn valid_region(
    x: &DeloneWindow,
    punctures: &[Puncture],
    s: f64,
    k: f64,
    r_ext: f64,
    reach: f64,
    floor: f64,
) -> (Aabb, f64) {
    let deepest_untrusted = punctures
        .iter()
        .filter(|p| !p.trusted)
        .map(|p| x.window.boundary_distance(p.position))
        .fold(0.0, f64::max);
    let margin = (k + r_ext)
        .max(s + reach)
        .max(deepest_untrusted + reach)
        .max(floor)
        + x.eps;
    (x.window.shrink(margin), margin)
}

fn check_level_nonempty(level: &TowerLevel) -> Result<(), TowerError> {
    let region = level.valid_region;
    if region.is_empty() || level.trusted_in(&region).next().is_none() {
        return Err(TowerError::EmptyLevel(level.n));
    }
    Ok(())
}

/// Level-0 box decomposition: Voronoi tiles of the return set of the origin's
/// `s0`-patch, one box per `k0`-patch class.
pub fn base_decomposition(x: &DeloneWindow, s0: f64, k0: f64) -> Result<TowerLevel, TowerError> {
    let cyl = cylinder(x, s0)?;
    base_from_cylinder(x, &cyl, k0).map(|(l, _)| l)
}

fn base_from_cylinder(
    x: &DeloneWindow,
    cyl: &Cylinder,
    k0: f64,
) -> Result<(TowerLevel, f64), TowerError> {
    let (cls, classes) = classify_cylinder(x, cyl, k0)?;
    let vd = voronoi_cells(&cyl.positions, &cyl.region)?;
    let tol = 3.0 * x.eps;
    let mut punctures: Vec<Puncture> = cyl
        .positions
        .iter()
        .zip(&cls)
        .zip(&vd.exact)
        .map(|((&p, &c), &ok)| Puncture {
            position: p,
            class: c,
            trusted: c.is_some() && ok,
            children: Vec::new(),
            parent: None,
        })
        .collect();
    let mut reps: Vec<Option<(usize, TileShape)>> = vec![None; classes.len()];
    for (i, p) in punctures.iter().enumerate() {
        if !p.trusted {
            continue;
        }
        let c = p.class.expect("trusted punctures are classified");
        let local = vd.cells[i].translate(-p.position);
        match &reps[c] {
            None => reps[c] = Some((i, TileShape::Cell { cell: local })),
            Some((_, TileShape::Cell { cell })) => {
                if !same_cell(cell, &local, tol) {
                    return Err(TowerError::CongruenceFailure {
                        level: 0,
                        class: c,
                        at: p.position,
                    });
                }
            }
            Some(_) => unreachable!(),
        }
    }
    let (classes, shapes) = compact_classes(&mut punctures, classes, reps);
    let geometry: Vec<TileGeometry> = shapes
        .iter()
        .map(|s| match s {
            TileShape::Cell { cell } => TileGeometry::from_cell(cell),
            TileShape::Union { .. } => unreachable!(),
        })
        .collect();
    let stats = stats_of(&geometry, k0);
    let (valid, margin) = valid_region(x, &punctures, cyl.s, k0, stats.r_ext, cyl.big_r, 0.0);
    let level = TowerLevel {
        n: 0,
        s_n: cyl.s,
        k_n: k0,
        r_c: cyl.r,
        big_r_c: cyl.big_r,
        classes,
        shapes,
        geometry,
        punctures,
        valid_region: valid,
        complete_region: cyl.region,
        stats,
        dim: x.dim,
    };
    check_level_nonempty(&level)?;
    Ok((level, margin))
}

fn same_cell(a: &ConvexCell, b: &ConvexCell, tol: f64) -> bool {
    a.vertices.len() == b.vertices.len()
        && a.vertices
            .iter()
            .all(|v| b.vertices.iter().any(|w| v.approx_eq(*w, tol)))
}

/// Zoom out of `prev`: Voronoi tiles of the return set of the origin's
/// `s_next`-patch, each replaced by the union of the previous tiles whose
/// punctures lie in its star set.
pub fn zoom_level(
    x: &DeloneWindow,
    prev: &TowerLevel,
    s_next: f64,
    k_next: f64,
) -> Result<(TowerLevel, TransitionMatrix), TowerError> {
    let cyl = cylinder(x, s_next)?;
    zoom_from_cylinder(x, prev, &cyl, k_next, 0.0).map(|(l, m, _)| (l, m))
}

fn zoom_from_cylinder(
    x: &DeloneWindow,
    prev: &TowerLevel,
    cyl: &Cylinder,
    k_next: f64,
    margin_floor: f64,
) -> Result<(TowerLevel, TransitionMatrix, f64), TowerError> {
    let n = prev.n + 1;
    let (cls, classes) = classify_cylinder(x, cyl, k_next)?;
    let vd = voronoi_cells(&cyl.positions, &cyl.region)?;
    let prev_pos: Vec<Point> = prev.punctures.iter().map(|p| p.position).collect();
    let owner = star_assign_partial(&vd.cells, &prev_pos, x.eps)?;
    let mut children: Vec<Vec<u32>> = vec![Vec::new(); cyl.positions.len()];
    for (c, o) in owner.iter().enumerate() {
        if let Some(o) = o {
            children[*o].push(c as u32);
        }
    }
    let complete = prev.complete_region.shrink(x.eps);
    let mut punctures: Vec<Puncture> = (0..cyl.positions.len())
        .map(|i| {
            let kids = std::mem::take(&mut children[i]);
            let trusted = cls[i].is_some()
                && vd.exact[i]
                && complete.contains_box(&vd.cells[i].bbox())
                && !kids.is_empty()
                && kids.iter().all(|&c| prev.punctures[c as usize].trusted);
            Puncture {
                position: cyl.positions[i],
                class: cls[i],
                trusted,
                children: kids,
                parent: None,
            }
        })
        .collect();
    let tol = 3.0 * x.eps;
    let local: Vec<Option<Vec<Placement>>> = punctures
        .par_iter()
        .map(|p| {
            p.trusted.then(|| {
                let mut pl: Vec<Placement> = p
                    .children
                    .iter()
                    .map(|&c| {
                        let q = &prev.punctures[c as usize];
                        Placement {
                            offset: q.position - p.position,
                            class: q.class.expect("trusted child"),
                        }
                    })
                    .collect();
                sort_placements(&mut pl);
                pl
            })
        })
        .collect();
    let mut reps: Vec<Option<(usize, TileShape)>> = vec![None; classes.len()];
    for (i, pl) in local.into_iter().enumerate() {
        let Some(pl) = pl else { continue };
        let c = punctures[i].class.expect("trusted");
        match &reps[c] {
            None => reps[c] = Some((i, TileShape::Union { placements: pl })),
            Some((_, shape)) => {
                if !same_placements(shape.placements(), &pl, tol) {
                    return Err(TowerError::CongruenceFailure {
                        level: n,
                        class: c,
                        at: punctures[i].position,
                    });
                }
            }
        }
    }
    let (classes, shapes) = compact_classes(&mut punctures, classes, reps);
    let geometry: Vec<TileGeometry> = shapes
        .par_iter()
        .map(|s| TileGeometry::from_placements(s.placements(), &prev.geometry, x.dim, x.eps))
        .collect();
    let stats = stats_of(&geometry, k_next);
    let reach = stats.r_ext.max(cyl.big_r + prev.stats.r_ext);
    let (valid, margin) = valid_region(
        x,
        &punctures,
        cyl.s,
        k_next,
        stats.r_ext,
        reach,
        margin_floor,
    );
    let matrix = TransitionMatrix::from_shapes(n, &shapes, prev.t());
    let level = TowerLevel {
        n,
        s_n: cyl.s,
        k_n: k_next,
        r_c: cyl.r,
        big_r_c: cyl.big_r,
        classes,
        shapes,
        geometry,
        punctures,
        valid_region: valid,
        complete_region: cyl.region,
        stats,
        dim: x.dim,
    };
    check_level_nonempty(&level)?;
    Ok((level, matrix, margin))
}

/// Levels `0..=n_max` with `s_n = K^n s0` and `k_n = 2 R(C_n) + s_n`.
pub fn build_tower(x: &DeloneWindow, params: &TowerParams) -> Result<TowerSystem, TowerError> {
    params.validate()?;
    if x.periodic && !params.allow_periodic {
        return Err(TowerError::PeriodicInput);
    }
    let exhausted = |deepest: usize| {
        move |e: TowerError| match e {
            TowerError::WindowTooSmall(_) | TowerError::EmptyLevel(_) => {
                TowerError::WindowExhausted { deepest }
            }
            other => other,
        }
    };
    let cyl0 = cylinder(x, params.s0)?;
    let k0 = 2.0 * cyl0.big_r + params.s0;
    let (base, mut margin) = base_from_cylinder(x, &cyl0, k0)?;
    let mut levels = vec![base];
    let mut matrices = Vec::new();
    for n in 1..=params.n_max {
        let s = params.s(n);
        let deepest = n - 1;
        let cyl = cylinder(x, s).map_err(exhausted(deepest))?;
        let k = 2.0 * cyl.big_r + s;
        let prev = levels.last().expect("base level");
        let (level, m, mg) =
            zoom_from_cylinder(x, prev, &cyl, k, margin).map_err(exhausted(deepest))?;
        margin = mg;
        for (i, p) in level.punctures.iter().enumerate() {
            for &c in &p.children {
                levels[n - 1].punctures[c as usize].parent = Some(i as u32);
            }
        }
        levels.push(level);
        matrices.push(m);
    }
    let mut tower = TowerSystem {
        schema_version: TOWER_SCHEMA_VERSION,
        params: params.clone(),
        levels,
        matrices,
        ledger: Vec::new(),
        source: SourceInfo {
            generator: x.generator.clone(),
            window: x.window,
            point_count: x.len(),
            eps: x.eps,
        },
    };
    record_ledger(x, &mut tower)?;
    Ok(tower)
}
