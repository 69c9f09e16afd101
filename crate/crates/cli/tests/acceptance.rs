//! Acceptance criteria, one test each. Every test prints a single verdict line.

use lr_towers::delone::{generate, repetitivity_profile, DeloneWindow, GeneratorSpec};
use lr_towers::deviation::{
    compute_n0, deviation_identity_check, deviation_sweep, estimate_frequency, patch_count,
    OccurrenceSet,
};
use lr_towers::geometry::{Aabb, Dim};
use lr_towers::markov::{
    address_check, lebesgue_sample, mixing_analysis, q_matrix, transverse_measures,
    TransverseMeasures,
};
use lr_towers::towers::{build_tower, verify_zoom, TowerParams, TowerSystem};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

const S0: f64 = 3.0;
const EXTENT: f64 = 700_000.0;
const SAMPLES: usize = 100_000;

fn verdict(n: u32, title: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {n} ({title}): {} | {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

struct Built {
    x: DeloneWindow,
    t: TowerSystem,
    elapsed: Duration,
}

fn build(extent: f64, params: TowerParams) -> Built {
    let start = Instant::now();
    let x = generate(&GeneratorSpec::fibonacci(), extent).unwrap();
    let t = build_tower(&x, &params).unwrap();
    Built {
        x,
        t,
        elapsed: start.elapsed(),
    }
}

/// Four levels with every ledger hypothesis confirmed.
fn main_tower() -> &'static Built {
    static T: OnceLock<Built> = OnceLock::new();
    T.get_or_init(|| build(EXTENT, TowerParams::new(S0, 20.0, 3, 2.6)))
}

/// Smaller scale factor: more tiles per class in the common region.
fn desk_tower() -> &'static (Built, TransverseMeasures) {
    static T: OnceLock<(Built, TransverseMeasures)> = OnceLock::new();
    T.get_or_init(|| {
        let b = build(EXTENT, TowerParams::new(S0, 6.0, 3, 2.6));
        let mu = transverse_measures(&b.t).unwrap();
        (b, mu)
    })
}

fn area_counts(t: &TowerSystem, n: usize) -> Vec<f64> {
    t.levels[n]
        .class_counts(&t.deepest_valid_region())
        .iter()
        .map(|&c| c as f64)
        .collect()
}

#[test]
fn criterion_1_tower_construction() {
    let b = main_tower();
    let t = &b.t;
    let zooms: Vec<bool> = (1..t.levels.len())
        .map(|n| verify_zoom(&t.levels[n - 1], &t.levels[n], &t.matrices[n - 1]).all_pass())
        .collect();
    let pass = b.x.len() >= 1_000_000
        && t.levels.len() == 4
        && zooms.iter().all(|&z| z)
        && b.elapsed < Duration::from_secs(300);
    verdict(
        1,
        "tower construction",
        pass,
        &format!(
            "{} points, K = {}, {} levels, zooms {:?}, {:.1?}",
            b.x.len(),
            t.params.k,
            t.levels.len(),
            zooms,
            b.elapsed
        ),
    );
}

#[test]
fn criterion_2_volume_recursion() {
    let t = &main_tower().t;
    let union_length = |n: usize, i: usize| -> f64 {
        t.levels[n].geometry[i]
            .pieces
            .iter()
            .map(|c| c.hi() - c.lo())
            .sum()
    };
    let mut worst = 0.0f64;
    for n in 1..t.levels.len() {
        for (i, row) in t.matrices[n - 1].entries.iter().enumerate() {
            let lhs = union_length(n, i);
            let rhs: f64 = row
                .iter()
                .enumerate()
                .map(|(j, &m)| m as f64 * union_length(n - 1, j))
                .sum();
            worst = worst.max((lhs - rhs).abs() / lhs);
        }
    }
    verdict(
        2,
        "volume recursion",
        worst < 1e-9,
        &format!("max relative residual {worst:.3e}"),
    );
}

#[test]
fn criterion_3_matrix_properties() {
    let t = &main_tower().t;
    let hyp: Vec<Option<bool>> = t.ledger_for("positivity_hyp").map(|e| e.holds).collect();
    let confirmed = !hyp.is_empty() && hyp.iter().all(|&h| h == Some(true));
    let positive = t
        .matrices
        .iter()
        .all(|m| m.entries.iter().flatten().all(|&v| v >= 1));
    let d = t.dim().d() as i32;
    let mut rows = Vec::new();
    for n in 1..t.levels.len() {
        let row_max: u64 = t.matrices[n - 1]
            .entries
            .iter()
            .map(|r| r.iter().sum::<u64>())
            .max()
            .unwrap();
        let bound = (t.levels[n].stats.r_ext / t.levels[n - 1].stats.r_int)
            .powi(d)
            .floor() as u64;
        rows.push((row_max, bound));
    }
    let bounded = rows.iter().all(|(r, b)| r <= b);
    verdict(
        3,
        "matrix positivity and row sums",
        confirmed && positive && bounded,
        &format!("hypothesis {hyp:?}, all entries >= 1: {positive}, (row max, bound) {rows:?}"),
    );
}

#[test]
fn criterion_4_geometry_bounds() {
    let x = generate(&GeneratorSpec::fibonacci(), 1_500_000.0).unwrap();
    let l = repetitivity_profile(&x, &[S0, 2.0 * S0, 4.0 * S0, 8.0 * S0])
        .unwrap()
        .l_hat;
    let k = 6.0 * l * (l + 1.0) * (l + 1.0);
    let k1 = 1.0 / (2.0 * (l + 1.0)) - l / (k - 1.0);
    let k2 = l * k / (k - 1.0);
    let mut p = TowerParams::new(S0, k, 2, l);
    p.enforce_theorem_k = true;
    let t = build_tower(&x, &p).unwrap();
    let mut pass = k1 > 0.0 && t.levels.len() == 3;
    let mut rows = Vec::new();
    for lv in &t.levels {
        let st = &lv.stats;
        let ok = k1 * lv.s_n <= st.r_int
            && st.r_int <= st.r_ext
            && st.r_ext <= k2 * lv.s_n
            && st.rec <= (2.0 * l + 1.0) * lv.s_n;
        pass &= ok;
        rows.push(format!(
            "n={}: {:.2} <= {:.2} <= {:.2} <= {:.2}, rec {:.1} <= {:.1}",
            lv.n,
            k1 * lv.s_n,
            st.r_int,
            st.r_ext,
            k2 * lv.s_n,
            st.rec,
            (2.0 * l + 1.0) * lv.s_n
        ));
    }
    verdict(
        4,
        "geometry bounds",
        pass,
        &format!(
            "L_hat {l:.4}, K {k:.3}, K1 {k1:.4}, K2 {k2:.4}; {}",
            rows.join("; ")
        ),
    );
}

#[test]
fn criterion_5_markov_chain() {
    let (b, mu) = desk_tower();
    let t = &b.t;
    let levels = t.levels.len();
    let mut worst_row = 0.0f64;
    let mut contraction = Vec::new();
    let norm_1 = |n: usize| -> u64 {
        let m = &t.matrices[n - 1].entries;
        (0..m[0].len())
            .map(|j| m.iter().map(|r| r[j]).sum::<u64>())
            .max()
            .unwrap()
    };
    let mut contraction_ok = true;
    for n in 1..levels {
        let (prev, cur) = (area_counts(t, n - 1), area_counts(t, n));
        let m = &t.matrices[n - 1].entries;
        let raw: Vec<f64> = (0..prev.len())
            .map(|j| (0..cur.len()).map(|i| m[i][j] as f64 * cur[i]).sum::<f64>() / prev[j])
            .collect();
        let q = q_matrix(t, mu, n).unwrap();
        for (j, r) in raw.iter().enumerate() {
            worst_row = worst_row.max((r - 1.0).abs());
            assert!((r - q.raw_row_sums[j]).abs() < 1e-12);
        }
        let min_q = (0..prev.len())
            .flat_map(|j| (0..cur.len()).map(move |i| (i, j)))
            .map(|(i, j)| m[i][j] as f64 * cur[i] / prev[j] / raw[j])
            .fold(f64::INFINITY, f64::min);
        let c_q = 1.0 - min_q;
        if n + 1 < levels {
            let bound = 1.0 - 1.0 / (norm_1(n) * norm_1(n + 1)) as f64;
            contraction_ok &= c_q <= bound + 1e-12;
            contraction.push(format!("c(Q_{n}) {c_q:.4} <= {bound:.4}"));
        } else {
            contraction.push(format!("c(Q_{n}) {c_q:.4} (no M_{})", n + 1));
        }
    }
    let c_t = 1.0
        - 1.0
            / (1..levels - 1)
                .map(|n| norm_1(n) * norm_1(n + 1))
                .max()
                .unwrap() as f64;
    let mix = mixing_analysis(t, mu).unwrap();
    assert!((mix.c_t - c_t).abs() < 1e-15);
    let sample = lebesgue_sample(t, &mu.region, SAMPLES, 2024).unwrap();
    let total = sample.len() as f64;
    let mut speed_ok = true;
    let mut pairs = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for m in 0..levels - 1 {
        for n in m + 1..(m + 4).min(levels) {
            pairs += 1;
            let (tm, tn) = (t.levels[m].t(), t.levels[n].t());
            let mut joint = vec![vec![0f64; tn]; tm];
            let mut row = vec![0f64; tm];
            let mut col = vec![0f64; tn];
            for c in &sample.colors {
                joint[c[m] as usize][c[n] as usize] += 1.0;
                row[c[m] as usize] += 1.0;
                col[c[n] as usize] += 1.0;
            }
            let bound = c_t.powi((n - m) as i32);
            for j in 0..tm {
                for i in 0..tn {
                    let marg = col[i] / total;
                    let sigma = (marg * (1.0 - marg) * (1.0 / row[j] + 1.0 / total)).sqrt();
                    let gap = (joint[j][i] / row[j] - marg).abs();
                    worst_excess = worst_excess.max(gap - bound - 3.0 * sigma);
                    speed_ok &= gap <= bound + 3.0 * sigma;
                }
            }
        }
    }
    let rows_ok = worst_row <= 1e-3;
    verdict(
        5,
        "Markov chain",
        rows_ok && contraction_ok && speed_ok && pairs == 6,
        &format!(
            "{} points, K = {}, max |row sum - 1| {worst_row:.2e}; {}; c_T {c_t:.4}; speed pairs {pairs}, worst excess {worst_excess:.3}",
            b.x.len(),
            t.params.k,
            contraction.join(", ")
        ),
    );
}

#[test]
fn criterion_6_nested_addresses() {
    let (b, mu) = desk_tower();
    let t = &b.t;
    let region = t.deepest_valid_region();
    let sample = lebesgue_sample(t, &region, SAMPLES, 77).unwrap();
    let total = sample.len() as f64;
    let checks = address_check(t, mu, &sample, 10, 78);
    let mut ok = checks.len() == 10 && sample.rejected == 0;
    let mut worst = 0.0f64;
    for c in &checks {
        let nu_n = area_counts(t, c.n)[c.address[c.n - c.m]] / region.volume();
        let prod: f64 = (c.m..c.n)
            .map(|k| t.matrices[k].entries[c.address[k + 1 - c.m]][c.address[k - c.m]] as f64)
            .product();
        let predicted = prod * t.levels[c.m].geometry[c.address[0]].measure * nu_n;
        let hits = sample
            .colors
            .iter()
            .filter(|col| (c.m..=c.n).all(|k| col[k] as usize == c.address[k - c.m]))
            .count() as f64;
        let empirical = hits / total;
        let sigma = (predicted * (1.0 - predicted) / total).sqrt();
        let z = (empirical - predicted).abs() / sigma;
        worst = worst.max(z);
        ok &= z <= 3.0 && (predicted - c.predicted).abs() <= 1e-12 && c.holds;
    }
    verdict(
        6,
        "nested address frequencies",
        ok,
        &format!(
            "{} addresses at {} samples, max |z| {worst:.2}",
            checks.len(),
            sample.len()
        ),
    );
}

#[test]
fn criterion_7_deviation() {
    let b = main_tower();
    let (x, t) = (&b.x, &b.t);
    let mu = transverse_measures(t).unwrap();
    let mix = mixing_analysis(t, &mu).unwrap();
    let rep = x.patch_at(x.points[x.origin_index()], S0).unwrap();
    let occ = OccurrenceSet::new(x, &rep).unwrap();
    let freq = estimate_frequency(x, &rep).unwrap();
    let n0 = compute_n0(t, S0).unwrap();
    let mut identities = 0;
    let mut identities_ok = true;
    for n in n0..t.levels.len() {
        for i in 0..t.levels[n].t() {
            let r = deviation_identity_check(t, &mu, &occ, &freq, n0, n, i).unwrap();
            identities += 1;
            identities_ok &= r.decn_holds;
        }
    }
    let ns: Vec<f64> = (0..13).map(|k| 10.0 * 10f64.powf(k as f64 / 6.0)).collect();
    let sweep = deviation_sweep(t, &occ, &freq, &ns, 20, mix.delta_t.unwrap()).unwrap();
    let checked: Vec<_> = sweep.checks.iter().flatten().collect();
    let worst_area = checked.iter().map(|c| c.area_residual).fold(0.0, f64::max);
    let bounds_ok = checked.iter().all(|c| c.bounds_hold);
    let recount_ok = sweep.records.iter().step_by(7).all(|r| {
        let u = Aabb::cube(r.anchor, r.n, Dim::One);
        patch_count(x, &rep, &u).unwrap() == r.n_p
    });
    let fit = &sweep.fit;
    let pass = identities_ok
        && worst_area < 1e-9
        && bounds_ok
        && recount_ok
        && fit.trivial_bounded
        && !fit.ratio_trend.upward_trend;
    verdict(
        7,
        "deviation",
        pass,
        &format!(
            "{identities} tile identities exact: {identities_ok}; {} cubes ({} without a full tile), max area residual {worst_area:.2e}, boundary bounds {bounds_ok}; max |dev|/N^(d-1) {:.3} <= {:.1}; slope {:.3} vs d - delta_T {:.4}; ratio trend p = {:.3}",
            sweep.records.len(),
            sweep.records.len() - checked.len(),
            fit.trivial_series.iter().copied().fold(0.0, f64::max),
            fit.trivial_bound,
            fit.slope.unwrap_or(f64::NAN),
            fit.d_minus_delta,
            fit.ratio_trend.p_value
        ),
    );
}

#[test]
fn criterion_8_brute_force_matrices() {
    let x = generate(&GeneratorSpec::fibonacci(), 7000.0).unwrap();
    let t = build_tower(&x, &TowerParams::new(S0, 5.0, 2, 2.6)).unwrap();
    let mut compared = 0usize;
    let mut ok = x.len() >= 10_000 && t.levels.len() >= 2;
    for n in 1..t.levels.len() {
        let (prev, cur) = (&t.levels[n - 1], &t.levels[n]);
        for p in cur.punctures.iter().filter(|p| p.trusted) {
            let i = p.class.unwrap();
            let g = &cur.geometry[i];
            if !prev
                .valid_region
                .contains_box(&g.bbox.translate(p.position))
            {
                continue;
            }
            let mut row = vec![0u64; prev.t()];
            for q in &prev.punctures {
                let rel = q.position.x - p.position.x;
                if g.pieces.iter().any(|c| c.lo() < rel && rel < c.hi()) {
                    row[q
                        .class
                        .expect("puncture inside a complete tile is classified")] += 1;
                }
            }
            compared += 1;
            ok &= row == t.matrices[n - 1].entries[i];
        }
    }
    ok &= compared > 0;
    verdict(
        8,
        "brute-force matrix recount",
        ok,
        &format!(
            "{} points, {compared} tiles recounted across {} matrices",
            x.len(),
            t.matrices.len()
        ),
    );
}

fn run_pipeline(dir: &Path, out: &str) {
    for cmd in ["generate", "tower", "verify", "markov", "deviation"] {
        let o = Command::new(env!("CARGO_BIN_EXE_lrtower"))
            .args([cmd, "--config", "run.cfg", "--out", out, "--seed", "5"])
            .current_dir(dir)
            .output()
            .unwrap();
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "generator = fibonacci\nextent = 50000\ns0 = 3\nk = 5\nn_max = 3\nn_values = 10, 30, 100, 300, 1000\nanchors = 10\nsamples = 20000\n",
    )
    .unwrap();
    run_pipeline(dir.path(), "first");
    run_pipeline(dir.path(), "second");
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("first"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| {
            std::fs::read(dir.path().join("first").join(n)).unwrap()
                != std::fs::read(dir.path().join("second").join(n)).unwrap()
        })
        .collect();
    verdict(
        9,
        "determinism",
        names.len() >= 9 && differing.is_empty(),
        &format!("{} files compared, differing {differing:?}", names.len()),
    );
}
