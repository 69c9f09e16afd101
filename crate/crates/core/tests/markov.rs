use lr_towers::delone::{generate, GeneratorSpec};
use lr_towers::markov::{
    address_check, chain_product, lebesgue_sample, marginal_consistency, mixing_analysis,
    p_product, q_matrix, speed_check, transverse_measures, MarkovError, TransverseMeasures,
};
use lr_towers::towers::{build_tower, TowerParams, TowerSystem};
use std::sync::OnceLock;

fn fib_tower() -> &'static (TowerSystem, TransverseMeasures) {
    static T: OnceLock<(TowerSystem, TransverseMeasures)> = OnceLock::new();
    T.get_or_init(|| {
        let x = generate(&GeneratorSpec::fibonacci(), 60000.0).unwrap();
        let t = build_tower(&x, &TowerParams::new(3.0, 5.0, 3, 2.6)).unwrap();
        let mu = transverse_measures(&t).unwrap();
        (t, mu)
    })
}

fn lattice_tower() -> TowerSystem {
    let x = generate(&GeneratorSpec::lattice(1), 300.0).unwrap();
    let mut p = TowerParams::new(1.0, 3.0, 2, 1.5);
    p.allow_periodic = true;
    build_tower(&x, &p).unwrap()
}

#[test]
fn single_class_measure_is_point_density() {
    let t = lattice_tower();
    let mu = transverse_measures(&t).unwrap();
    let region = mu.region;
    let expected = region.volume().floor() + 1.0;
    for lv in &mu.levels {
        assert_eq!(lv.nu_hat.len(), 1);
        assert!((lv.nu_hat[0] * region.volume() - lv.counts[0] as f64).abs() < 1e-9);
        assert!((lv.counts[0] as f64 - expected).abs() <= 1.0);
    }
    let q = q_matrix(&t, &mu, 1).unwrap();
    assert_eq!(q.entries, vec![vec![1.0]]);
    let mix = mixing_analysis(&t, &mu).unwrap();
    assert_eq!(mix.c_t, 0.0);
    assert!(mix.delta_t.is_none());
    assert!(mix.note.is_some());
}

#[test]
fn measure_residuals_stay_within_boundary_bands() {
    let (_, mu) = fib_tower();
    for lv in &mu.levels {
        assert!(
            lv.meas_residual <= lv.band,
            "level {}: {} > {}",
            lv.level,
            lv.meas_residual,
            lv.band
        );
        for (r, tol) in lv.tran_residual.iter().zip(&lv.tran_tolerance) {
            assert!(r <= tol, "level {}: {r} > {tol}", lv.level);
        }
    }
}

#[test]
fn q_rows_are_stochastic_and_raw_sums_track_residuals() {
    let (t, mu) = fib_tower();
    for n in 1..t.levels.len() {
        let q = q_matrix(t, mu, n).unwrap();
        assert!(q.stochastic_defect() < 1e-9);
        assert!(q.entries.iter().flatten().all(|&v| v >= 0.0));
        for (j, s) in q.raw_row_sums.iter().enumerate() {
            assert!((s - 1.0).abs() <= mu.levels[n].tran_residual[j] + 1e-12);
        }
    }
}

#[test]
fn products_match_integer_formula() {
    let (t, mu) = fib_tower();
    let levels = t.levels.len();
    for m in 0..levels - 1 {
        for n in m + 1..levels {
            let c = chain_product(t, mu, m, n).unwrap();
            assert!(c.q.stochastic_defect() < 1e-9);
            assert_eq!(c.p, p_product(t, m, n));
            let accumulated: f64 = (m + 1..=n)
                .map(|k| q_matrix(t, mu, k).unwrap().renorm_residual)
                .sum();
            assert!(
                c.qnm_residual <= 2.0 * accumulated + 1e-12,
                "({m},{n}) {} vs {accumulated}",
                c.qnm_residual
            );
            if n == m + 1 {
                assert_eq!(c.q.entries, q_matrix(t, mu, n).unwrap().entries);
            }
        }
    }
    assert!(matches!(
        chain_product(t, mu, 2, 2),
        Err(MarkovError::IndexOutOfRange { .. })
    ));
}

#[test]
fn contraction_bounds_hold() {
    let (t, mu) = fib_tower();
    let mix = mixing_analysis(t, mu).unwrap();
    assert!(mix.c_t > 0.0 && mix.c_t < 1.0);
    let d = mix.delta_t.unwrap();
    assert!((d + mix.c_t.ln() / t.params.k.ln()).abs() < 1e-15);
    assert!(mix.levels.iter().all(|l| l.holds != Some(false)));
    for g in &mix.gaps {
        assert!(g.gap <= g.contraction_bound + 1e-12);
        assert!(g.holds);
        assert!(g.marginal_gap <= g.gap + 1e-12);
    }
    assert!(mix.mea_box.iter().all(|e| e.holds));
    assert!(mix.c_t >= mix.c_t_sup_form);
}

#[test]
fn q_entries_match_lebesgue_sampling() {
    let (t, mu) = fib_tower();
    let s = lebesgue_sample(t, &mu.region, 100_000, 5).unwrap();
    assert_eq!(s.rejected, 0);
    let q = q_matrix(t, mu, 2).unwrap();
    let (t1, t2) = (t.levels[1].t(), t.levels[2].t());
    let mut joint = vec![vec![0u64; t2]; t1];
    let mut row = vec![0u64; t1];
    for c in &s.colors {
        joint[c[1] as usize][c[2] as usize] += 1;
        row[c[1] as usize] += 1;
    }
    for j in 0..t1 {
        for (i, &hits) in joint[j].iter().enumerate() {
            let p = q.entries[j][i];
            let est = hits as f64 / row[j] as f64;
            let sigma = (p * (1.0 - p) / row[j] as f64).sqrt();
            assert!(
                (est - p).abs() <= 3.0 * sigma + 1e-12,
                "q[{j}][{i}] {est} vs {p}"
            );
        }
    }
}

#[test]
fn nested_addresses_and_speed_within_three_sigma() {
    let (t, mu) = fib_tower();
    let s = lebesgue_sample(t, &mu.region, 100_000, 9).unwrap();
    for c in address_check(t, mu, &s, 10, 3) {
        assert!(c.holds, "{c:?}");
    }
    let mix = mixing_analysis(t, mu).unwrap();
    assert!(speed_check(t, &mix, &s).iter().all(|c| c.holds));
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let (t, mu) = fib_tower();
    let a = lebesgue_sample(t, &mu.region, 5000, 1).unwrap();
    let b = lebesgue_sample(t, &mu.region, 5000, 1).unwrap();
    let c = lebesgue_sample(t, &mu.region, 5000, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.colors, c.colors);
    assert_eq!(a.len(), 5000);
}

#[test]
fn tile_area_fractions_match_measures() {
    let (t, mu) = fib_tower();
    for c in marginal_consistency(t, mu) {
        assert!(c.holds, "{c:?}");
    }
}

#[test]
fn shallow_towers_are_rejected() {
    let (t, mu) = fib_tower();
    let mut short = t.clone();
    short.levels.truncate(2);
    short.matrices.truncate(1);
    let mut m = mu.clone();
    m.levels.truncate(2);
    assert!(matches!(
        mixing_analysis(&short, &m),
        Err(MarkovError::TooShallow { .. })
    ));
}
