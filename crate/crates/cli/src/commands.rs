//! One function per pipeline stage.

use crate::config::RunConfig;
use crate::output::{create, csv_header, radius_tag, read_json, write_json};
use crate::CliError;
use lr_towers::delone::{
    format_real, generate, read_metadata, repetitivity_profile, write_points_csv, DeloneWindow,
    RepetitivityProfile,
};
use lr_towers::deviation::{
    convergence_envelope, deviation_identity_check, deviation_sweep, estimate_frequency,
    ConvergenceEntry, IdentityReport, OccurrenceSet, SweepFit,
};
use lr_towers::geometry::Dim;
use lr_towers::markov::{
    address_check, lebesgue_sample, marginal_consistency, mixing_analysis, q_matrix, speed_check,
    transverse_measures, AddressCheck, MarginalCheck, MixingReport, SpeedCheck, StochasticMatrix,
    TransverseMeasures,
};
use lr_towers::towers::{
    build_tower, matrix_diagnostics, verify_zoom, LedgerEntry, MatrixReport, TowerSystem,
    ZoomReport,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub hash: String,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Resource(format!("{}: {e}", path.display()))
}

pub fn cmd_generate(run: &Run) -> Result<(), CliError> {
    let x = generate(&run.cfg.generator.spec(), run.cfg.extent)?;
    let csv = run.path("points.csv");
    let mut w = create(&csv)?;
    csv_header(&mut w, &run.hash).map_err(|e| io(&csv, e))?;
    write_points_csv(&mut w, &x.points, x.dim)?;
    let meta_path = run.path("points.meta");
    let mut meta = x.metadata();
    meta.insert(
        "schema_version".into(),
        crate::output::SCHEMA_VERSION.to_string(),
    );
    meta.insert("config_hash".into(), run.hash.clone());
    meta.insert("extent".into(), format_real(run.cfg.extent));
    lr_towers::delone::write_metadata(create(&meta_path)?, &meta)?;
    println!("generated {} points in {:?}", x.len(), x.window);
    Ok(())
}

fn load_points(run: &Run) -> Result<DeloneWindow, CliError> {
    let (csv, meta_path) = (run.path("points.csv"), run.path("points.meta"));
    let f = File::open(&meta_path).map_err(|_| {
        CliError::Config(format!(
            "{} not found; run `generate` first",
            meta_path.display()
        ))
    })?;
    let meta: BTreeMap<String, String> = read_metadata(BufReader::new(f))?;
    let expected = serde_json::to_string(&run.cfg.generator.spec()).unwrap_or_default();
    if meta.get("generator") != Some(&expected)
        || meta.get("extent") != Some(&format_real(run.cfg.extent))
    {
        return Err(CliError::Config(
            "the stored point set was generated with a different generator or extent; rerun `generate`".into(),
        ));
    }
    Ok(DeloneWindow::load(&csv, &meta_path)?)
}

fn load_tower(run: &Run) -> Result<TowerSystem, CliError> {
    let t: TowerSystem = read_json(&run.path("tower.json"), "tower")?.data;
    let want = run.cfg.tower_params(t.params.l_hat);
    let p = &t.params;
    let same = p.s0 == want.s0
        && p.k == want.k
        && p.n_max == want.n_max
        && p.enforce_theorem_k == want.enforce_theorem_k
        && run.cfg.l_hat.is_none_or(|l| l == p.l_hat);
    if !same {
        return Err(CliError::Config(
            "the stored tower was built with different parameters; rerun `tower`".into(),
        ));
    }
    Ok(t)
}

fn estimate_l_hat(
    run: &Run,
    x: &DeloneWindow,
) -> Result<(f64, Option<RepetitivityProfile>), CliError> {
    if let Some(l) = run.cfg.l_hat {
        return Ok((l, None));
    }
    let s0 = run.cfg.s0;
    let profile = repetitivity_profile(x, &[s0, 2.0 * s0, 4.0 * s0, 8.0 * s0])?;
    Ok((profile.l_hat, Some(profile)))
}

#[derive(Serialize)]
struct VerifyReport {
    levels: usize,
    zooms: Vec<ZoomReport>,
    zooms_pass: bool,
    /// Largest `|leb(D_{n,i}) - Σ_j m_ij leb(D_{n-1,j})| / leb(D_{n,i})`.
    volume_residual: f64,
    volume_ok: bool,
    matrices: MatrixReport,
    ledger_failures: Vec<LedgerEntry>,
}

impl VerifyReport {
    fn passes(&self, strict: bool) -> bool {
        self.zooms_pass && self.volume_ok && (!strict || self.ledger_failures.is_empty())
    }
}

fn verify_report(t: &TowerSystem) -> VerifyReport {
    let zooms: Vec<ZoomReport> = (1..t.levels.len())
        .map(|n| verify_zoom(&t.levels[n - 1], &t.levels[n], &t.matrices[n - 1]))
        .collect();
    let volume_residual = (1..t.levels.len())
        .flat_map(|n| {
            let (prev, cur) = (&t.levels[n - 1], &t.levels[n]);
            t.matrices[n - 1]
                .entries
                .iter()
                .zip(&cur.geometry)
                .map(move |(row, g)| {
                    let sum: f64 = row
                        .iter()
                        .zip(&prev.geometry)
                        .map(|(&m, h)| m as f64 * h.measure)
                        .sum();
                    (g.measure - sum).abs() / g.measure
                })
        })
        .fold(0.0, f64::max);
    VerifyReport {
        levels: t.levels.len(),
        zooms_pass: zooms.iter().all(ZoomReport::all_pass),
        zooms,
        volume_residual,
        volume_ok: volume_residual < 1e-9,
        matrices: matrix_diagnostics(t),
        ledger_failures: t
            .ledger
            .iter()
            .filter(|e| e.holds == Some(false))
            .cloned()
            .collect(),
    }
}

fn finish_verify(run: &Run, t: &TowerSystem) -> Result<(), CliError> {
    let report = verify_report(t);
    write_json(&run.path("verify.json"), &run.hash, "verify", &report)?;
    for e in &report.ledger_failures {
        eprintln!(
            "warning: level {} {}: {} > {}",
            e.level, e.name, e.lhs, e.rhs
        );
    }
    if report.passes(run.cfg.strict) {
        println!("verified {} levels", report.levels);
        Ok(())
    } else {
        let failed: Vec<String> = report
            .zooms
            .iter()
            .flat_map(|z| z.failures.iter().cloned())
            .collect();
        Err(CliError::Verification(format!(
            "zooms pass: {}, volume residual {:.3e}, ledger failures {}; {}",
            report.zooms_pass,
            report.volume_residual,
            report.ledger_failures.len(),
            failed.join("; ")
        )))
    }
}

#[derive(Serialize)]
struct LedgerFile<'a> {
    l_hat: f64,
    profile: Option<RepetitivityProfile>,
    all_positive: bool,
    ledger: &'a [LedgerEntry],
}

pub fn cmd_tower(run: &Run) -> Result<(), CliError> {
    let x = load_points(run)?;
    let (l_hat, profile) = estimate_l_hat(run, &x)?;
    let t = build_tower(&x, &run.cfg.tower_params(l_hat))?;
    write_json(&run.path("tower.json"), &run.hash, "tower", &t)?;
    let ledger = LedgerFile {
        l_hat,
        profile,
        all_positive: t.matrices.iter().all(|m| m.min_entry() >= 1),
        ledger: &t.ledger,
    };
    write_json(&run.path("ledger.json"), &run.hash, "tower", &ledger)?;
    println!(
        "built {} levels with classes {:?}",
        t.levels.len(),
        t.levels.iter().map(|l| l.t()).collect::<Vec<_>>()
    );
    finish_verify(run, &t)
}

pub fn cmd_verify(run: &Run) -> Result<(), CliError> {
    let t = load_tower(run)?;
    finish_verify(run, &t)
}

#[derive(Serialize)]
struct MarkovFile {
    measures: TransverseMeasures,
    q_matrices: Vec<StochasticMatrix>,
    mixing: MixingReport,
    convergence: Vec<ConvergenceEntry>,
    samples: usize,
    rejected: usize,
    speed: Vec<SpeedCheck>,
    addresses: Vec<AddressCheck>,
    marginals: Vec<MarginalCheck>,
    warning: Option<String>,
}

pub fn cmd_markov(run: &Run) -> Result<(), CliError> {
    let t = load_tower(run)?;
    let mu = transverse_measures(&t)?;
    let mix = mixing_analysis(&t, &mu)?;
    let q_matrices = (1..t.levels.len())
        .map(|n| q_matrix(&t, &mu, n))
        .collect::<Result<Vec<_>, _>>()?;
    let sample = lebesgue_sample(&t, &mu.region, run.cfg.samples, run.cfg.seed)?;
    let speed = speed_check(&t, &mix, &sample);
    let addresses = address_check(&t, &mu, &sample, run.cfg.addresses, run.cfg.seed);
    let marginals = marginal_consistency(&t, &mu);
    let warning = mix.note.clone();
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    let file = MarkovFile {
        convergence: convergence_envelope(&t, &mu, mix.c_t),
        measures: mu,
        q_matrices,
        samples: sample.len(),
        rejected: sample.rejected,
        speed,
        addresses,
        marginals,
        warning,
        mixing: mix,
    };
    write_json(&run.path("markov.json"), &run.hash, "markov", &file)?;
    println!(
        "c_T = {}, delta_T = {}",
        file.mixing.c_t,
        file.mixing
            .delta_t
            .map(|d| d.to_string())
            .unwrap_or_else(|| "undefined".into())
    );
    let failed = file.speed.iter().filter(|c| !c.holds).count()
        + file.addresses.iter().filter(|c| !c.holds).count()
        + file.marginals.iter().filter(|c| !c.holds).count()
        + file
            .mixing
            .levels
            .iter()
            .filter(|l| l.holds == Some(false))
            .count();
    if run.cfg.strict && failed > 0 {
        return Err(CliError::Verification(format!(
            "{failed} Markov checks failed"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary {
    #[serde(rename = "S")]
    s: f64,
    freq_hat: f64,
    n0: usize,
    #[serde(flatten)]
    fit: SweepFit,
    cubes: usize,
    cubes_without_tile: usize,
    cubes_pass: bool,
    identities: Vec<IdentityReport>,
    identities_hold: bool,
}

pub fn cmd_deviation(run: &Run) -> Result<(), CliError> {
    let x = load_points(run)?;
    let t = load_tower(run)?;
    let analysis = transverse_measures(&t)
        .map_err(CliError::from)
        .and_then(|mu| Ok((mixing_analysis(&t, &mu)?.delta_t, mu)));
    let (delta, mu) = match analysis {
        Ok((delta, mu)) => (delta, Some(mu)),
        Err(e) => {
            eprintln!("warning: no mixing estimate ({e})");
            (None, None)
        }
    };
    let delta = delta.unwrap_or_else(|| {
        eprintln!("warning: delta_T undefined; using 0");
        0.0
    });
    let origin = x.points[x.origin_index()];
    let mut summaries = Vec::new();
    let mut failures = 0usize;
    for s in run.cfg.patch_radii() {
        let rep = x.patch_at(origin, s)?;
        let occ = OccurrenceSet::new(&x, &rep)?;
        let freq = estimate_frequency(&x, &rep)?;
        let sweep = deviation_sweep(&t, &occ, &freq, &run.cfg.n_values, run.cfg.anchors, delta)?;
        let n0 = sweep.n0;
        let mut identities = Vec::new();
        if let Some(mu) = &mu {
            for n in n0..t.levels.len() {
                for i in 0..t.levels[n].t() {
                    identities.push(deviation_identity_check(&t, mu, &occ, &freq, n0, n, i)?);
                }
            }
        }
        let tag = radius_tag(s);
        let csv = run.path(&format!("deviation_s{tag}.csv"));
        let mut w = create(&csv)?;
        let write = |w: &mut dyn Write| -> std::io::Result<()> {
            csv_header(w, &run.hash)?;
            match x.dim {
                Dim::One => writeln!(w, "N,anchor_x,n_p,freq_hat,dev,n0,n1")?,
                Dim::Two => writeln!(w, "N,anchor_x,anchor_y,n_p,freq_hat,dev,n0,n1")?,
            }
            for r in &sweep.records {
                let anchor = match x.dim {
                    Dim::One => format_real(r.anchor.x),
                    Dim::Two => format!("{},{}", format_real(r.anchor.x), format_real(r.anchor.y)),
                };
                let n1 = r.n1.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{},{anchor},{},{},{},{},{n1}",
                    format_real(r.n),
                    r.n_p,
                    format_real(freq.freq_hat),
                    format_real(r.dev),
                    r.n0
                )?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| io(&csv, e))?;
        let plot = run.path(&format!("deviation_plot_s{tag}.csv"));
        let mut w = create(&plot)?;
        let write_plot = |w: &mut dyn Write| -> std::io::Result<()> {
            csv_header(w, &run.hash)?;
            writeln!(w, "log_N,log_abs_dev")?;
            for r in sweep.records.iter().filter(|r| r.dev != 0.0) {
                writeln!(
                    w,
                    "{},{}",
                    format_real(r.n.ln()),
                    format_real(r.dev.abs().ln())
                )?;
            }
            w.flush()
        };
        write_plot(&mut w).map_err(|e| io(&plot, e))?;
        let identities_hold = identities.iter().all(|r| r.decn_holds && r.dec_c_holds);
        let cubes_pass = sweep.cubes_pass();
        failures += usize::from(!identities_hold) + usize::from(!cubes_pass);
        println!(
            "S = {s}: slope {} against d - delta_T = {}",
            sweep
                .fit
                .slope
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "n/a".into()),
            sweep.fit.d_minus_delta
        );
        summaries.push(SweepSummary {
            s,
            freq_hat: freq.freq_hat,
            n0,
            cubes: sweep.records.len(),
            cubes_without_tile: sweep.checks.iter().filter(|c| c.is_none()).count(),
            cubes_pass,
            fit: sweep.fit,
            identities,
            identities_hold,
        });
    }
    write_json(
        &run.path("deviation_fit.json"),
        &run.hash,
        "deviation",
        &summaries,
    )?;
    if run.cfg.strict && failures > 0 {
        return Err(CliError::Verification(format!(
            "{failures} deviation checks failed"
        )));
    }
    Ok(())
}
