use super::{LedgerEntry, TowerError, TowerSystem};
use crate::delone::{repetitivity_profile, DeloneWindow};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    /// `1 / (2 (L + 1)) - L / (K - 1)`.
    pub k1: f64,
    /// `L K / (K - 1)`.
    pub k2: f64,
    /// `6 L (L + 1)^2`.
    pub theorem_k: f64,
}

pub fn theorem_constants(l: f64, k: f64) -> TheoremConstants {
    TheoremConstants {
        k1: 1.0 / (2.0 * (l + 1.0)) - l / (k - 1.0),
        k2: l * k / (k - 1.0),
        theorem_k: 6.0 * l * (l + 1.0) * (l + 1.0),
    }
}

/// A single inequality `lhs <= rhs`, as reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub(crate) fn record_ledger(x: &DeloneWindow, t: &mut TowerSystem) -> Result<(), TowerError> {
    let tol = 10.0 * x.eps;
    let l = t.params.l_hat;
    let c = theorem_constants(l, t.params.k);
    let mut out = Vec::new();
    let mut push = |level: usize, name: &str, lhs: f64, rhs: f64| {
        out.push(LedgerEntry {
            level,
            name: name.to_string(),
            lhs,
            rhs,
            holds: Some(lhs <= rhs + tol),
        });
    };
    for (n, lv) in t.levels.iter().enumerate() {
        let st = lv.stats;
        if n == 0 {
            push(0, "base_k", 2.0 * lv.big_r_c + lv.s_n, lv.k_n);
            push(0, "base_r_int", (st.r_int - lv.r_c).abs(), 0.0);
            push(0, "base_r_ext", (st.r_ext - lv.big_r_c).abs(), 0.0);
        } else {
            let p = t.levels[n - 1].stats;
            push(n, "hyp1", 2.0 * lv.big_r_c + lv.s_n, lv.k_n);
            push(n, "hyp2", lv.big_r_c + 2.0 * p.r_ext + p.rec, lv.k_n);
            push(n, "hyp3", 2.0 * p.r_ext, lv.r_c);
            push(n, "zoom_rec", st.rec, lv.k_n);
            push(n, "zoom_r_int", lv.r_c - p.r_ext, st.r_int);
            push(n, "zoom_r_ext", st.r_ext, lv.big_r_c + p.r_ext);
            let m = &t.matrices[n - 1];
            let bound = (st.r_ext / p.r_int).powi(lv.dim.d() as i32);
            push(n, "eq1_row_sum", m.norm_inf() as f64, bound);
        }
        push(n, "k1k2_lower", c.k1 * lv.s_n, st.r_int);
        push(n, "k1k2_middle", st.r_int, st.r_ext);
        push(n, "k1k2_upper", st.r_ext, c.k2 * lv.s_n);
        push(n, "rec", st.rec, (2.0 * l + 1.0) * lv.s_n);
        push(n, "retbounds_lower", lv.s_n / (2.0 * (l + 1.0)), lv.r_c);
        push(n, "retbounds_upper", lv.big_r_c, l * lv.s_n);
    }
    // M_X(rec(B_n)) <= r_int(B_{n+1}).
    let recs: Vec<f64> = t.levels[..t.levels.len() - 1]
        .iter()
        .map(|l| l.stats.rec)
        .collect();
    let profile = repetitivity_profile(x, &recs).ok();
    for (n, &rec) in recs.iter().enumerate() {
        let rhs = t.levels[n + 1].stats.r_int;
        let m = profile
            .as_ref()
            .and_then(|p| p.samples.iter().find(|s| s.s == rec).map(|s| s.m_hat));
        out.push(LedgerEntry {
            level: n,
            name: "positivity_hyp".into(),
            lhs: m.unwrap_or(f64::NAN),
            rhs,
            holds: m.map(|m| m <= rhs + tol),
        });
    }
    if t.params.strict {
        if let Some(e) = out
            .iter()
            .find(|e| e.name.starts_with("hyp") && e.holds == Some(false))
        {
            return Err(TowerError::HypothesisViolation {
                level: e.level,
                which: e.name.clone(),
            });
        }
    }
    t.ledger = out;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMatrixReport {
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    pub min_entry: u64,
    pub norm_inf: u64,
    pub norm_1: u64,
    /// `(R_ext(B_n) / r_int(B_{n-1}))^d`.
    pub row_sum_bound: f64,
    pub row_sum_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub levels: Vec<LevelMatrixReport>,
    pub sup_norm_inf: u64,
    /// `(K K_2 / K_1)^d`, when `K_1 > 0`.
    pub uniform_bound: Option<f64>,
    pub uniform_ok: Option<bool>,
    pub all_positive: bool,
    pub note: Option<String>,
}

pub fn matrix_diagnostics(t: &TowerSystem) -> MatrixReport {
    if t.matrices.is_empty() {
        return MatrixReport {
            levels: Vec::new(),
            sup_norm_inf: 0,
            uniform_bound: None,
            uniform_ok: None,
            all_positive: false,
            note: Some("insufficient depth: fewer than two levels".into()),
        };
    }
    let d = t.dim().d() as i32;
    let levels: Vec<LevelMatrixReport> = t
        .matrices
        .iter()
        .map(|m| {
            let bound = (t.levels[m.n].stats.r_ext / t.levels[m.n - 1].stats.r_int).powi(d);
            LevelMatrixReport {
                n: m.n,
                rows: m.rows(),
                cols: m.cols(),
                min_entry: m.min_entry(),
                norm_inf: m.norm_inf(),
                norm_1: m.norm_1(),
                row_sum_bound: bound,
                row_sum_ok: (m.norm_inf() as f64) <= bound,
            }
        })
        .collect();
    let sup = levels.iter().map(|l| l.norm_inf).max().unwrap_or(0);
    let c = theorem_constants(t.params.l_hat, t.params.k);
    let uniform_bound = (c.k1 > 0.0).then(|| (t.params.k * c.k2 / c.k1).powi(d));
    MatrixReport {
        all_positive: levels.iter().all(|l| l.min_entry >= 1),
        uniform_ok: uniform_bound.map(|b| sup as f64 <= b),
        uniform_bound,
        sup_norm_inf: sup,
        levels,
        note: None,
    }
}
