use crate::config::{RunConfig, Scenario};
use crate::output::{Artifacts, Cell, Table};
use dipecho::ensemble::{histogram, Cluster};
use dipecho::nvham::angular_map;
use dipecho::protocols::{
    coordination_decomposition, dimer_amplification, echo_sweep, epsilon_sweep, imperfection_ledger, oat_twisting_signal,
    revival, tat_distance, AmplificationGrid, System,
};
use dipecho::verify;
use serde_json::json;

pub struct Outcome {
    pub artifacts: Artifacts,
    /// One-line human summary.
    pub headline: String,
    /// False only for a failed verification.
    pub passed: bool,
}

pub fn run(scenario: Scenario, cfg: &RunConfig) -> dipecho::Result<Outcome> {
    match scenario {
        Scenario::AngularMap => angular(cfg),
        Scenario::Couplings => couplings(cfg),
        Scenario::OatSignal => oat(cfg),
        Scenario::TatDistance => tat(cfg),
        Scenario::Revival => revival_run(cfg),
        Scenario::EchoSweep => echo(cfg),
        Scenario::DimerGrid => dimer(cfg),
        Scenario::Ledger => ledger(cfg),
        Scenario::EpsilonSweep => epsilon(cfg),
        Scenario::Verify => verify_run(cfg),
    }
}

fn done(artifacts: Artifacts, headline: String) -> Outcome {
    Outcome { artifacts, headline, passed: true }
}

fn angular(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let params = &cfg.system.params;
    let field = cfg.system.field.unwrap_or_else(|| params.preset_field());
    let map = angular_map(params, &field, cfg.angular_map.n_angles)?;
    let mut t = Table::new(&["phi_rad", "A_ZZ", "A_XY", "A_Heis"]).with_digits(12);
    for s in &map {
        t.push(vec![s.phi.into(), s.a_zz.into(), s.a_xy.into(), s.a_heis.into()]);
    }
    let twist: Vec<f64> = map.iter().map(|s| s.a_twist()).collect();
    let mean = twist.iter().sum::<f64>() / twist.len() as f64;
    let max = twist.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sign = if twist.iter().all(|&x| x > 0.0) {
        "positive"
    } else if twist.iter().all(|&x| x < 0.0) {
        "negative"
    } else {
        "mixed"
    };
    let heis_negative = map.iter().all(|s| s.a_heis < 0.0);
    let mut a = Artifacts::default();
    a.table("angular_map.csv", &t);
    a.json(
        "summary.json",
        &json!({
            "orientation": params.orientation,
            "field_gauss": field.b,
            "twist_mean": mean,
            "twist_max_abs": max,
            "twist_mean_over_max": if max > 0.0 { mean / max } else { 0.0 },
            "twist_sign": sign,
            "heisenberg_all_negative": heis_negative,
        }),
    );
    Ok(done(a, format!("twist mean/max = {:.3e} ({sign})", if max > 0.0 { mean / max } else { 0.0 })))
}

fn couplings(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let system = System::build(&cfg.system)?;
    let mut z = Vec::new();
    let mut paired = 0usize;
    let mut a = Artifacts::default();
    for (c, r) in system.realizations.iter().enumerate() {
        let report = r.coordination.as_ref().ok_or_else(|| dipecho::Error::Config("coordination numbers undefined".into()))?;
        z.extend_from_slice(&report.z);
        paired += r.pairing.clusters.iter().filter(|c| matches!(c, Cluster::Pair(..))).count() * 2;
        if cfg.couplings.export_matrices {
            a.text(&format!("couplings_{c:03}.json"), r.couplings.to_json()? + "\n");
        }
    }
    let mut t = Table::new(&["z", "count"]);
    for (centre, count) in histogram(&z, cfg.couplings.bin_width) {
        t.push(vec![centre.into(), count.into()]);
    }
    a.table("z_histogram.csv", &t);
    let mut sorted = z.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let median = sorted[sorted.len() / 2];
    a.json(
        "summary.json",
        &json!({
            "n_spins": system.n(),
            "n_configs": system.realizations.len(),
            "z_mean": mean,
            "z_median": median,
            "paired_fraction": paired as f64 / z.len() as f64,
            "orientation_sign": system.orientation_sign,
        }),
    );
    Ok(done(a, format!("{} spins, mean z = {mean:.3}", z.len())))
}

fn oat(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let system = System::build(&cfg.system)?;
    let s = oat_twisting_signal(&system, &cfg.oat_signal)?;
    let mut t = Table::new(&["tilt_deg", "signal", "signal_err", "single", "single_err"]);
    for k in 0..s.tilts_deg.len() {
        t.push(vec![s.tilts_deg[k].into(), s.signal[k].into(), s.signal_err[k].into(), s.single[k].into(), s.single_err[k].into()]);
    }
    let mut a = Artifacts::default();
    a.table("oat_signal.csv", &t);
    let k = (0..s.signal.len()).max_by(|&i, &j| s.signal[i].abs().total_cmp(&s.signal[j].abs())).unwrap_or(0);
    a.json(
        "summary.json",
        &json!({ "t_us": cfg.oat_signal.t, "largest_signal": s.signal[k], "largest_signal_err": s.signal_err[k], "at_tilt_deg": s.tilts_deg[k] }),
    );
    Ok(done(a, format!("largest |signal| {:.4} at {} deg", s.signal[k], s.tilts_deg[k])))
}

fn tat(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let system = System::build(&cfg.system)?;
    let d = tat_distance(&system, &cfg.tat_distance)?;
    let mut t = Table::new(&["series", "t_us", "D", "D_err"]);
    for s in &d.series {
        for (k, &time) in d.times.iter().enumerate() {
            t.push(vec![s.label.as_str().into(), time.into(), s.d[k].into(), s.d_err[k].into()]);
        }
    }
    let mut a = Artifacts::default();
    a.table("tat_distance.csv", &t);
    let last: Vec<_> = d.series.iter().map(|s| json!({ "series": s.label, "final_D": s.d.last(), "final_D_err": s.d_err.last() })).collect();
    a.json("summary.json", &json!({ "series": last }));
    Ok(done(a, format!("{} series over {} times", d.series.len(), d.times.len())))
}

fn revival_run(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let system = System::build(&cfg.system)?;
    let r = revival(&system, &cfg.revival)?;
    let mut t = Table::new(&["t_plus_us", "t_minus_us", "Y", "Y_err"]);
    for c in &r.curves {
        for k in 0..c.t_minus.len() {
            t.push(vec![c.t_plus.into(), c.t_minus[k].into(), c.y[k].into(), c.y_err[k].into()]);
        }
    }
    let mut refs = Table::new(&["reference", "t_us", "Y", "Y_err"]);
    for (name, s) in [("forward", &r.forward_reference), ("backward", &r.backward_reference)] {
        for k in 0..s.t.len() {
            refs.push(vec![name.into(), s.t[k].into(), s.y[k].into(), s.y_err[k].into()]);
        }
    }
    let mut a = Artifacts::default();
    a.table("revival.csv", &t);
    a.table("revival_reference.csv", &refs);
    let peaks: Vec<_> = r
        .curves
        .iter()
        .map(|c| {
            let k = (0..c.y.len()).max_by(|&i, &j| (c.y[i] * cfg.revival.pole).total_cmp(&(c.y[j] * cfg.revival.pole))).unwrap_or(0);
            json!({ "t_plus_us": c.t_plus, "revival_t_minus_us": c.t_minus[k], "Y": c.y[k], "Y_err": c.y_err[k] })
        })
        .collect();
    a.json("summary.json", &json!({ "reversal": cfg.revival.reversal.unwrap_or(cfg.system.reversal_mode()), "curves": peaks }));
    Ok(done(a, format!("{} revival curves", r.curves.len())))
}

fn grid_table(g: &AmplificationGrid) -> Table {
    let mut t = Table::new(&["t_plus_us", "t_minus_us", "D", "D_err", "A", "A_err"]);
    for c in &g.cells {
        t.push(vec![c.t_plus.into(), c.t_minus.into(), c.d.into(), c.d_err.into(), c.a.into(), c.a_err.into()]);
    }
    t
}

/// For each t+, the t- of the largest A.
fn ridge(g: &AmplificationGrid) -> Vec<serde_json::Value> {
    (0..g.t_plus.len())
        .map(|i| {
            let k = (0..g.t_minus.len()).max_by(|&a, &b| g.at(i, a).a.total_cmp(&g.at(i, b).a)).unwrap_or(0);
            json!({ "t_plus_us": g.t_plus[i], "argmax_t_minus_us": g.t_minus[k], "A": g.at(i, k).a })
        })
        .collect()
}

fn grid_summary(g: &AmplificationGrid) -> serde_json::Value {
    let p = g.peak();
    json!({
        "peak_A": p.a,
        "peak_A_err": p.a_err,
        "peak_t_plus_us": p.t_plus,
        "peak_t_minus_us": p.t_minus,
        "reference_A": g.at(0, 0).a,
        "reference_A_err": g.at(0, 0).a_err,
        "d0": g.d0,
        "delta_theta_rad": g.delta_theta,
        "polarization": g.polarization,
        "backend": g.backend,
        "n_samples": g.n_samples,
        "dtwa_seed": g.seed,
        "ridge": ridge(g),
    })
}

fn echo(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let system = System::build(&cfg.system)?;
    let mut a = Artifacts::default();
    let (grid, extra) = if cfg.echo.tertiles {
        let dec = coordination_decomposition(&system, &cfg.echo)?;
        let mut t = Table::new(&["group", "t_plus_us", "t_minus_us", "D", "D_err", "A", "A_err"]);
        for (g, label) in dec.grid.group_labels.iter().enumerate() {
            for c in &dec.grid.cells {
                let gc = &c.groups[g];
                t.push(vec![label.as_str().into(), c.t_plus.into(), c.t_minus.into(), gc.d.into(), gc.d_err.into(), gc.a.into(), gc.a_err.into()]);
            }
        }
        a.table("echo_groups.csv", &t);
        let extra = json!({
            "group_labels": dec.grid.group_labels,
            "group_sizes": dec.grid.group_sizes,
            "group_peak_A": dec.peak,
            "ridge_contrast": dec.ridge_contrast,
            "recombination_error": dec.recombination_error,
        });
        (dec.grid, Some(extra))
    } else {
        (echo_sweep(&system, &cfg.echo)?, None)
    };
    a.table("echo_grid.csv", &grid_table(&grid));
    let mut summary = grid_summary(&grid);
    if let Some(e) = extra {
        summary["groups"] = e;
    }
    a.json("summary.json", &summary);
    let p = grid.peak();
    Ok(done(a, format!("peak A = {:.4} +- {:.4} at (t+, t-) = ({}, {}) us", p.a, p.a_err, p.t_plus, p.t_minus)))
}

fn dimer(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let system = System::build(&cfg.system)?;
    let g = dimer_amplification(&system, &cfg.dimer_grid.t_plus, &cfg.dimer_grid.t_minus)?;
    let mut t = Table::new(&["t_plus_us", "t_minus_us", "amp_mean", "amp_stderr"]);
    for (i, &tp) in g.t_plus.iter().enumerate() {
        for (k, &tm) in g.t_minus.iter().enumerate() {
            t.push(vec![tp.into(), tm.into(), g.mean[i][k].into(), g.stderr[i][k].into()]);
        }
    }
    let (peak, i, k) = g.peak();
    let mut a = Artifacts::default();
    a.table("dimer_grid.csv", &t);
    a.json(
        "summary.json",
        &json!({ "peak_amp": peak, "peak_stderr": g.stderr[i][k], "peak_t_plus_us": g.t_plus[i], "peak_t_minus_us": g.t_minus[k] }),
    );
    Ok(done(a, format!("peak dimer amplitude {peak:.4} at ({}, {}) us", g.t_plus[i], g.t_minus[k])))
}

fn ledger(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let rows = imperfection_ledger(&cfg.system, &cfg.echo, &cfg.ledger.rows)?;
    let mut a = Artifacts::default();
    let mut summary = Table::new(&["row", "label", "peak_A", "peak_A_err", "peak_t_plus_us", "peak_t_minus_us"]);
    let mut json_rows = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        summary.push(vec![
            r.into(),
            row.scenario.label.as_str().into(),
            row.peak_a.into(),
            row.peak_err.into(),
            row.peak_t_plus.into(),
            row.peak_t_minus.into(),
        ]);
        a.table(&format!("ledger_{r}_grid.csv"), &grid_table(&row.grid));
        let c = &row.curves;
        let mut t = Table::new(&["t_minus_us", "non_echo", "non_echo_err", "symmetric", "symmetric_err", "asymmetric", "asymmetric_err"]);
        for k in 0..c.t_minus.len() {
            let cells: Vec<Cell> = vec![
                c.t_minus[k].into(),
                c.non_echo[k].into(),
                c.non_echo_err[k].into(),
                c.symmetric[k].into(),
                c.symmetric_err[k].into(),
                c.asymmetric[k].into(),
                c.asymmetric_err[k].into(),
            ];
            t.push(cells);
        }
        a.table(&format!("ledger_{r}_curves.csv"), &t);
        let mut s = grid_summary(&row.grid);
        s["label"] = json!(row.scenario.label);
        s["scenario"] = serde_json::to_value(&row.scenario).expect("serializable");
        json_rows.push(s);
    }
    a.table("ledger.csv", &summary);
    a.json("summary.json", &json!({ "rows": json_rows }));
    let line: Vec<String> = rows.iter().map(|r| format!("{}: {:.3}", r.scenario.label, r.peak_a)).collect();
    Ok(done(a, line.join("; ")))
}

fn epsilon(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let curves = epsilon_sweep(&cfg.system, cfg.system.params.orientation, &cfg.epsilon_sweep)?;
    let mut t = Table::new(&["epsilon", "rescaled_t", "t_us", "A", "A_err"]);
    for c in &curves {
        for k in 0..c.t.len() {
            t.push(vec![c.epsilon.into(), c.rescaled_t[k].into(), c.t[k].into(), c.a[k].into(), c.a_err[k].into()]);
        }
    }
    let mut a = Artifacts::default();
    a.table("epsilon_sweep.csv", &t);
    let peaks: Vec<_> = curves.iter().map(|c| json!({ "epsilon": c.epsilon, "peak_A": c.peak_a, "peak_A_err": c.peak_err })).collect();
    a.json("summary.json", &json!({ "orientation": cfg.system.params.orientation, "curves": peaks }));
    let line: Vec<String> = curves.iter().map(|c| format!("eps {:.3}: {:.3}", c.epsilon, c.peak_a)).collect();
    Ok(done(a, line.join("; ")))
}

fn verify_run(cfg: &RunConfig) -> dipecho::Result<Outcome> {
    let report = verify::run(cfg.verify.level)?;
    let mut t = Table::new(&["check", "level", "measured", "expected", "tolerance", "relative", "pass"]);
    println!("{:<44} {:>16} {:>16} {:>10}  result", "check", "measured", "expected", "tolerance");
    for c in &report.checks {
        let level = serde_json::to_value(c.level).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        t.push(vec![
            c.name.as_str().into(),
            level.into(),
            c.measured.into(),
            c.expected.into(),
            c.tolerance.into(),
            c.relative.into(),
            c.pass.into(),
        ]);
        println!(
            "{:<44} {:>16.9e} {:>16.9e} {:>10.2e}  {}",
            c.name,
            c.measured,
            c.expected,
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    let mut a = Artifacts::default();
    a.table("verify.csv", &t);
    a.json("summary.json", &json!({ "level": report.level, "checks": report.checks.len(), "failed": failed }));
    Ok(Outcome { artifacts: a, headline: format!("{} checks, {failed} failed", report.checks.len()), passed: failed == 0 })
}
