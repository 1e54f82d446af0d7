//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tamed_spde::config::{ConfigDocument, DEFAULT_DATA_MODES};
use tamed_spde::drift::{DriftPolynomial, TamingParams};
use tamed_spde::fem1d::{FemOperators, Mesh1D};
use tamed_spde::harness::{
    equilibration_study, moment_study, smoothing_study, spectrum_check, strong_rate_study, taming_check,
    weak_rate_study, InitialCondition, RateReport,
};
use tamed_spde::noise::{increment_load, SpectralIncrement};
use tamed_spde::output;
use tamed_spde::scheme::{step, SchemeConfig, SchemeState};
use tamed_spde::Result;

fn preset(name: &str) -> Result<ConfigDocument> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(name);
    ConfigDocument::load(&path)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn window_text(w: (f64, Option<f64>)) -> String {
    match w.1 {
        Some(hi) => format!("[{}, {}]", w.0, hi),
        None => format!(">= {}", w.0),
    }
}

fn rate_outcome(r: &RateReport) -> Outcome {
    let errors: Vec<String> = r.rows.iter().map(|row| format!("{:.3e}±{:.1e}", row.error, row.stderr)).collect();
    Outcome {
        pass: r.pass,
        detail: format!(
            "order {} (stderr {:.3}), window {}, errors {}, mean-square order {}{}",
            r.fit.map_or("n/a".into(), |f| format!("{:.3}", f.slope)),
            r.fit.map_or(f64::NAN, |f| f.stderr),
            window_text(r.window),
            errors.join(" "),
            r.mean_square_fit.map_or("n/a".into(), |f| format!("{:.3}", f.slope)),
            if r.flags.is_empty() { String::new() } else { format!(", flags {:?}", r.flags) }
        ),
    }
}

fn strong(name: &str) -> Result<Outcome> {
    let cfg = preset(name)?.study_config()?;
    Ok(rate_outcome(&strong_rate_study(&cfg)?))
}

fn weak_trace_class() -> Result<Outcome> {
    let cfg = preset("weak_trace_class.json")?.study_config()?;
    let obs = cfg.observable;
    Ok(rate_outcome(&weak_rate_study(&cfg, &|ops, x| obs.eval(ops, x))?))
}

fn equilibration() -> Result<Outcome> {
    let doc = preset("equilibrate.json")?;
    let cfg = doc.study_config()?;
    let ics = doc.study.initial_conditions.clone().unwrap_or(vec![InitialCondition::Zero]);
    let obs = cfg.observable;
    let r = equilibration_study(&cfg, &ics, &|ops, x| obs.eval(ops, x))?;
    let means: Vec<String> = r
        .series
        .iter()
        .map(|s| format!("{}: {:.6}±{:.1e}", s.label, s.window_mean, s.window_stderr))
        .collect();
    Ok(Outcome {
        pass: r.agreement == Some(true),
        detail: format!("window means {}, max pairwise z {:?}", means.join(", "), r.max_pairwise_z),
    })
}

fn smoothing() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["smoothing_temporal.json", "smoothing_spatial.json"] {
        let doc = preset(name)?;
        let r = smoothing_study(
            doc.problem.length,
            &doc.resolutions(),
            doc.study.horizon,
            doc.p(),
            doc.study.data_modes.unwrap_or(DEFAULT_DATA_MODES),
            doc.study.seed,
            doc.study.decay_time,
            doc.study.window,
        )?;
        pass &= r.pass;
        parts.push(format!(
            "{:?} order {} (window {}){}",
            r.fit_variable,
            r.fit.map_or("n/a".into(), |f| format!("{:.3}", f.slope)),
            window_text(r.window),
            r.decay.map_or(String::new(), |(t, early, late)| format!(
                ", error(t={t}) {late:.3e} vs error(t=1) {early:.3e}"
            ))
        ));
    }
    Ok(Outcome { pass, detail: parts.join("; ") })
}

fn spectrum() -> Result<Outcome> {
    let doc = preset("spectrum_check.json")?;
    let levels: Vec<u32> = doc.resolutions().iter().map(|r| r.level).collect();
    let c = spectrum_check(doc.problem.length, &levels, doc.study.slack.unwrap_or(1e-9))?;
    let lower = c.rows.iter().map(|r| r.lower_ratio).fold(f64::INFINITY, f64::min);
    let upper = c.rows.iter().map(|r| r.upper_ratio).fold(0.0, f64::max);
    let minmax = c.rows.iter().map(|r| r.minmax_ratio).fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        pass: c.pass,
        detail: format!("min λ/4j² {lower:.4}, max λ/3π²j² {upper:.4}, min λ/(jπ)² {minmax:.6} over levels {levels:?}"),
    })
}

fn taming() -> Result<Outcome> {
    let doc = preset("taming_check.json")?;
    let cfg = doc.study_config()?;
    let steps: Vec<(f64, f64)> = cfg
        .grid
        .iter()
        .map(|r| (r.tau(cfg.horizon), doc.problem.length / (1u64 << r.level) as f64))
        .collect();
    let c = taming_check(
        &cfg.problem.drift,
        &cfg.problem.taming,
        &steps,
        doc.study.u_max.unwrap_or(100.0),
        doc.study.u_step.unwrap_or(0.01),
    )?;
    let detail = c
        .rows
        .iter()
        .map(|r| {
            format!(
                "(τ={}, h={}): sign {}, domination {:.1e}, approximation {:.1e}, monotone {}/{}",
                r.report.tau,
                r.report.h,
                r.report.sign_violations,
                r.report.domination_margin,
                r.report.approximation_margin,
                r.monotone_tau_violations,
                r.monotone_h_violations
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome { pass: c.pass, detail: format!("{} points; {detail}", c.grid_points) })
}

fn moments() -> Result<Outcome> {
    let doc = preset("longtime.json")?;
    let cfg = doc.study_config()?;
    let r = moment_study(&cfg, doc.study.horizon_multiplier.unwrap_or(1.0))?;
    let detail = r
        .runs
        .iter()
        .map(|run| {
            let t = &run.trends;
            format!(
                "τ={}: slopes/stderr l2² {:.2}, l4⁴ {:.2}, seminorm² {:.2}, bounded {}",
                run.tau,
                t[0].slope / t[0].stderr,
                t[1].slope / t[1].stderr,
                t[2].slope / t[2].stderr,
                run.bounded
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome { pass: r.pass, detail })
}

fn oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0A11CE);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = common::random_instance(&mut rng);
        let mesh = Mesh1D::new(inst.length, inst.n)?;
        let ops = FemOperators::new(mesh.clone())?;
        let [alpha, theta, rho, beta1, beta2] = inst.taming;
        let params = TamingParams { alpha, theta, rho, beta1, beta2 };
        let poly = DriftPolynomial::new(inst.coeffs.clone(), 1)?;
        let cfg = SchemeConfig::new(ops, poly, params, inst.tau, inst.x.clone())?;
        let load = increment_load(&mesh, &SpectralIncrement { tau: inst.tau, coeffs: inst.noise.clone() });
        let state = SchemeState { m: 0, t: 0.0, x: inst.x.clone() };
        let got = step(&cfg, &state, &load)?.x;
        let want = common::dense_step(&inst, 1, 4);
        let scale = want.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let diff = got.iter().zip(&want).fold(0.0f64, |a, (g, w)| a.max((g - w).abs()));
        worst = worst.max(diff / scale);
    }
    Ok(Outcome { pass: worst <= 1e-10, detail: format!("worst relative deviation {worst:.2e} over 100 instances") })
}

fn determinism() -> Result<Outcome> {
    let mut same = true;
    let mut parts = Vec::new();
    for name in ["trace_class.json", "weak_trace_class.json", "equilibrate.json"] {
        let doc = preset(name)?;
        let mut tables = Vec::new();
        for workers in [1, 4] {
            let mut cfg = doc.study_config()?;
            cfg.samples = 24;
            cfg.workers = workers;
            let obs = cfg.observable;
            let phi = move |ops: &FemOperators, x: &[f64]| obs.eval(ops, x);
            let csv = match doc.study.kind {
                tamed_spde::config::Kind::StrongRate => output::rate_table(&strong_rate_study(&cfg)?)?,
                tamed_spde::config::Kind::WeakRate => output::rate_table(&weak_rate_study(&cfg, &phi)?)?,
                _ => {
                    let ics = doc.study.initial_conditions.clone().unwrap_or(vec![InitialCondition::Zero]);
                    output::equilibration_table(&equilibration_study(&cfg, &ics, &phi)?)?
                }
            }
            .to_string()?;
            tables.push(csv);
        }
        let equal = tables[0] == tables[1];
        same &= equal;
        parts.push(format!("{} {}", doc.study.kind.name(), if equal { "identical" } else { "DIFFERENT" }));
    }
    Ok(Outcome { pass: same, detail: format!("1 vs 4 workers: {}", parts.join(", ")) })
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Result<Outcome>)> = vec![
        ("strong temporal rate, trace-class noise", || strong("trace_class.json")),
        ("strong temporal rate, space-time white noise", || strong("white_noise.json")),
        ("weak temporal rate, trace-class noise", weak_trace_class),
        ("equilibration from three initial states", equilibration),
        ("smoothing bench on rough data", smoothing),
        ("discrete spectrum bounds", spectrum),
        ("taming property suite", taming),
        ("uniform-in-time moment witness", moments),
        ("single step against dense oracle", oracle),
        ("worker-count determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.1}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            name,
            detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
