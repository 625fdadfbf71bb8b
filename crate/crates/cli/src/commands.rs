//! One function per subcommand.

use std::fmt;
use std::str::FromStr;

use radpair::entropy::{audit_bounds, entropy_trace, gamma_scan, BoundsReport, Verdict};
use radpair::groenewold::{field_sweep, liouville_lifetimes_link, local_minima_in};
use radpair::integrator::IntegratorSettings;
use radpair::liouville::{build_superoperator, spectrum as liouville_spectrum};
use radpair::master::{coherence_measure, p_coh_with};
use radpair::{integrate, Error, MasterEquation, Projectors, TrajectoryRecord};

use crate::config::{ConfigError, InitialState, RunConfig};
use crate::output::{num, plot_path, Csv};
use crate::plot::line_chart;

pub const SIMULATE_COLUMNS: [&str; 10] =
    ["t", "trace", "q_S", "p_coh", "purity", "S_initial", "S_final", "H_qS", "r_S", "r_T"];
pub const BOUNDS_COLUMNS: [&str; 6] = ["t", "q_S", "S_initial", "S_final", "delta_S", "H_qS"];
pub const GAMMA_SCAN_COLUMNS: [&str; 7] = [
    "gamma",
    "haberkorn_ozawa",
    "haberkorn_lr",
    "haberkorn_max_violation",
    "kominis_ozawa",
    "kominis_lr",
    "kominis_max_violation",
];
pub const SWEEP_COLUMNS: [&str; 5] = ["B", "Y_S", "I_G", "C35", "slowest_lambda"];
pub const SPECTRUM_COLUMNS: [&str; 3] = ["m", "lambda", "omega"];

/// Window around `B = A` searched for the `I_G` dip.
pub const DIP_WINDOW: (f64, f64) = (0.8, 1.2);

#[derive(Debug)]
pub enum Failure {
    Config(String),
    /// Partial output has already been written.
    Breach(String),
    Expect(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Breach(_) => 3,
            Failure::Expect(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Breach(m) => write!(f, "invariant breach: {m}"),
            Failure::Expect(m) => write!(f, "expectation mismatch: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvariantBreach { t, detail, .. } => Failure::Breach(format!("t = {t}: {detail}")),
            Error::Eigensolver(_) => Failure::Other(e.into()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

pub type Outcome = Result<(), Failure>;

/// `--expect ozawa=violated|ok[,lr=violated|ok]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Expectation {
    pub ozawa: Option<Verdict>,
    pub lanford_robinson: Option<Verdict>,
}

fn parse_verdict(v: &str) -> Result<Verdict, ConfigError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "ok" => Ok(Verdict::Ok),
        "violated" => Ok(Verdict::Violated),
        _ => Err(ConfigError(format!("--expect: verdict '{v}' is neither ok nor violated"))),
    }
}

impl FromStr for Expectation {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let mut e = Expectation::default();
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("--expect: '{part}' is not bound=verdict")))?;
            let slot = match k.trim().to_ascii_lowercase().as_str() {
                "ozawa" => &mut e.ozawa,
                "lr" => &mut e.lanford_robinson,
                other => return Err(ConfigError(format!("--expect: unknown bound '{other}'"))),
            };
            *slot = Some(parse_verdict(v)?);
        }
        Ok(e)
    }
}

impl Expectation {
    fn check(&self, report: &BoundsReport) -> Outcome {
        let mut misses = Vec::new();
        for (name, want, got) in [
            ("ozawa", self.ozawa, report.ozawa),
            ("lr", self.lanford_robinson, report.lanford_robinson),
        ] {
            if let Some(want) = want.filter(|&w| w != got) {
                misses.push(format!("{name} expected {want}, got {got}"));
            }
        }
        if misses.is_empty() {
            Ok(())
        } else {
            Err(Failure::Expect(misses.join("; ")))
        }
    }
}

/// Runs the configured trajectory; a breach yields its partial record.
fn trajectory(cfg: &RunConfig, csv: &mut Csv) -> Result<(TrajectoryRecord, Option<String>, MasterEquation), Failure> {
    let sys = cfg.system()?;
    let measure = coherence_measure(&cfg.coherence)?;
    let eq = MasterEquation::new(&sys, cfg.params()?)?.with_coherence(measure);
    let rho0 = cfg.initial_state(&sys)?;
    let (t_max, dt) = cfg.time_grid()?;
    csv.meta("resolved t_max", &t_max.to_string());
    csv.meta("resolved dt", &dt.to_string());
    let settings = IntegratorSettings::new(t_max, dt).with_stride(cfg.stride);
    match integrate(&eq, &rho0, &settings) {
        Ok(rec) => Ok((rec, None, eq)),
        Err(Error::InvariantBreach { t, detail, partial }) => {
            Ok((*partial, Some(format!("t = {t}: {detail}")), eq))
        }
        Err(e) => Err(e.into()),
    }
}

fn finish_breach(cfg: &RunConfig, csv: &mut Csv, breach: Option<String>) -> Outcome {
    match breach {
        Some(msg) => {
            csv.comment(&format!("error: invariant breach at {msg}; output truncated"));
            csv.emit(cfg.out.as_deref())?;
            Err(Failure::Breach(msg))
        }
        None => {
            csv.emit(cfg.out.as_deref())?;
            Ok(())
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> Outcome {
    let mut csv = Csv::new("simulate", cfg);
    let (rec, breach, eq) = trajectory(cfg, &mut csv)?;
    let proj = Projectors::for_dimension(rec.dim)?;
    let trace = entropy_trace(&rec, cfg.theory)?;
    let snaps: Vec<_> = rec.snapshots.iter().filter(|s| s.trace() > 0.0).collect();
    if snaps.len() != trace.len() {
        return Err(Failure::Other(anyhow::anyhow!("entropy trace does not match the snapshots")));
    }
    csv.header(&SIMULATE_COLUMNS);
    for (i, snap) in snaps.into_iter().enumerate() {
        let p_coh = p_coh_with(eq.coherence_measure(), &snap.rho, &proj)?;
        csv.row(&[
            snap.t,
            snap.trace(),
            trace.q_singlet[i],
            p_coh,
            trace.purity[i],
            trace.s_initial[i],
            trace.s_final[i],
            trace.shannon[i],
            snap.r_singlet,
            snap.r_triplet,
        ]);
    }
    finish_breach(cfg, &mut csv, breach)
}

fn summary(r: &BoundsReport) -> String {
    format!(
        "OZAWA_{} LR_{} max_violation={} max_lr_excess={} saturation_gap={}",
        r.ozawa,
        r.lanford_robinson,
        num(r.max_violation),
        num(r.max_lr_excess),
        num(r.saturation_gap)
    )
}

pub fn bounds(cfg: &RunConfig, expect: Option<&Expectation>) -> Outcome {
    let mut csv = Csv::new("bounds", cfg);
    if let Some(e) = expect {
        let show = |v: Option<Verdict>| v.map_or("any".to_string(), |v| v.to_string());
        csv.meta("expect", &format!("ozawa={},lr={}", show(e.ozawa), show(e.lanford_robinson)));
    }
    let (rec, breach, _) = trajectory(cfg, &mut csv)?;
    let trace = entropy_trace(&rec, cfg.theory)?;
    csv.header(&BOUNDS_COLUMNS);
    for i in 0..trace.len() {
        csv.row(&[
            trace.times[i],
            trace.q_singlet[i],
            trace.s_initial[i],
            trace.s_final[i],
            trace.delta[i],
            trace.shannon[i],
        ]);
    }
    if breach.is_some() {
        return finish_breach(cfg, &mut csv, breach);
    }
    let report = audit_bounds(&rec, cfg.theory)?;
    let line = summary(&report);
    csv.comment(&format!("summary: {line}"));
    csv.emit(cfg.out.as_deref())?;
    eprintln!("{line}");
    match expect {
        Some(e) => e.check(&report),
        None => Ok(()),
    }
}

fn reject_custom_coherence(cfg: &RunConfig, command: &str) -> Outcome {
    if cfg.coherence != "trace-norm" {
        return Err(Failure::Config(format!(
            "{command} uses the trace-norm coherence; coherence = {} is only honoured by simulate and bounds",
            cfg.coherence
        )));
    }
    Ok(())
}

pub fn gamma_scan_cmd(cfg: &RunConfig) -> Outcome {
    reject_custom_coherence(cfg, "gamma-scan")?;
    if cfg.rho0 != InitialState::SingletUp {
        return Err(Failure::Config("gamma-scan starts every run from rho0 = SINGLET_UP".into()));
    }
    let mut csv = Csv::new("gamma-scan", cfg);
    let sys = cfg.system()?;
    let (t_max, dt) = cfg.time_grid()?;
    csv.meta("resolved t_max", &t_max.to_string());
    csv.meta("resolved dt", &dt.to_string());
    let settings = IntegratorSettings::new(t_max, dt).with_stride(cfg.stride);
    let rows = gamma_scan(&sys, &cfg.params()?, &cfg.gammas, &settings)?;
    csv.header(&GAMMA_SCAN_COLUMNS);
    for r in &rows {
        csv.fields(&[
            num(r.gamma),
            r.haberkorn.ozawa.to_string(),
            r.haberkorn.lanford_robinson.to_string(),
            num(r.haberkorn.max_violation),
            r.kominis.ozawa.to_string(),
            r.kominis.lanford_robinson.to_string(),
            num(r.kominis.max_violation),
        ]);
    }
    let first_ok = rows.iter().find(|r| r.haberkorn.ozawa.is_ok());
    csv.comment(&match first_ok {
        Some(r) => format!("haberkorn satisfies Ozawa from gamma = {}", num(r.gamma)),
        None => "haberkorn violates Ozawa at every gamma".to_string(),
    });
    csv.emit(cfg.out.as_deref())?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Outcome {
    reject_custom_coherence(cfg, "sweep")?;
    if cfg.rho0 != InitialState::SingletUp {
        return Err(Failure::Config("sweep starts every run from rho0 = SINGLET_UP".into()));
    }
    let mut csv = Csv::new("sweep", cfg);
    let template = cfg.system()?;
    let params = cfg.params()?;
    let settings = cfg.sweep_settings()?;
    csv.meta("resolved t_max", &settings.t_max.to_string());
    csv.meta("resolved dt", &settings.dt.to_string());
    let fields = cfg.b_grid.points();
    let result = field_sweep(&template, &params, &fields, &settings)?;
    let lifetimes = liouville_lifetimes_link(&template, params.k_singlet, params.k_triplet, &fields)?;

    csv.header(&SWEEP_COLUMNS);
    for (p, l) in result.points.iter().zip(&lifetimes) {
        csv.row(&[p.b, p.y_singlet, p.groenewold, p.c35, l.slowest.unwrap_or(f64::NAN)]);
    }
    for w in &result.warnings {
        csv.comment(&format!("warning: {w}"));
        eprintln!("warning: {w}");
    }
    let ig = result.groenewold();
    let dips = local_minima_in(&fields, &ig, DIP_WINDOW.0, DIP_WINDOW.1);
    let dip = if dips.is_empty() {
        format!("dip: none in [{}, {}]", DIP_WINDOW.0, DIP_WINDOW.1)
    } else {
        let at: Vec<String> = dips.iter().map(|&i| num(fields[i])).collect();
        format!("dip: I_G local minimum at B = {}", at.join(","))
    };
    csv.comment(&dip);
    csv.emit(cfg.out.as_deref())?;
    eprintln!("{dip}");

    if fields.len() > 1 {
        let slowest: Vec<f64> = lifetimes.iter().map(|l| l.slowest.unwrap_or(f64::NAN)).collect();
        let series: [(&str, &str, Vec<f64>); 4] = [
            ("Y_S", "singlet yield Y_S", result.singlet_yield()),
            ("I_G", "Groenewold information I_G (nat)", ig),
            ("C35", "rho_35 yield", result.c35()),
            ("slowest_lambda", "slowest decay rate (A)", slowest),
        ];
        for (name, label, ys) in series {
            match plot_path(cfg, name) {
                Some(path) => {
                    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                        std::fs::create_dir_all(dir)?;
                    }
                    line_chart(&path, name, "B (A)", label, &fields, &ys).map_err(Failure::Other)?
                }
                None => {
                    eprintln!("note: no out or plot_dir set, SVG charts skipped");
                    break;
                }
            }
        }
    }
    Ok(())
}

pub fn spectrum(cfg: &RunConfig) -> Outcome {
    let mut csv = Csv::new("spectrum", cfg);
    let sys = cfg.system()?;
    let sup = build_superoperator(&sys, cfg.k_singlet, cfg.k_triplet)?;
    let eig = liouville_spectrum(&sup)?;
    csv.meta("condition", &num(eig.condition));
    csv.meta("ill_conditioned", &eig.is_ill_conditioned().to_string());
    csv.header(&SPECTRUM_COLUMNS);
    for (m, mode) in eig.modes.iter().enumerate() {
        csv.fields(&[(m + 1).to_string(), num(mode.lambda), num(mode.omega)]);
    }
    csv.emit(cfg.out.as_deref())?;
    Ok(())
}
