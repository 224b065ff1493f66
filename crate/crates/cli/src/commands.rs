//! Command bodies. Each returns a table plus the diagnostics that go into
//! the manifest.

use spreadchan::estimation::{row_seed, rmse_sweep, ExperimentConfig, Inverter, Simulator, DEFAULT_ALPHA_MAX};
use spreadchan::fisher::{cfi_quadrature, self_projection_cfi, DerivativeOptions};
use spreadchan::measurement::{quadrature_moments_closed, FidelityRoute, SelfProjection, XGrid};
use spreadchan::states::{auto_dim, tail_dim};
use spreadchan::wigner::{wigner_grid, GridSpec};
use spreadchan::{build_state, PhaseDistribution, StateSpec};

use crate::output::{Cell, Table};
use crate::{Cli, Command, Common, Failure, McMode, Route};

pub struct Report {
    pub command: String,
    pub seed: Option<u64>,
    pub truncation: Vec<(String, usize, f64)>,
    pub notes: Vec<String>,
    pub table: Table,
    pub ambiguous: u64,
}

impl Report {
    fn new(command: &str, table: Table) -> Self {
        Report { command: command.into(), seed: None, truncation: Vec::new(), notes: Vec::new(), table, ambiguous: 0 }
    }
}

/// `start:step:stop` (inclusive) or a single number.
pub fn parse_range(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = |what: &str| Failure::usage(format!("--alpha '{text}': {what}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("'{s}' is not a number")));
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [single] => vec![num(single)?],
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if !(step > 0.0) || !(stop >= start) {
                return Err(bad("need step > 0 and stop >= start"));
            }
            let span = (stop - start) / step;
            let n = span.round();
            if (span - n).abs() > 1e-9 * span.max(1.0) {
                return Err(bad("step does not divide the range"));
            }
            if n > 1e6 {
                return Err(bad("too many points"));
            }
            let n = n as usize;
            (0..=n).map(|i| if i == n { stop } else { start + i as f64 * step }).collect()
        }
        _ => return Err(bad("expected start:step:stop or a single value")),
    };
    if values.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(bad("alpha must be finite and >= 0"));
    }
    Ok(values)
}

fn parse_states(texts: &[String]) -> Result<Vec<(String, StateSpec)>, Failure> {
    texts
        .iter()
        .map(|t| {
            t.parse::<StateSpec>()
                .map(|s| (t.clone(), s))
                .map_err(|e| Failure::usage(format!("--state '{t}': {e}")))
        })
        .collect()
}

fn parse_phases(common: &Common) -> Result<PhaseDistribution, Failure> {
    common.phases.parse().map_err(|e| Failure::usage(format!("--phases '{}': {e}", common.phases)))
}

fn resolve_dim(common: &Common, spec: &StateSpec, alpha_max: f64) -> Result<usize, Failure> {
    if common.dim == "auto" {
        return Ok(auto_dim(&[*spec], alpha_max));
    }
    common.dim.parse().map_err(|_| Failure::usage(format!("--dim '{}': expected 'auto' or an integer", common.dim)))
}

fn route(common: &Common) -> FidelityRoute {
    match common.route {
        Route::Auto => FidelityRoute::Auto,
        Route::Numeric => FidelityRoute::Numeric,
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().cloned().fold(0.0, f64::max)
}

fn seed(common: &Common) -> Result<u64, Failure> {
    match common.seed {
        Some(s) => Ok(s),
        None if common.strict => Err(Failure::usage("--seed is required with --strict")),
        None => Ok(0),
    }
}

pub fn execute(cli: &Cli) -> Result<Report, Failure> {
    let common = &cli.common;
    match &cli.command {
        Command::Fidelity { states, alpha, fixed_phi } => fidelity(common, states, alpha, *fixed_phi),
        Command::Cfi { states, alpha } => cfi(common, states, alpha),
        Command::Mc { mode } => match mode {
            McMode::Simulate { states, alpha, reps, trials } => mc_simulate(common, states, alpha, *reps, *trials),
            McMode::Overlap { states, alpha, reps } => mc_overlap(common, states, alpha, *reps),
            McMode::Rmse { states, alpha, reps, trials } => mc_rmse(common, states, alpha, *reps, *trials),
        },
        Command::Homodyne { r, alpha, angle, points } => homodyne(common, *r, alpha, *angle, *points),
        Command::Wigner { state, resolution, half_width } => wigner(common, state, *resolution, *half_width),
        Command::Replay { .. } => Err(Failure::usage("nested replay")),
    }
}

fn fidelity(common: &Common, states: &[String], alpha: &str, fixed_phi: Option<f64>) -> Result<Report, Failure> {
    let alphas = parse_range(alpha)?;
    let phases = match fixed_phi {
        Some(phi) => PhaseDistribution::point(phi),
        None => parse_phases(common)?,
    };
    let mut report = Report::new("fidelity", Table::new(&["alpha", "state", "fidelity"]));
    for (label, spec) in parse_states(states)? {
        let dim = resolve_dim(common, &spec, max_of(&alphas))?;
        let sp = SelfProjection::new(spec, dim)?;
        let mut leak = sp.probe().leakage();
        for &a in &alphas {
            let p0 = sp.p0_routed(a, &phases, route(common))?;
            leak = leak.max(p0.leakage);
            report.table.push(vec![a.into(), label.as_str().into(), p0.value.into()]);
        }
        report.truncation.push((label, dim, leak));
    }
    if fixed_phi.is_some() {
        report.notes.push("fixed displacement phase; --phases ignored".into());
    }
    Ok(report)
}

fn cfi(common: &Common, states: &[String], alpha: &str) -> Result<Report, Failure> {
    let alphas = parse_range(alpha)?;
    let phases = parse_phases(common)?;
    let mut report = Report::new("cfi", Table::new(&["alpha", "state", "cfi"]));
    for (label, spec) in parse_states(states)? {
        let dim = resolve_dim(common, &spec, max_of(&alphas))?;
        let sp = SelfProjection::new(spec, dim)?;
        let mut leak = sp.probe().leakage();
        for &a in &alphas {
            let value = if a == 0.0 {
                None
            } else {
                let f = self_projection_cfi(&sp, a, &phases, common.eps, route(common), DerivativeOptions::default())?;
                leak = leak.max(f.leakage);
                Some(f.value)
            };
            report.table.push(vec![a.into(), label.as_str().into(), value.into()]);
        }
        report.truncation.push((label, dim, leak));
    }
    if alphas.contains(&0.0) {
        report.notes.push("cfi is 0/0 at alpha = 0; left empty (use a small positive alpha for the limit)".into());
    }
    Ok(report)
}

fn mc_simulate(common: &Common, states: &[String], alpha: &str, reps: u64, trials: u64) -> Result<Report, Failure> {
    let alphas = parse_range(alpha)?;
    let phases = parse_phases(common)?;
    let seed = seed(common)?;
    let mut report = Report::new(
        "mc simulate",
        Table::new(&["state", "alpha", "trial", "m0", "m1", "alpha_hat", "crb_sigma", "ambiguous", "boundary"]),
    );
    report.seed = Some(seed);
    let mut row = 0;
    for (label, spec) in parse_states(states)? {
        let dim = resolve_dim(common, &spec, DEFAULT_ALPHA_MAX.max(max_of(&alphas)))?;
        let sp = SelfProjection::new(spec, dim)?;
        let inv = Inverter::new(&sp, &phases, common.eps, route(common), DEFAULT_ALPHA_MAX)?;
        for &a in &alphas {
            let mut config = ExperimentConfig::new(spec, phases.clone(), a, reps, row_seed(seed, row));
            config.dark_noise = common.eps;
            config.route = route(common);
            row += 1;
            let crb = if a == 0.0 {
                f64::INFINITY
            } else {
                let f = self_projection_cfi(&sp, a, &phases, common.eps, route(common), DerivativeOptions::default())?;
                1.0 / (reps as f64 * f.value).sqrt()
            };
            let sim = Simulator::new(config, &sp)?;
            for t in 0..trials {
                let (m0, m1, _) = sim.run(t);
                let est = inv.estimate(m0, m1)?;
                report.ambiguous += est.ambiguous as u64;
                report.table.push(vec![
                    label.as_str().into(),
                    a.into(),
                    t.into(),
                    m0.into(),
                    m1.into(),
                    est.alpha_hat.into(),
                    crb.into(),
                    est.ambiguous.into(),
                    est.boundary.into(),
                ]);
            }
        }
        report.truncation.push((label, dim, sp.displaced_leakage(DEFAULT_ALPHA_MAX)?));
    }
    Ok(report)
}

fn mc_overlap(common: &Common, states: &[String], alpha: &str, reps: u64) -> Result<Report, Failure> {
    let alphas = parse_range(alpha)?;
    let seed = seed(common)?;
    let mut report = Report::new("mc overlap", Table::new(&["state", "alpha", "mean", "rms"]));
    report.seed = Some(seed);
    for (i, (label, spec)) in parse_states(states)?.into_iter().enumerate() {
        let dim = resolve_dim(common, &spec, max_of(&alphas))?;
        let sp = SelfProjection::new(spec, dim)?;
        let rows = spreadchan::estimation::overlap_fluctuations(&sp, &alphas, reps, row_seed(seed, i), route(common))?;
        for r in rows {
            report.table.push(vec![label.as_str().into(), r.alpha.into(), r.mean.into(), r.rms.into()]);
        }
        report.truncation.push((label, dim, sp.probe().leakage()));
    }
    if common.phases != "uniform" {
        report.notes.push("overlap phases are drawn uniformly; --phases does not apply".into());
    }
    Ok(report)
}

fn mc_rmse(common: &Common, states: &[String], alpha: &str, reps: u64, trials: u64) -> Result<Report, Failure> {
    let alphas = parse_range(alpha)?;
    let phases = parse_phases(common)?;
    let seed = seed(common)?;
    let parsed = parse_states(states)?;
    let mut configs = Vec::new();
    for (_, spec) in &parsed {
        for &a in &alphas {
            let mut c = ExperimentConfig::new(*spec, phases.clone(), a, reps, seed);
            c.dark_noise = common.eps;
            c.route = route(common);
            configs.push(c);
        }
    }
    let rows = rmse_sweep(&configs, trials)?;
    let mut report = Report::new(
        "mc rmse",
        Table::new(&["state", "alpha", "repetitions", "trials", "rmse", "crb", "ratio", "ambiguous_trials", "row_seed"]),
    );
    report.seed = Some(seed);
    for (k, r) in rows.iter().enumerate() {
        let label = parsed[k / alphas.len()].0.as_str();
        report.ambiguous += r.ambiguous_trials;
        report.table.push(vec![
            label.into(),
            r.alpha.into(),
            r.repetitions.into(),
            r.trials.into(),
            r.rmse.into(),
            r.crb.into(),
            r.ratio.into(),
            r.ambiguous_trials.into(),
            r.seed.into(),
        ]);
    }
    for (label, spec) in parsed {
        report.truncation.push((label, auto_dim(&[spec], DEFAULT_ALPHA_MAX.max(max_of(&alphas))), 0.0));
    }
    if common.dim != "auto" {
        report.notes.push("rmse sizes its truncation automatically; --dim ignored".into());
    }
    Ok(report)
}

fn homodyne(common: &Common, r: f64, alpha: &str, angle: f64, points: Option<usize>) -> Result<Report, Failure> {
    let alphas = parse_range(alpha)?;
    let phases = parse_phases(common)?;
    let spec = StateSpec::Squeezed { r, theta: 0.0 };
    // A deep tail keeps truncation residue out of the density support.
    let mut dim = resolve_dim(common, &spec, max_of(&alphas))?;
    if common.dim == "auto" {
        dim = dim.max(tail_dim(&spec, 1e-24));
    }
    let sp = SelfProjection::new(spec, dim)?;
    let mut report = Report::new(
        "homodyne",
        Table::new(&["alpha", "cfi_quadrature", "cfi_self_projection", "var_estimate_closed"]),
    );
    for &a in &alphas {
        if a == 0.0 {
            report.table.push(vec![a.into(), Cell::Empty, Cell::Empty, Cell::Empty]);
            continue;
        }
        let mut grid = XGrid::for_probe(&spec, a);
        if let Some(p) = points {
            grid = XGrid::new(grid.half_width, p)?;
        }
        let cq = cfi_quadrature(sp.probe(), a, &phases, angle, &grid)?.value;
        let csp = self_projection_cfi(&sp, a, &phases, common.eps, route(common), DerivativeOptions::default())?.value;
        let var = quadrature_moments_closed(r, a)?.var_estimate;
        report.table.push(vec![a.into(), cq.into(), csp.into(), var.into()]);
    }
    report.truncation.push((spec.to_string(), dim, sp.probe().leakage()));
    if alphas.contains(&0.0) {
        report.notes.push("at alpha = 0 the Fisher informations are 0/0 and the closed variance divides by zero; row left empty".into());
    }
    if !phases.is_uniform() || angle != 0.0 {
        report.notes.push("var_estimate_closed assumes uniform phases and angle 0".into());
    }
    if common.eps > 0.0 {
        report.notes.push("eps applies to the self-projection column only".into());
    }
    Ok(report)
}

fn wigner(common: &Common, state: &str, resolution: usize, half_width: Option<f64>) -> Result<Report, Failure> {
    let (label, spec) = parse_states(&[state.to_string()])?.remove(0);
    let dim = resolve_dim(common, &spec, 0.0)?;
    let st = build_state(&spec, dim)?;
    let grid = wigner_grid(&st, &GridSpec { resolution, half_width })?;
    let mut report = Report::new("wigner", Table::new(&["x", "p", "w"]));
    for (i, &x) in grid.xs.iter().enumerate() {
        for (j, &p) in grid.ps.iter().enumerate() {
            report.table.push(vec![x.into(), p.into(), grid.at(i, j).into()]);
        }
    }
    report.truncation.push((label, dim, st.leakage()));
    report.notes.extend(grid.warning);
    Ok(report)
}
