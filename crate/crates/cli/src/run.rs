//! Dispatch from a validated configuration to the solvers.

use mfgraph::flow::{integrate_forward, integrate_generalized, integrate_onsager};
use mfgraph::master::{interior_grid, reduced_master_grid};
use mfgraph::mfg::{euler_lagrange_residual, solve_mfg_fixedpoint_capped, solve_potential_convex};
use mfgraph::twopoint::{reduce, solve_planning, solve_potential_game, wasserstein_alpha};
use mfgraph::{Activation, Density, Error, MasterOptions, MfgSolution, ReducedTrajectory};
use serde_json::{json, Value};

use crate::config::{Command, FlowForm, Method, RunConfig, SchemaError, TerminalSpec, TwoPointMode};
use crate::output::{indexed, validate_summary, Artifacts, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;
pub const EXIT_DOMAIN: i32 = 4;

/// Why a run stopped early.
#[derive(Debug)]
pub enum Failure {
    Config(Vec<SchemaError>),
    Solver(Error),
    Io(std::io::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Solver(e) if e.is_non_convergence() => EXIT_NON_CONVERGENCE,
            Failure::Solver(_) | Failure::Io(_) => EXIT_DOMAIN,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Failure::Config(errors) => json!({
                "kind": "schema",
                "exit_code": self.exit_code(),
                "errors": errors.iter().map(SchemaError::to_json).collect::<Vec<_>>(),
            }),
            Failure::Solver(e) => json!({
                "kind": if e.is_non_convergence() { "non_convergence" } else { "numeric_domain" },
                "exit_code": self.exit_code(),
                "message": e.to_string(),
            }),
            Failure::Io(e) => json!({ "kind": "io", "exit_code": self.exit_code(), "message": e.to_string() }),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

/// Writes the error artifact and returns the matching exit code.
pub fn report(failure: &Failure, out: &Artifacts, quiet: bool) -> i32 {
    if out.error(&failure.to_json()).is_err() && !quiet {
        eprintln!("could not write {}", out.path("error.json").display());
    }
    match failure {
        Failure::Config(errors) => {
            for e in errors {
                eprintln!("config error at {e}");
            }
        }
        Failure::Solver(e) => eprintln!("solver error: {e}"),
        Failure::Io(e) => eprintln!("io error: {e}"),
    }
    failure.exit_code()
}

/// Runs the configured command and returns the process exit code.
pub fn run(config: &RunConfig) -> i32 {
    let out = Artifacts::new(&config.output.dir, &config.output.stem);
    match dispatch(config, &out) {
        Ok(code) => code,
        Err(f) => report(&f, &out, config.quiet),
    }
}

fn dispatch(config: &RunConfig, out: &Artifacts) -> Result<i32, Failure> {
    let (table, summary, code) = match config.command {
        Command::Validate => validate(config)?,
        Command::Flow => flow(config)?,
        Command::Wasserstein => wasserstein(config)?,
        Command::Mfg => mfg(config)?,
        Command::TwoPoint => twopoint(config)?,
        Command::Master => master(config)?,
    };
    debug_assert!(validate_summary(config.command, &summary).is_empty());
    out.csv(&table)?;
    out.summary(&summary)?;
    if code != EXIT_OK {
        let failure = json!({
            "kind": "non_convergence",
            "exit_code": code,
            "message": "solver stopped before meeting its tolerance; outputs hold the last iterate",
            "residuals": summary["residuals"],
        });
        out.error(&failure)?;
    }
    if !config.quiet {
        println!("{}", serde_json::to_string(&summary).expect("JSON values serialize"));
    }
    Ok(code)
}

type Outcome = (Table, Value, i32);

fn validate(config: &RunConfig) -> Result<Outcome, Failure> {
    let g = config.problem.graph()?;
    let n = g.n();
    let omega: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { g.omega(i, j) }).collect()).collect();
    let mut table = Table::new(vec!["i".into(), "j".into(), "omega".into(), "sqrt_omega".into()]);
    for e in g.edges() {
        table.push(&[(e.i + 1) as f64, (e.j + 1) as f64, g.omega(e.i, e.j), g.omega(e.i, e.j).sqrt()]);
    }
    let summary = json!({
        "command": "validate",
        "n": n,
        "pi": g.pi(),
        "omega": omega,
        "spectral_gap": g.spectral_gap(),
    });
    Ok((table, summary, EXIT_OK))
}

fn flow(config: &RunConfig) -> Result<Outcome, Failure> {
    let g = config.problem.graph()?;
    let a = Activation::of_kind(config.problem.activation);
    let p0 = Density::new(config.problem.initial.clone().expect("validated"))?;
    let phi = a.phi().ok_or_else(|| Error::InvalidArgument("activation carries no generator".into()))?;
    let (t_end, dt) = (config.numerics.t_end.expect("validated"), config.numerics.dt);
    let (traj, form) = match config.numerics.flow_form {
        FlowForm::Raw => (integrate_forward(&g, phi, &p0, t_end, dt)?, "raw"),
        FlowForm::Onsager => (integrate_onsager(&g, &a, phi, &p0, t_end, dt)?, "onsager"),
        FlowForm::Generalized => {
            let psi = a.psi_star().ok_or_else(|| Error::InvalidArgument("activation carries no dissipation".into()))?;
            (integrate_generalized(&g, &a, phi, psi, &p0, t_end, dt)?, "generalized")
        }
    };
    let n = g.n();
    let mut header = vec!["t".to_string()];
    header.extend(indexed("p", n));
    header.push("dissipation".into());
    let mut table = Table::new(header);
    for ((t, p), d) in traj.times.iter().zip(&traj.densities).zip(&traj.dissipation) {
        let mut row = vec![*t];
        row.extend(p);
        row.push(*d);
        table.push(&row);
    }
    let distance = traj.last().iter().zip(g.pi()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let summary = json!({
        "command": "flow",
        "form": form,
        "steps": traj.times.len() - 1,
        "t_end": traj.times.last(),
        "final": traj.last(),
        "dissipation_final": traj.dissipation.last(),
        "distance_to_equilibrium": distance,
    });
    Ok((table, summary, EXIT_OK))
}

fn target(config: &RunConfig) -> f64 {
    match &config.problem.terminal {
        TerminalSpec::Pinned(p) => p[0],
        TerminalSpec::Payoff(_) => unreachable!("validated: pinned terminal"),
    }
}

fn wasserstein(config: &RunConfig) -> Result<Outcome, Failure> {
    let tp = reduce(&config.problem.mfg()?)?;
    let p0 = config.problem.initial.as_ref().expect("validated")[0];
    let p1 = target(config);
    let alpha = config.problem.alpha;
    let w = wasserstein_alpha(&tp, p0, p1, alpha)?;
    let mut table = Table::new(vec!["p0".into(), "p1".into(), "alpha".into(), "W_alpha".into()]);
    table.push(&[p0, p1, alpha, w]);
    let summary = json!({ "command": "wasserstein", "alpha": alpha, "p0": p0, "p1": p1, "W_alpha": w });
    Ok((table, summary, EXIT_OK))
}

fn trajectory_table(tr: &ReducedTrajectory) -> Table {
    let mut table = Table::new(vec!["s".into(), "x".into(), "y".into(), "hamiltonian".into()]);
    for k in 0..tr.len() {
        table.push(&[tr.times[k], tr.x[k], tr.y[k], tr.hamiltonian[k]]);
    }
    table
}

fn twopoint(config: &RunConfig) -> Result<Outcome, Failure> {
    let prob = config.problem.mfg()?;
    let tp = reduce(&prob)?;
    let p0 = prob.initial()[0];
    let (t0, t_end) = prob.horizon();
    let alpha = config.problem.alpha;
    let tol = config.numerics.tol;
    let (mode, x_t, h0, w, iterations, tr) = match config.numerics.mode {
        TwoPointMode::Wasserstein => {
            let p1 = target(config);
            let w = wasserstein_alpha(&tp, p0, p1, alpha)?;
            let (e, tr) = solve_planning(&tp, p0, p1, 1.0, tol)?;
            ("wasserstein", p1, e, Some(w), 0, tr)
        }
        TwoPointMode::Planning => {
            let p1 = target(config);
            let w = wasserstein_alpha(&tp, p0, p1, alpha)?;
            let (e, tr) = solve_planning(&tp, p0, p1, t_end - t0, tol)?;
            ("planning", p1, e, Some(w), 0, tr)
        }
        TwoPointMode::Game => {
            let sol = solve_potential_game(&tp, p0, t_end - t0, tol)?;
            let w = if sol.x_t == p0 { Some(0.0) } else { wasserstein_alpha(&tp, p0, sol.x_t, alpha).ok() };
            ("game", sol.x_t, sol.h0, w, sol.iterations, sol.trajectory)
        }
    };
    let summary = json!({
        "command": "twopoint",
        "mode": mode,
        "x_T": x_t,
        "H0": h0,
        "W_alpha": w,
        "iterations": iterations,
    });
    Ok((trajectory_table(&tr), summary, EXIT_OK))
}

fn mfg(config: &RunConfig) -> Result<Outcome, Failure> {
    let prob = config.problem.mfg()?;
    let num = &config.numerics;
    let (sol, code) = match num.method {
        Method::Convex => (solve_potential_convex(&prob, num.n_t, num.tol)?, EXIT_OK),
        Method::FixedPoint => match solve_mfg_fixedpoint_capped(&prob, num.n_t, num.damping, num.tol, num.max_sweeps) {
            Ok(sol) => (sol, EXIT_OK),
            Err(Error::NonConvergence { partial: Some(sol), .. }) => (*sol, EXIT_NON_CONVERGENCE),
            Err(e) => return Err(e.into()),
        },
    };
    Ok((solution_table(&sol, prob.graph().n()), mfg_summary(&prob, &sol), code))
}

fn solution_table(sol: &MfgSolution, n: usize) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend(indexed("p", n));
    header.extend(indexed("phi", n));
    header.push("hamiltonian".into());
    let mut table = Table::new(header);
    for k in 0..sol.times.len() {
        let mut row = vec![sol.times[k]];
        row.extend(&sol.p[k]);
        row.extend(&sol.phi[k]);
        row.push(sol.hamiltonian_trace.as_ref().map_or(f64::NAN, |h| h[k]));
        table.push(&row);
    }
    table
}

fn mfg_summary(prob: &mfgraph::MfgProblem, sol: &MfgSolution) -> Value {
    let (continuity, adjoint) = euler_lagrange_residual(prob, sol);
    let d = &sol.diagnostics;
    json!({
        "command": "mfg",
        "solver": d.solver,
        "value": sol.value,
        "residuals": { "solver": d.residual, "continuity": continuity, "adjoint": adjoint },
        "iterations": d.iterations,
        "converged": d.converged,
    })
}

fn master(config: &RunConfig) -> Result<Outcome, Failure> {
    let prob = config.problem.mfg()?;
    let tp = reduce(&prob)?;
    let num = &config.numerics;
    let (t0, t_end) = prob.horizon();
    let x_grid = interior_grid(num.grid_x);
    let t_grid: Vec<f64> = (0..num.grid_t)
        .map(|k| if k + 1 == num.grid_t { t_end } else { t0 + (t_end - t0) * k as f64 / (num.grid_t - 1) as f64 })
        .collect();
    let opts = MasterOptions { tol: num.tol, lift_steps: num.n_t, check_ambiguity: num.check_ambiguity };
    let field = reduced_master_grid(&tp, &x_grid, &t_grid, &opts)?;
    let mut table = Table::new(vec!["t".into(), "x".into(), "w".into()]);
    for (it, t) in field.t.iter().enumerate() {
        for (ix, x) in field.x.iter().enumerate() {
            table.push(&[*t, *x, field.w[it][ix].unwrap_or(f64::NAN)]);
        }
    }
    let residual = if field.is_complete() { field.residual(&tp).ok() } else { None };
    let failures: Vec<Value> = field
        .failures
        .iter()
        .map(|f| json!({ "t_index": f.t_index, "x_index": f.x_index, "t": field.t[f.t_index], "x": field.x[f.x_index], "reason": f.reason }))
        .collect();
    let ambiguous: Vec<Value> = field.ambiguous.iter().map(|&(it, ix)| json!({ "t_index": it, "x_index": ix })).collect();
    let summary = json!({
        "command": "master",
        "n_x": field.x.len(),
        "n_t": field.t.len(),
        "residual": residual,
        "complete": field.is_complete(),
        "failures": failures,
        "ambiguous": ambiguous,
    });
    Ok((table, summary, EXIT_OK))
}
