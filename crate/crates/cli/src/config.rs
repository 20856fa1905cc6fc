//! Run configuration: JSON parsing and schema validation.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use mfgraph::{
    Activation, ActivationKind, Coupling, DMatrix, Density, LagrangianPair, MarkovGraph, MfgProblem, QuadraticCoupling,
    TabulatedCoupling, Terminal, ZeroCoupling,
};
use serde_json::{json, Map, Value};

/// One schema violation, located by a JSON pointer into the config.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub pointer: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError { pointer: pointer.into(), message: message.into() }
    }

    pub fn to_json(&self) -> Value {
        json!({ "pointer": self.pointer, "message": self.message })
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Flow,
    Wasserstein,
    Mfg,
    TwoPoint,
    Master,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Flow => "flow",
            Command::Wasserstein => "wasserstein",
            Command::Mfg => "mfg",
            Command::TwoPoint => "twopoint",
            Command::Master => "master",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Command::Validate, Command::Flow, Command::Wasserstein, Command::Mfg, Command::TwoPoint, Command::Master]
            .into_iter()
            .find(|c| c.name() == s)
    }

    fn needs_horizon(self) -> bool {
        matches!(self, Command::Mfg | Command::TwoPoint | Command::Master)
    }

    fn needs_initial(self) -> bool {
        matches!(self, Command::Flow | Command::Wasserstein | Command::Mfg | Command::TwoPoint)
    }

    fn two_state_only(self) -> bool {
        matches!(self, Command::Wasserstein | Command::TwoPoint | Command::Master)
    }
}

#[derive(Debug, Clone)]
pub enum Chain {
    Rates(DMatrix<f64>),
    Weights { omega: DMatrix<f64>, pi: Vec<f64> },
}

#[derive(Debug, Clone)]
pub enum CouplingSpec {
    Zero,
    Quadratic { w: DMatrix<f64>, b: Option<Vec<f64>> },
    /// `F_1 - F_2` tabulated against `p_1` for two-state problems.
    Table { x: Vec<f64>, d: Vec<f64> },
}

impl CouplingSpec {
    pub fn is_potential(&self) -> bool {
        match self {
            CouplingSpec::Quadratic { w, .. } => is_symmetric(w),
            _ => true,
        }
    }

    pub fn build(&self) -> mfgraph::Result<Arc<dyn Coupling>> {
        Ok(match self {
            CouplingSpec::Zero => Arc::new(ZeroCoupling),
            CouplingSpec::Quadratic { w, b } => Arc::new(QuadraticCoupling::new(w.clone(), b.clone())?),
            CouplingSpec::Table { x, d } => Arc::new(TabulatedCoupling::new(x.clone(), d.clone())?),
        })
    }
}

#[derive(Debug, Clone)]
pub enum TerminalSpec {
    Payoff(CouplingSpec),
    Pinned(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub chain: Chain,
    pub activation: ActivationKind,
    pub alpha: f64,
    pub potential: CouplingSpec,
    pub terminal: TerminalSpec,
    pub horizon: Option<(f64, f64)>,
    pub initial: Option<Vec<f64>>,
}

impl ProblemSpec {
    pub fn graph(&self) -> mfgraph::Result<MarkovGraph> {
        match &self.chain {
            Chain::Rates(q) => MarkovGraph::from_rates(q.clone()),
            Chain::Weights { omega, pi } => MarkovGraph::from_weights(omega, pi),
        }
    }

    pub fn states(&self) -> usize {
        match &self.chain {
            Chain::Rates(q) => q.nrows(),
            Chain::Weights { omega, .. } => omega.nrows(),
        }
    }

    /// The full game; a missing initial density defaults to uniform.
    pub fn mfg(&self) -> mfgraph::Result<MfgProblem> {
        let n = self.states();
        let terminal = match &self.terminal {
            TerminalSpec::Payoff(c) => Terminal::Payoff(c.build()?),
            TerminalSpec::Pinned(p) => Terminal::Pinned(Density::new(p.clone())?),
        };
        let initial = match &self.initial {
            Some(p) => Density::new(p.clone())?,
            None => Density::uniform(n),
        };
        MfgProblem::new(
            self.graph()?,
            Activation::of_kind(self.activation),
            LagrangianPair::power(self.alpha)?,
            self.potential.build()?,
            terminal,
            self.horizon.unwrap_or((0.0, 1.0)),
            initial,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Convex,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowForm {
    Raw,
    Onsager,
    Generalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoPointMode {
    Wasserstein,
    Planning,
    Game,
}

#[derive(Debug, Clone)]
pub struct Numerics {
    pub n_t: usize,
    pub dt: f64,
    pub t_end: Option<f64>,
    pub tol: f64,
    pub damping: f64,
    pub max_sweeps: usize,
    pub method: Method,
    pub flow_form: FlowForm,
    pub mode: TwoPointMode,
    pub grid_x: usize,
    pub grid_t: usize,
    pub check_ambiguity: bool,
}

#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub stem: String,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub problem: ProblemSpec,
    pub numerics: Numerics,
    pub output: OutputSpec,
    pub quiet: bool,
}

fn is_symmetric(w: &DMatrix<f64>) -> bool {
    let n = w.nrows();
    (0..n).all(|i| (0..n).all(|j| (w[(i, j)] - w[(j, i)]).abs() <= 1e-12 * (1.0 + w[(i, j)].abs())))
}

/// Collects errors while walking the document.
struct Walker {
    errors: Vec<SchemaError>,
}

impl Walker {
    fn fail(&mut self, pointer: &str, message: impl Into<String>) {
        self.errors.push(SchemaError::new(pointer, message));
    }

    fn object<'a>(&mut self, v: &'a Value, pointer: &str) -> Option<&'a Map<String, Value>> {
        match v.as_object() {
            Some(m) => Some(m),
            None => {
                self.fail(pointer, "expected an object");
                None
            }
        }
    }

    fn number(&mut self, v: &Value, pointer: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(pointer, "expected a finite number");
                None
            }
        }
    }

    fn positive(&mut self, v: &Value, pointer: &str) -> Option<f64> {
        let x = self.number(v, pointer)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.fail(pointer, "must be positive");
            None
        }
    }

    fn count(&mut self, v: &Value, pointer: &str, min: u64) -> Option<usize> {
        match v.as_u64() {
            Some(k) if k >= min => Some(k as usize),
            _ => {
                self.fail(pointer, format!("expected an integer >= {min}"));
                None
            }
        }
    }

    fn string<'a>(&mut self, v: &'a Value, pointer: &str) -> Option<&'a str> {
        match v.as_str() {
            Some(s) => Some(s),
            None => {
                self.fail(pointer, "expected a string");
                None
            }
        }
    }

    fn vector(&mut self, v: &Value, pointer: &str) -> Option<Vec<f64>> {
        let Some(items) = v.as_array() else {
            self.fail(pointer, "expected an array of numbers");
            return None;
        };
        let before = self.errors.len();
        let out: Vec<f64> =
            items.iter().enumerate().filter_map(|(k, x)| self.number(x, &format!("{pointer}/{k}"))).collect();
        (self.errors.len() == before).then_some(out)
    }

    fn square(&mut self, v: &Value, pointer: &str) -> Option<DMatrix<f64>> {
        let Some(rows) = v.as_array() else {
            self.fail(pointer, "expected an array of rows");
            return None;
        };
        let n = rows.len();
        if n == 0 {
            self.fail(pointer, "matrix is empty");
            return None;
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            let row_ptr = format!("{pointer}/{i}");
            let r = self.vector(row, &row_ptr)?;
            if r.len() != n {
                self.fail(&row_ptr, format!("row has {} entries, expected {n}", r.len()));
                return None;
            }
            data.extend(r);
        }
        Some(DMatrix::from_row_slice(n, n, &data))
    }

    fn coupling(&mut self, v: &Value, pointer: &str, n: usize) -> Option<CouplingSpec> {
        let obj = self.object(v, pointer)?;
        let form = match obj.get("form") {
            Some(f) => self.string(f, &format!("{pointer}/form"))?,
            None => {
                self.fail(&format!("{pointer}/form"), "missing required field");
                return None;
            }
        };
        match form {
            "zero" => Some(CouplingSpec::Zero),
            "quadratic_W" => {
                let w_ptr = format!("{pointer}/W");
                let w = match obj.get("W") {
                    Some(w) => self.square(w, &w_ptr)?,
                    None => {
                        self.fail(&w_ptr, "missing required field");
                        return None;
                    }
                };
                if w.nrows() != n {
                    self.fail(&w_ptr, format!("W is {0}x{0}, expected {n}x{n}", w.nrows()));
                    return None;
                }
                let b = match obj.get("b") {
                    Some(b) => {
                        let b_ptr = format!("{pointer}/b");
                        let b = self.vector(b, &b_ptr)?;
                        if b.len() != n {
                            self.fail(&b_ptr, format!("expected {n} entries"));
                            return None;
                        }
                        Some(b)
                    }
                    None => None,
                };
                Some(CouplingSpec::Quadratic { w, b })
            }
            "custom_table" => {
                if n != 2 {
                    self.fail(&format!("{pointer}/form"), "custom_table is defined for two-state problems only");
                    return None;
                }
                let x = self.vector(obj.get("x").unwrap_or(&Value::Null), &format!("{pointer}/x"))?;
                let d = self.vector(obj.get("d").unwrap_or(&Value::Null), &format!("{pointer}/d"))?;
                if let Err(e) = TabulatedCoupling::new(x.clone(), d.clone()) {
                    self.fail(pointer, e.to_string());
                    return None;
                }
                Some(CouplingSpec::Table { x, d })
            }
            other => {
                self.fail(&format!("{pointer}/form"), format!("unknown form `{other}`"));
                None
            }
        }
    }

    fn terminal(&mut self, v: &Value, pointer: &str, n: usize) -> Option<TerminalSpec> {
        let obj = self.object(v, pointer)?;
        if obj.get("form").and_then(Value::as_str) == Some("pinned") {
            let d_ptr = format!("{pointer}/density");
            let p = self.vector(obj.get("density").unwrap_or(&Value::Null), &d_ptr)?;
            if p.len() != n {
                self.fail(&d_ptr, format!("expected {n} entries"));
                return None;
            }
            return Some(TerminalSpec::Pinned(p));
        }
        self.coupling(v, pointer, n).map(TerminalSpec::Payoff)
    }
}

fn chain(w: &mut Walker, problem: &Map<String, Value>) -> Option<Chain> {
    match (problem.get("q_matrix"), problem.get("weights")) {
        (Some(q), None) => {
            let q = w.square(q, "/problem/q_matrix")?;
            if let Err(e) = MarkovGraph::from_rates(q.clone()) {
                w.fail("/problem/q_matrix", e.to_string());
                return None;
            }
            Some(Chain::Rates(q))
        }
        (None, Some(omega)) => {
            let omega = w.square(omega, "/problem/weights")?;
            let Some(pi) = problem.get("pi") else {
                w.fail("/problem/pi", "weights require an invariant measure");
                return None;
            };
            let pi = w.vector(pi, "/problem/pi")?;
            if let Err(e) = MarkovGraph::from_weights(&omega, &pi) {
                w.fail("/problem/weights", e.to_string());
                return None;
            }
            Some(Chain::Weights { omega, pi })
        }
        (Some(_), Some(_)) => {
            w.fail("/problem", "give either q_matrix or weights with pi, not both");
            None
        }
        (None, None) => {
            w.fail("/problem/q_matrix", "missing chain: give q_matrix or weights with pi");
            None
        }
    }
}

fn problem(w: &mut Walker, v: &Value, command: Command) -> Option<ProblemSpec> {
    let obj = w.object(v, "/problem")?;
    let chain = chain(w, obj)?;
    let n = match &chain {
        Chain::Rates(q) => q.nrows(),
        Chain::Weights { omega, .. } => omega.nrows(),
    };
    if let Some(s) = obj.get("states") {
        if let Some(k) = w.count(s, "/problem/states", 2) {
            if k != n {
                w.fail("/problem/states", format!("chain has {n} states, config says {k}"));
            }
        }
    }
    if command.two_state_only() && n != 2 {
        w.fail("/problem", format!("command `{}` needs a two-state chain, got {n} states", command.name()));
    }

    let activation = match obj.get("activation") {
        None => ActivationKind::LogMean,
        Some(a) => {
            let a = w.object(a, "/problem/activation")?;
            let kind = w.string(a.get("kind").unwrap_or(&Value::Null), "/problem/activation/kind")?;
            match kind.parse::<ActivationKind>() {
                Ok(k) => k,
                Err(e) => {
                    w.fail("/problem/activation/kind", e.to_string());
                    return None;
                }
            }
        }
    };

    let alpha = match obj.get("lagrangian") {
        None => 2.0,
        Some(l) => {
            let l = w.object(l, "/problem/lagrangian")?;
            if let Some(t) = l.get("type") {
                if w.string(t, "/problem/lagrangian/type") != Some("power") {
                    w.fail("/problem/lagrangian/type", "only `power` is supported");
                }
            }
            let alpha = w.number(l.get("alpha").unwrap_or(&Value::Null), "/problem/lagrangian/alpha")?;
            if alpha <= 1.0 {
                w.fail("/problem/lagrangian/alpha", "alpha must exceed 1");
                return None;
            }
            alpha
        }
    };

    let potential = match obj.get("potential") {
        None => CouplingSpec::Zero,
        Some(p) => w.coupling(p, "/problem/potential", n)?,
    };
    let terminal = match obj.get("terminal") {
        None => TerminalSpec::Payoff(CouplingSpec::Zero),
        Some(t) => w.terminal(t, "/problem/terminal", n)?,
    };

    let horizon = match obj.get("horizon") {
        None => {
            if command.needs_horizon() {
                w.fail("/problem/horizon", format!("missing required field for command `{}`", command.name()));
            }
            None
        }
        Some(h) => {
            let h = w.vector(h, "/problem/horizon")?;
            if h.len() != 2 || h[0] >= h[1] {
                w.fail("/problem/horizon", "expected [t0, T] with t0 < T");
                return None;
            }
            Some((h[0], h[1]))
        }
    };

    let initial = match obj.get("initial") {
        None => {
            if command.needs_initial() {
                w.fail("/problem/initial", format!("missing required field for command `{}`", command.name()));
            }
            None
        }
        Some(p) => {
            let p = w.vector(p, "/problem/initial")?;
            if p.len() != n {
                w.fail("/problem/initial", format!("expected {n} entries"));
                return None;
            }
            if let Err(e) = Density::new(p.clone()) {
                w.fail("/problem/initial", e.to_string());
                return None;
            }
            Some(p)
        }
    };

    Some(ProblemSpec { chain, activation, alpha, potential, terminal, horizon, initial })
}

fn numerics(w: &mut Walker, v: Option<&Value>, potential: bool) -> Option<Numerics> {
    let empty = Map::new();
    let obj = match v {
        Some(v) => w.object(v, "/numerics")?,
        None => &empty,
    };
    let mut out = Numerics {
        n_t: 128,
        dt: 1e-3,
        t_end: None,
        tol: 1e-10,
        damping: 0.5,
        max_sweeps: 10_000,
        method: if potential { Method::Convex } else { Method::FixedPoint },
        flow_form: FlowForm::Onsager,
        mode: TwoPointMode::Wasserstein,
        grid_x: 41,
        grid_t: 41,
        check_ambiguity: false,
    };
    let before = w.errors.len();
    for (key, val) in obj {
        let ptr = format!("/numerics/{key}");
        match key.as_str() {
            "n_t" => out.n_t = w.count(val, &ptr, 2).unwrap_or(out.n_t),
            "dt" => out.dt = w.positive(val, &ptr).unwrap_or(out.dt),
            "t_end" => out.t_end = w.positive(val, &ptr),
            "tol" => out.tol = w.positive(val, &ptr).unwrap_or(out.tol),
            "damping" => {
                if let Some(d) = w.positive(val, &ptr) {
                    if d > 1.0 {
                        w.fail(&ptr, "damping must lie in (0, 1]");
                    }
                    out.damping = d;
                }
            }
            "max_sweeps" => out.max_sweeps = w.count(val, &ptr, 1).unwrap_or(out.max_sweeps),
            "method" => match w.string(val, &ptr) {
                Some("convex") => out.method = Method::Convex,
                Some("fixed_point") => out.method = Method::FixedPoint,
                Some(other) => w.fail(&ptr, format!("unknown method `{other}`")),
                None => {}
            },
            "flow_form" => match w.string(val, &ptr) {
                Some("raw") => out.flow_form = FlowForm::Raw,
                Some("onsager") => out.flow_form = FlowForm::Onsager,
                Some("generalized") => out.flow_form = FlowForm::Generalized,
                Some(other) => w.fail(&ptr, format!("unknown flow form `{other}`")),
                None => {}
            },
            "mode" => match w.string(val, &ptr) {
                Some("wasserstein") => out.mode = TwoPointMode::Wasserstein,
                Some("planning") => out.mode = TwoPointMode::Planning,
                Some("game") => out.mode = TwoPointMode::Game,
                Some(other) => w.fail(&ptr, format!("unknown two-point mode `{other}`")),
                None => {}
            },
            "grid" => {
                if let Some(g) = w.object(val, &ptr) {
                    for (gk, gv) in g {
                        let gptr = format!("{ptr}/{gk}");
                        match gk.as_str() {
                            "x" => out.grid_x = w.count(gv, &gptr, 3).unwrap_or(out.grid_x),
                            "t" => out.grid_t = w.count(gv, &gptr, 2).unwrap_or(out.grid_t),
                            _ => w.fail(&gptr, "unknown field"),
                        }
                    }
                }
            }
            "check_ambiguity" => match val.as_bool() {
                Some(b) => out.check_ambiguity = b,
                None => w.fail(&ptr, "expected a boolean"),
            },
            _ => w.fail(&ptr, "unknown field"),
        }
    }
    (w.errors.len() == before).then_some(out)
}

fn output(w: &mut Walker, v: Option<&Value>, command: Command) -> Option<OutputSpec> {
    let mut out = OutputSpec { dir: PathBuf::from("."), stem: command.name().to_string() };
    let Some(v) = v else { return Some(out) };
    let obj = w.object(v, "/output")?;
    if let Some(d) = obj.get("dir") {
        out.dir = PathBuf::from(w.string(d, "/output/dir")?);
    }
    if let Some(s) = obj.get("stem") {
        let s = w.string(s, "/output/stem")?;
        if s.is_empty() || s.contains(['/', '\\']) {
            w.fail("/output/stem", "stem must be a plain, non-empty file name");
            return None;
        }
        out.stem = s.to_string();
    }
    Some(out)
}

/// Parses and validates a JSON run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<SchemaError>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| vec![SchemaError::new("", format!("invalid JSON: {e}"))])?;
    let mut w = Walker { errors: Vec::new() };
    let Some(root) = w.object(&doc, "") else { return Err(w.errors) };

    for key in root.keys() {
        if !matches!(key.as_str(), "command" | "problem" | "numerics" | "output") {
            w.fail(&format!("/{key}"), "unknown field");
        }
    }
    let command = match root.get("command") {
        None => {
            w.fail("/command", "missing required field");
            None
        }
        Some(c) => match w.string(c, "/command") {
            Some(name) => match Command::parse(name) {
                Some(c) => Some(c),
                None => {
                    w.fail("/command", format!("unknown command `{name}`"));
                    None
                }
            },
            None => None,
        },
    };
    let Some(command) = command else { return Err(w.errors) };

    let problem = match root.get("problem") {
        Some(p) => problem(&mut w, p, command),
        None => {
            w.fail("/problem", "missing required field");
            None
        }
    };
    let potential = problem.as_ref().is_none_or(|p| {
        p.potential.is_potential()
            && match &p.terminal {
                TerminalSpec::Payoff(c) => c.is_potential(),
                TerminalSpec::Pinned(_) => true,
            }
    });
    let numerics = numerics(&mut w, root.get("numerics"), potential);
    let output = output(&mut w, root.get("output"), command);

    if let (Some(p), Some(num)) = (&problem, &numerics) {
        if command == Command::Mfg && num.method == Method::Convex && !potential {
            w.fail("/numerics/method", "convex solver requires potential structure");
        }
        if command == Command::Mfg && num.method == Method::FixedPoint && matches!(p.terminal, TerminalSpec::Pinned(_)) {
            w.fail("/problem/terminal", "fixed-point solver needs a terminal payoff");
        }
        if command == Command::Flow && num.t_end.is_none() {
            w.fail("/numerics/t_end", "missing required field for command `flow`");
        }
        let pinned = matches!(p.terminal, TerminalSpec::Pinned(_));
        let wants_pinned = command == Command::Wasserstein
            || (command == Command::TwoPoint && num.mode != TwoPointMode::Game);
        if wants_pinned && !pinned {
            w.fail("/problem/terminal", "a pinned terminal density gives the target state");
        }
        if command == Command::TwoPoint && num.mode == TwoPointMode::Game && pinned {
            w.fail("/problem/terminal", "the game mode needs a terminal payoff");
        }
        if command == Command::Master && pinned {
            w.fail("/problem/terminal", "the master equation needs a terminal payoff");
        }
        if w.errors.is_empty() && command != Command::Validate && command != Command::Flow {
            if let Err(e) = p.mfg() {
                w.fail("/problem", e.to_string());
            }
        }
    }

    if !w.errors.is_empty() {
        return Err(w.errors);
    }
    Ok(RunConfig {
        command,
        problem: problem.expect("checked above"),
        numerics: numerics.expect("checked above"),
        output: output.expect("checked above"),
        quiet: false,
    })
}
