//! CSV and JSON artifacts, and the schema every summary must satisfy.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::{Command, SchemaError};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table with a fixed header.
pub struct Table {
    header: Vec<String>,
    body: String,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table { header, body: String::new() }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.header.len());
        let cells: Vec<String> = row.iter().map(|&x| format_number(x)).collect();
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header.join(","), self.body)
    }
}

/// `name_1, ..., name_n`.
pub fn indexed(name: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{name}_{i}")).collect()
}

pub struct Artifacts {
    dir: PathBuf,
    stem: String,
}

impl Artifacts {
    pub fn new(dir: &Path, stem: &str) -> Self {
        Artifacts { dir: dir.to_path_buf(), stem: stem.to_string() }
    }

    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}.{suffix}", self.stem))
    }

    fn write(&self, suffix: &str, text: &str) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        fs::write(self.path(suffix), text)
    }

    pub fn csv(&self, table: &Table) -> io::Result<()> {
        self.write("csv", &table.render())
    }

    pub fn summary(&self, value: &Value) -> io::Result<()> {
        self.write("summary.json", &pretty(value))
    }

    pub fn error(&self, value: &Value) -> io::Result<()> {
        self.write("error.json", &pretty(value))
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Number,
    /// A number, or null when the quantity is undefined for the run.
    OptNumber,
    Integer,
    Bool,
    Text,
    Array,
    Object,
}

impl Kind {
    fn accepts(self, v: &Value) -> bool {
        match self {
            Kind::Number => v.is_number(),
            Kind::OptNumber => v.is_number() || v.is_null(),
            Kind::Integer => v.is_u64(),
            Kind::Bool => v.is_boolean(),
            Kind::Text => v.is_string(),
            Kind::Array => v.is_array(),
            Kind::Object => v.is_object(),
        }
    }
}

/// Required summary fields and their kinds, per command.
pub fn summary_schema(command: Command) -> &'static [(&'static str, Kind)] {
    use Kind::*;
    match command {
        Command::Validate => &[("command", Text), ("n", Integer), ("pi", Array), ("omega", Array), ("spectral_gap", Number)],
        Command::Flow => &[
            ("command", Text),
            ("form", Text),
            ("steps", Integer),
            ("t_end", Number),
            ("final", Array),
            ("dissipation_final", Number),
            ("distance_to_equilibrium", Number),
        ],
        Command::Wasserstein => &[("command", Text), ("alpha", Number), ("p0", Number), ("p1", Number), ("W_alpha", Number)],
        Command::Mfg => &[
            ("command", Text),
            ("solver", Text),
            ("value", OptNumber),
            ("residuals", Object),
            ("iterations", Integer),
            ("converged", Bool),
        ],
        Command::TwoPoint => {
            &[("command", Text), ("mode", Text), ("x_T", Number), ("H0", Number), ("W_alpha", OptNumber), ("iterations", Integer)]
        }
        Command::Master => &[
            ("command", Text),
            ("n_x", Integer),
            ("n_t", Integer),
            ("residual", OptNumber),
            ("complete", Bool),
            ("failures", Array),
            ("ambiguous", Array),
        ],
    }
}

/// Checks a summary against [`summary_schema`].
pub fn validate_summary(command: Command, summary: &Value) -> Vec<SchemaError> {
    let Some(obj) = summary.as_object() else {
        return vec![SchemaError::new("", "summary must be an object")];
    };
    let mut errors = Vec::new();
    for &(key, kind) in summary_schema(command) {
        match obj.get(key) {
            None => errors.push(SchemaError::new(format!("/{key}"), "missing required field")),
            Some(v) if !kind.accepts(v) => errors.push(SchemaError::new(format!("/{key}"), format!("expected {kind:?}"))),
            Some(_) => {}
        }
    }
    if obj.get("command").and_then(Value::as_str) != Some(command.name()) {
        errors.push(SchemaError::new("/command", format!("expected `{}`", command.name())));
    }
    errors
}
