use crate::CliError;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scenario {
    #[value(name = "consensus_exactness")]
    ConsensusExactness,
    #[value(name = "gd_convergence")]
    GdConvergence,
    #[value(name = "privacy_audit")]
    PrivacyAudit,
    #[value(name = "round_counts")]
    RoundCounts,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::ConsensusExactness => "consensus_exactness",
            Scenario::GdConvergence => "gd_convergence",
            Scenario::PrivacyAudit => "privacy_audit",
            Scenario::RoundCounts => "round_counts",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Scenario::ConsensusExactness,
            Scenario::GdConvergence,
            Scenario::PrivacyAudit,
            Scenario::RoundCounts,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Option<Scenario>,
    /// Fixed node count; when absent each scenario uses its own default.
    pub n: Option<usize>,
    pub p: usize,
    pub q: usize,
    pub eta: f64,
    pub steps: usize,
    pub seed: u64,
    pub graph_file: Option<PathBuf>,
    pub edge_prob: f64,
    pub trials: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Switches discovery to floating point with this singular-value ratio.
    pub rank_tol: Option<f64>,
    pub trace_tol: f64,
    pub target: usize,
    pub shifts: usize,
    pub shift_range: f64,
    pub parallel_trials: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            n: None,
            p: 3,
            q: 3,
            eta: 0.1,
            steps: 200,
            seed: 1,
            graph_file: None,
            edge_prob: 0.3,
            trials: 50,
            n_min: 2,
            n_max: 10,
            rank_tol: None,
            trace_tol: 1e-10,
            target: 0,
            shifts: 100,
            shift_range: 1e6,
            parallel_trials: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 19] = [
        "scenario",
        "n",
        "p",
        "q",
        "eta",
        "steps",
        "seed",
        "graph_file",
        "edge_prob",
        "trials",
        "n_min",
        "n_max",
        "rank_tol",
        "trace_tol",
        "target",
        "shifts",
        "shift_range",
        "parallel_trials",
        "out_dir",
    ];

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "scenario" => self.scenario = Some(value.parse()?),
            "n" => self.n = Some(num(value)?),
            "p" => self.p = num(value)?,
            "q" => self.q = num(value)?,
            "eta" => self.eta = num(value)?,
            "steps" | "T" => self.steps = num(value)?,
            "seed" => self.seed = num(value)?,
            "graph_file" => self.graph_file = Some(PathBuf::from(value)),
            "edge_prob" => self.edge_prob = num(value)?,
            "trials" => self.trials = num(value)?,
            "n_min" => self.n_min = num(value)?,
            "n_max" => self.n_max = num(value)?,
            "rank_tol" => self.rank_tol = Some(num(value)?),
            "trace_tol" => self.trace_tol = num(value)?,
            "target" => self.target = num(value)?,
            "shifts" => self.shifts = num(value)?,
            "shift_range" => self.shift_range = num(value)?,
            "parallel_trials" => self.parallel_trials = flag(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(format!("unknown key; expected one of {}", Self::KEYS.join(", "))),
        }
        Ok(())
    }

    /// Reads `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |field: &str, msg: String| CliError::Config {
                line: idx + 1,
                field: field.to_string(),
                msg,
            };
            let Some((key, value)) = line.split_once('=') else {
                return Err(err("", format!("expected key = value, got `{line}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|m| err(key, m))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| {
            Err(CliError::Invalid {
                field: field.to_string(),
                msg: msg.to_string(),
            })
        };
        if self.scenario.is_none() {
            return bad("scenario", "required");
        }
        if self.n == Some(0) {
            return bad("n", "must be positive");
        }
        if self.p == 0 || self.q == 0 {
            return bad(if self.p == 0 { "p" } else { "q" }, "must be positive");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta", "must be positive and finite");
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return bad("edge_prob", "must lie in [0, 1]");
        }
        if self.trials == 0 {
            return bad("trials", "must be positive");
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return bad("n_min", "need 1 <= n_min <= n_max");
        }
        if self.rank_tol.is_some_and(|t| !(t > 0.0 && t < 1.0)) {
            return bad("rank_tol", "must lie in (0, 1)");
        }
        if !(self.trace_tol >= 0.0) {
            return bad("trace_tol", "must be nonnegative");
        }
        if self.shifts == 0 {
            return bad("shifts", "must be positive");
        }
        if !(self.shift_range > 0.0 && self.shift_range.is_finite()) {
            return bad("shift_range", "must be positive and finite");
        }
        Ok(())
    }
}
