use crate::config::{ExperimentConfig, Scenario};
use crate::output::{convergence_csv, emit_plotdata, fmt_f64, fmt_opt, render};
use crate::CliError;
use prftps::optimizer::{run, ConvergenceReport, OptimizerConfig};
use prftps::privacy::{
    build_equivalent_execution, privacy_condition, verify_equivalence, AdversaryModel, ExecutionRecord, PrivacyVerdict,
    Situation,
};
use prftps::pushsum::{baseline_push_sum_round, baseline_rounds_to_tolerance, BaselineState};
use prftps::{random_strongly_connected, Arithmetic, DiGraph, PrftpsConfig, PrftpsSession};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::time::Instant;

/// Baseline comparison horizon and tolerance.
pub const BASELINE_ROUNDS: usize = 500;
pub const BASELINE_TOL: f64 = 1e-6;
const BASELINE_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    pub summary: Vec<String>,
}

pub fn prftps_config(cfg: &ExperimentConfig) -> PrftpsConfig {
    PrftpsConfig {
        arithmetic: match cfg.rank_tol {
            Some(rank_tol) => Arithmetic::Float { rank_tol },
            None => Arithmetic::Exact,
        },
        ..PrftpsConfig::default()
    }
}

pub fn load_graph(cfg: &ExperimentConfig) -> Result<Option<DiGraph>, CliError> {
    let Some(path) = &cfg.graph_file else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(Some(DiGraph::parse_edge_list(&text)?))
}

fn normal_inputs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Per-trial graph: the fixed one, or a generated graph sized by `n` or the `[n_min, n_max]` range.
fn trial_graph(cfg: &ExperimentConfig, fixed: &Option<DiGraph>, trial: usize) -> Result<(u64, DiGraph), CliError> {
    let seed = cfg.seed.wrapping_add(trial as u64);
    if let Some(g) = fixed {
        return Ok((seed, g.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n.unwrap_or_else(|| rng.random_range(cfg.n_min..=cfg.n_max));
    Ok((seed, random_strongly_connected(n, cfg.edge_prob, seed)?))
}

fn map_trials<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(usize) -> Result<T, CliError> + Sync + Send,
) -> Result<Vec<T>, CliError> {
    if cfg.parallel_trials {
        (0..cfg.trials).into_par_iter().map(f).collect()
    } else {
        (0..cfg.trials).map(f).collect()
    }
}

fn relative_error(out: f64, xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let scale = (xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64).max(mean.abs());
    if scale == 0.0 {
        out.abs()
    } else {
        (out - mean).abs() / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub edges: usize,
    pub dmax: usize,
    pub k1: usize,
    pub k_max: usize,
    /// Rounds measured for the `t = 1` stage.
    pub step_rounds: usize,
    pub max_rel_error_t0: f64,
    pub max_rel_error_t1: f64,
    pub baseline_rounds: Option<usize>,
    pub baseline_error: f64,
}

pub fn consensus_trial(cfg: &ExperimentConfig, fixed: &Option<DiGraph>, trial: usize) -> Result<TrialResult, CliError> {
    let (seed, g) = trial_graph(cfg, fixed, trial)?;
    let n = g.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x0 = normal_inputs(&mut rng, n);
    let x1 = normal_inputs(&mut rng, n);
    let mut session = PrftpsSession::new(g.clone(), prftps_config(cfg), seed)?;
    let wrap = |xs: &[f64]| xs.iter().map(|&x| vec![x]).collect::<Vec<_>>();
    let r0 = session.step(&wrap(&x0), 0)?;
    let r1 = session.step(&wrap(&x1), 1)?;
    let err = |outs: &[Vec<f64>], xs: &[f64]| outs.iter().map(|o| relative_error(o[0], xs)).fold(0.0, f64::max);
    let mut base = BaselineState::new(&x0);
    for _ in 0..BASELINE_ROUNDS {
        base = baseline_push_sum_round(&base, &g);
    }
    let mean = x0.iter().sum::<f64>() / n as f64;
    let d = r0.discovery.as_ref().expect("t = 0 reports discovery");
    Ok(TrialResult {
        trial,
        seed,
        n,
        edges: g.edge_count(),
        dmax: d.dmax,
        k1: d.k1,
        k_max: session.k_max.expect("discovered"),
        step_rounds: r1.rounds,
        max_rel_error_t0: err(&r0.outputs, &x0),
        max_rel_error_t1: err(&r1.outputs, &x1),
        baseline_rounds: baseline_rounds_to_tolerance(&g, &x0, BASELINE_TOL, BASELINE_CAP),
        baseline_error: base.ratios().iter().map(|r| (r - mean).abs()).fold(0.0, f64::max),
    })
}

pub fn consensus_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialResult>, CliError> {
    let fixed = load_graph(cfg)?;
    map_trials(cfg, |t| consensus_trial(cfg, &fixed, t))
}

pub fn consensus_files(trials: &[TrialResult]) -> Result<Vec<(String, String)>, CliError> {
    let main = render(
        &["trial", "seed", "n", "edges", "dmax", "k1", "k_max", "max_rel_error_t0", "max_rel_error_t1"],
        trials.iter().map(|t| {
            vec![
                t.trial.to_string(),
                t.seed.to_string(),
                t.n.to_string(),
                t.edges.to_string(),
                t.dmax.to_string(),
                t.k1.to_string(),
                t.k_max.to_string(),
                fmt_f64(t.max_rel_error_t0),
                fmt_f64(t.max_rel_error_t1),
            ]
        }),
    )?;
    let worst = trials
        .iter()
        .map(|t| t.max_rel_error_t0.max(t.max_rel_error_t1))
        .fold(0.0, f64::max);
    let summary = render(
        &["trials", "max_rel_error", "within_1e-8"],
        [vec![trials.len().to_string(), fmt_f64(worst), (worst <= 1e-8).to_string()]],
    )?;
    let rounds = render(
        &[
            "trial",
            "n",
            "baseline_rounds_to_1e-6",
            "baseline_error_at_500",
            "prftps_rounds_t0",
            "prftps_rounds_per_step",
        ],
        trials.iter().map(|t| {
            vec![
                t.trial.to_string(),
                t.n.to_string(),
                fmt_opt(t.baseline_rounds),
                fmt_f64(t.baseline_error),
                t.k1.to_string(),
                t.step_rounds.to_string(),
            ]
        }),
    )?;
    Ok(vec![
        ("consensus_exactness.csv".into(), main),
        ("consensus_summary.csv".into(), summary),
        ("rounds_comparison.csv".into(), rounds),
    ])
}

pub fn gd_config(cfg: &ExperimentConfig) -> Result<OptimizerConfig, CliError> {
    let g = match load_graph(cfg)? {
        Some(g) => g,
        None => random_strongly_connected(cfg.n.unwrap_or(5), cfg.edge_prob, cfg.seed)?,
    };
    let mut oc = OptimizerConfig::least_squares(g, cfg.q, cfg.p, cfg.eta, cfg.steps, cfg.seed)?;
    oc.prftps = prftps_config(cfg);
    Ok(oc)
}

pub fn gd_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport, CliError> {
    Ok(run(&gd_config(cfg)?)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub adversary: String,
    pub target: usize,
    pub witness: usize,
    pub situation: Situation,
    pub e: f64,
    pub input_shift: f64,
    pub max_deviation: f64,
    pub output_deviation: f64,
    pub equivalent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyAudit {
    pub verdicts: Vec<(String, PrivacyVerdict)>,
    pub rows: Vec<AuditRow>,
    pub max_deviation: f64,
    pub max_output_deviation: f64,
    pub diameter_lower_bound: f64,
    /// Every model met the condition and every shift passed.
    pub preserved: bool,
}

/// The strongest adversaries that still satisfy the privacy condition for `j`:
/// every node except `j` and one in-neighbour, and every link except one leaving `j`.
pub fn default_adversaries(g: &DiGraph, j: usize) -> Vec<(String, AdversaryModel)> {
    let mut out = Vec::new();
    if let Some(&m) = g.in_neighbors(j).first() {
        let nodes = (0..g.n()).filter(|&v| v != j && v != m);
        out.push(("honest_but_curious".into(), AdversaryModel::honest_but_curious(nodes)));
    }
    if let Some(&m) = g.out_neighbors(j).first() {
        let links = g.edges().filter(|&(to, from)| (to, from) != (m, j));
        out.push(("eavesdropper".into(), AdversaryModel::eavesdropper(links)));
    }
    out
}

pub fn shift_grid(count: usize, range: f64) -> Vec<f64> {
    if count == 1 {
        return vec![range];
    }
    (0..count)
        .map(|i| -range + 2.0 * range * i as f64 / (count - 1) as f64)
        .collect()
}

pub fn privacy_audit_on(g: &DiGraph, cfg: &ExperimentConfig) -> Result<PrivacyAudit, CliError> {
    let j = cfg.target;
    if j >= g.n() {
        return Err(CliError::Invalid {
            field: "target".into(),
            msg: format!("node {j} is outside a graph of {} nodes", g.n()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inputs: Vec<Vec<f64>> = normal_inputs(&mut rng, g.n()).into_iter().map(|x| vec![x]).collect();
    let record = ExecutionRecord::record(g, &inputs, cfg.seed, &PrftpsConfig::default())?;
    let grid = shift_grid(cfg.shifts, cfg.shift_range);
    let mut verdicts = Vec::new();
    let mut rows = Vec::new();
    let mut preserved = true;
    let models = default_adversaries(g, j);
    if models.is_empty() {
        preserved = false;
    }
    for (name, adv) in models {
        adv.validate(g)?;
        let verdict = privacy_condition(g, j, &adv);
        verdicts.push((name.clone(), verdict));
        let PrivacyVerdict::Preserved { witness, situation } = verdict else {
            preserved = false;
            continue;
        };
        let check = |e: &f64| -> Result<AuditRow, CliError> {
            let alt = build_equivalent_execution(&record, j, witness, situation, &[*e])?;
            let rep = verify_equivalence(&record, &alt, &adv)?;
            Ok(AuditRow {
                adversary: name.clone(),
                target: j,
                witness,
                situation,
                e: *e,
                input_shift: rep.input_shift[0],
                max_deviation: rep.max_deviation,
                output_deviation: rep.output_deviation,
                equivalent: rep.max_deviation <= cfg.trace_tol,
            })
        };
        let batch: Vec<AuditRow> = if cfg.parallel_trials {
            grid.par_iter().map(check).collect::<Result<_, _>>()?
        } else {
            grid.iter().map(check).collect::<Result<_, _>>()?
        };
        rows.extend(batch);
    }
    let max_deviation = rows.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
    let max_output_deviation = rows.iter().map(|r| r.output_deviation).fold(0.0, f64::max);
    preserved &= rows
        .iter()
        .all(|r| r.equivalent && r.output_deviation <= 1e-9 && r.input_shift == r.e);
    let ok: Vec<f64> = rows.iter().filter(|r| r.equivalent).map(|r| r.e).collect();
    let diameter_lower_bound = if ok.is_empty() {
        0.0
    } else {
        ok.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ok.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(PrivacyAudit {
        verdicts,
        rows,
        max_deviation,
        max_output_deviation,
        diameter_lower_bound,
        preserved,
    })
}

pub fn privacy_graph(cfg: &ExperimentConfig) -> Result<DiGraph, CliError> {
    Ok(match (load_graph(cfg)?, cfg.n) {
        (Some(g), _) => g,
        (None, None) => DiGraph::ring(3)?,
        (None, Some(n)) => random_strongly_connected(n, cfg.edge_prob, cfg.seed)?,
    })
}

pub fn privacy_csv(audit: &PrivacyAudit) -> Result<String, CliError> {
    render(
        &[
            "adversary",
            "target",
            "witness",
            "situation",
            "e",
            "input_shift",
            "max_deviation",
            "output_deviation",
            "equivalent",
        ],
        audit.rows.iter().map(|r| {
            vec![
                r.adversary.clone(),
                r.target.to_string(),
                r.witness.to_string(),
                format!("{:?}", r.situation),
                fmt_f64(r.e),
                fmt_f64(r.input_shift),
                fmt_f64(r.max_deviation),
                fmt_f64(r.output_deviation),
                r.equivalent.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundCount {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub degrees: Vec<usize>,
    pub defect_rounds: Vec<usize>,
    pub stop_rounds: Vec<usize>,
    pub closed_form: Vec<Option<usize>>,
    pub dmax: usize,
    pub k1: usize,
    pub k_max: usize,
    /// Steady rounds measured at `t = 1`, excluding its initial-phase round.
    pub steady_rounds: usize,
}

pub fn round_count_on(g: &DiGraph, cfg: &ExperimentConfig, trial: usize, seed: u64) -> Result<RoundCount, CliError> {
    let mut session = PrftpsSession::new(g.clone(), prftps_config(cfg), seed)?;
    let ones = vec![vec![1.0]; g.n()];
    let r0 = session.step(&ones, 0)?;
    let r1 = session.step(&ones, 1)?;
    let d = r0.discovery.expect("t = 0 reports discovery");
    Ok(RoundCount {
        trial,
        seed,
        n: g.n(),
        closed_form: d.dmax_closed_form.iter().map(|r| r.as_ref().ok().copied()).collect(),
        degrees: d.degrees,
        defect_rounds: d.defect_rounds,
        stop_rounds: d.stop_rounds,
        dmax: d.dmax,
        k1: r0.rounds,
        k_max: session.k_max.expect("discovered"),
        steady_rounds: r1.rounds - 1,
    })
}

pub fn round_counts(cfg: &ExperimentConfig) -> Result<Vec<RoundCount>, CliError> {
    let fixed = load_graph(cfg)?;
    map_trials(cfg, |t| {
        let (seed, g) = trial_graph(cfg, &fixed, t)?;
        round_count_on(&g, cfg, t, seed)
    })
}

pub fn round_count_files(rows: &[RoundCount]) -> Result<Vec<(String, String)>, CliError> {
    let summary = render(
        &["trial", "seed", "n", "dmax", "k1", "k_max", "steady_rounds", "four_dmax_plus_one", "dmax_plus_two"],
        rows.iter().map(|r| {
            vec![
                r.trial.to_string(),
                r.seed.to_string(),
                r.n.to_string(),
                r.dmax.to_string(),
                r.k1.to_string(),
                r.k_max.to_string(),
                r.steady_rounds.to_string(),
                (4 * (r.dmax + 1)).to_string(),
                (r.dmax + 2).to_string(),
            ]
        }),
    )?;
    let nodes = render(
        &["trial", "node", "degree", "defect_round", "stop_round", "closed_form_dmax"],
        rows.iter().flat_map(|r| {
            (0..r.n).map(move |j| {
                vec![
                    r.trial.to_string(),
                    j.to_string(),
                    r.degrees[j].to_string(),
                    r.defect_rounds[j].to_string(),
                    r.stop_rounds[j].to_string(),
                    fmt_opt(r.closed_form[j]),
                ]
            })
        }),
    )?;
    Ok(vec![("round_counts.csv".into(), summary), ("round_nodes.csv".into(), nodes)])
}

pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioOutput, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let scenario = cfg.scenario.expect("validated");
    let (files, mut summary) = match scenario {
        Scenario::ConsensusExactness => {
            let trials = consensus_trials(cfg)?;
            let worst = trials
                .iter()
                .map(|t| t.max_rel_error_t0.max(t.max_rel_error_t1))
                .fold(0.0, f64::max);
            let base = trials.iter().map(|t| t.baseline_error).fold(0.0, f64::max);
            let summary = vec![
                format!("trials: {}", trials.len()),
                format!("max relative error: {worst:.3e}"),
                format!("baseline max error after {BASELINE_ROUNDS} rounds: {base:.3e}"),
            ];
            (consensus_files(&trials)?, summary)
        }
        Scenario::GdConvergence => {
            let rep = gd_convergence(cfg)?;
            let last = rep.rows.last().expect("initial row");
            let mut summary = vec![
                format!("steps: {}", rep.rows.len() - 1),
                format!("final normalized residual: {:.3e}", last.normalized_residual),
                format!("rate slope: {:.4}, tail median ratio: {:.4}", rep.rate.slope, rep.rate.tail_median_ratio),
                format!("k1: {}, k_max: {}", fmt_opt(rep.k1), fmt_opt(rep.k_max)),
            ];
            if rep.eta_warning {
                summary.push(format!(
                    "warning: eta = {} is not below 1/(mu + L) = {:.4e}",
                    cfg.eta, rep.eta_bound
                ));
            }
            if rep.diverged || rep.non_monotone_steps > 0 {
                summary.push(format!(
                    "diverged: {}, non-monotone steps: {}",
                    rep.diverged, rep.non_monotone_steps
                ));
            }
            let files = vec![
                ("convergence.csv".into(), convergence_csv(&rep)?),
                ("plotdata.csv".into(), emit_plotdata(&rep)?),
            ];
            (files, summary)
        }
        Scenario::PrivacyAudit => {
            let g = privacy_graph(cfg)?;
            let audit = privacy_audit_on(&g, cfg)?;
            let mut summary: Vec<String> = audit
                .verdicts
                .iter()
                .map(|(name, v)| match v {
                    PrivacyVerdict::Preserved { witness, situation } => {
                        format!("{name}: condition holds, witness {witness} ({situation:?})")
                    }
                    PrivacyVerdict::NotGuaranteed => format!("{name}: not guaranteed"),
                })
                .collect();
            summary.push(format!(
                "verdict: {}",
                if audit.preserved { "preserved" } else { "not_guaranteed" }
            ));
            summary.push(format!("max trace deviation: {:.3e}", audit.max_deviation));
            summary.push(format!("max output deviation: {:.3e}", audit.max_output_deviation));
            summary.push(format!("diameter lower bound: {:.3e}", audit.diameter_lower_bound));
            (vec![("privacy_audit.csv".into(), privacy_csv(&audit)?)], summary)
        }
        Scenario::RoundCounts => {
            let rows = round_counts(cfg)?;
            let summary = rows
                .iter()
                .map(|r| format!("trial {}: n={} D_max={} k1={} k_max={}", r.trial, r.n, r.dmax, r.k1, r.k_max))
                .collect();
            (round_count_files(&rows)?, summary)
        }
    };
    summary.push(format!("{} finished in {:.2} s", scenario.name(), start.elapsed().as_secs_f64()));
    Ok(ScenarioOutput { files, summary })
}

pub fn write_output(out: &ScenarioOutput, dir: &std::path::Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for (name, body) in &out.files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
