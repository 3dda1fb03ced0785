//! Finite-time privacy-preserving push-sum: discovery at `t = 0`, cached short runs after.

use crate::digraph::{is_strongly_connected, DiGraph};
use crate::engine::{Engine, ExactEngine, FloatEngine};
use crate::error::{Error, Result};
use crate::hankel::PolyCoefficients;
use crate::pushsum::{initial_weights, AgentConsensusState, Phase, WeightSet, DEFAULT_WEIGHT_RANGE};
use crate::scalar::Scalar;
use crate::termination::{self, compute_dmax, dmax_from_theta, TerminationState};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arithmetic {
    /// Exact rational simulation with modular rank screening.
    Exact,
    /// Floating point with the singular-value ratio test.
    Float { rank_tol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrftpsConfig {
    pub arithmetic: Arithmetic,
    pub weight_range: f64,
    /// α substates are drawn from `±substate_range * (1 + |x|)`.
    pub substate_range: f64,
    pub max_attempts: usize,
    /// Hard cap on discovery rounds.
    pub max_rounds: usize,
}

impl Default for PrftpsConfig {
    fn default() -> Self {
        Self {
            arithmetic: Arithmetic::Exact,
            weight_range: DEFAULT_WEIGHT_RANGE,
            substate_range: 1.0,
            max_attempts: 5,
            max_rounds: 10_000,
        }
    }
}

/// Round-0 data of one run: private inputs, split substates and initial-phase
/// weights (one set per input component).
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData<S> {
    pub inputs: Vec<Vec<S>>,
    pub states: Vec<AgentConsensusState<S>>,
    pub weights: Vec<WeightSet<S>>,
}

impl<S: Scalar> InitialData<S> {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn new(g: &DiGraph, inputs: Vec<Vec<S>>, alpha: Vec<Vec<S>>, weights: Vec<WeightSet<S>>) -> Result<Self> {
        let n = g.n();
        let dim = weights.len();
        if dim == 0 {
            return Err(Error::Dimension("at least one input component".into()));
        }
        if inputs.len() != n || alpha.len() != n {
            return Err(Error::Dimension(format!("expected {n} nodes")));
        }
        if weights.iter().any(|w| w.phase != Phase::Initial || w.n() != n) {
            return Err(Error::Dimension("initial-phase weights for every node".into()));
        }
        let states = inputs
            .iter()
            .zip(&alpha)
            .map(|(x, a)| {
                if x.len() != dim {
                    return Err(Error::Dimension(format!("input of length {} for {dim} weight sets", x.len())));
                }
                AgentConsensusState::split(x, a)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { inputs, states, weights })
    }

    /// Fresh random split and fresh initial-phase weights per component.
    pub fn draw<R: Rng + ?Sized>(g: &DiGraph, inputs: &[Vec<f64>], rng: &mut R, cfg: &PrftpsConfig) -> Result<Self> {
        let dim = inputs.first().map_or(0, Vec::len);
        let weights = (0..dim)
            .map(|_| initial_weights::<S, R>(g, rng, cfg.weight_range))
            .collect();
        let alpha = inputs
            .iter()
            .map(|x| {
                x.iter()
                    .map(|v| S::from_f64(cfg.substate_range * (1.0 + v.abs()) * rng.random_range(-1.0..=1.0)))
                    .collect()
            })
            .collect();
        let exact_inputs = inputs
            .iter()
            .map(|x| x.iter().map(|&v| S::from_f64(v)).collect())
            .collect();
        Self::new(g, exact_inputs, alpha, weights)
    }
}

/// What the `t = 0` stage measured.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryReport {
    pub degrees: Vec<usize>,
    pub defect_rounds: Vec<usize>,
    pub stop_rounds: Vec<usize>,
    pub dmax: usize,
    /// Rounds until every node stopped.
    pub k1: usize,
    /// Closed-form `(k_t - 2D_j - 2)/2 - 1` at each node.
    pub dmax_closed_form: Vec<Result<usize>>,
    pub termination: Vec<TerminationState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: usize,
    pub rounds: usize,
    /// `outputs[j][c]`: node `j`'s estimate of the mean of component `c`.
    pub outputs: Vec<Vec<f64>>,
    pub attempts: usize,
    pub discovery: Option<DiscoveryReport>,
}

#[derive(Debug, Clone)]
enum Kernels {
    Exact(Vec<Vec<BigInt>>),
    Float(Vec<Vec<f64>>),
}

/// Discovery outcome, including the engine so callers can inspect the run.
pub(crate) struct Discovery<E: Engine> {
    pub engine: E,
    pub polys: Vec<PolyCoefficients>,
    pub kernels: Vec<E::Kernel>,
    pub report: DiscoveryReport,
    pub outputs: Vec<Vec<f64>>,
}

/// Runs the `t = 0` stage on fixed round-0 data.
pub(crate) fn discover<E: Engine>(
    g: &DiGraph,
    init: &InitialData<E::Num>,
    rank_tol: f64,
    max_rounds: usize,
) -> Result<Discovery<E>> {
    let n = g.n();
    let mut eng = E::start(g, init, rank_tol)?;
    let mut term = termination::initial_states(n);
    let mut found: Vec<Option<(PolyCoefficients, E::Kernel)>> = vec![None; n];
    loop {
        let k = eng.samples();
        let mut flags = vec![false; n];
        if k >= 3 && k % 2 == 1 {
            for j in 0..n {
                if found[j].is_none() {
                    if let Some(hit) = eng.test_dimension(j, (k - 1) / 2)? {
                        found[j] = Some(hit);
                        flags[j] = true;
                    }
                }
            }
        }
        term = termination::termination_round(&term, g, &flags);
        if term.iter().all(TerminationState::stopped) {
            break;
        }
        if k >= max_rounds {
            return Err(Error::Protocol(format!("no termination within {max_rounds} rounds")));
        }
        eng.advance();
    }
    let (polys, kernels): (Vec<_>, Vec<_>) = found
        .into_iter()
        .map(|f| f.expect("stopped nodes have frozen counts"))
        .unzip();
    let dmaxes = term
        .iter()
        .map(|s| dmax_from_theta(s.theta))
        .collect::<Result<Vec<_>>>()?;
    let dmax = dmaxes[0];
    if dmaxes.iter().any(|&d| d != dmax) {
        return Err(Error::Protocol(format!("nodes disagree on D_max: {dmaxes:?}")));
    }
    let degrees: Vec<usize> = polys.iter().map(|p| p.degree).collect();
    if degrees.iter().any(|&d| d > dmax) {
        return Err(Error::Protocol("D_max below a local degree".into()));
    }
    let stop_rounds: Vec<usize> = term.iter().map(|s| s.stop_round.expect("stopped")).collect();
    let outputs = (0..n)
        .map(|j| eng.final_value(j, &kernels[j]))
        .collect::<Result<Vec<_>>>()?;
    let report = DiscoveryReport {
        dmax_closed_form: stop_rounds
            .iter()
            .zip(&degrees)
            .map(|(&k, &d)| compute_dmax(k, d))
            .collect(),
        defect_rounds: polys.iter().map(|p| p.defect_round).collect(),
        k1: eng.samples(),
        degrees,
        stop_rounds,
        dmax,
        termination: term,
    };
    Ok(Discovery {
        engine: eng,
        polys,
        kernels,
        report,
        outputs,
    })
}

/// Runs `1 + k_max` rounds on fresh round-0 data and applies the cached kernels.
fn short_run<E: Engine>(
    g: &DiGraph,
    init: &InitialData<E::Num>,
    kernels: &[E::Kernel],
    k_max: usize,
    rank_tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut eng = E::start(g, init, rank_tol)?;
    for _ in 0..k_max {
        eng.advance();
    }
    (0..g.n()).map(|j| eng.final_value(j, &kernels[j])).collect()
}

#[derive(Debug, Clone)]
pub struct PrftpsSession {
    pub graph: DiGraph,
    pub config: PrftpsConfig,
    pub poly: Option<Vec<PolyCoefficients>>,
    pub dmax: Option<usize>,
    pub k_max: Option<usize>,
    pub rng_seed: u64,
    kernels: Option<Kernels>,
    rng: ChaCha8Rng,
}

impl PrftpsSession {
    pub fn new(graph: DiGraph, config: PrftpsConfig, rng_seed: u64) -> Result<Self> {
        if !is_strongly_connected(&graph) {
            return Err(Error::NotStronglyConnected);
        }
        Ok(Self {
            graph,
            config,
            poly: None,
            dmax: None,
            k_max: None,
            rng_seed,
            kernels: None,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }

    /// Steady per-step rounds after discovery: `1 + k_max`.
    pub fn rounds_per_step(&self) -> Option<usize> {
        self.k_max.map(|k| 1 + k)
    }

    pub fn step(&mut self, inputs: &[Vec<f64>], t: usize) -> Result<StepReport> {
        let n = self.graph.n();
        if inputs.len() != n {
            return Err(Error::Dimension(format!("{} inputs for {n} nodes", inputs.len())));
        }
        let dim = inputs[0].len();
        if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::Dimension("inputs must share a positive dimension".into()));
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input".into()));
        }
        match (t, self.kernels.is_some()) {
            (0, true) => return Err(Error::CacheAlreadyPresent),
            (0, false) => {}
            (_, false) => return Err(Error::MissingCache { t }),
            (_, true) => return self.cached_step(inputs, t),
        }
        let mut last = None;
        for attempt in 1..=self.config.max_attempts.max(1) {
            let outcome = match self.config.arithmetic {
                Arithmetic::Exact => self
                    .try_discover::<ExactEngine>(inputs, 0.0)
                    .map(|(d, k)| (d, Kernels::Exact(k))),
                Arithmetic::Float { rank_tol } => self
                    .try_discover::<FloatEngine>(inputs, rank_tol)
                    .map(|(d, k)| (d, Kernels::Float(k))),
            };
            match outcome {
                Ok(((report, polys, outputs), kernels)) => {
                    self.dmax = Some(report.dmax);
                    self.k_max = Some(report.dmax + 2);
                    self.poly = Some(polys);
                    self.kernels = Some(kernels);
                    return Ok(StepReport {
                        t,
                        rounds: report.k1,
                        outputs,
                        attempts: attempt,
                        discovery: Some(report),
                    });
                }
                Err(e @ (Error::Degenerate { .. } | Error::DivideByZero { .. })) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(Error::RetriesExhausted {
            attempts: self.config.max_attempts.max(1),
            last: Box::new(last.expect("at least one attempt")),
        })
    }

    #[allow(clippy::type_complexity)]
    fn try_discover<E: Engine>(
        &mut self,
        inputs: &[Vec<f64>],
        rank_tol: f64,
    ) -> Result<((DiscoveryReport, Vec<PolyCoefficients>, Vec<Vec<f64>>), Vec<E::Kernel>)> {
        let init = InitialData::<E::Num>::draw(&self.graph, inputs, &mut self.rng, &self.config)?;
        let d = discover::<E>(&self.graph, &init, rank_tol, self.config.max_rounds)?;
        Ok(((d.report, d.polys, d.outputs), d.kernels))
    }

    fn cached_step(&mut self, inputs: &[Vec<f64>], t: usize) -> Result<StepReport> {
        let k_max = self.k_max.expect("cache present");
        let outputs = match (&self.kernels, self.config.arithmetic) {
            (Some(Kernels::Exact(k)), _) => {
                let init = InitialData::<BigRational>::draw(&self.graph, inputs, &mut self.rng, &self.config)?;
                short_run::<ExactEngine>(&self.graph, &init, k, k_max, 0.0)?
            }
            (Some(Kernels::Float(k)), Arithmetic::Float { rank_tol }) => {
                let init = InitialData::<f64>::draw(&self.graph, inputs, &mut self.rng, &self.config)?;
                short_run::<FloatEngine>(&self.graph, &init, k, k_max, rank_tol)?
            }
            _ => return Err(Error::Protocol("cached kernels do not match the arithmetic".into())),
        };
        Ok(StepReport {
            t,
            rounds: 1 + k_max,
            outputs,
            attempts: 1,
            discovery: None,
        })
    }
}

/// Every node's average of `inputs` for step `t`.
pub fn prftps_step(session: &mut PrftpsSession, inputs: &[Vec<f64>], t: usize) -> Result<Vec<Vec<f64>>> {
    session.step(inputs, t).map(|r| r.outputs)
}

/// Scalar convenience: one value per node, one output per node.
pub fn average_scalar(session: &mut PrftpsSession, inputs: &[f64], t: usize) -> Result<Vec<f64>> {
    let v: Vec<Vec<f64>> = inputs.iter().map(|&x| vec![x]).collect();
    Ok(prftps_step(session, &v, t)?.into_iter().map(|o| o[0]).collect())
}
