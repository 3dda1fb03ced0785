//! Adversary observations and observation-equivalent alternative executions.
//!
//! Executions are recorded in exact rational arithmetic so paired runs can be
//! compared without rounding noise.

use crate::digraph::DiGraph;
use crate::engine::ExactEngine;
use crate::error::{Error, Result};
use crate::prftps::{discover, DiscoveryReport, InitialData, PrftpsConfig};
use crate::pushsum::{steady_weights, WeightSet};
use crate::scalar::{ratio_to_f64, Scalar};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Traces whose entries differ by more than this are not equivalent.
pub const TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryKind {
    HonestButCurious,
    Eavesdropper,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryModel {
    pub kind: AdversaryKind,
    /// Corrupted nodes (honest-but-curious).
    pub nodes: BTreeSet<usize>,
    /// Tapped links `(i, j)`, i.e. `ε_ij`, carrying messages from `j` to `i` (eavesdropper).
    pub edges: BTreeSet<(usize, usize)>,
}

impl AdversaryModel {
    pub fn honest_but_curious(nodes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            kind: AdversaryKind::HonestButCurious,
            nodes: nodes.into_iter().collect(),
            edges: BTreeSet::new(),
        }
    }

    pub fn eavesdropper(edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            kind: AdversaryKind::Eavesdropper,
            nodes: BTreeSet::new(),
            edges: edges.into_iter().collect(),
        }
    }

    pub fn validate(&self, g: &DiGraph) -> Result<()> {
        let n = g.n();
        if let Some(&node) = self.nodes.iter().find(|&&v| v >= n) {
            return Err(Error::NodeOutOfRange { node, n });
        }
        if let Some(&(i, j)) = self.edges.iter().find(|&&(i, j)| !g.has_link(j, i)) {
            return Err(Error::InvalidArgument(format!("ε_{i}{j} is not a link of the graph")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Situation {
    /// Witness `m` is an in-neighbour of the target.
    I,
    /// Witness `m` is an out-neighbour of the target.
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivacyVerdict {
    Preserved { witness: usize, situation: Situation },
    NotGuaranteed,
}

pub fn privacy_condition(g: &DiGraph, j: usize, adv: &AdversaryModel) -> PrivacyVerdict {
    let ins = g.in_neighbors(j).iter().map(|&m| (m, Situation::I));
    let outs = g.out_neighbors(j).iter().map(|&m| (m, Situation::II));
    let mut candidates = ins.chain(outs);
    let pick = match adv.kind {
        AdversaryKind::HonestButCurious => {
            if adv.nodes.contains(&j) {
                None
            } else {
                candidates.find(|(m, _)| !adv.nodes.contains(m))
            }
        }
        AdversaryKind::Eavesdropper => candidates.find(|&(m, s)| match s {
            Situation::I => !adv.edges.contains(&(j, m)),
            Situation::II => !adv.edges.contains(&(m, j)),
        }),
    };
    match pick {
        Some((witness, situation)) => PrivacyVerdict::Preserved { witness, situation },
        None => PrivacyVerdict::NotGuaranteed,
    }
}

/// A discovery run with every round's substates available exactly.
pub struct ExecutionRecord {
    pub graph: DiGraph,
    pub init: InitialData<BigRational>,
    pub steady: WeightSet<BigRational>,
    pub report: DiscoveryReport,
    pub outputs: Vec<Vec<f64>>,
    engine: ExactEngine,
}

impl std::fmt::Debug for ExecutionRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExecutionRecord")
            .field("n", &self.graph.n())
            .field("k1", &self.report.k1)
            .field("outputs", &self.outputs)
            .finish()
    }
}

impl ExecutionRecord {
    /// Re-runs discovery on fixed round-0 data.
    pub fn replay(g: &DiGraph, init: InitialData<BigRational>, max_rounds: usize) -> Result<Self> {
        let d = discover::<ExactEngine>(g, &init, 0.0, max_rounds)?;
        Ok(Self {
            graph: g.clone(),
            steady: steady_weights(g),
            init,
            report: d.report,
            outputs: d.outputs,
            engine: d.engine,
        })
    }

    /// Seeded discovery run; degenerate draws are retried.
    pub fn record(g: &DiGraph, inputs: &[Vec<f64>], seed: u64, cfg: &PrftpsConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut last = None;
        for _ in 0..cfg.max_attempts.max(1) {
            let init = InitialData::<BigRational>::draw(g, inputs, &mut rng, cfg)?;
            match Self::replay(g, init, cfg.max_rounds) {
                Ok(r) => return Ok(r),
                Err(e @ (Error::Degenerate { .. } | Error::DivideByZero { .. })) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(Error::RetriesExhausted {
            attempts: cfg.max_attempts.max(1),
            last: Box::new(last.expect("at least one attempt")),
        })
    }

    pub fn dim(&self) -> usize {
        self.init.dim()
    }

    /// Substate `idx` (α in `0..n`, β in `n..2n`) of `channel` at round `k` as numerator and denominator.
    /// Channels are the value components followed by the mass.
    pub fn state(&self, k: usize, channel: usize, idx: usize) -> (BigInt, BigInt) {
        if k == 0 {
            let n = self.graph.n();
            let st = &self.init.states[idx % n];
            let sub = if channel == self.dim() { &st.mass } else { &st.value[channel] };
            let v = if idx < n { &sub.alpha } else { &sub.beta };
            return (v.numer().clone(), v.denom().clone());
        }
        self.engine.entry(k, channel, idx)
    }

    /// Weight set of round `k` for value component `c`.
    pub fn weights(&self, k: usize, c: usize) -> &WeightSet<BigRational> {
        if k == 0 {
            &self.init.weights[c]
        } else {
            &self.steady
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Observed {
    Alpha { node: usize, channel: usize },
    Beta { node: usize, channel: usize },
    /// `p_{to,from}` of value component `component`.
    Weight { to: usize, from: usize, component: usize },
    BetaAlpha { node: usize, component: usize },
    AlphaBeta { node: usize, component: usize },
    BetaBeta { node: usize, component: usize },
}

/// Observations keyed by round; values are exact fractions (not necessarily reduced).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationTrace {
    pub entries: BTreeMap<(usize, Observed), (BigInt, BigInt)>,
}

impl ObservationTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn frac(v: &BigRational) -> (BigInt, BigInt) {
    (v.numer().clone(), v.denom().clone())
}

/// Filters a recorded run to what the adversary sees over rounds `0..=k1`.
pub fn capture_trace(run: &ExecutionRecord, adv: &AdversaryModel) -> ObservationTrace {
    let g = &run.graph;
    let n = g.n();
    let dim = run.dim();
    let horizon = run.report.k1;
    let mut entries = BTreeMap::new();
    let put_alpha = |entries: &mut BTreeMap<_, _>, k: usize, node: usize| {
        for channel in 0..=dim {
            entries.insert((k, Observed::Alpha { node, channel }), run.state(k, channel, node));
        }
    };
    for k in 0..=horizon {
        let weights_known = k < horizon;
        match adv.kind {
            AdversaryKind::HonestButCurious => {
                for &a in &adv.nodes {
                    put_alpha(&mut entries, k, a);
                    for channel in 0..=dim {
                        entries.insert((k, Observed::Beta { node: a, channel }), run.state(k, channel, n + a));
                    }
                    for &p in g.in_neighbors(a) {
                        put_alpha(&mut entries, k, p);
                    }
                    if !weights_known {
                        continue;
                    }
                    for component in 0..dim {
                        let w = run.weights(k, component);
                        for &to in g.out_neighbors(a).iter().chain([&a]) {
                            entries.insert((k, Observed::Weight { to, from: a, component }), frac(&w.p[to][a]));
                        }
                        for &from in g.in_neighbors(a) {
                            entries.insert((k, Observed::Weight { to: a, from, component }), frac(&w.p[a][from]));
                        }
                        entries.insert((k, Observed::BetaAlpha { node: a, component }), frac(&w.a_ba[a]));
                        entries.insert((k, Observed::AlphaBeta { node: a, component }), frac(&w.a_ab[a]));
                        entries.insert((k, Observed::BetaBeta { node: a, component }), frac(&w.a_bb[a]));
                    }
                }
            }
            AdversaryKind::Eavesdropper => {
                for &(i, j) in &adv.edges {
                    put_alpha(&mut entries, k, j);
                    if weights_known {
                        for component in 0..dim {
                            let w = run.weights(k, component);
                            entries.insert((k, Observed::Weight { to: i, from: j, component }), frac(&w.p[i][j]));
                        }
                    }
                }
            }
        }
    }
    ObservationTrace { entries }
}

/// Substituted round-0 data encoding `x_j(0) + e` and `x_m(0) - e`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentExecution {
    pub e: Vec<f64>,
    pub target: usize,
    pub witness: usize,
    pub situation: Situation,
    pub init: InitialData<BigRational>,
}

/// Shifts `x_j(0)` by `e` against witness `m`. A witness that is both an in- and
/// an out-neighbour can serve either situation, so the caller names it.
pub fn build_equivalent_execution(
    run: &ExecutionRecord,
    j: usize,
    m: usize,
    situation: Situation,
    e: &[f64],
) -> Result<EquivalentExecution> {
    let g = &run.graph;
    let dim = run.dim();
    if e.len() != dim {
        return Err(Error::Dimension(format!("{} shifts for {dim} components", e.len())));
    }
    let linked = match situation {
        Situation::I => g.in_neighbors(j).contains(&m),
        Situation::II => g.out_neighbors(j).contains(&m),
    };
    if !linked {
        return Err(Error::InvalidArgument(format!(
            "node {m} is not an {} of {j}",
            if situation == Situation::I { "in-neighbour" } else { "out-neighbour" }
        )));
    }
    let mut init = run.init.clone();
    for (c, &ec) in e.iter().enumerate() {
        let ec = BigRational::from_f64(ec);
        let two_e = &ec + &ec;
        init.inputs[j][c] += &ec;
        init.inputs[m][c] -= &ec;
        init.states[j].value[c].beta += &two_e;
        init.states[m].value[c].beta -= &two_e;
        let w = &mut init.weights[c];
        match situation {
            Situation::I => {
                let x = run.init.states[m].value[c].alpha.clone();
                if x.is_zero() {
                    return Err(Error::ZeroDenominator { node: m });
                }
                w.p[m][m] = (&w.p[m][m] * &x + &two_e) / &x;
                w.p[j][m] = (&w.p[j][m] * &x - &two_e) / &x;
            }
            Situation::II => {
                let x = run.init.states[j].value[c].alpha.clone();
                if x.is_zero() {
                    return Err(Error::ZeroDenominator { node: j });
                }
                w.p[j][j] = (&w.p[j][j] * &x - &two_e) / &x;
                w.p[m][j] = (&w.p[m][j] * &x + &two_e) / &x;
            }
        }
    }
    Ok(EquivalentExecution {
        e: e.to_vec(),
        target: j,
        witness: m,
        situation,
        init,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    pub max_deviation: f64,
    pub output_deviation: f64,
    /// `x_j(0)'' - x_j(0)` per component.
    pub input_shift: Vec<f64>,
    pub alt_outputs: Vec<Vec<f64>>,
    pub alt_k1: usize,
}

/// Largest elementwise difference; keys present in only one trace count as infinite.
pub fn trace_deviation(a: &ObservationTrace, b: &ObservationTrace) -> f64 {
    let mut worst: f64 = 0.0;
    for (key, (an, ad)) in &a.entries {
        let Some((bn, bd)) = b.entries.get(key) else {
            return f64::INFINITY;
        };
        if an * bd == bn * ad {
            continue;
        }
        let d = BigRational::new(an.clone(), ad.clone()) - BigRational::new(bn.clone(), bd.clone());
        worst = worst.max(ratio_to_f64(&d).abs());
    }
    if b.entries.keys().any(|k| !a.entries.contains_key(k)) {
        return f64::INFINITY;
    }
    worst
}

/// Re-executes the substituted run and compares what the adversary sees.
pub fn verify_equivalence(
    original: &ExecutionRecord,
    alt: &EquivalentExecution,
    adv: &AdversaryModel,
) -> Result<EquivalenceReport> {
    let rerun = ExecutionRecord::replay(&original.graph, alt.init.clone(), usize::MAX)?;
    let ta = capture_trace(original, adv);
    let mut tb = capture_trace(&rerun, adv);
    if rerun.report.k1 != original.report.k1 {
        tb.entries.retain(|(k, _), _| *k <= original.report.k1);
    }
    let max_deviation = trace_deviation(&ta, &tb);
    let output_deviation = original
        .outputs
        .iter()
        .flatten()
        .zip(rerun.outputs.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let j = alt.target;
    let input_shift = (0..original.dim())
        .map(|c| ratio_to_f64(&(&alt.init.inputs[j][c] - &original.init.inputs[j][c])))
        .collect();
    Ok(EquivalenceReport {
        equivalent: max_deviation <= TRACE_TOL,
        max_deviation,
        output_deviation,
        input_shift,
        alt_outputs: rerun.outputs,
        alt_k1: rerun.report.k1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub tested: usize,
    pub verified: usize,
    pub max_deviation: f64,
    pub max_output_deviation: f64,
    /// `max e - min e` over verified shifts: a lower bound on the uncertainty diameter.
    pub diameter_lower_bound: f64,
}

/// Verifies equivalence for each scalar shift `e` applied to every component.
pub fn diameter_probe(
    run: &ExecutionRecord,
    adv: &AdversaryModel,
    j: usize,
    m: usize,
    situation: Situation,
    shifts: &[f64],
) -> Result<ProbeReport> {
    let mut verified = Vec::new();
    let mut max_deviation: f64 = 0.0;
    let mut max_output_deviation: f64 = 0.0;
    for &e in shifts {
        let alt = build_equivalent_execution(run, j, m, situation, &vec![e; run.dim()])?;
        let rep = verify_equivalence(run, &alt, adv)?;
        max_deviation = max_deviation.max(rep.max_deviation);
        max_output_deviation = max_output_deviation.max(rep.output_deviation);
        if rep.equivalent {
            verified.push(e);
        }
    }
    let lo = verified.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = verified.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ProbeReport {
        tested: shifts.len(),
        verified: verified.len(),
        max_deviation,
        max_output_deviation,
        diameter_lower_bound: if verified.is_empty() { 0.0 } else { hi - lo },
    })
}
