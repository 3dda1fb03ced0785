//! Baseline push-sum and the state-decomposition dynamics.

use crate::digraph::DiGraph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use nalgebra::{DMatrix, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default half-width of the uniform draw for initial-phase weights.
pub const DEFAULT_WEIGHT_RANGE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Initial,
    Steady,
}

/// Weights of one round. `p[j][i]` is the weight node `i` puts on the link to `j`
/// (`p[i][i]` is its self weight).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet<S = f64> {
    pub phase: Phase,
    pub p: Vec<Vec<S>>,
    pub a_ab: Vec<S>,
    pub a_ba: Vec<S>,
    pub a_bb: Vec<S>,
}

impl<S: Scalar> WeightSet<S> {
    pub fn n(&self) -> usize {
        self.a_ab.len()
    }

    /// Column sums of the stacked matrix: α columns first, then β columns.
    pub fn column_sums(&self) -> Vec<S> {
        let n = self.n();
        let mut sums = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut s = self.a_ba[i].clone();
            for row in &self.p {
                s = s + row[i].clone();
            }
            sums.push(s);
        }
        for i in 0..n {
            sums.push(self.a_ab[i].clone() + self.a_bb[i].clone());
        }
        sums
    }

    pub fn to_f64(&self) -> WeightSet<f64> {
        let conv = |v: &Vec<S>| v.iter().map(Scalar::to_f64).collect::<Vec<f64>>();
        WeightSet {
            phase: self.phase,
            p: self.p.iter().map(conv).collect(),
            a_ab: conv(&self.a_ab),
            a_ba: conv(&self.a_ba),
            a_bb: conv(&self.a_bb),
        }
    }
}

/// Constant weights used for every round `k >= 1`.
pub fn steady_weights<S: Scalar>(g: &DiGraph) -> WeightSet<S> {
    let n = g.n();
    let mut p = vec![vec![S::zero(); n]; n];
    let mut a_ba = Vec::with_capacity(n);
    for i in 0..n {
        let w = S::recip_of(2 + g.out_degree(i) as u64);
        p[i][i] = w.clone();
        for &j in g.out_neighbors(i) {
            p[j][i] = w.clone();
        }
        a_ba.push(w);
    }
    WeightSet {
        phase: Phase::Steady,
        p,
        a_ab: vec![S::recip_of(2); n],
        a_ba,
        a_bb: vec![S::recip_of(2); n],
    }
}

/// Random weights for round 0: `p_ji(0)` uniform in `[-range, range]` on `N_i^+ ∪ {i}`,
/// `a_i^{βα}(0)` takes the residual of the column constraint.
pub fn initial_weights<S: Scalar, R: Rng + ?Sized>(
    g: &DiGraph,
    rng: &mut R,
    range: f64,
) -> WeightSet<S> {
    let n = g.n();
    let mut p = vec![vec![S::zero(); n]; n];
    let mut a_ba = Vec::with_capacity(n);
    for i in 0..n {
        let mut recipients: Vec<usize> = g.out_neighbors(i).to_vec();
        recipients.push(i);
        recipients.sort_unstable();
        let mut total = S::zero();
        for j in recipients {
            let w = S::from_f64(rng.random_range(-range..=range));
            total = total + w.clone();
            p[j][i] = w;
        }
        a_ba.push(S::one() - total);
    }
    WeightSet {
        phase: Phase::Initial,
        p,
        a_ab: vec![S::one(); n],
        a_ba,
        a_bb: vec![S::zero(); n],
    }
}

pub fn make_weights(g: &DiGraph, phase: Phase, seed: u64) -> WeightSet<f64> {
    match phase {
        Phase::Steady => steady_weights(g),
        Phase::Initial => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            initial_weights(g, &mut rng, DEFAULT_WEIGHT_RANGE)
        }
    }
}

/// α and β substates of one iteration at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Substates<S = f64> {
    pub alpha: S,
    pub beta: S,
}

/// Per-node state: one value iteration per input component (l = 1) and a shared
/// mass iteration (l = 2). Histories record α from `k = 1` on.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConsensusState<S = f64> {
    pub value: Vec<Substates<S>>,
    pub mass: Substates<S>,
    pub value_history: Vec<Vec<S>>,
    pub mass_history: Vec<S>,
}

impl<S: Scalar> AgentConsensusState<S> {
    /// Splits `input` as `α + β = 2x` with the given α, and sets the mass to `(0, 2)`.
    pub fn split(input: &[S], alpha: &[S]) -> Result<Self> {
        if input.len() != alpha.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} alpha substates",
                input.len(),
                alpha.len()
            )));
        }
        let two = S::one() + S::one();
        let value = input
            .iter()
            .zip(alpha)
            .map(|(x, a)| Substates {
                alpha: a.clone(),
                beta: two.clone() * x.clone() - a.clone(),
            })
            .collect();
        Ok(Self {
            value,
            mass: Substates {
                alpha: S::zero(),
                beta: two,
            },
            value_history: vec![Vec::new(); input.len()],
            mass_history: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }
}

/// One round of the decomposed dynamics on a single iteration channel.
pub fn channel_round<S: Scalar>(
    alpha: &[S],
    beta: &[S],
    w: &WeightSet<S>,
    g: &DiGraph,
) -> (Vec<S>, Vec<S>) {
    let n = g.n();
    let mut next_alpha = Vec::with_capacity(n);
    let mut next_beta = Vec::with_capacity(n);
    for i in 0..n {
        let mut a = w.p[i][i].clone() * alpha[i].clone() + w.a_ab[i].clone() * beta[i].clone();
        for &j in g.in_neighbors(i) {
            a = a + w.p[i][j].clone() * alpha[j].clone();
        }
        next_alpha.push(a);
        next_beta.push(w.a_ba[i].clone() * alpha[i].clone() + w.a_bb[i].clone() * beta[i].clone());
    }
    (next_alpha, next_beta)
}

/// One round with a separate weight set per value component; the mass channel uses `mass_w`.
pub fn decomposed_round_with<S: Scalar>(
    states: &[AgentConsensusState<S>],
    value_w: &[&WeightSet<S>],
    mass_w: &WeightSet<S>,
    g: &DiGraph,
) -> Result<Vec<AgentConsensusState<S>>> {
    let n = g.n();
    if states.len() != n {
        return Err(Error::Dimension(format!("{} states for {n} nodes", states.len())));
    }
    let dim = states.first().map_or(0, AgentConsensusState::dim);
    if states.iter().any(|s| s.dim() != dim) || value_w.len() != dim {
        return Err(Error::Dimension("inconsistent input dimension".into()));
    }
    let mut out = states.to_vec();
    for (c, w) in value_w.iter().enumerate() {
        let alpha: Vec<S> = states.iter().map(|s| s.value[c].alpha.clone()).collect();
        let beta: Vec<S> = states.iter().map(|s| s.value[c].beta.clone()).collect();
        let (na, nb) = channel_round(&alpha, &beta, w, g);
        for (st, (a, b)) in out.iter_mut().zip(na.into_iter().zip(nb)) {
            st.value_history[c].push(a.clone());
            st.value[c] = Substates { alpha: a, beta: b };
        }
    }
    let alpha: Vec<S> = states.iter().map(|s| s.mass.alpha.clone()).collect();
    let beta: Vec<S> = states.iter().map(|s| s.mass.beta.clone()).collect();
    let (na, nb) = channel_round(&alpha, &beta, mass_w, g);
    for (st, (a, b)) in out.iter_mut().zip(na.into_iter().zip(nb)) {
        st.mass_history.push(a.clone());
        st.mass = Substates { alpha: a, beta: b };
    }
    Ok(out)
}

/// One round of the decomposed dynamics with the same weights on every channel.
pub fn decomposed_round<S: Scalar>(
    states: &[AgentConsensusState<S>],
    w: &WeightSet<S>,
    g: &DiGraph,
) -> Result<Vec<AgentConsensusState<S>>> {
    let dim = states.first().map_or(0, AgentConsensusState::dim);
    let value_w = vec![w; dim];
    decomposed_round_with(states, &value_w, w, g)
}

/// Stacked `2n x 2n` transition matrix for weights of either phase.
pub fn transition_matrix(w: &WeightSet<f64>) -> DMatrix<f64> {
    let n = w.n();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            m[(j, i)] = w.p[j][i];
        }
        m[(j, n + j)] = w.a_ab[j];
        m[(n + j, j)] = w.a_ba[j];
        m[(n + j, n + j)] = w.a_bb[j];
    }
    m
}

/// `P̂ = [P, ½I; Λ, ½I]` for steady-phase weights.
pub fn stacked_matrix(w: &WeightSet<f64>) -> Result<DMatrix<f64>> {
    if w.phase != Phase::Steady {
        return Err(Error::InitialPhaseWeights);
    }
    Ok(transition_matrix(w))
}

/// Largest eigenvalue modulus, or NaN if the Schur iteration never settles.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    // Unbounded Schur iteration can cycle at machine epsilon; loosen the deflation test instead.
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13, 1e-12] {
        if let Some(s) = Schur::try_new(m.clone(), eps, 10_000) {
            return s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        }
    }
    f64::NAN
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl BaselineState {
    pub fn new(inputs: &[f64]) -> Self {
        Self {
            x1: inputs.to_vec(),
            x2: vec![1.0; inputs.len()],
        }
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.x1.iter().zip(&self.x2).map(|(a, b)| a / b).collect()
    }
}

pub fn baseline_push_sum_round(state: &BaselineState, g: &DiGraph) -> BaselineState {
    let n = g.n();
    let share = |v: &[f64], i: usize| v[i] / (1 + g.out_degree(i)) as f64;
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for i in 0..n {
        let mut a = share(&state.x1, i);
        let mut b = share(&state.x2, i);
        for &j in g.in_neighbors(i) {
            a += share(&state.x1, j);
            b += share(&state.x2, j);
        }
        x1.push(a);
        x2.push(b);
    }
    BaselineState { x1, x2 }
}

/// First round at which every ratio is within `tol` of the mean, if reached by `max_rounds`.
pub fn baseline_rounds_to_tolerance(
    g: &DiGraph,
    inputs: &[f64],
    tol: f64,
    max_rounds: usize,
) -> Option<usize> {
    let mean = inputs.iter().sum::<f64>() / inputs.len() as f64;
    let mut st = BaselineState::new(inputs);
    for k in 0..=max_rounds {
        if st.ratios().iter().all(|r| (r - mean).abs() <= tol) {
            return Some(k);
        }
        st = baseline_push_sum_round(&st, g);
    }
    None
}
