//! Round simulators behind a session: floating point, and exact scaled-integer.

use crate::digraph::DiGraph;
use crate::error::{Error, Result};
use crate::hankel::{self, exact, PolyCoefficients};
use crate::prftps::InitialData;
use crate::pushsum::{decomposed_round, decomposed_round_with, steady_weights, AgentConsensusState, WeightSet};
use crate::scalar::ratio_to_f64;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub(crate) trait Engine: Sized {
    type Num: crate::scalar::Scalar;
    type Kernel: Clone + std::fmt::Debug;

    /// Runs the initial-phase round; afterwards one sample `x(1)` is available.
    fn start(g: &DiGraph, init: &InitialData<Self::Num>, rank_tol: f64) -> Result<Self>;
    /// One steady-phase round.
    fn advance(&mut self);
    fn samples(&self) -> usize;
    fn test_dimension(&mut self, j: usize, k: usize) -> Result<Option<(PolyCoefficients, Self::Kernel)>>;
    fn final_value(&self, j: usize, kernel: &Self::Kernel) -> Result<Vec<f64>>;
}

fn first_round<S: crate::scalar::Scalar>(
    g: &DiGraph,
    init: &InitialData<S>,
) -> Result<Vec<AgentConsensusState<S>>> {
    let refs: Vec<&WeightSet<S>> = init.weights.iter().collect();
    decomposed_round_with(&init.states, &refs, &init.weights[0], g)
}

pub(crate) struct FloatEngine {
    g: DiGraph,
    steady: WeightSet<f64>,
    states: Vec<AgentConsensusState<f64>>,
    tol: f64,
}

impl Engine for FloatEngine {
    type Num = f64;
    type Kernel = Vec<f64>;

    fn start(g: &DiGraph, init: &InitialData<f64>, rank_tol: f64) -> Result<Self> {
        Ok(Self {
            g: g.clone(),
            steady: steady_weights(g),
            states: first_round(g, init)?,
            tol: rank_tol,
        })
    }

    fn advance(&mut self) {
        self.states = decomposed_round(&self.states, &self.steady, &self.g).expect("consistent shapes");
    }

    fn samples(&self) -> usize {
        self.states[0].mass_history.len()
    }

    fn test_dimension(&mut self, j: usize, k: usize) -> Result<Option<(PolyCoefficients, Vec<f64>)>> {
        let st = &self.states[j];
        let values: Vec<&[f64]> = st.value_history.iter().map(Vec::as_slice).collect();
        let found = hankel::test_dimension(&values, &st.mass_history, k, self.tol, j)?;
        Ok(found.map(|p| {
            let b = p.beta.clone();
            (p, b)
        }))
    }

    fn final_value(&self, j: usize, beta: &Vec<f64>) -> Result<Vec<f64>> {
        let st = &self.states[j];
        st.value_history
            .iter()
            .map(|h| hankel::final_value_slices(h, &st.mass_history, beta, j))
            .collect()
    }
}

/// Exact simulator. Values at round `k >= 1` are `z(k) / (den * L^(k-1))` with
/// integer `z`, where `L = lcm(2, 2 + D_i^+)` clears every steady weight.
pub(crate) struct ExactEngine {
    g: DiGraph,
    n: usize,
    l: BigInt,
    sender: Vec<BigInt>,
    half: BigInt,
    den: BigInt,
    /// `hist[k-1][channel][idx]`: channels are value components then mass; idx is α then β.
    hist: Vec<Vec<Vec<BigInt>>>,
    diffs: Vec<Vec<Vec<BigInt>>>,
    residues: Vec<Vec<Vec<[u64; 2]>>>,
}

impl ExactEngine {
    pub(crate) fn channels(&self) -> usize {
        self.hist[0].len()
    }

    /// Exact value of entry `idx` (α in `0..n`, β in `n..2n`) of `channel` at round `k >= 1`.
    pub(crate) fn entry(&self, k: usize, channel: usize, idx: usize) -> (BigInt, BigInt) {
        let den = &self.den * num_traits::pow(self.l.clone(), k - 1);
        (self.hist[k - 1][channel][idx].clone(), den)
    }

    fn extend_diffs(&mut self, j: usize, upto: usize) {
        for ch in 0..self.channels() {
            while self.diffs[j][ch].len() < upto {
                let m = self.diffs[j][ch].len();
                let e = &self.hist[m + 1][ch][j] - &self.l * &self.hist[m][ch][j];
                self.residues[j][ch].push([exact::residue(&e, exact::PRIMES[0]), exact::residue(&e, exact::PRIMES[1])]);
                self.diffs[j][ch].push(e);
            }
        }
    }

    fn beta_from_gamma(&self, gamma: &[BigInt]) -> Vec<f64> {
        let mut scale = BigInt::one();
        let beta: Vec<BigInt> = gamma
            .iter()
            .map(|g| {
                let b = g * &scale;
                scale *= &self.l;
                b
            })
            .collect();
        let max = beta.iter().map(|b| b.abs()).max().unwrap_or_else(BigInt::one);
        if max.is_zero() {
            return vec![0.0; beta.len()];
        }
        let v: Vec<f64> = beta
            .iter()
            .map(|b| ratio_to_f64(&BigRational::new(b.clone(), max.clone())))
            .collect();
        hankel::canonicalize(&v)
    }
}

impl Engine for ExactEngine {
    type Num = BigRational;
    type Kernel = Vec<BigInt>;

    fn start(g: &DiGraph, init: &InitialData<BigRational>, _rank_tol: f64) -> Result<Self> {
        let n = g.n();
        let states = first_round(g, init)?;
        let dim = init.dim();
        let mut channels: Vec<Vec<BigRational>> = Vec::with_capacity(dim + 1);
        for c in 0..dim {
            channels.push(
                states
                    .iter()
                    .map(|s| s.value[c].alpha.clone())
                    .chain(states.iter().map(|s| s.value[c].beta.clone()))
                    .collect(),
            );
        }
        channels.push(
            states
                .iter()
                .map(|s| s.mass.alpha.clone())
                .chain(states.iter().map(|s| s.mass.beta.clone()))
                .collect(),
        );
        let den = channels
            .iter()
            .flatten()
            .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
        let z1: Vec<Vec<BigInt>> = channels
            .iter()
            .map(|ch| ch.iter().map(|v| v.numer() * (&den / v.denom())).collect())
            .collect();
        let l = (0..n).fold(BigInt::from(2u32), |acc, i| acc.lcm(&BigInt::from(2 + g.out_degree(i))));
        let sender = (0..n).map(|i| &l / BigInt::from(2 + g.out_degree(i))).collect();
        let half = &l / BigInt::from(2u32);
        Ok(Self {
            g: g.clone(),
            n,
            l,
            sender,
            half,
            den,
            hist: vec![z1],
            diffs: vec![vec![Vec::new(); dim + 1]; n],
            residues: vec![vec![Vec::new(); dim + 1]; n],
        })
    }

    fn advance(&mut self) {
        let n = self.n;
        let cur = self.hist.last().expect("started");
        let next: Vec<Vec<BigInt>> = cur
            .iter()
            .map(|z| {
                let mut out = Vec::with_capacity(2 * n);
                for j in 0..n {
                    let mut a = &self.sender[j] * &z[j] + &self.half * &z[n + j];
                    for &i in self.g.in_neighbors(j) {
                        a += &self.sender[i] * &z[i];
                    }
                    out.push(a);
                }
                for j in 0..n {
                    out.push(&self.sender[j] * &z[j] + &self.half * &z[n + j]);
                }
                out
            })
            .collect();
        self.hist.push(next);
    }

    fn samples(&self) -> usize {
        self.hist.len()
    }

    fn test_dimension(&mut self, j: usize, k: usize) -> Result<Option<(PolyCoefficients, Vec<BigInt>)>> {
        let needed = hankel::samples_for_dimension(k);
        if self.samples() < needed {
            return Err(Error::TrajectoryTooShort {
                needed,
                have: self.samples(),
            });
        }
        self.extend_diffs(j, 2 * k);
        let dim = self.channels() - 1;
        let flags: Vec<bool> = (0..=dim)
            .map(|ch| exact::screen(&self.residues[j][ch][..2 * k], k))
            .collect();
        let values = &flags[..dim];
        if !values.iter().any(|&f| f) {
            return Ok(None);
        }
        let degenerate = |why: &str| Error::Degenerate {
            node: j,
            reason: format!("{why} at dimension {k}"),
        };
        if !values.iter().all(|&f| f) || !flags[dim] {
            return Err(degenerate("value and mass trajectories disagree"));
        }
        let Some(gamma) = exact::integer_kernel(&self.diffs[j][0][..2 * k], k) else {
            return Ok(None);
        };
        if !(0..=dim).all(|ch| exact::annihilates(&self.diffs[j][ch][..2 * k], &gamma)) {
            return Err(degenerate("kernel does not annihilate every trajectory"));
        }
        let poly = PolyCoefficients {
            degree: k - 1,
            beta: self.beta_from_gamma(&gamma),
            defect_round: needed,
        };
        Ok(Some((poly, gamma)))
    }

    fn final_value(&self, j: usize, gamma: &Vec<BigInt>) -> Result<Vec<f64>> {
        let m = gamma.len();
        if self.samples() < m {
            return Err(Error::TrajectoryTooShort {
                needed: m,
                have: self.samples(),
            });
        }
        let dim = self.channels() - 1;
        let series = |ch: usize| -> Vec<BigInt> { self.hist[..m].iter().map(|z| z[ch][j].clone()).collect() };
        let den = exact::dot(gamma, &series(dim));
        if den.is_zero() {
            return Err(Error::DivideByZero { node: j });
        }
        Ok((0..dim)
            .map(|c| ratio_to_f64(&BigRational::new(exact::dot(gamma, &series(c)), den.clone())))
            .collect())
    }
}
