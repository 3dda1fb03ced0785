//! Distributed termination: counters `c`, `r` and the max-consensus value `θ`.

use crate::digraph::DiGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TerminationState {
    /// Round index `k` this state belongs to.
    pub round: usize,
    pub c: usize,
    pub r: usize,
    pub theta: usize,
    pub c_frozen: Option<usize>,
    pub stop_round: Option<usize>,
}

impl TerminationState {
    pub fn stopped(&self) -> bool {
        self.stop_round.is_some()
    }
}

pub fn initial_states(n: usize) -> Vec<TerminationState> {
    vec![TerminationState::default(); n]
}

/// Frozen count for a node of degree `D_j`.
pub fn frozen_count(degree: usize) -> usize {
    2 * (degree + 1) + 1
}

/// Advances every node from round `k` to `k + 1`.
///
/// `defect_found[j]` says whether node `j` found its defect with the samples
/// available at `k + 1`. `θ` and `r` use the neighbours' values from round `k`.
pub fn termination_round(
    states: &[TerminationState],
    g: &DiGraph,
    defect_found: &[bool],
) -> Vec<TerminationState> {
    (0..g.n())
        .map(|j| {
            let old = &states[j];
            let round = old.round + 1;
            let mut theta = old.theta.max(old.c);
            for &i in g.in_neighbors(j) {
                theta = theta.max(states[i].theta.max(states[i].c));
            }
            let r = if theta != old.theta { 0 } else { old.r + 1 };
            let (c, c_frozen) = match old.c_frozen {
                Some(f) => (f, Some(f)),
                None if defect_found[j] => (old.c + 1, Some(old.c + 1)),
                None => (old.c + 1, None),
            };
            let stop_round = old
                .stop_round
                .or_else(|| c_frozen.filter(|&f| r == f).map(|_| round));
            TerminationState {
                round,
                c,
                r,
                theta,
                c_frozen,
                stop_round,
            }
        })
        .collect()
}

/// Closed form `(k_t - 2D_j - 2)/2 - 1`; errors unless it is a nonnegative integer.
pub fn compute_dmax(stop_round: usize, degree: usize) -> Result<usize> {
    let num = stop_round as i64 - 2 * degree as i64 - 2;
    if num < 0 || num % 2 != 0 || num / 2 < 1 {
        return Err(Error::Protocol(format!(
            "(k_t - 2D_j - 2)/2 - 1 is not a nonnegative integer for k_t = {stop_round}, D_j = {degree}"
        )));
    }
    Ok((num / 2 - 1) as usize)
}

/// `D_max` recovered from the settled max-consensus value `θ = 2 D_max + 3`.
pub fn dmax_from_theta(theta: usize) -> Result<usize> {
    if theta < 3 || theta % 2 == 0 {
        return Err(Error::Protocol(format!(
            "max-consensus value {theta} is not a frozen count 2D+3"
        )));
    }
    Ok((theta - 3) / 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_count_is_defect_round() {
        assert_eq!(frozen_count(0), 3);
        assert_eq!(frozen_count(1), 5);
        for d in 0..20 {
            assert_eq!(frozen_count(d), crate::hankel::samples_for_dimension(d + 1));
        }
    }

    #[test]
    fn fresh_states_are_running() {
        let s = initial_states(4);
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|x| !x.stopped() && x.c_frozen.is_none()));
    }
}
