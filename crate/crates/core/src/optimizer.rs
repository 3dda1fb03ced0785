//! Gradient descent with row-stochastic mixing and finite-time gradient averaging.

use crate::digraph::{is_strongly_connected, DiGraph};
use crate::error::{Error, Result};
use crate::prftps::{PrftpsConfig, PrftpsSession};
use crate::pushsum::spectral_radius;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Residuals below this are excluded from rate fitting.
pub const RATE_FIT_FLOOR: f64 = 1e-12;

pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Strong convexity modulus μ.
    fn strong_convexity(&self) -> f64;
    /// Gradient Lipschitz constant L.
    fn smoothness(&self) -> f64;
}

/// `f(x) = ||A x - b||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresObjective {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LeastSquaresObjective {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Dimension(format!("A has {} rows, b has {}", a.nrows(), b.len())));
        }
        Ok(Self { a, b })
    }

    /// Standard-normal `A` (`q x p`) and `b`.
    pub fn random<R: Rng + ?Sized>(q: usize, p: usize, rng: &mut R) -> Self {
        let a = DMatrix::from_fn(q, p, |_, _| rng.sample(StandardNormal));
        let b = DVector::from_fn(q, |_, _| rng.sample(StandardNormal));
        Self { a, b }
    }

    fn gram_eigs(&self) -> (f64, f64) {
        let e = (self.a.transpose() * &self.a).symmetric_eigenvalues();
        (e.min(), e.max())
    }
}

impl Objective for LeastSquaresObjective {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        (&self.a * DVector::from_column_slice(x) - &self.b).norm_squared()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = &self.a * DVector::from_column_slice(x) - &self.b;
        (self.a.transpose() * r * 2.0).iter().copied().collect()
    }

    fn strong_convexity(&self) -> f64 {
        2.0 * self.gram_eigs().0.max(0.0)
    }

    fn smoothness(&self) -> f64 {
        2.0 * self.gram_eigs().1
    }
}

/// Minimizer of `sum_i ||A_i x - b_i||^2`.
pub fn normal_equations(objs: &[LeastSquaresObjective]) -> Result<Vec<f64>> {
    let p = objs.first().map(|o| o.a.ncols()).ok_or(Error::Dimension("no objectives".into()))?;
    let mut gram = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for o in objs {
        gram += o.a.transpose() * &o.a;
        rhs += o.a.transpose() * &o.b;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("normal equations are singular".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowStochasticMixer {
    pub abar: DMatrix<f64>,
    /// Left eigenvector for eigenvalue 1, normalized so its entries sum to `n`.
    pub perron_left: DVector<f64>,
    /// `ρ(Ā - 1uᵀ/n)`.
    pub contraction: f64,
}

/// `ā_ij = 1/(1 + |N_i^-|)` on `N_i^- ∪ {i}`.
pub fn make_mixer(g: &DiGraph) -> Result<RowStochasticMixer> {
    if !is_strongly_connected(g) {
        return Err(Error::NotStronglyConnected);
    }
    let n = g.n();
    let mut abar = DMatrix::zeros(n, n);
    for i in 0..n {
        let w = 1.0 / (1 + g.in_neighbors(i).len()) as f64;
        abar[(i, i)] = w;
        for &j in g.in_neighbors(i) {
            abar[(i, j)] = w;
        }
    }
    let shifted = abar.transpose() - DMatrix::identity(n, n);
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let mut u: DVector<f64> = v_t.row(idx).transpose();
    let s = u.sum();
    u *= n as f64 / s;
    if u.iter().any(|&v| v < -1e-12) {
        return Err(Error::Protocol("left Perron vector has negative entries".into()));
    }
    let proj = DMatrix::from_element(n, 1, 1.0) * u.transpose() / n as f64;
    let contraction = spectral_radius(&(&abar - proj));
    if !(contraction < 1.0) {
        return Err(Error::Protocol(format!("ρ(Ā - 1uᵀ/n) = {contraction} is not below 1")));
    }
    Ok(RowStochasticMixer {
        abar,
        perron_left: u,
        contraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub t: usize,
    pub rounds_cumulative: usize,
    pub normalized_residual: f64,
    pub consensus_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub t: usize,
    pub eta: f64,
    pub rounds: usize,
    /// Largest `|y_i - mean gradient|` seen so far, relative to `1 + |mean gradient|`.
    pub max_tracking_error: f64,
}

impl OptimizerState {
    pub fn new(x0: Vec<Vec<f64>>, eta: f64) -> Self {
        let p = x0.first().map_or(0, Vec::len);
        Self {
            y: vec![vec![0.0; p]; x0.len()],
            x: x0,
            t: 0,
            eta,
            rounds: 0,
            max_tracking_error: 0.0,
        }
    }
}

pub fn gd_step(
    state: &OptimizerState,
    mixer: &RowStochasticMixer,
    session: &mut PrftpsSession,
    objectives: &[Box<dyn Objective>],
) -> Result<OptimizerState> {
    let n = state.x.len();
    if objectives.len() != n || mixer.abar.nrows() != n {
        return Err(Error::Dimension(format!("{} objectives for {n} nodes", objectives.len())));
    }
    let grads: Vec<Vec<f64>> = objectives.iter().zip(&state.x).map(|(f, x)| f.gradient(x)).collect();
    let p = grads[0].len();
    let report = session.step(&grads, state.t)?;
    let y = report.outputs;
    let mut err = state.max_tracking_error;
    for c in 0..p {
        let mean = grads.iter().map(|g| g[c]).sum::<f64>() / n as f64;
        for yi in &y {
            err = err.max((yi[c] - mean).abs() / (1.0 + mean.abs()));
        }
    }
    let x = (0..n)
        .map(|i| {
            (0..p)
                .map(|c| {
                    let mixed: f64 = (0..n).map(|j| mixer.abar[(i, j)] * state.x[j][c]).sum();
                    mixed - state.eta * y[i][c]
                })
                .collect()
        })
        .collect();
    Ok(OptimizerState {
        x,
        y,
        t: state.t + 1,
        eta: state.eta,
        rounds: state.rounds + report.rounds,
        max_tracking_error: err,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `(1/n) sum_i ||x_i - x*|| / ||x_i(0) - x*||`, which is 1 at `t = 0`.
pub fn normalized_residual(x: &[Vec<f64>], x0: &[Vec<f64>], x_star: &[f64]) -> f64 {
    let n = x.len() as f64;
    x.iter()
        .zip(x0)
        .map(|(xi, x0i)| {
            let d0 = dist(x0i, x_star);
            if d0 == 0.0 {
                dist(xi, x_star)
            } else {
                dist(xi, x_star) / d0
            }
        })
        .sum::<f64>()
        / n
}

/// `||x - 1 ⊗ x̄||` with `x̄ = uᵀx / n`.
pub fn consensus_error(x: &[Vec<f64>], u: &DVector<f64>) -> f64 {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    let xbar: Vec<f64> = (0..p)
        .map(|c| (0..n).map(|i| u[i] * x[i][c]).sum::<f64>() / n as f64)
        .collect();
    x.iter().map(|xi| dist(xi, &xbar).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Least-squares slope of `ln(residual)` against `t`.
    pub slope: f64,
    /// Median of `r(t+1)/r(t)` over the second half of the fitted points.
    pub tail_median_ratio: f64,
    pub points: usize,
}

pub fn fit_rate(rows: &[ReportRow]) -> RateFit {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.normalized_residual.is_finite() && r.normalized_residual > RATE_FIT_FLOOR)
        .map(|r| (r.t as f64, r.normalized_residual))
        .collect();
    let m = pts.len() as f64;
    let slope = if pts.len() < 2 {
        f64::NAN
    } else {
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / m;
        let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - ml)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        cov / var
    };
    let tail = &pts[pts.len() / 2..];
    let mut ratios: Vec<f64> = tail.windows(2).map(|w| w[1].1 / w[0].1).collect();
    ratios.sort_by(f64::total_cmp);
    let tail_median_ratio = if ratios.is_empty() {
        f64::NAN
    } else if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };
    RateFit {
        slope,
        tail_median_ratio,
        points: pts.len(),
    }
}

pub struct OptimizerConfig {
    pub graph: DiGraph,
    pub objectives: Vec<Box<dyn Objective>>,
    pub x0: Vec<Vec<f64>>,
    pub x_star: Vec<f64>,
    pub eta: f64,
    pub steps: usize,
    pub seed: u64,
    pub prftps: PrftpsConfig,
}

impl OptimizerConfig {
    /// Least-squares instance with standard-normal `A_i` (`q x p`), `b_i` and `x_i(0)`.
    pub fn least_squares(graph: DiGraph, q: usize, p: usize, eta: f64, steps: usize, seed: u64) -> Result<Self> {
        let n = graph.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let objs: Vec<LeastSquaresObjective> = (0..n).map(|_| LeastSquaresObjective::random(q, p, &mut rng)).collect();
        let x_star = normal_equations(&objs)?;
        let x0 = (0..n)
            .map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Ok(Self {
            graph,
            objectives: objs.into_iter().map(|o| Box::new(o) as Box<dyn Objective>).collect(),
            x0,
            x_star,
            eta,
            steps,
            seed,
            prftps: PrftpsConfig::default(),
        })
    }

    /// `1/(μ + L)` with `μ = min_i μ_i` and `L = max_i L_i`.
    pub fn eta_bound(&self) -> f64 {
        let mu = self.objectives.iter().map(|f| f.strong_convexity()).fold(f64::INFINITY, f64::min);
        let l = self.objectives.iter().map(|f| f.smoothness()).fold(0.0, f64::max);
        1.0 / (mu + l)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    pub x_star: Vec<f64>,
    pub final_x: Vec<Vec<f64>>,
    pub k1: Option<usize>,
    pub k_max: Option<usize>,
    pub rate: RateFit,
    pub eta_bound: f64,
    pub eta_warning: bool,
    /// Steps where the residual rose while above the fitting floor.
    pub non_monotone_steps: usize,
    pub diverged: bool,
    pub max_tracking_error: f64,
}

pub fn run(cfg: &OptimizerConfig) -> Result<ConvergenceReport> {
    let n = cfg.graph.n();
    if cfg.x0.len() != n || cfg.objectives.len() != n {
        return Err(Error::Dimension(format!("config sized for {} nodes", cfg.x0.len())));
    }
    if !(cfg.eta > 0.0) {
        return Err(Error::InvalidArgument(format!("stepsize {} must be positive", cfg.eta)));
    }
    let mixer = make_mixer(&cfg.graph)?;
    let mut session = PrftpsSession::new(cfg.graph.clone(), cfg.prftps.clone(), cfg.seed)?;
    let mut state = OptimizerState::new(cfg.x0.clone(), cfg.eta);
    let row = |s: &OptimizerState| ReportRow {
        t: s.t,
        rounds_cumulative: s.rounds,
        normalized_residual: normalized_residual(&s.x, &cfg.x0, &cfg.x_star),
        consensus_error: consensus_error(&s.x, &mixer.perron_left),
    };
    let mut rows = vec![row(&state)];
    for _ in 0..cfg.steps {
        state = gd_step(&state, &mixer, &mut session, &cfg.objectives)?;
        rows.push(row(&state));
        if !rows.last().expect("pushed").normalized_residual.is_finite() {
            break;
        }
    }
    let non_monotone_steps = rows
        .windows(2)
        .filter(|w| w[0].normalized_residual > RATE_FIT_FLOOR && w[1].normalized_residual > w[0].normalized_residual)
        .count();
    let last = rows.last().expect("initial row").normalized_residual;
    let eta_bound = cfg.eta_bound();
    let k1 = rows.get(1).map(|r| r.rounds_cumulative);
    Ok(ConvergenceReport {
        rate: fit_rate(&rows),
        diverged: !last.is_finite() || last > rows[0].normalized_residual,
        rows,
        x_star: cfg.x_star.clone(),
        final_x: state.x,
        k1,
        k_max: session.k_max,
        eta_bound,
        eta_warning: cfg.eta >= eta_bound,
        non_monotone_steps,
        max_tracking_error: state.max_tracking_error,
    })
}
