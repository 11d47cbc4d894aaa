//! Numerical checks of the convexity/smoothness properties of softmax
//! cross-entropy on a simplified graph convolution, and of the descent
//! guarantee for a step along a correlated auxiliary gradient.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphdata::{AdjacencyScheme, Graph};
use crate::models::{main_loss, sgc_features};
use crate::seed;
use crate::ssl::global_contrastive_loss;
use crate::tensor::{row_softmax, DenseMatrix, Tape};

/// Off-diagonal Frobenius norm at which the Jacobi iteration stops.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Slack on the eigenvalue bounds.
pub const EIG_TOL: f64 = 1e-9;
/// Multiplies the estimated smoothness constant.
pub const SMOOTH_SAFETY: f64 = 1.1;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric within {0}")]
    Asymmetric(f64),
    #[error("Jacobi iteration did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("unknown theorem '{name}' (known: {known})")]
    UnknownTheorem { name: String, known: String },
    #[error("{0}")]
    Invalid(String),
}

/// Hessian of `−log softmax(z)[y]` with respect to `z`:
/// `H_ij = −p_i p_j` off the diagonal and `p_i − p_i²` on it. It does not
/// depend on `y`.
pub fn softmax_ce_hessian(logits: &DenseMatrix) -> DenseMatrix {
    let p = row_softmax(logits);
    let c = logits.cols();
    DenseMatrix::from_fn(c, c, |i, j| {
        let (pi, pj) = (p.get(0, i), p.get(0, j));
        if i == j {
            pi - pi * pi
        } else {
            -pi * pj
        }
    })
}

/// `p − onehot(y)`, the gradient of cross-entropy with respect to logits.
pub fn ce_gradient(logits: &DenseMatrix, y: usize) -> DenseMatrix {
    let mut g = row_softmax(logits);
    g.set(0, y, g.get(0, y) - 1.0);
    g
}

/// Eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi
/// rotations.
pub fn jacobi_eigenvalues(a: &DenseMatrix, sym_tol: f64) -> Result<Vec<f64>, TheoryError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(TheoryError::NotSquare(n, a.cols()));
    }
    if !a.is_symmetric(sym_tol) {
        return Err(TheoryError::Asymmetric(sym_tol));
    }
    let mut m: Vec<Vec<f64>> = (0..n).map(|r| a.row(r).to_vec()).collect();
    let off = |m: &Vec<Vec<f64>>| {
        let mut s = 0.0;
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    s += v * v;
                }
            }
        }
        s.sqrt()
    };
    let mut converged = off(&m) < JACOBI_TOL;
    let mut sweep = 0;
    while !converged && sweep < JACOBI_MAX_SWEEPS {
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
        sweep += 1;
        converged = off(&m) < JACOBI_TOL;
    }
    if !converged {
        return Err(TheoryError::NoConvergence(JACOBI_MAX_SWEEPS));
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCheck {
    pub min_eig: f64,
    pub max_eig: f64,
    pub pass: bool,
}

/// Passes iff every eigenvalue lies in `[−1e-9, 2 + 1e-9]`.
pub fn check_psd_and_smooth(h: &DenseMatrix, sym_tol: f64) -> Result<SpectrumCheck, TheoryError> {
    let eig = jacobi_eigenvalues(h, sym_tol)?;
    let (min_eig, max_eig) = (eig[0], eig[eig.len() - 1]);
    Ok(SpectrumCheck {
        min_eig,
        max_eig,
        pass: min_eig >= -EIG_TOL && max_eig <= 2.0 + EIG_TOL,
    })
}

/// Outcome of a randomized verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub trials: usize,
    pub violations: usize,
    /// Trials whose premise did not hold.
    pub skipped: usize,
    /// Smallest slack observed; negative means a violation.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub parameters: serde_json::Value,
    /// Named secondary quantities, e.g. the largest gradient norm seen.
    pub observations: serde_json::Map<String, serde_json::Value>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn random_logits(rng: &mut seed::Rng, c: usize) -> DenseMatrix {
    let scale = 10f64.powf(rng.random_range(-1.0..1.3));
    DenseMatrix::from_fn(1, c, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn unit_vector(rng: &mut seed::Rng, c: usize) -> DenseMatrix {
    let v = DenseMatrix::from_fn(c, 1, |_, _| rng.random_range(-1.0..1.0));
    let n = v.frobenius_norm().max(1e-300);
    v.scale(1.0 / n)
}

fn quad(h: &DenseMatrix, a: &DenseMatrix) -> f64 {
    a.transpose().matmul(h).and_then(|t| t.matmul(a)).map(|m| m.scalar()).expect("shapes match")
}

#[derive(Debug, Default, Clone, Copy)]
struct Trial1 {
    violations: usize,
    margin: f64,
    min_eig: f64,
    max_eig: f64,
    max_grad: f64,
}

/// Per class count `C ∈ classes`, draws `trials` random logit vectors and
/// checks: Hessian eigenvalues in `[0, 2]`, `aᵀHa ≥ 0` and `bᵀHb ≤ 2` for
/// random `a` and unit `b`, and `‖p − onehot(y)‖ ≤ √2`.
pub fn theorem1_sweep(trials: usize, classes: std::ops::RangeInclusive<usize>, seed_base: u64) -> Result<TheoremReport, TheoryError> {
    if *classes.start() < 2 {
        return Err(TheoryError::Invalid("class counts start at 2".into()));
    }
    let grad_bound = 2f64.sqrt() + EIG_TOL;
    let jobs: Vec<(usize, usize)> = classes.clone().flat_map(|c| (0..trials).map(move |t| (c, t))).collect();
    let results: Vec<Trial1> = jobs
        .par_iter()
        .map(|&(c, t)| -> Result<Trial1, TheoryError> {
            let mut rng = seed::rng(seed::derive(seed_base, &[c as u64, t as u64]));
            let z = random_logits(&mut rng, c);
            let y = rng.random_range(0..c);
            let h = softmax_ce_hessian(&z);
            let spec = check_psd_and_smooth(&h, 1e-12)?;
            let a = DenseMatrix::from_fn(c, 1, |_, _| rng.random_range(-3.0..3.0));
            let b = unit_vector(&mut rng, c);
            let (qa, qb) = (quad(&h, &a), quad(&h, &b));
            let gnorm = ce_gradient(&z, y).frobenius_norm();
            let margins = [
                spec.min_eig + EIG_TOL,
                2.0 + EIG_TOL - spec.max_eig,
                qa + EIG_TOL,
                2.0 + EIG_TOL - qb,
                grad_bound - gnorm,
            ];
            Ok(Trial1 {
                violations: margins.iter().filter(|&&m| m < 0.0).count().min(1),
                margin: margins.iter().cloned().fold(f64::INFINITY, f64::min),
                min_eig: spec.min_eig,
                max_eig: spec.max_eig,
                max_grad: gnorm,
            })
        })
        .collect::<Result<_, _>>()?;
    let fold = |f: fn(&Trial1) -> f64, init: f64, pick: fn(f64, f64) -> f64| results.iter().map(f).fold(init, pick);
    let mut observations = serde_json::Map::new();
    observations.insert("min_eigenvalue".into(), fold(|t| t.min_eig, f64::INFINITY, f64::min).into());
    observations.insert("max_eigenvalue".into(), fold(|t| t.max_eig, f64::NEG_INFINITY, f64::max).into());
    observations.insert("max_gradient_norm".into(), fold(|t| t.max_grad, 0.0, f64::max).into());
    Ok(TheoremReport {
        theorem: "1".into(),
        trials: results.len(),
        violations: results.iter().map(|t| t.violations).sum(),
        skipped: 0,
        worst_margin: fold(|t| t.margin, f64::INFINITY, f64::min),
        tolerance: EIG_TOL,
        parameters: serde_json::json!({
            "trials_per_class_count": trials,
            "classes": [classes.start(), classes.end()],
            "seed": seed_base,
        }),
        observations,
    })
}

/// `trials` random logit vectors with `C ∈ classes`; checks
/// `‖p − onehot(y)‖ ≤ 2` and reports the largest norm against `√2`.
pub fn gradient_norm_check(trials: usize, classes: std::ops::RangeInclusive<usize>, seed_base: u64) -> TheoremReport {
    let mut rng = seed::rng(seed::derive(seed_base, &[29]));
    let cs: Vec<usize> = classes.clone().collect();
    let mut max_norm: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..trials {
        let c = cs[rng.random_range(0..cs.len())];
        let z = random_logits(&mut rng, c);
        let y = rng.random_range(0..c);
        let n = ce_gradient(&z, y).frobenius_norm();
        if n > 2.0 + 1e-12 {
            violations += 1;
        }
        max_norm = max_norm.max(n);
    }
    let mut observations = serde_json::Map::new();
    observations.insert("max_gradient_norm".into(), max_norm.into());
    observations.insert("within_sqrt2".into(), (max_norm <= 2f64.sqrt() + EIG_TOL).into());
    TheoremReport {
        theorem: "gradient-norm".into(),
        trials,
        violations,
        skipped: 0,
        worst_margin: 2.0 - max_norm,
        tolerance: 1e-12,
        parameters: serde_json::json!({ "classes": [classes.start(), classes.end()], "seed": seed_base }),
        observations,
    }
}

/// The auxiliary objective whose gradient step is checked for main-loss
/// descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    /// `½‖θ − T‖²` for a random target `T`.
    SquaredDistance,
    /// The main loss itself.
    MainLoss,
    /// A linear objective whose gradient is orthogonal to the main gradient.
    Orthogonal,
    /// Node-vs-summary discrimination on `Â^L X θ` against an
    /// attribute-shuffled copy.
    Contrastive,
}

impl std::str::FromStr for Surrogate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "squared_distance" => Ok(Self::SquaredDistance),
            "main_loss" => Ok(Self::MainLoss),
            "orthogonal" => Ok(Self::Orthogonal),
            "contrastive" => Ok(Self::Contrastive),
            other => Err(format!("unknown surrogate '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Theorem2Spec {
    pub trials: usize,
    pub epsilon: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub attr_dim: usize,
    pub max_classes: usize,
    pub hops: usize,
    pub surrogate: Surrogate,
    pub adjacency: AdjacencyScheme,
    pub seed: u64,
}

impl Default for Theorem2Spec {
    fn default() -> Self {
        Self {
            trials: 500,
            epsilon: 0.01,
            min_nodes: 3,
            max_nodes: 8,
            attr_dim: 4,
            max_classes: 5,
            hops: 2,
            surrogate: Surrogate::SquaredDistance,
            adjacency: AdjacencyScheme::SymSelfloop,
            seed: 0,
        }
    }
}

/// One random instance `(Â, X, y, θ)` of the linear model `1ᵀ Â^L X θ`.
#[derive(Debug, Clone)]
pub struct SgcInstance {
    pub graph: Graph,
    /// `1ᵀ Â^L X`, 1×F
    pub phi: DenseMatrix,
    /// F×C
    pub theta: DenseMatrix,
    pub y: usize,
}

impl SgcInstance {
    pub fn random(spec: &Theorem2Spec, rng: &mut seed::Rng) -> SgcInstance {
        let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < 0.4 {
                    edges.push((u, v));
                }
            }
        }
        let f = spec.attr_dim;
        let x = DenseMatrix::from_fn(n, f, |_, _| rng.random_range(-1.0..1.0));
        let graph = Graph::new(n, edges, x, None).expect("valid random graph");
        let c = rng.random_range(2..=spec.max_classes.max(2));
        let theta = DenseMatrix::from_fn(f, c, |_, _| rng.random_range(-1.0..1.0));
        let y = rng.random_range(0..c);
        let phi = sgc_features(&graph, spec.hops, spec.adjacency);
        SgcInstance { graph, phi, theta, y }
    }

    pub fn main_loss(&self, theta: &DenseMatrix) -> f64 {
        main_loss(&self.phi.matmul(theta).expect("F matches"), self.y)
    }

    /// `∇_θ L_m = φᵀ (p − onehot(y))`
    pub fn main_gradient(&self, theta: &DenseMatrix) -> DenseMatrix {
        let g = ce_gradient(&self.phi.matmul(theta).expect("F matches"), self.y);
        self.phi.transpose().matmul(&g).expect("outer product")
    }

    /// `SMOOTH_SAFETY · 2 · ‖φ‖²`
    pub fn smoothness(&self) -> f64 {
        SMOOTH_SAFETY * 2.0 * self.phi.frobenius_sq()
    }
}

fn dot(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum()
}

/// Gradient of the surrogate at the instance's `θ`.
fn surrogate_gradient(kind: Surrogate, inst: &SgcInstance, spec: &Theorem2Spec, rng: &mut seed::Rng) -> DenseMatrix {
    let (f, c) = inst.theta.shape();
    match kind {
        Surrogate::SquaredDistance => {
            let target = DenseMatrix::from_fn(f, c, |_, _| rng.random_range(-2.0..2.0));
            inst.theta.sub(&target).expect("same shape")
        }
        Surrogate::MainLoss => inst.main_gradient(&inst.theta),
        Surrogate::Orthogonal => {
            let gm = inst.main_gradient(&inst.theta);
            let v = DenseMatrix::from_fn(f, c, |_, _| rng.random_range(-1.0..1.0));
            let denom = gm.frobenius_sq();
            if denom == 0.0 {
                v
            } else {
                v.sub(&gm.scale(dot(&v, &gm) / denom)).expect("same shape")
            }
        }
        Surrogate::Contrastive => {
            let a = crate::graphdata::normalize_adjacency(&inst.graph, spec.adjacency);
            let mut h = inst.graph.attributes().clone();
            for _ in 0..spec.hops {
                h = a.matmul(&h).expect("square propagation");
            }
            let n = h.rows();
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), rng);
            let shuffled = h.select_rows(&perm);
            let w = DenseMatrix::from_fn(c, c, |_, _| rng.random_range(-1.0..1.0));
            let b = DenseMatrix::from_fn(1, c, |_, _| rng.random_range(-0.5..0.5));
            let tape = Tape::new();
            let theta = tape.param(inst.theta.clone());
            let z0 = tape.constant(h).matmul(theta).expect("F matches");
            let z1 = tape.constant(shuffled).matmul(theta).expect("F matches");
            let summary = [tape.constant(w), tape.constant(b)];
            let loss = global_contrastive_loss(z0, z1, &summary).expect("shapes match");
            tape.backward(loss).expect("scalar loss").wrt(theta)
        }
    }
}

/// Outcome of one instance in [`theorem2_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trial2 {
    Skipped,
    Checked { margin: f64 },
}

/// Runs a single instance: if `⟨∇L_m, ∇L_s⟩ > ε`, steps `θ − η ∇L_s` with
/// `η = ε / (β G²)` and returns the main-loss decrease.
pub fn theorem2_trial(inst: &SgcInstance, grad_s: &DenseMatrix, epsilon: f64) -> Trial2 {
    let gm = inst.main_gradient(&inst.theta);
    let inner = dot(&gm, grad_s);
    if inner <= epsilon {
        return Trial2::Skipped;
    }
    let g = gm.frobenius_norm().max(grad_s.frobenius_norm());
    let eta = epsilon / (inst.smoothness() * g * g);
    let stepped = inst.theta.sub(&grad_s.scale(eta)).expect("same shape");
    Trial2::Checked { margin: inst.main_loss(&inst.theta) - inst.main_loss(&stepped) }
}

/// Randomized check that a step along a sufficiently correlated auxiliary
/// gradient strictly lowers the main loss. Trials failing the premise are
/// counted as skipped.
pub fn theorem2_check(spec: &Theorem2Spec) -> Result<TheoremReport, TheoryError> {
    if !(spec.epsilon > 0.0) {
        return Err(TheoryError::Invalid(format!("epsilon must be positive, got {}", spec.epsilon)));
    }
    if spec.min_nodes == 0 || spec.max_nodes < spec.min_nodes || spec.attr_dim == 0 || spec.hops == 0 {
        return Err(TheoryError::Invalid("invalid instance dimensions".into()));
    }
    let results: Vec<(Trial2, f64)> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(spec.seed, &[t as u64]));
            let inst = SgcInstance::random(spec, &mut rng);
            let gs = surrogate_gradient(spec.surrogate, &inst, spec, &mut rng);
            (theorem2_trial(&inst, &gs, spec.epsilon), inst.smoothness())
        })
        .collect();
    let mut violations = 0;
    let mut skipped = 0;
    let mut worst = f64::INFINITY;
    for (r, _) in &results {
        match r {
            Trial2::Skipped => skipped += 1,
            Trial2::Checked { margin } => {
                if !(*margin > 0.0) {
                    violations += 1;
                }
                worst = worst.min(*margin);
            }
        }
    }
    let mut observations = serde_json::Map::new();
    observations.insert("checked".into(), (spec.trials - skipped).into());
    observations.insert(
        "max_beta_smooth".into(),
        results.iter().map(|(_, b)| *b).fold(0.0, f64::max).into(),
    );
    Ok(TheoremReport {
        theorem: "2".into(),
        trials: spec.trials,
        violations,
        skipped,
        worst_margin: if worst.is_finite() { worst } else { 0.0 },
        tolerance: 0.0,
        parameters: serde_json::to_value(spec).expect("plain data"),
        observations,
    })
}

/// Options shared by the registered verifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Overrides the verifier's default trial count.
    pub trials: Option<usize>,
    pub epsilon: f64,
    pub surrogate: Surrogate,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            trials: None,
            epsilon: 0.01,
            surrogate: Surrogate::SquaredDistance,
            seed: 0,
        }
    }
}

/// A named randomized verification.
pub trait TheoremVerifier: Send + Sync {
    fn id(&self) -> &'static str;

    fn describe(&self) -> &'static str;

    fn run(&self, opts: &VerifyOptions) -> Result<TheoremReport, TheoryError>;
}

struct ConvexSmooth;

impl TheoremVerifier for ConvexSmooth {
    fn id(&self) -> &'static str {
        "1"
    }

    fn describe(&self) -> &'static str {
        "softmax cross-entropy Hessian is PSD with eigenvalues <= 2; gradient norm <= sqrt(2)"
    }

    fn run(&self, opts: &VerifyOptions) -> Result<TheoremReport, TheoryError> {
        theorem1_sweep(opts.trials.unwrap_or(1000), 2..=10, opts.seed)
    }
}

struct CorrelatedDescent;

impl TheoremVerifier for CorrelatedDescent {
    fn id(&self) -> &'static str {
        "2"
    }

    fn describe(&self) -> &'static str {
        "a step along a correlated auxiliary gradient lowers the main loss"
    }

    fn run(&self, opts: &VerifyOptions) -> Result<TheoremReport, TheoryError> {
        theorem2_check(&Theorem2Spec {
            trials: opts.trials.unwrap_or(500),
            epsilon: opts.epsilon,
            surrogate: opts.surrogate,
            seed: opts.seed,
            ..Theorem2Spec::default()
        })
    }
}

static VERIFIERS: &[&dyn TheoremVerifier] = &[&ConvexSmooth, &CorrelatedDescent];

pub fn verifier(id: &str) -> Result<&'static dyn TheoremVerifier, TheoryError> {
    VERIFIERS.iter().copied().find(|v| v.id() == id).ok_or_else(|| TheoryError::UnknownTheorem {
        name: id.to_string(),
        known: verifier_ids().join(", "),
    })
}

pub fn verifier_ids() -> Vec<&'static str> {
    VERIFIERS.iter().map(|v| v.id()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::cross_entropy;

    #[test]
    fn hessian_examples() {
        let h = softmax_ce_hessian(&DenseMatrix::from_rows(&[[0.0, 0.0]]).unwrap());
        assert!(h.max_abs_diff(&DenseMatrix::from_rows(&[[0.25, -0.25], [-0.25, 0.25]]).unwrap()) < 1e-15);
        let eig = jacobi_eigenvalues(&h, 1e-12).unwrap();
        assert!(eig[0].abs() < 1e-12 && (eig[1] - 0.5).abs() < 1e-12);
        let mut rng = seed::rng(1);
        for _ in 0..20 {
            let h = softmax_ce_hessian(&random_logits(&mut rng, 6));
            for r in 0..6 {
                assert!(h.row(r).iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_matches_second_differences() {
        let mut rng = seed::rng(2);
        for _ in 0..10 {
            let c = rng.random_range(2..7);
            let z = DenseMatrix::from_fn(1, c, |_, _| rng.random_range(-2.0..2.0));
            let y = rng.random_range(0..c);
            let h = softmax_ce_hessian(&z);
            let step = 1e-4;
            for i in 0..c {
                for j in 0..c {
                    let at = |di: f64, dj: f64| {
                        let mut w = z.clone();
                        w.set(0, i, w.get(0, i) + di);
                        w.set(0, j, w.get(0, j) + dj);
                        main_loss(&w, y)
                    };
                    let fd = (at(step, step) - at(step, -step) - at(-step, step) + at(-step, -step)) / (4.0 * step * step);
                    assert!((fd - h.get(i, j)).abs() < 1e-6, "{fd} vs {}", h.get(i, j));
                }
            }
        }
    }

    #[test]
    fn jacobi_on_known_spectra() {
        let m = DenseMatrix::from_rows(&[[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]]).unwrap();
        let eig = jacobi_eigenvalues(&m, 1e-12).unwrap();
        let s = 2f64.sqrt();
        for (a, b) in eig.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = check_psd_and_smooth(&DenseMatrix::zeros(3, 3), 1e-12).unwrap();
        assert!(z.pass);
        assert_eq!(
            jacobi_eigenvalues(&DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap(), 1e-12),
            Err(TheoryError::Asymmetric(1e-12))
        );
        assert!(!check_psd_and_smooth(&DenseMatrix::from_rows(&[[3.0]]).unwrap(), 1e-12).unwrap().pass);
    }

    #[test]
    fn gradient_examples() {
        let g = ce_gradient(&DenseMatrix::from_rows(&[[0.0, 0.0]]).unwrap(), 0);
        assert_eq!(g, DenseMatrix::from_rows(&[[-0.5, 0.5]]).unwrap());
        assert!((g.frobenius_norm() - 0.5f64.sqrt()).abs() < 1e-12);
        let confident = ce_gradient(&DenseMatrix::from_rows(&[[40.0, 0.0, 0.0]]).unwrap(), 0);
        assert!(confident.frobenius_norm() < 1e-15);
    }

    #[test]
    fn ce_gradient_matches_autodiff() {
        let mut rng = seed::rng(3);
        for _ in 0..50 {
            let c = rng.random_range(2..9);
            let z = random_logits(&mut rng, c);
            let y = rng.random_range(0..c);
            let tape = Tape::new();
            let v = tape.param(z.clone());
            let g = tape.backward(cross_entropy(v, y).unwrap()).unwrap().wrt(v);
            assert!(g.max_abs_diff(&ce_gradient(&z, y)) < 1e-10);
        }
    }

    #[test]
    fn sweeps_pass() {
        let r = theorem1_sweep(100, 2..=10, 0).unwrap();
        assert_eq!(r.trials, 900);
        assert!(r.passed(), "{r:?}");
        let g = gradient_norm_check(10_000, 2..=10, 0);
        assert!(g.passed());
        assert_eq!(g.observations["within_sqrt2"], serde_json::Value::Bool(true));
    }

    #[test]
    fn theorem2_surrogates() {
        for surrogate in [Surrogate::SquaredDistance, Surrogate::MainLoss, Surrogate::Contrastive] {
            let r = theorem2_check(&Theorem2Spec { trials: 200, surrogate, ..Theorem2Spec::default() }).unwrap();
            assert!(r.passed(), "{surrogate:?}: {r:?}");
            assert!(r.skipped < r.trials, "{surrogate:?}");
        }
        let r = theorem2_check(&Theorem2Spec { trials: 100, surrogate: Surrogate::Orthogonal, ..Theorem2Spec::default() }).unwrap();
        assert_eq!(r.skipped, 100);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn main_loss_surrogate_descends_when_gradient_large() {
        let spec = Theorem2Spec::default();
        let mut rng = seed::rng(4);
        for _ in 0..50 {
            let inst = SgcInstance::random(&spec, &mut rng);
            let gm = inst.main_gradient(&inst.theta);
            match theorem2_trial(&inst, &gm, spec.epsilon) {
                Trial2::Checked { margin } => assert!(margin > 0.0),
                Trial2::Skipped => assert!(gm.frobenius_sq() <= spec.epsilon),
            }
        }
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(verifier_ids(), vec!["1", "2"]);
        assert!(verifier("3").is_err());
        let r = verifier("2").unwrap().run(&VerifyOptions { trials: Some(20), ..VerifyOptions::default() }).unwrap();
        assert_eq!(r.trials, 20);
    }
}
