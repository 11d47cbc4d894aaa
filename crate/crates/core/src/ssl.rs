//! Self-supervised objectives: global (node vs. graph summary)
//! discrimination, local cross-view InfoNCE with a decorrelation penalty,
//! and the embedding-statistics adaptation constraint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{adaptive_view_or_raw, shuffle_attributes, AugmentError, ViewSpec};
use crate::graphdata::Graph;
use crate::models::{node_embeddings, GnnConfig, GraphInput, Groups, Head, ModelError, ModelParams, ParamTree};
use crate::tensor::{DenseMatrix, Tape, TensorError, Var};

/// Discriminator outputs are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before
/// taking logs.
pub const PROB_CLAMP: f64 = 1e-7;
/// Norm floor used by the non-strict row normalisation during training.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SslError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("embedding statistics need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("{0}")]
    Dimension(String),
    #[error("invalid ssl weight: {field} = {value} ({rule})")]
    InvalidWeight {
        field: &'static str,
        value: f64,
        rule: &'static str,
    },
}

/// Mean and unbiased covariance of a set of graph embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// 1×d
    pub mu: DenseMatrix,
    /// d×d
    pub sigma: DenseMatrix,
    pub n: usize,
}

impl TrainStats {
    pub fn dim(&self) -> usize {
        self.mu.cols()
    }
}

/// Statistics of `n ≥ 2` embeddings, each 1×d.
pub fn embedding_stats(embeddings: &[DenseMatrix]) -> Result<TrainStats, SslError> {
    if embeddings.len() < 2 {
        return Err(SslError::InsufficientSamples(embeddings.len()));
    }
    let refs: Vec<&DenseMatrix> = embeddings.iter().collect();
    let h = DenseMatrix::vstack(&refs)?;
    stats_of_rows(&h)
}

/// Statistics treating each row of `h` as one sample.
pub fn stats_of_rows(h: &DenseMatrix) -> Result<TrainStats, SslError> {
    let n = h.rows();
    if n < 2 {
        return Err(SslError::InsufficientSamples(n));
    }
    let mu = h.column_means();
    let c = h.center_columns();
    let sigma = c.transpose().matmul(&c)?.scale(1.0 / (n - 1) as f64);
    Ok(TrainStats { mu, sigma, n })
}

/// `‖μ − μ_t‖² + ‖Σ − Σ_t‖²_F`
pub fn adaptation_constraint(train: &TrainStats, test: &TrainStats) -> Result<f64, SslError> {
    if train.dim() != test.dim() {
        return Err(SslError::Dimension(format!(
            "statistics dimensions differ: {} vs {}",
            train.dim(),
            test.dim()
        )));
    }
    Ok(train.mu.sub(&test.mu)?.frobenius_sq() + train.sigma.sub(&test.sigma)?.frobenius_sq())
}

/// Differentiable mean (1×d) and covariance (d×d) of the rows of `h`.
pub fn stats_var<'t>(h: Var<'t>) -> Result<(Var<'t>, Var<'t>), SslError> {
    let n = h.shape().0;
    if n < 2 {
        return Err(SslError::InsufficientSamples(n));
    }
    let mu = h.mean_rows();
    let centered = h.add(mu.scale(-1.0))?;
    let sigma = centered.transpose().matmul(centered)?.scale(1.0 / (n - 1) as f64);
    Ok((mu, sigma))
}

/// Constraint between frozen `train` statistics and those of the rows of `h`.
pub fn constraint_var<'t>(train: &TrainStats, h: Var<'t>) -> Result<Var<'t>, SslError> {
    if h.shape().1 != train.dim() {
        return Err(SslError::Dimension(format!(
            "embeddings have {} columns, statistics have {}",
            h.shape().1,
            train.dim()
        )));
    }
    let tape = h.tape();
    let (mu, sigma) = stats_var(h)?;
    let dmu = mu.sub(tape.constant(train.mu.clone()))?.frobenius_sq();
    let dsigma = sigma.sub(tape.constant(train.sigma.clone()))?.frobenius_sq();
    Ok(dmu.add(dsigma)?)
}

/// Graph summary `g0 = sigmoid(mean_rows(Z0) W + b)`.
pub fn graph_summary<'t>(z0: Var<'t>, summary: &[Var<'t>]) -> Result<Var<'t>, SslError> {
    Ok(z0.mean_rows().matmul(summary[0])?.add(summary[1])?.sigmoid())
}

/// `−(1/2N) Σ_i [log D(Z0_i, g0) + log(1 − D(Z1_i, g0))]` with
/// `D(z, g) = sigmoid(z·g)`.
pub fn discriminator_loss<'t>(z0: Var<'t>, z1: Var<'t>, g0: Var<'t>) -> Result<Var<'t>, SslError> {
    if z0.shape() != z1.shape() {
        return Err(SslError::Tensor(crate::tensor::TensorError::Dimension {
            op: "global_contrastive_loss",
            lhs: z0.shape(),
            rhs: z1.shape(),
        }));
    }
    let n = z0.shape().0;
    let gt = g0.transpose();
    let d_pos = z0.matmul(gt)?.sigmoid().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let d_neg = z1.matmul(gt)?.sigmoid().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let pos = d_pos.log()?.sum_all();
    let neg = d_neg.scale(-1.0).offset(1.0).log()?.sum_all();
    Ok(pos.add(neg)?.scale(-1.0 / (2 * n) as f64))
}

/// Global contrastive loss of raw-view embeddings `z0` against
/// attribute-shuffled embeddings `z1`.
pub fn global_contrastive_loss<'t>(z0: Var<'t>, z1: Var<'t>, summary: &[Var<'t>]) -> Result<Var<'t>, SslError> {
    let g0 = graph_summary(z0, summary)?;
    discriminator_loss(z0, z1, g0)
}

/// The projection `g(z) = relu(z W1 + b1) W2 + b2`.
pub fn project<'t>(z: Var<'t>, mlp: &[Var<'t>]) -> Result<Var<'t>, SslError> {
    Ok(z.matmul(mlp[0])?.add(mlp[1])?.relu().matmul(mlp[2])?.add(mlp[3])?)
}

/// `l_c(a_i, b_i)` for every node as an N×1 column, from already projected
/// rows. `strict` errors on degenerate rows instead of flooring their norm.
pub fn pair_objectives<'t>(pa: Var<'t>, pb: Var<'t>, tau: f64, strict: bool) -> Result<Var<'t>, SslError> {
    if pa.shape() != pb.shape() {
        return Err(SslError::Tensor(crate::tensor::TensorError::Dimension {
            op: "pair_objectives",
            lhs: pa.shape(),
            rhs: pb.shape(),
        }));
    }
    let tape = pa.tape();
    let n = pa.shape().0;
    let (na, nb) = if strict {
        (pa.row_l2_normalize_strict()?, pb.row_l2_normalize_strict()?)
    } else {
        (pa.row_l2_normalize(NORM_EPS), pb.row_l2_normalize(NORM_EPS))
    };
    let eye = tape.constant(DenseMatrix::identity(n));
    let off = tape.constant(DenseMatrix::from_fn(n, n, |r, c| if r == c { 0.0 } else { 1.0 }));
    let s_ab = na.matmul(nb.transpose())?.scale(1.0 / tau);
    let s_aa = na.matmul(na.transpose())?.scale(1.0 / tau);
    let positive = s_ab.mul(eye)?.row_sums();
    let denom = s_ab.exp().row_sums().add(s_aa.exp().mul(off)?.row_sums())?;
    Ok(positive.sub(denom.log()?)?)
}

/// `l_c(Z2_i, Z3_i)` for a single node, projecting both views through `mlp`.
pub fn local_pair_objective<'t>(
    z2: Var<'t>,
    z3: Var<'t>,
    i: usize,
    mlp: &[Var<'t>],
    tau: f64,
) -> Result<Var<'t>, SslError> {
    let n = z2.shape().0;
    if i >= n {
        return Err(SslError::Dimension(format!("node {i} outside [0, {n})")));
    }
    let all = pair_objectives(project(z2, mlp)?, project(z3, mlp)?, tau, true)?;
    let mut pick = DenseMatrix::zeros(n, 1);
    pick.set(i, 0, 1.0);
    Ok(all.mul(z2.tape().constant(pick))?.sum_all())
}

/// `‖Zᵀ Z − I‖²_F`
pub fn decorrelation(zp: Var<'_>) -> Result<Var<'_>, SslError> {
    let d = zp.shape().1;
    let gram = zp.transpose().matmul(zp)?;
    Ok(gram.sub(zp.tape().constant(DenseMatrix::identity(d)))?.frobenius_sq())
}

/// `−(1/2N) Σ_i [l_c(Z2_i, Z3_i) + l_c(Z3_i, Z2_i)] + (β/2)(dec(Z2') + dec(Z3'))`
pub fn local_contrastive_loss<'t>(
    z2: Var<'t>,
    z3: Var<'t>,
    mlp: &[Var<'t>],
    tau: f64,
    beta: f64,
) -> Result<Var<'t>, SslError> {
    let n = z2.shape().0;
    let p2 = project(z2, mlp)?;
    let p3 = project(z3, mlp)?;
    let l23 = pair_objectives(p2, p3, tau, false)?.sum_all();
    let l32 = pair_objectives(p3, p2, tau, false)?.sum_all();
    let contrast = l23.add(l32)?.scale(-1.0 / (2 * n) as f64);
    if beta == 0.0 {
        return Ok(contrast);
    }
    let dec = decorrelation(p2)?.add(decorrelation(p3)?)?;
    Ok(contrast.add(dec.scale(beta / 2.0))?)
}

/// Loss weights and temperature of the self-supervised objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SslWeights {
    /// Weight of the SSL loss in joint training.
    pub gamma: f64,
    /// Weight of the local loss.
    pub alpha: f64,
    pub beta_decor: f64,
    pub tau: f64,
    /// Weight of the adaptation constraint at test time.
    pub lambda_c: f64,
    /// Weight of the global loss; 0 removes it entirely.
    pub global_weight: f64,
}

impl Default for SslWeights {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            alpha: 1.0,
            beta_decor: 1e-3,
            tau: 0.5,
            lambda_c: 1.0,
            global_weight: 1.0,
        }
    }
}

impl SslWeights {
    pub fn validate(&self) -> Result<(), SslError> {
        for (field, value) in [
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("beta_decor", self.beta_decor),
            ("lambda_c", self.lambda_c),
            ("global_weight", self.global_weight),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(SslError::InvalidWeight { field, value, rule: "must be finite and >= 0" });
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(SslError::InvalidWeight { field: "tau", value: self.tau, rule: "must be > 0" });
        }
        Ok(())
    }
}

/// Per-graph breakdown of the self-supervised objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SslTerms {
    pub global: f64,
    pub local: f64,
    /// `global_weight · L_g + α · L_l`
    pub ssl: f64,
    pub constraint: f64,
    pub weights: SslWeights,
}

/// Seeds of the three random views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SslSeeds {
    pub shuffle: u64,
    pub view_a: u64,
    pub view_b: u64,
}

/// The four views of one graph, ready for propagation. Unused views are
/// skipped according to the weights.
#[derive(Debug, Clone)]
pub struct SslViews {
    pub raw: Option<GraphInput>,
    pub shuffled: Option<GraphInput>,
    pub view_a: Option<GraphInput>,
    pub view_b: Option<GraphInput>,
}

impl SslViews {
    pub fn new(
        g: &Graph,
        cfg: &GnnConfig,
        spec: &ViewSpec,
        weights: &SslWeights,
        seeds: SslSeeds,
    ) -> Result<Self, SslError> {
        let global = weights.global_weight > 0.0;
        let local = weights.alpha > 0.0;
        let input = |g: &Graph| GraphInput::new(g, cfg).map_err(SslError::from);
        Ok(Self {
            raw: if global { Some(input(g)?) } else { None },
            shuffled: if global { Some(input(&shuffle_attributes(g, seeds.shuffle))?) } else { None },
            view_a: if local { Some(input(&adaptive_view_or_raw(g, &spec.with_seed(seeds.view_a))?)?) } else { None },
            view_b: if local { Some(input(&adaptive_view_or_raw(g, &spec.with_seed(seeds.view_b))?)?) } else { None },
        })
    }
}

/// Recorded SSL loss with its components, `None` when weighted out.
pub struct SslVars<'t> {
    pub total: Var<'t>,
    pub global: Option<Var<'t>>,
    pub local: Option<Var<'t>>,
}

/// Records `global_weight · L_g + α · L_l` on the tape of `params`.
pub fn ssl_loss_var<'t>(
    cfg: &GnnConfig,
    params: &ParamTree<Var<'t>>,
    views: &SslViews,
    weights: &SslWeights,
    tape: &'t Tape,
) -> Result<SslVars<'t>, SslError> {
    let embed = |input: &GraphInput| -> Result<Var<'t>, SslError> {
        let (adj, x) = input.bind(tape);
        Ok(node_embeddings(cfg, params, adj, x, Head::Ssl, cfg.num_layers, None)?)
    };
    let mut total = tape.constant(DenseMatrix::zeros(1, 1));
    let mut global = None;
    if let (Some(raw), Some(shuf)) = (&views.raw, &views.shuffled) {
        let lg = global_contrastive_loss(embed(raw)?, embed(shuf)?, &params.summary)?;
        total = total.add(lg.scale(weights.global_weight))?;
        global = Some(lg);
    }
    let mut local = None;
    if let (Some(a), Some(b)) = (&views.view_a, &views.view_b) {
        let ll = local_contrastive_loss(embed(a)?, embed(b)?, &params.projection, weights.tau, weights.beta_decor)?;
        total = total.add(ll.scale(weights.alpha))?;
        local = Some(ll);
    }
    Ok(SslVars { total, global, local })
}

/// Evaluates the SSL loss of `g` (no constraint) and its breakdown.
pub fn ssl_loss(
    g: &Graph,
    params: &ModelParams,
    cfg: &GnnConfig,
    spec: &ViewSpec,
    weights: &SslWeights,
    seeds: SslSeeds,
) -> Result<(f64, SslTerms), SslError> {
    weights.validate()?;
    let views = SslViews::new(g, cfg, spec, weights, seeds)?;
    let tape = Tape::new();
    let bound = params.bind(&tape, Groups::NONE);
    let vars = ssl_loss_var(cfg, &bound, &views, weights, &tape)?;
    let value = |v: Option<Var>| v.map(|v| v.scalar()).unwrap_or(0.0);
    let total = vars.total.scalar();
    Ok((
        total,
        SslTerms {
            global: value(vars.global),
            local: value(vars.local),
            ssl: total,
            constraint: 0.0,
            weights: *weights,
        },
    ))
}
