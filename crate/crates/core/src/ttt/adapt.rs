use super::{check_weights, TttConfig, TttError};
use crate::augment::{adaptive_view_or_raw, ViewSpec};
use crate::graphdata::Graph;
use crate::models::{extractor_readout, GnnConfig, GraphInput, Groups, ModelParams, ParamSnapshot, ParamTree};
use crate::optim;
use crate::seed;
use crate::ssl::{constraint_var, ssl_loss_var, SslError, SslSeeds, SslViews, SslWeights, TrainStats};
use crate::tensor::{concat_rows, Tape, Var};

/// The graph itself followed by `n_views` adaptive views of it.
pub(crate) fn stat_inputs(
    g: &Graph,
    cfg: &GnnConfig,
    spec: &ViewSpec,
    n_views: usize,
    seed: u64,
) -> Result<Vec<GraphInput>, TttError> {
    let mut inputs = vec![GraphInput::new(g, cfg)?];
    for k in 0..n_views {
        let view = adaptive_view_or_raw(g, &spec.with_seed(seed::derive(seed, &[k as u64]))).map_err(SslError::from)?;
        inputs.push(GraphInput::new(&view, cfg)?);
    }
    Ok(inputs)
}

/// Adaptation constraint between `stats` and the extractor readouts of
/// `inputs`, recorded on `tape`.
pub(crate) fn readout_constraint<'t>(
    cfg: &GnnConfig,
    params: &ParamTree<Var<'t>>,
    inputs: &[GraphInput],
    stats: &TrainStats,
    tape: &'t Tape,
) -> Result<Var<'t>, TttError> {
    let readouts = inputs
        .iter()
        .map(|input| {
            let (adj, x) = input.bind(tape);
            extractor_readout(cfg, params, adj, x)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(constraint_var(stats, concat_rows(&readouts)?)?)
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub params: ModelParams,
    /// Gradient steps applied; 0 after a fallback.
    pub steps_used: usize,
    /// A non-finite objective was met and the starting parameters returned.
    pub fell_back: bool,
    /// Objective before each step and after the last one (`steps + 1`
    /// entries, empty when `steps == 0`).
    pub objective: Vec<f64>,
    /// The self-supervised part `L_s` at the same points.
    pub ssl: Vec<f64>,
    /// The constraint term at the same points, empty when `λ_c = 0`.
    pub constraint: Vec<f64>,
}

struct StepInputs {
    views: SslViews,
    stats: Vec<GraphInput>,
}

/// Fine-tunes the extractor and the SSL head on one test graph by
/// minimising `L_s + λ_c · L_c`; the classification head never changes.
///
/// `sample_key` identifies the test graph so its random views do not depend
/// on evaluation order.
pub fn ttt_adapt(
    g: &Graph,
    snap: &ParamSnapshot,
    start: &ModelParams,
    ttt: &TttConfig,
    weights: &SslWeights,
    spec: &ViewSpec,
    sample_key: u64,
) -> Result<AdaptOutcome, TttError> {
    ttt.validate()?;
    check_weights(weights)?;
    let unadapted = |objective, ssl, constraint| AdaptOutcome {
        params: start.clone(),
        steps_used: 0,
        fell_back: false,
        objective,
        ssl,
        constraint,
    };
    if ttt.steps == 0 {
        return Ok(unadapted(Vec::new(), Vec::new(), Vec::new()));
    }
    let cfg = &snap.config;
    let base = seed::derive(ttt.seed, &[sample_key]);
    let use_constraint = weights.lambda_c > 0.0;
    let build = |step: u64| -> Result<StepInputs, TttError> {
        let s = seed::derive(base, &[step]);
        let seeds = SslSeeds {
            shuffle: seed::derive(s, &[0]),
            view_a: seed::derive(s, &[1]),
            view_b: seed::derive(s, &[2]),
        };
        Ok(StepInputs {
            views: SslViews::new(g, cfg, spec, weights, seeds)?,
            stats: if use_constraint {
                stat_inputs(g, cfg, spec, ttt.num_stat_views, seed::derive(s, &[3]))?
            } else {
                Vec::new()
            },
        })
    };
    let fixed = if ttt.resample_views { None } else { Some(build(0)?) };

    let mut params = start.clone();
    let mut opt = optim::build(&ttt.optimizer, ttt.learning_rate)?;
    let mut objective = Vec::with_capacity(ttt.steps + 1);
    let mut ssl = Vec::with_capacity(ttt.steps + 1);
    let mut constraint = Vec::new();
    for step in 0..=ttt.steps {
        let owned;
        let inputs = match &fixed {
            Some(f) => f,
            None => {
                owned = build(step as u64)?;
                &owned
            }
        };
        let tape = Tape::new();
        let bound = params.bind(&tape, Groups::ADAPT);
        let mut total = ssl_loss_var(cfg, &bound, &inputs.views, weights, &tape)?.total;
        ssl.push(total.scalar());
        if use_constraint {
            let lc = readout_constraint(cfg, &bound, &inputs.stats, &snap.stats, &tape)?;
            constraint.push(lc.scalar());
            total = total.add(lc.scale(weights.lambda_c))?;
        }
        let value = total.scalar();
        objective.push(value);
        if !value.is_finite() {
            log::warn!("sample {sample_key}: non-finite adaptation objective at step {step}, using the unadapted model");
            let mut out = unadapted(objective, ssl, constraint);
            out.fell_back = true;
            return Ok(out);
        }
        if step == ttt.steps {
            break;
        }
        let grads = bound.gradients(&tape.backward(total)?);
        if !grads.is_finite() {
            log::warn!("sample {sample_key}: non-finite gradient at step {step}, using the unadapted model");
            let mut out = unadapted(objective, ssl, constraint);
            out.fell_back = true;
            return Ok(out);
        }
        opt.step(&mut params, &grads, Groups::ADAPT);
    }
    Ok(AdaptOutcome {
        params,
        steps_used: ttt.steps,
        fell_back: false,
        objective,
        ssl,
        constraint,
    })
}
