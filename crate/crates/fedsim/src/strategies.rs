//! Server-side aggregation strategies with explicit functional state, plus
//! the FedRandom meta-strategy that picks one pool member per round.
//!
//! Every rule canonicalizes the incoming updates by ascending client id
//! before touching them, so callers may submit updates in any order and
//! still get bit-identical aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param_math::{self, ParamVec};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    FedAvg,
    FedAvgM,
    FedAdagrad,
    FedAdam,
    FedYogi,
    FedMedian,
    FedTrimmedAvg,
    Krum,
    FedRandom,
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            StrategyKind::FedAvg => "fedavg",
            StrategyKind::FedAvgM => "fedavgm",
            StrategyKind::FedAdagrad => "fedadagrad",
            StrategyKind::FedAdam => "fedadam",
            StrategyKind::FedYogi => "fedyogi",
            StrategyKind::FedMedian => "fedmedian",
            StrategyKind::FedTrimmedAvg => "fedtrimmedavg",
            StrategyKind::Krum => "krum",
            StrategyKind::FedRandom => "fedrandom",
        };
        f.write_str(name)
    }
}

/// The pool FedRandom samples from each round.
pub const FEDRANDOM_POOL: [StrategyKind; 5] = [
    StrategyKind::FedAvg,
    StrategyKind::FedAvgM,
    StrategyKind::FedAdagrad,
    StrategyKind::FedAdam,
    StrategyKind::FedYogi,
];

/// The ensemble run by the mean-strategy sampler.
pub const MSM_POOL: [StrategyKind; 8] = [
    StrategyKind::FedAvg,
    StrategyKind::FedAvgM,
    StrategyKind::FedAdagrad,
    StrategyKind::FedAdam,
    StrategyKind::FedYogi,
    StrategyKind::FedMedian,
    StrategyKind::FedTrimmedAvg,
    StrategyKind::Krum,
];

/// Hyperparameters shared by all strategies; each rule reads the fields it
/// needs. `server_lr` left unset resolves to a per-kind default (1.0 for
/// FedAvgM, 0.1 for the adaptive rules).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyHyper {
    pub server_lr: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
    pub momentum: f64,
    pub trim_frac: f64,
    pub krum_f: usize,
}

impl Default for StrategyHyper {
    fn default() -> Self {
        StrategyHyper {
            server_lr: None,
            beta1: 0.9,
            beta2: 0.99,
            tau: 1e-3,
            momentum: 0.9,
            trim_frac: 0.2,
            krum_f: 0,
        }
    }
}

impl StrategyHyper {
    pub fn validate(&self) -> Result<()> {
        if let Some(lr) = self.server_lr {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "server_lr must be positive, got {lr}"
                )));
            }
        }
        for (name, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("momentum", self.momentum),
        ] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0,1), got {v}"
                )));
            }
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.trim_frac.is_finite() && (0.0..0.5).contains(&self.trim_frac)) {
            return Err(Error::InvalidParameter(format!(
                "trim_frac must lie in [0,0.5), got {}",
                self.trim_frac
            )));
        }
        Ok(())
    }

    /// Server learning rate for a given rule.
    pub fn resolved_lr(&self, kind: StrategyKind) -> f64 {
        self.server_lr.unwrap_or(match kind {
            StrategyKind::FedAdagrad | StrategyKind::FedAdam | StrategyKind::FedYogi => 0.1,
            _ => 1.0,
        })
    }
}

/// Optimizer state carried across rounds; absent vectors read as zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrategyState {
    pub momentum_vec: Option<ParamVec>,
    pub second_moment: Option<ParamVec>,
    pub round_counter: usize,
}

impl StrategyState {
    pub fn fresh() -> Self {
        StrategyState::default()
    }
}

/// One client's submission for a round.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ParamVec,
    pub n_i: usize,
}

/// References to the updates sorted by ascending client id.
fn canonical_order(updates: &[ClientUpdate]) -> Result<Vec<&ClientUpdate>> {
    if updates.is_empty() {
        return Err(Error::EmptyInput("client updates"));
    }
    let dim = updates[0].params.dim();
    for u in updates {
        if u.params.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: u.params.dim(),
            });
        }
        if u.n_i == 0 {
            return Err(Error::InvalidParameter(format!(
                "client {} reports an empty shard",
                u.client_id
            )));
        }
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    Ok(sorted)
}

/// Size-weighted displacement from the global model toward the clients:
/// `delta = sum_i (n_i / sum n) * (params_i - global)`, in client-id order.
pub fn pseudo_gradient(global: &ParamVec, updates: &[ClientUpdate]) -> Result<ParamVec> {
    let sorted = canonical_order(updates)?;
    if sorted[0].params.dim() != global.dim() {
        return Err(Error::DimensionMismatch {
            expected: global.dim(),
            got: sorted[0].params.dim(),
        });
    }
    let total: usize = sorted.iter().map(|u| u.n_i).sum();
    let mut delta = vec![0.0; global.dim()];
    for u in &sorted {
        let w = u.n_i as f64 / total as f64;
        for (d, (&p, &g)) in delta.iter_mut().zip(u.params.iter().zip(global.iter())) {
            *d += w * (p - g);
        }
    }
    ParamVec::new(delta)
}

fn size_weighted_params(sorted: &[&ClientUpdate]) -> Result<ParamVec> {
    let total: usize = sorted.iter().map(|u| u.n_i).sum();
    let vecs: Vec<ParamVec> = sorted.iter().map(|u| u.params.clone()).collect();
    let weights: Vec<f64> = sorted.iter().map(|u| u.n_i as f64 / total as f64).collect();
    param_math::weighted_sum(&vecs, &weights)
}

/// Mathematical sign: -1, 0, or +1.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zeros_like(state_vec: &Option<ParamVec>, dim: usize) -> Result<ParamVec> {
    match state_vec {
        Some(v) => {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
            Ok(v.clone())
        }
        None => Ok(ParamVec::zeros(dim)),
    }
}

/// Krum selection: each update is scored by the sum of squared distances to
/// its `m - f - 2` nearest other updates; the lowest score wins, ties going
/// to the lowest client id.
fn krum_select<'a>(sorted: &[&'a ClientUpdate], f: usize) -> Result<&'a ClientUpdate> {
    let m = sorted.len();
    // Guard written to avoid usize underflow when m <= f + 2.
    if m < f + 3 {
        return Err(Error::InvalidParameter(format!(
            "krum needs m - f - 2 >= 1 neighbors, got m={m}, f={f}"
        )));
    }
    let neighbors = m - f - 2;
    let mut best: Option<(f64, usize)> = None;
    for (i, u) in sorted.iter().enumerate() {
        let mut dists: Vec<f64> = sorted
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, v)| {
                let d = param_math::l2_dist(&u.params, &v.params)?;
                Ok(d * d)
            })
            .collect::<Result<_>>()?;
        dists.sort_unstable_by(f64::total_cmp);
        let score: f64 = dists[..neighbors].iter().sum();
        let better = match best {
            None => true,
            Some((best_score, _)) => score < best_score,
        };
        if better {
            best = Some((score, i));
        }
    }
    let (_, idx) = best.expect("non-empty updates");
    Ok(sorted[idx])
}

/// Applies one aggregation rule, returning the new global model and the
/// successor state. Stateless rules hand their state back unchanged.
pub fn aggregate(
    kind: StrategyKind,
    hyper: &StrategyHyper,
    state: &StrategyState,
    global: &ParamVec,
    updates: &[ClientUpdate],
) -> Result<(ParamVec, StrategyState)> {
    hyper.validate()?;
    let sorted = canonical_order(updates)?;
    let dim = global.dim();
    if sorted[0].params.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: sorted[0].params.dim(),
        });
    }
    let eta = hyper.resolved_lr(kind);
    match kind {
        StrategyKind::FedAvg => Ok((size_weighted_params(&sorted)?, state.clone())),
        StrategyKind::FedAvgM => {
            let delta = pseudo_gradient(global, updates)?;
            let prev_m = zeros_like(&state.momentum_vec, dim)?;
            let mut m = vec![0.0; dim];
            for k in 0..dim {
                m[k] = hyper.momentum * prev_m[k] + delta[k];
            }
            let mut out = global.as_slice().to_vec();
            for k in 0..dim {
                out[k] += eta * m[k];
            }
            Ok((
                ParamVec::new(out)?,
                StrategyState {
                    momentum_vec: Some(ParamVec::new(m)?),
                    second_moment: None,
                    round_counter: state.round_counter + 1,
                },
            ))
        }
        StrategyKind::FedAdagrad | StrategyKind::FedAdam | StrategyKind::FedYogi => {
            let delta = pseudo_gradient(global, updates)?;
            let prev_m = zeros_like(&state.momentum_vec, dim)?;
            let prev_v = zeros_like(&state.second_moment, dim)?;
            let mut m = vec![0.0; dim];
            let mut v = vec![0.0; dim];
            for k in 0..dim {
                let d = delta[k];
                let d2 = d * d;
                m[k] = hyper.beta1 * prev_m[k] + (1.0 - hyper.beta1) * d;
                v[k] = match kind {
                    StrategyKind::FedAdagrad => prev_v[k] + d2,
                    StrategyKind::FedAdam => hyper.beta2 * prev_v[k] + (1.0 - hyper.beta2) * d2,
                    // sign(0) = 0, so a delta matching the stored moment
                    // exactly leaves it unchanged.
                    StrategyKind::FedYogi => prev_v[k] - (1.0 - hyper.beta2) * d2 * sign(prev_v[k] - d2),
                    _ => unreachable!(),
                };
            }
            let mut out = global.as_slice().to_vec();
            for k in 0..dim {
                out[k] += eta * m[k] / (v[k].sqrt() + hyper.tau);
            }
            Ok((
                ParamVec::new(out)?,
                StrategyState {
                    momentum_vec: Some(ParamVec::new(m)?),
                    second_moment: Some(ParamVec::new(v)?),
                    round_counter: state.round_counter + 1,
                },
            ))
        }
        StrategyKind::FedMedian => {
            let vecs: Vec<ParamVec> = sorted.iter().map(|u| u.params.clone()).collect();
            Ok((param_math::coord_median(&vecs)?, state.clone()))
        }
        StrategyKind::FedTrimmedAvg => {
            let vecs: Vec<ParamVec> = sorted.iter().map(|u| u.params.clone()).collect();
            Ok((
                param_math::coord_trimmed_mean(&vecs, hyper.trim_frac)?,
                state.clone(),
            ))
        }
        StrategyKind::Krum => {
            let selected = krum_select(&sorted, hyper.krum_f)?;
            Ok((selected.params.clone(), state.clone()))
        }
        StrategyKind::FedRandom => Err(Error::InvalidParameter(
            "fedrandom is a meta-strategy; use fedrandom_aggregate".into(),
        )),
    }
}

/// Uniform draw from the pool, fully determined by `round_seed`.
pub fn fedrandom_choose(pool: &[StrategyKind], round_seed: u64) -> Result<StrategyKind> {
    if pool.is_empty() {
        return Err(Error::EmptyInput("fedrandom pool"));
    }
    let idx = SplitMix64::new(round_seed).next_below(pool.len() as u64) as usize;
    Ok(pool[idx])
}

/// Chooses a pool member for the round and delegates to its rule. Only the
/// chosen member's state advances; the rest are passed through untouched.
pub fn fedrandom_aggregate(
    pool: &[StrategyKind],
    hyper: &StrategyHyper,
    states: &[StrategyState],
    global: &ParamVec,
    updates: &[ClientUpdate],
    round_seed: u64,
) -> Result<(ParamVec, Vec<StrategyState>, StrategyKind)> {
    if pool.len() != states.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            got: states.len(),
        });
    }
    let chosen = fedrandom_choose(pool, round_seed)?;
    let idx = pool.iter().position(|&k| k == chosen).expect("member of pool");
    let (new_global, new_state) = aggregate(chosen, hyper, &states[idx], global, updates)?;
    let mut new_states = states.to_vec();
    new_states[idx] = new_state;
    Ok((new_global, new_states, chosen))
}
