//! Per-round reconstruction Shapley valuation of client updates: exact
//! subset-weight evaluation, Monte-Carlo permutation sampling, and
//! multi-round accumulation into normalized contribution shares.
//!
//! Coalition value is the validation utility of a model rebuilt from the
//! coalition's submitted parameters by size-weighted averaging. Subsets are
//! encoded as bitmasks over client positions in ascending-id order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, ModelArch};
use crate::param_math::{self, ParamVec};
use crate::rng::SplitMix64;
use crate::strategies::ClientUpdate;

/// Exact valuation walks all 2^n subsets per round; above this client count
/// the cost is prohibitive and the call is rejected.
pub const EXACT_CLIENT_CAP: usize = 16;

/// What "utility" means for a coalition's reconstructed model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    /// Validation accuracy in [0,1].
    Accuracy,
    /// Negative mean cross-entropy (higher is better, unbounded below).
    NegLoss,
}

/// How raw multi-round totals become non-negative shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationKind {
    /// Clamp negative totals to zero, then divide by the sum.
    Clamp,
    /// Subtract the minimum total (when negative), then divide by the sum.
    ShiftMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyMode {
    Exact,
    Mc,
}

/// Utilities keyed by client-subset bitmask; sparse under Monte Carlo.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundValueTable {
    n: usize,
    values: BTreeMap<u64, f64>,
}

impl RoundValueTable {
    pub fn new(n: usize) -> Self {
        RoundValueTable {
            n,
            values: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, mask: u64) -> Option<f64> {
        self.values.get(&mask).copied()
    }

    pub fn insert(&mut self, mask: u64, value: f64) {
        self.values.insert(mask, value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Errors with the first missing mask if any of the 2^n entries is
    /// absent (exact mode requires a complete table).
    pub fn require_complete(&self) -> Result<()> {
        for mask in 0..(1u64 << self.n) {
            if !self.values.contains_key(&mask) {
                return Err(Error::IncompleteTable(mask));
            }
        }
        Ok(())
    }
}

/// One round's per-client marginal values; entries may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundShapley {
    pub phi: Vec<f64>,
    pub round_index: usize,
}

/// Non-negative per-client shares summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContributionVector {
    c: Vec<f64>,
}

impl ContributionVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::EmptyInput("contribution vector"));
        }
        if c.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidParameter(
                "contribution entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = c.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "contribution entries sum to {sum}, expected 1"
            )));
        }
        Ok(ContributionVector { c })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("contribution vector"));
        }
        ContributionVector::new(vec![1.0 / n as f64; n])
    }

    pub fn shares(&self) -> &[f64] {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

/// Utility of the model rebuilt from a coalition's updates: the empty
/// coalition falls back to the incoming global model, any other coalition
/// is the size-weighted average of its members' parameters.
pub fn reconstruct_utility(
    arch: &ModelArch,
    prev_global: &ParamVec,
    updates: &[ClientUpdate],
    subset: u64,
    val_set: &Dataset,
    utility: UtilityKind,
) -> Result<f64> {
    if val_set.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    let measure = |params: &ParamVec| -> Result<f64> {
        let eval = model::evaluate(arch, params, val_set)?;
        Ok(match utility {
            UtilityKind::Accuracy => eval.accuracy,
            UtilityKind::NegLoss => -eval.loss,
        })
    };
    if subset == 0 {
        return measure(prev_global);
    }
    let members: Vec<&ClientUpdate> = updates
        .iter()
        .enumerate()
        .filter(|&(pos, _)| subset & (1 << pos) != 0)
        .map(|(_, u)| u)
        .collect();
    if members.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "subset mask {subset:#b} addresses no clients"
        )));
    }
    let total: usize = members.iter().map(|u| u.n_i).sum();
    let vecs: Vec<ParamVec> = members.iter().map(|u| u.params.clone()).collect();
    let weights: Vec<f64> = members.iter().map(|u| u.n_i as f64 / total as f64).collect();
    let reconstructed = param_math::weighted_sum(&vecs, &weights)?;
    measure(&reconstructed)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// phi_i = sum over subsets S of N\{i} of |S|!(n-|S|-1)!/n! * [v(S+i) - v(S)].
pub fn exact_shapley(table: &RoundValueTable, round_index: usize) -> Result<RoundShapley> {
    let n = table.n();
    if n == 0 {
        return Err(Error::EmptyInput("value table"));
    }
    if n > EXACT_CLIENT_CAP {
        return Err(Error::TooManyClients {
            n,
            cap: EXACT_CLIENT_CAP,
        });
    }
    table.require_complete()?;
    let n_fact = factorial(n);
    // weight[s] for a coalition of size s joined by one more player.
    let weights: Vec<f64> = (0..n)
        .map(|s| factorial(s) * factorial(n - s - 1) / n_fact)
        .collect();
    let mut phi = vec![0.0; n];
    for (i, value) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        let mut total = 0.0;
        for mask in 0..(1u64 << n) {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let without = table.get(mask).expect("complete table");
            let with = table.get(mask | bit).expect("complete table");
            total += weights[s] * (with - without);
        }
        *value = total;
    }
    Ok(RoundShapley { phi, round_index })
}

/// Average marginal contribution over an explicit list of permutations,
/// memoizing utilities so each subset is evaluated at most once.
pub fn shapley_from_permutations(
    mut value_fn: impl FnMut(u64) -> Result<f64>,
    n: usize,
    perms: &[Vec<usize>],
    round_index: usize,
) -> Result<RoundShapley> {
    if n == 0 {
        return Err(Error::EmptyInput("players"));
    }
    if perms.is_empty() {
        return Err(Error::EmptyInput("permutations"));
    }
    let mut cache: BTreeMap<u64, f64> = BTreeMap::new();
    let mut value = |mask: u64, f: &mut dyn FnMut(u64) -> Result<f64>| -> Result<f64> {
        if let Some(&v) = cache.get(&mask) {
            return Ok(v);
        }
        let v = f(mask)?;
        cache.insert(mask, v);
        Ok(v)
    };
    let mut phi = vec![0.0; n];
    for perm in perms {
        let mut mask = 0u64;
        let mut prev = value(0, &mut value_fn)?;
        for &player in perm {
            mask |= 1 << player;
            let cur = value(mask, &mut value_fn)?;
            phi[player] += cur - prev;
            prev = cur;
        }
    }
    for p in phi.iter_mut() {
        *p /= perms.len() as f64;
    }
    Ok(RoundShapley { phi, round_index })
}

/// Monte-Carlo estimate over `num_perms` seeded uniform permutations.
pub fn mc_shapley(
    value_fn: impl FnMut(u64) -> Result<f64>,
    n: usize,
    num_perms: usize,
    seed: u64,
    round_index: usize,
) -> Result<RoundShapley> {
    if num_perms == 0 {
        return Err(Error::InvalidParameter(
            "mc_shapley needs at least one permutation".into(),
        ));
    }
    let mut rng = SplitMix64::new(seed);
    let base: Vec<usize> = (0..n).collect();
    let perms: Vec<Vec<usize>> = (0..num_perms)
        .map(|_| {
            let mut p = base.clone();
            rng.shuffle(&mut p);
            p
        })
        .collect();
    shapley_from_permutations(value_fn, n, &perms, round_index)
}

/// One round of reconstruction Shapley against the round's incoming global
/// model. Returns the per-client values and the (lazily filled) utility
/// table that produced them.
#[allow(clippy::too_many_arguments)]
pub fn round_shapley(
    arch: &ModelArch,
    prev_global: &ParamVec,
    updates: &[ClientUpdate],
    val_set: &Dataset,
    mode: ShapleyMode,
    mc_perms: usize,
    seed: u64,
    round_index: usize,
    utility: UtilityKind,
) -> Result<(RoundShapley, RoundValueTable)> {
    let n = updates.len();
    if n == 0 {
        return Err(Error::EmptyInput("client updates"));
    }
    let mut sorted: Vec<ClientUpdate> = updates.to_vec();
    sorted.sort_by_key(|u| u.client_id);
    let mut table = RoundValueTable::new(n);
    match mode {
        ShapleyMode::Exact => {
            if n > EXACT_CLIENT_CAP {
                return Err(Error::TooManyClients {
                    n,
                    cap: EXACT_CLIENT_CAP,
                });
            }
            for mask in 0..(1u64 << n) {
                let v = reconstruct_utility(arch, prev_global, &sorted, mask, val_set, utility)?;
                table.insert(mask, v);
            }
            let phi = exact_shapley(&table, round_index)?;
            Ok((phi, table))
        }
        ShapleyMode::Mc => {
            let phi = {
                let table = &mut table;
                mc_shapley(
                    |mask| {
                        if let Some(v) = table.get(mask) {
                            return Ok(v);
                        }
                        let v = reconstruct_utility(
                            arch,
                            prev_global,
                            &sorted,
                            mask,
                            val_set,
                            utility,
                        )?;
                        table.insert(mask, v);
                        Ok(v)
                    },
                    n,
                    mc_perms,
                    seed,
                    round_index,
                )?
            };
            Ok((phi, table))
        }
    }
}

/// Turns raw per-client totals into shares: make them non-negative per the
/// chosen rule, then divide by the sum, falling back to uniform when
/// everything vanishes.
fn normalize_raw(raw: &[f64], norm: NormalizationKind) -> Result<ContributionVector> {
    let adjusted: Vec<f64> = match norm {
        NormalizationKind::Clamp => raw.iter().map(|&x| x.max(0.0)).collect(),
        NormalizationKind::ShiftMin => {
            let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
            if min < 0.0 {
                raw.iter().map(|&x| x - min).collect()
            } else {
                raw.to_vec()
            }
        }
    };
    let sum: f64 = adjusted.iter().sum();
    if sum > 0.0 {
        ContributionVector::new(adjusted.iter().map(|&x| x / sum).collect())
    } else {
        ContributionVector::uniform(raw.len())
    }
}

/// Full accumulation pipeline with explicit normalization choices.
/// `per_round = false` sums raw values across rounds first and normalizes
/// once; `per_round = true` normalizes every round and averages the shares.
pub fn accumulate_with(
    rounds: &[RoundShapley],
    norm: NormalizationKind,
    per_round: bool,
) -> Result<ContributionVector> {
    if rounds.is_empty() {
        return Err(Error::EmptyInput("round shapley values"));
    }
    let n = rounds[0].phi.len();
    for r in rounds {
        if r.phi.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.phi.len(),
            });
        }
    }
    if per_round {
        let mut mean = vec![0.0; n];
        for r in rounds {
            let shares = normalize_raw(&r.phi, norm)?;
            for (m, &s) in mean.iter_mut().zip(shares.shares()) {
                *m += s;
            }
        }
        for m in mean.iter_mut() {
            *m /= rounds.len() as f64;
        }
        ContributionVector::new(mean)
    } else {
        let mut raw = vec![0.0; n];
        for r in rounds {
            for (acc, &p) in raw.iter_mut().zip(&r.phi) {
                *acc += p;
            }
        }
        normalize_raw(&raw, norm)
    }
}

/// Default pipeline: sum across rounds, clamp negatives, normalize.
pub fn accumulate_normalize(rounds: &[RoundShapley]) -> Result<ContributionVector> {
    accumulate_with(rounds, NormalizationKind::Clamp, false)
}
