//! Deterministic federation runner, the MSM and FedRandom samplers, and the
//! variance/distance metric pipeline that compares them.
//!
//! All randomness flows from a single master seed through documented
//! derivation tags, so a config fully determines every byte of a run's
//! output. MSM's ensemble members and FedRandom's sample runs share the
//! dataset, partition, initialization, and client training seeds; only the
//! server-side rule (or its per-round choice sequence) varies.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    dirichlet_partition, gen_synthetic, ground_truth_sizes, holdout_split, load_idx,
    ClientDataset, Dataset, GroundTruth, PartitionSpec,
};
use crate::error::{Error, Result};
use crate::model::{evaluate, init_params, train_local, LocalTrainConfig, ModelArch};
use crate::param_math::{l2_dist, linf_dist};
use crate::rng::derive_seed;
use crate::shapley::{
    accumulate_with, round_shapley, ContributionVector, NormalizationKind, RoundShapley,
    ShapleyMode, UtilityKind,
};
use crate::strategies::{
    aggregate, fedrandom_aggregate, ClientUpdate, StrategyHyper, StrategyKind, StrategyState,
    FEDRANDOM_POOL, MSM_POOL,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Seed-derivation tags. Every random stream in a run is reached by
/// folding one of these (and then indices) into the master seed, which
/// keeps the streams independent and the whole run replayable.
pub mod seed_tags {
    /// Synthetic dataset generation.
    pub const DATA: u64 = 0x5EED_0001_0000_0001;
    /// Validation holdout shuffle.
    pub const HOLDOUT: u64 = 0x5EED_0001_0000_0002;
    /// Dirichlet partition draws.
    pub const PARTITION: u64 = 0x5EED_0001_0000_0003;
    /// Global model initialization.
    pub const INIT: u64 = 0x5EED_0001_0000_0004;
    /// Per-round, per-client local training (chained with round and client).
    pub const TRAIN: u64 = 0x5EED_0001_0000_0005;
    /// Per-round Monte-Carlo Shapley permutations.
    pub const SHAPLEY: u64 = 0x5EED_0001_0000_0006;
}

/// Where the run's records come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Seeded Gaussian class blobs; the seed is derived from the master seed.
    Synthetic {
        num_classes: usize,
        input_dim: usize,
        per_class: usize,
        noise_sigma: f64,
    },
    /// An IDX image/label file pair on disk.
    Idx { images: String, labels: String },
}

/// Local SGD settings shared by every client; per-client seeds are derived
/// by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSettings {
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

/// Shapley valuation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapleyConfig {
    pub mode: ShapleyMode,
    pub mc_perms: usize,
    pub utility: UtilityKind,
    pub normalization: NormalizationKind,
    pub per_round: bool,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            mode: ShapleyMode::Exact,
            mc_perms: 200,
            utility: UtilityKind::Accuracy,
            normalization: NormalizationKind::Clamp,
            per_round: false,
        }
    }
}

/// Whether FedRandom's pool members carry optimizer state across rounds or
/// start from scratch every round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StateMode {
    #[default]
    Persistent,
    Reset,
}

/// Everything one federation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub arch: ModelArch,
    pub rounds: usize,
    pub local: LocalSettings,
    pub strategy: StrategyKind,
    #[serde(default)]
    pub hyper: StrategyHyper,
    #[serde(default)]
    pub shapley: ShapleyConfig,
    /// Pool FedRandom draws from; defaults to the canonical five-member set.
    #[serde(default = "default_pool")]
    pub fedrandom_pool: Vec<StrategyKind>,
    #[serde(default)]
    pub fedrandom_state: StateMode,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub val_frac: f64,
    pub master_seed: u64,
    /// Base seed for FedRandom's per-round strategy choices. Defaults to
    /// the master seed; the FedRandom sampler varies only this across its
    /// K runs so that every other source of randomness is shared.
    #[serde(default)]
    pub choice_seed: Option<u64>,
}

fn default_pool() -> Vec<StrategyKind> {
    FEDRANDOM_POOL.to_vec()
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be at least 1".into()));
        }
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "val_frac must lie in (0,1), got {}",
                self.val_frac
            )));
        }
        // A single-client federation bypasses the Dirichlet split, so the
        // partition spec's own >= 2 clients rule only applies beyond that.
        if self.partition.num_clients == 0 {
            return Err(Error::InvalidParameter(
                "partition needs at least 1 client".into(),
            ));
        }
        if self.partition.num_clients > 1 {
            self.partition.validate()?;
        }
        self.hyper.validate()?;
        if self.strategy == StrategyKind::FedRandom && self.fedrandom_pool.is_empty() {
            return Err(Error::EmptyInput("fedrandom pool"));
        }
        if self.fedrandom_pool.contains(&StrategyKind::FedRandom) {
            return Err(Error::InvalidParameter(
                "fedrandom cannot be a member of its own pool".into(),
            ));
        }
        match &self.dataset {
            DatasetSpec::Synthetic {
                num_classes,
                input_dim,
                per_class,
                ..
            } => {
                if *num_classes < 2 || *input_dim == 0 || *per_class == 0 {
                    return Err(Error::InvalidParameter(
                        "synthetic dataset needs >= 2 classes and positive dimensions".into(),
                    ));
                }
            }
            DatasetSpec::Idx { .. } => {}
        }
        Ok(())
    }

    fn with_strategy(&self, strategy: StrategyKind) -> FederationConfig {
        FederationConfig {
            strategy,
            ..self.clone()
        }
    }
}

/// One round's worth of record: which rule ran, what it scored, and the
/// round's Shapley values with the table endpoints needed to audit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: usize,
    /// The rule actually applied this round (FedRandom records its choice).
    pub strategy: StrategyKind,
    /// Validation accuracy of the aggregated global model.
    pub accuracy: f64,
    pub phi: Vec<f64>,
    /// Utility of the empty coalition (the incoming global model).
    pub value_empty: f64,
    /// Utility of the full coalition.
    pub value_full: f64,
}

/// Full trace of one federation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    /// The configured strategy (FedRandom runs keep that label here).
    pub strategy: StrategyKind,
    /// Echo of the exact config that produced this record.
    pub config: FederationConfig,
    pub config_digest: String,
    pub partition_digest: String,
    pub client_seed_digest: String,
    pub client_sizes: Vec<usize>,
    pub rounds: Vec<RoundEntry>,
    pub contributions: ContributionVector,
}

impl RunRecord {
    /// Per-round validation accuracies, in round order.
    pub fn accuracy_trace(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.accuracy).collect()
    }

    /// The per-round strategy choices, in round order.
    pub fn choice_sequence(&self) -> Vec<StrategyKind> {
        self.rounds.iter().map(|r| r.strategy).collect()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

fn digest_config(cfg: &FederationConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    Ok(sha256_hex(&bytes))
}

/// Content digest over every shard: client ids, sizes, and raw row bytes.
fn digest_partition(parts: &[ClientDataset]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((parts.len() as u64).to_le_bytes());
    for p in parts {
        hasher.update((p.client_id as u64).to_le_bytes());
        hasher.update((p.n_i as u64).to_le_bytes());
        for i in 0..p.data.len() {
            hasher.update((p.data.label(i) as u64).to_le_bytes());
            for &v in p.data.row(i) {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
    }
    hex::encode(hasher.finalize())
}

/// Digest of the complete per-round, per-client training seed schedule.
fn digest_client_seeds(master_seed: u64, rounds: usize, num_clients: usize) -> String {
    let train_base = derive_seed(master_seed, seed_tags::TRAIN);
    let mut hasher = Sha256::new();
    for t in 0..rounds {
        let round_base = derive_seed(train_base, t as u64);
        for c in 0..num_clients {
            hasher.update(derive_seed(round_base, c as u64).to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// Builds the config's dataset (synthetic generation is seeded from the
/// master seed) and splits off the validation holdout.
pub fn prepare_data(cfg: &FederationConfig) -> Result<(Dataset, Dataset)> {
    let ds = match &cfg.dataset {
        DatasetSpec::Synthetic {
            num_classes,
            input_dim,
            per_class,
            noise_sigma,
        } => gen_synthetic(
            *num_classes,
            *input_dim,
            *per_class,
            *noise_sigma,
            derive_seed(cfg.master_seed, seed_tags::DATA),
        )?,
        DatasetSpec::Idx { images, labels } => {
            load_idx(std::path::Path::new(images), std::path::Path::new(labels))?
        }
    };
    holdout_split(&ds, cfg.val_frac, derive_seed(cfg.master_seed, seed_tags::HOLDOUT))
}

/// Dataset construction plus partitioning: the full client-side setup.
pub fn prepare_cell(cfg: &FederationConfig) -> Result<(Vec<ClientDataset>, Dataset)> {
    let (train, val) = prepare_data(cfg)?;
    let parts = if cfg.partition.num_clients == 1 {
        let n_i = train.len();
        vec![ClientDataset {
            client_id: 0,
            data: train,
            n_i,
        }]
    } else {
        dirichlet_partition(&train, &cfg.partition)?
    };
    Ok((parts, val))
}

/// Runs one federation end to end from the config alone.
pub fn run_federation(cfg: &FederationConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let (parts, val) = prepare_cell(cfg)?;
    run_federation_with_parts(cfg, &parts, &val)
}

/// Runs one federation against pre-built shards and validation data. The
/// MSM and FedRandom samplers use this entry so all their runs share one
/// partition; tests use it to construct degenerate client layouts.
pub fn run_federation_with_parts(
    cfg: &FederationConfig,
    parts: &[ClientDataset],
    val: &Dataset,
) -> Result<RunRecord> {
    cfg.validate()?;
    if parts.is_empty() {
        return Err(Error::EmptyInput("client partitions"));
    }
    let n = parts.len();
    let mut global = init_params(&cfg.arch, derive_seed(cfg.master_seed, seed_tags::INIT))?;
    let train_base = derive_seed(cfg.master_seed, seed_tags::TRAIN);
    let shapley_base = derive_seed(cfg.master_seed, seed_tags::SHAPLEY);
    let choice_base = cfg.choice_seed.unwrap_or(cfg.master_seed);

    let mut pool_states: Vec<StrategyState> =
        vec![StrategyState::fresh(); cfg.fedrandom_pool.len()];
    let mut plain_state = StrategyState::fresh();

    let mut round_entries = Vec::with_capacity(cfg.rounds);
    let mut round_phis: Vec<RoundShapley> = Vec::with_capacity(cfg.rounds);

    for t in 0..cfg.rounds {
        let round_train = derive_seed(train_base, t as u64);
        let updates: Vec<ClientUpdate> = parts
            .iter()
            .map(|p| {
                let local = LocalTrainConfig {
                    local_epochs: cfg.local.local_epochs,
                    learning_rate: cfg.local.learning_rate,
                    batch_size: cfg.local.batch_size,
                    seed: derive_seed(round_train, p.client_id as u64),
                };
                let params = train_local(&cfg.arch, &global, &p.data, &local)?;
                Ok(ClientUpdate {
                    client_id: p.client_id,
                    params,
                    n_i: p.n_i,
                })
            })
            .collect::<Result<_>>()?;

        // Value this round's updates against the incoming global model,
        // before aggregation replaces it.
        let (phi, table) = round_shapley(
            &cfg.arch,
            &global,
            &updates,
            val,
            cfg.shapley.mode,
            cfg.shapley.mc_perms,
            derive_seed(shapley_base, t as u64),
            t,
            cfg.shapley.utility,
        )?;
        let full_mask = (1u64 << n) - 1;
        let value_empty = table.get(0).expect("empty coalition always valued");
        let value_full = table.get(full_mask).expect("full coalition always valued");

        let (new_global, applied) = match cfg.strategy {
            StrategyKind::FedRandom => {
                let round_seed = derive_seed(choice_base, t as u64);
                let states_in = match cfg.fedrandom_state {
                    StateMode::Persistent => pool_states.clone(),
                    StateMode::Reset => vec![StrategyState::fresh(); cfg.fedrandom_pool.len()],
                };
                let (g, states_out, chosen) = fedrandom_aggregate(
                    &cfg.fedrandom_pool,
                    &cfg.hyper,
                    &states_in,
                    &global,
                    &updates,
                    round_seed,
                )?;
                if cfg.fedrandom_state == StateMode::Persistent {
                    pool_states = states_out;
                }
                (g, chosen)
            }
            kind => {
                let (g, state_out) =
                    aggregate(kind, &cfg.hyper, &plain_state, &global, &updates)?;
                plain_state = state_out;
                (g, kind)
            }
        };
        global = new_global;
        let accuracy = evaluate(&cfg.arch, &global, val)?.accuracy;
        round_entries.push(RoundEntry {
            round: t,
            strategy: applied,
            accuracy,
            phi: phi.phi.clone(),
            value_empty,
            value_full,
        });
        round_phis.push(phi);
    }

    let contributions = accumulate_with(
        &round_phis,
        cfg.shapley.normalization,
        cfg.shapley.per_round,
    )?;

    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        strategy: cfg.strategy,
        config: cfg.clone(),
        config_digest: digest_config(cfg)?,
        partition_digest: digest_partition(parts),
        client_seed_digest: digest_client_seeds(cfg.master_seed, cfg.rounds, n),
        client_sizes: parts.iter().map(|p| p.n_i).collect(),
        rounds: round_entries,
        contributions,
    })
}

/// Arithmetic mean of contribution vectors, itself a valid vector.
pub fn mean_contributions(vectors: &[ContributionVector]) -> Result<ContributionVector> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("contribution vectors"));
    }
    let n = vectors[0].len();
    let mut mean = vec![0.0; n];
    for v in vectors {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        for (m, &s) in mean.iter_mut().zip(v.shares()) {
            *m += s;
        }
    }
    for m in mean.iter_mut() {
        *m /= vectors.len() as f64;
    }
    ContributionVector::new(mean)
}

/// One federation per ensemble member, sharing partition and client seeds.
#[derive(Debug, Clone)]
pub struct MsmOutcome {
    pub records: Vec<RunRecord>,
    pub vectors: Vec<ContributionVector>,
    pub mean: ContributionVector,
}

/// K FedRandom federations differing only in their choice sequences.
#[derive(Debug, Clone)]
pub struct FedRandomOutcome {
    pub records: Vec<RunRecord>,
    pub vectors: Vec<ContributionVector>,
    pub mean: ContributionVector,
}

fn require_shared_setup(records: &[RunRecord]) -> Result<()> {
    let first = &records[0];
    for r in &records[1..] {
        if r.partition_digest != first.partition_digest
            || r.client_seed_digest != first.client_seed_digest
        {
            return Err(Error::InvalidParameter(
                "ensemble runs diverged in partition or client seeds".into(),
            ));
        }
    }
    Ok(())
}

/// Runs the full strategy ensemble on one cell and averages the resulting
/// contribution vectors. All members see identical shards and identical
/// client training seeds; the recorded digests prove it.
pub fn run_msm(
    base: &FederationConfig,
    parts: &[ClientDataset],
    val: &Dataset,
) -> Result<MsmOutcome> {
    let mut records = Vec::with_capacity(MSM_POOL.len());
    for kind in MSM_POOL {
        let cfg = base.with_strategy(kind);
        records.push(run_federation_with_parts(&cfg, parts, val)?);
    }
    require_shared_setup(&records)?;
    let vectors: Vec<ContributionVector> =
        records.iter().map(|r| r.contributions.clone()).collect();
    let mean = mean_contributions(&vectors)?;
    Ok(MsmOutcome {
        records,
        vectors,
        mean,
    })
}

/// Runs K FedRandom federations on one cell. Run k's choice seed is derived
/// from the cell seed and k; everything else is shared, so the K samples
/// differ only in which pool member aggregated each round.
pub fn run_fedrandom_samples(
    base: &FederationConfig,
    parts: &[ClientDataset],
    val: &Dataset,
    k_runs: usize,
) -> Result<FedRandomOutcome> {
    if k_runs == 0 {
        return Err(Error::InvalidParameter(
            "fedrandom sampling needs K >= 1".into(),
        ));
    }
    let mut records = Vec::with_capacity(k_runs);
    for k in 0..k_runs {
        let mut cfg = base.with_strategy(StrategyKind::FedRandom);
        cfg.choice_seed = Some(derive_seed(base.master_seed, k as u64));
        records.push(run_federation_with_parts(&cfg, parts, val)?);
    }
    require_shared_setup(&records)?;
    let vectors: Vec<ContributionVector> =
        records.iter().map(|r| r.contributions.clone()).collect();
    let mean = mean_contributions(&vectors)?;
    Ok(FedRandomOutcome {
        records,
        vectors,
        mean,
    })
}

/// Spread and bias of a contribution sample against the size ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sample_count: usize,
    /// Mean over clients of the Bessel-corrected per-client sample standard
    /// deviation; absent when fewer than two samples exist.
    pub avg_std: Option<f64>,
    /// L2 distance from the sample mean to the ground truth.
    pub l2: f64,
    /// Max coordinate distance from the sample mean to the ground truth.
    pub linf: f64,
}

pub fn sample_metrics(
    samples: &[ContributionVector],
    truth: &GroundTruth,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("contribution samples"));
    }
    let n = truth.shares().len();
    for s in samples {
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.len(),
            });
        }
    }
    let count = samples.len();
    let mut mean = vec![0.0; n];
    for s in samples {
        for (m, &x) in mean.iter_mut().zip(s.shares()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    let avg_std = if count >= 2 {
        let mut total = 0.0;
        for (i, &m) in mean.iter().enumerate() {
            let var: f64 = samples
                .iter()
                .map(|s| {
                    let d = s.shares()[i] - m;
                    d * d
                })
                .sum::<f64>()
                / (count - 1) as f64;
            total += var.sqrt();
        }
        Some(total / n as f64)
    } else {
        None
    };
    Ok(MetricsReport {
        sample_count: count,
        avg_std,
        l2: l2_dist(&mean, truth.shares())?,
        linf: linf_dist(&mean, truth.shares())?,
    })
}

/// Win/loss/tie tally for one metric, lower-is-better, FedRandom vs MSM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided exact binomial sign-test p-value (ties dropped); absent
    /// when every cell tied.
    pub p_value: Option<f64>,
}

/// Paired comparison of the two samplers across scenario cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub cells: usize,
    pub avg_std: CriterionOutcome,
    pub l2: CriterionOutcome,
    pub linf: CriterionOutcome,
}

/// P(X >= wins) for X ~ Binomial(wins + losses, 1/2); the one-sided exact
/// sign test for "FedRandom beats MSM more often than chance".
pub fn sign_test_p(wins: usize, losses: usize) -> Option<f64> {
    let n = wins + losses;
    if n == 0 {
        return None;
    }
    // Binomial coefficients accumulated multiplicatively; exact in f64 for
    // the cell counts this simulator produces.
    let mut coeff = 1.0f64;
    let mut tail = 0.0f64;
    for k in 0..=n {
        if k >= wins {
            tail += coeff;
        }
        coeff = coeff * (n - k) as f64 / (k + 1) as f64;
    }
    Some(tail / 2.0f64.powi(n as i32))
}

fn tally<F: Fn(&MetricsReport) -> Option<f64>>(
    pairs: &[(MetricsReport, MetricsReport)],
    metric: F,
) -> CriterionOutcome {
    let mut wins = 0;
    let mut losses = 0;
    let mut ties = 0;
    for (msm, fr) in pairs {
        match (metric(msm), metric(fr)) {
            (Some(m), Some(f)) if f < m => wins += 1,
            (Some(m), Some(f)) if f > m => losses += 1,
            // Equal values, or a metric undefined on either side.
            _ => ties += 1,
        }
    }
    CriterionOutcome {
        wins,
        losses,
        ties,
        p_value: sign_test_p(wins, losses),
    }
}

/// Tallies FedRandom-vs-MSM wins per criterion over paired cell reports.
pub fn compare(pairs: &[(MetricsReport, MetricsReport)]) -> ComparisonSummary {
    ComparisonSummary {
        cells: pairs.len(),
        avg_std: tally(pairs, |r| r.avg_std),
        l2: tally(pairs, |r| Some(r.l2)),
        linf: tally(pairs, |r| Some(r.linf)),
    }
}

/// A grid of experiment cells: the cross product of heterogeneity levels,
/// local epoch counts, and seeds, each cell running both samplers on one
/// shared partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Label carried into every report row; must be CSV-safe.
    pub id: String,
    pub base: FederationConfig,
    pub alphas: Vec<f64>,
    pub epochs: Vec<usize>,
    pub seeds: Vec<u64>,
    /// FedRandom sample count per cell.
    pub fedrandom_runs: usize,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.id.is_empty() {
            return Err(Error::EmptyInput("scenario id"));
        }
        if self.id.contains([',', '\n', '\r']) {
            return Err(Error::InvalidParameter(
                "scenario id must not contain commas or line breaks".into(),
            ));
        }
        if self.alphas.is_empty() || self.epochs.is_empty() || self.seeds.is_empty() {
            return Err(Error::EmptyInput("scenario grid axes"));
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidParameter(
                "scenario alphas must be positive and finite".into(),
            ));
        }
        if self.epochs.contains(&0) {
            return Err(Error::InvalidParameter(
                "scenario epochs must be at least 1".into(),
            ));
        }
        if self.fedrandom_runs == 0 {
            return Err(Error::InvalidParameter(
                "fedrandom_runs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Identifies one cell of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub alpha: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// Both samplers' metric reports for one cell, plus the complete run
/// traces the reports summarize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub key: CellKey,
    pub client_sizes: Vec<usize>,
    pub msm: MetricsReport,
    pub fedrandom: MetricsReport,
    pub msm_runs: Vec<RunRecord>,
    pub fedrandom_runs: Vec<RunRecord>,
}

/// Everything a scenario run produces, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub schema_version: u32,
    pub cells: Vec<CellOutcome>,
    pub summary: ComparisonSummary,
}

/// The concrete federation config for one cell: the base config with the
/// cell's alpha and epochs substituted and all seeds rebased on the cell
/// seed so cells are independent replications.
pub fn cell_config(scenario: &ScenarioConfig, key: &CellKey) -> FederationConfig {
    let mut cfg = scenario.base.clone();
    cfg.partition.alpha = key.alpha;
    cfg.partition.seed = derive_seed(key.seed, seed_tags::PARTITION);
    cfg.local.local_epochs = key.epochs;
    cfg.master_seed = key.seed;
    cfg.choice_seed = None;
    cfg
}

/// Grid order: alphas outermost, then epochs, then seeds.
pub fn expand_cells(scenario: &ScenarioConfig) -> Vec<CellKey> {
    let mut keys = Vec::with_capacity(
        scenario.alphas.len() * scenario.epochs.len() * scenario.seeds.len(),
    );
    for &alpha in &scenario.alphas {
        for &epochs in &scenario.epochs {
            for &seed in &scenario.seeds {
                keys.push(CellKey {
                    alpha,
                    epochs,
                    seed,
                });
            }
        }
    }
    keys
}

fn run_cell(scenario: &ScenarioConfig, key: &CellKey) -> Result<CellOutcome> {
    let cfg = cell_config(scenario, key);
    let (parts, val) = prepare_cell(&cfg)?;
    let truth = ground_truth_sizes(&parts)?;
    let msm = run_msm(&cfg, &parts, &val)?;
    let fr = run_fedrandom_samples(&cfg, &parts, &val, scenario.fedrandom_runs)?;
    Ok(CellOutcome {
        key: *key,
        client_sizes: parts.iter().map(|p| p.n_i).collect(),
        msm: sample_metrics(&msm.vectors, &truth)?,
        fedrandom: sample_metrics(&fr.vectors, &truth)?,
        msm_runs: msm.records,
        fedrandom_runs: fr.records,
    })
}

/// Runs every cell of the grid, optionally across a rayon pool of `workers`
/// threads. Results keep grid order regardless of scheduling, so the
/// worker count never changes the output.
pub fn run_scenario(scenario: &ScenarioConfig, workers: usize) -> Result<ScenarioOutcome> {
    use rayon::prelude::*;
    scenario.validate()?;
    let keys = expand_cells(scenario);
    let cells: Vec<CellOutcome> = if workers <= 1 {
        keys.iter()
            .map(|k| run_cell(scenario, k))
            .collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool construction failed: {e}")))?;
        pool.install(|| {
            keys.par_iter()
                .map(|k| run_cell(scenario, k))
                .collect::<Result<_>>()
        })?
    };
    let pairs: Vec<(MetricsReport, MetricsReport)> =
        cells.iter().map(|c| (c.msm, c.fedrandom)).collect();
    Ok(ScenarioOutcome {
        schema_version: SCHEMA_VERSION,
        cells,
        summary: compare(&pairs),
    })
}
