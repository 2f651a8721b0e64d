//! Round-by-round orchestration of clients, pools, attacks, aggregation,
//! consensus, and metrics.
//!
//! A run is fully determined by its configuration: every random choice is
//! drawn from a generator seeded through [`derive_seed`], with the round seed
//! derived from the master seed and the round counter. Within a round,
//! client training may execute in parallel; results are always reduced in
//! (pool id, client id) order so output is independent of scheduling.
//!
//! Seven architectures are supported. `client-server`, `pow`, and `pos`
//! average every participant's update globally; `krum-cs` and
//! `trimmedmean-cs` replace the average with a robust operator; `pofl`
//! averages within each isolated pool and lets the most accurate pool model
//! win the round; `kfc` additionally applies Krum inside each pool before
//! the accuracy contest.

use rayon::prelude::*;

use crate::aggregate::{fedavg, krum_select, trimmed_mean, UpdateSet};
use crate::attack::{attacker_local_train, boost_update, AttackKind, AttackSpec};
use crate::chain::{
    model_digest, pofl_select, pos_select, pow_select, verify_claim, BlockPayload, Ledger,
    MinerState,
};
use crate::data::{
    build_backdoor_test, generate_synthetic, load_dataset, partition_iid, split_validation,
    Dataset,
};
use crate::error::{Error, Result};
use crate::mlcore::{evaluate_accuracy, init_model, sgd_train, Arch, Model, ParamVector, TrainSpec};
use crate::seed::derive_seed;

// Stream labels for seed derivation. Round seeds use the bare round counter;
// setup streams use (label, 0) so the byte paths never collide.
const STREAM_DATA: u64 = 0x10;
const STREAM_SPLIT: u64 = 0x11;
const STREAM_PARTITION: u64 = 0x12;
const STREAM_INIT: u64 = 0x13;
const STREAM_SAMPLE: u64 = 0x20;
const STREAM_ATTACKERS: u64 = 0x21;
const STREAM_TRAIN: u64 = 0x22;
const STREAM_POW: u64 = 0x23;

/// The network/aggregation layout under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    ClientServer,
    Pow,
    Pos,
    Pofl,
    Kfc,
    KrumCs,
    TrimmedMeanCs,
}

impl Architecture {
    pub const ALL: [Architecture; 7] = [
        Architecture::ClientServer,
        Architecture::Pow,
        Architecture::Pos,
        Architecture::Pofl,
        Architecture::Kfc,
        Architecture::KrumCs,
        Architecture::TrimmedMeanCs,
    ];

    /// Whether rounds append to a hash-chained ledger.
    pub fn uses_ledger(&self) -> bool {
        matches!(
            self,
            Architecture::Pow | Architecture::Pos | Architecture::Pofl | Architecture::Kfc
        )
    }

    /// Whether aggregation happens inside isolated pools.
    pub fn is_pooled(&self) -> bool {
        matches!(self, Architecture::Pofl | Architecture::Kfc)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::ClientServer => "client-server",
            Architecture::Pow => "pow",
            Architecture::Pos => "pos",
            Architecture::Pofl => "pofl",
            Architecture::Kfc => "kfc",
            Architecture::KrumCs => "krum-cs",
            Architecture::TrimmedMeanCs => "trimmedmean-cs",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .iter()
            .find(|a| a.name() == s)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown architecture '{s}' (expected one of: {})",
                    Architecture::ALL.map(|a| a.name()).join(", ")
                ))
            })
    }
}

/// Where adversarial clients sit in a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// No adversarial participation.
    None,
    /// Exactly one adversarial client in exactly one pool per round.
    A,
    /// One adversarial client in every pool per round.
    B,
}

/// How many clients of each pool participate per round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Participation {
    /// A fraction of the pool roster, never fewer than three clients
    /// (or the whole roster when it is smaller).
    Fraction(f64),
    /// A fixed count, capped at the roster size.
    Count(usize),
}

impl Participation {
    fn validate(&self) -> Result<()> {
        match *self {
            Participation::Fraction(f) => {
                if !(f.is_finite() && f > 0.0 && f <= 1.0) {
                    return Err(Error::Config(format!(
                        "participation fraction must be in (0, 1], got {f}"
                    )));
                }
            }
            Participation::Count(c) => {
                if c == 0 {
                    return Err(Error::Config("participation count must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    fn count_for(&self, roster: usize) -> usize {
        match *self {
            Participation::Fraction(f) => {
                let raw = (f * roster as f64).round() as usize;
                raw.max(3).min(roster)
            }
            Participation::Count(c) => c.min(roster),
        }
    }
}

/// The model family to train; dimensions come from the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    SoftmaxLinear,
    Mlp1 { hidden: usize },
}

impl ModelKind {
    fn arch_for(&self, features: usize, classes: usize) -> Arch {
        match *self {
            ModelKind::SoftmaxLinear => Arch::SoftmaxLinear { features, classes },
            ModelKind::Mlp1 { hidden } => Arch::Mlp1 {
                features,
                hidden,
                classes,
            },
        }
    }
}

/// Where the experiment data comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    /// Gaussian blobs generated from the master seed; the train and test
    /// sides share class means.
    Synthetic {
        classes: usize,
        features: usize,
        train_per_class: usize,
        test_per_class: usize,
        spread: f64,
    },
    /// Headerless CSV files (features in `[0,1]`, then an integer label).
    Csv {
        train_path: std::path::PathBuf,
        test_path: std::path::PathBuf,
    },
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub architecture: Architecture,
    pub n_clients: usize,
    pub n_pools: usize,
    pub clients_per_round: Participation,
    pub scenario: Scenario,
    pub attack: AttackSpec,
    pub rounds: usize,
    pub train_spec: TrainSpec,
    pub model: ModelKind,
    pub data: DataSpec,
    pub krum_f: usize,
    pub trim_fraction: f64,
    pub eta: f64,
    /// Share of the test file held out for consensus validation.
    pub validation_fraction: f64,
    pub pow_difficulty_bits: u32,
    /// Per-miner stakes; `None` means equal stakes.
    pub stakes: Option<Vec<f64>>,
    /// Optional validation-accuracy goal for pooled mining; when set, a pool
    /// retrains up to `goal_max_retries` extra times per round to reach it.
    pub accuracy_goal: Option<f64>,
    pub goal_max_retries: u32,
    pub master_seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pools == 0 {
            return Err(Error::Config("need at least one pool".into()));
        }
        if self.n_clients < self.n_pools {
            return Err(Error::Config(format!(
                "{} clients cannot fill {} pools",
                self.n_clients, self.n_pools
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("need at least one round".into()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!(
                "server learning rate must be positive, got {}",
                self.eta
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.trim_fraction.is_finite() && (0.0..0.5).contains(&self.trim_fraction)) {
            return Err(Error::Config(format!(
                "trim fraction must be in [0, 0.5), got {}",
                self.trim_fraction
            )));
        }
        self.clients_per_round.validate()?;
        self.train_spec.validate()?;
        self.attack.validate()?;
        if self.scenario == Scenario::B && self.attack.kind == AttackKind::None {
            return Err(Error::Config(
                "scenario B requires an attack kind".into(),
            ));
        }
        if let Some(stakes) = &self.stakes {
            if stakes.len() != self.n_pools {
                return Err(Error::Config(format!(
                    "{} stakes for {} pools",
                    stakes.len(),
                    self.n_pools
                )));
            }
        }
        if let Some(goal) = self.accuracy_goal {
            if !(0.0..=1.0).contains(&goal) {
                return Err(Error::Config(format!(
                    "accuracy goal must be in [0, 1], got {goal}"
                )));
            }
        }
        if let ModelKind::Mlp1 { hidden } = self.model {
            if hidden == 0 {
                return Err(Error::Config("hidden width must be >= 1".into()));
            }
        }
        match &self.data {
            DataSpec::Synthetic {
                classes,
                features,
                train_per_class,
                test_per_class,
                spread,
            } => {
                if *classes < 2 || *features < 2 || *train_per_class < 1 || *test_per_class < 1 {
                    return Err(Error::Config("synthetic data sizes too small".into()));
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    return Err(Error::Config("spread must be finite and >= 0".into()));
                }
            }
            DataSpec::Csv { .. } => {}
        }
        Ok(())
    }
}

/// Accuracy of one candidate model on the three evaluation sets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskMetrics {
    /// Accuracy on the clean test set.
    pub original: f64,
    /// Accuracy on the pattern-poisoned test set; absent outside backdoor runs.
    pub backdoor: Option<f64>,
    /// Accuracy on the consensus validation set.
    pub validation: f64,
}

/// Outcome of one learning round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    /// 1-based round number.
    pub round: usize,
    /// Winning miner for ledger architectures, `None` otherwise.
    pub winner_miner: Option<usize>,
    /// One entry per candidate model (per pool when pooled, a single global
    /// aggregate otherwise).
    pub per_miner: Vec<TaskMetrics>,
    /// Metrics of the best candidate by validation accuracy; what a run
    /// reports as its global numbers.
    pub reported: TaskMetrics,
}

/// Per-round metrics for a whole run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsSeries {
    pub rounds: Vec<RoundMetrics>,
}

impl MetricsSeries {
    /// Reported original-task accuracy of the final round.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.reported.original)
    }

    /// Reported backdoor-task accuracy of the final round.
    pub fn final_backdoor_accuracy(&self) -> Option<f64> {
        self.rounds.last().and_then(|r| r.reported.backdoor)
    }

    /// Mean reported original-task accuracy over the final `min(10, T)` rounds.
    pub fn accuracy_10(&self) -> Result<f64> {
        accuracy_10(self)
    }

    /// Mean reported backdoor-task accuracy over the final `min(10, T)` rounds.
    pub fn backdoor_accuracy_10(&self) -> Option<f64> {
        let window = self.rounds.len().min(10);
        if window == 0 {
            return None;
        }
        let tail = &self.rounds[self.rounds.len() - window..];
        let mut total = 0.0;
        for r in tail {
            total += r.reported.backdoor?;
        }
        Some(total / window as f64)
    }
}

/// Mean of the reported original-task accuracy over the last `min(10, T)`
/// rounds of a series.
pub fn accuracy_10(series: &MetricsSeries) -> Result<f64> {
    if series.rounds.is_empty() {
        return Err(Error::InvalidArgument("empty metrics series".into()));
    }
    let window = series.rounds.len().min(10);
    let tail = &series.rounds[series.rounds.len() - window..];
    Ok(tail.iter().map(|r| r.reported.original).sum::<f64>() / window as f64)
}

/// Flag adversarial clients for a round, given the sampled participants of
/// each pool.
pub fn assign_attackers(
    scenario: Scenario,
    participants: &[Vec<usize>],
    seed: u64,
) -> Result<Vec<usize>> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut attackers = Vec::new();
    match scenario {
        Scenario::None => {}
        Scenario::A => {
            let nonempty: Vec<usize> = (0..participants.len())
                .filter(|&p| !participants[p].is_empty())
                .collect();
            if nonempty.is_empty() {
                return Err(Error::Config("no participants to corrupt".into()));
            }
            let pool = nonempty[rng.gen_range(0..nonempty.len())];
            let members = &participants[pool];
            attackers.push(members[rng.gen_range(0..members.len())]);
        }
        Scenario::B => {
            for (p, members) in participants.iter().enumerate() {
                if members.is_empty() {
                    return Err(Error::Config(format!(
                        "scenario B needs participants in every pool, pool {p} is empty"
                    )));
                }
                attackers.push(members[rng.gen_range(0..members.len())]);
            }
        }
    }
    attackers.sort_unstable();
    Ok(attackers)
}

/// Live state of one run.
pub struct Simulation {
    config: SimConfig,
    arch: Arch,
    /// Pool rosters: pool id -> sorted client ids.
    pools: Vec<Vec<usize>>,
    /// Client id -> that client's training shard.
    shards: Vec<Dataset>,
    validation: Dataset,
    test: Dataset,
    backdoor_test: Option<Dataset>,
    miners: Vec<MinerState>,
    global: Model,
    ledger: Option<Ledger>,
    round: usize,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let master = config.master_seed;

        let (train, test_full) = match &config.data {
            DataSpec::Synthetic {
                classes,
                features,
                train_per_class,
                test_per_class,
                spread,
            } => {
                let full = generate_synthetic(
                    *classes,
                    *features,
                    train_per_class + test_per_class,
                    *spread,
                    derive_seed(master, &[STREAM_DATA, 0]),
                )?;
                // Blocks are class-major: the first train_per_class of each
                // class go to training, the rest to test.
                let per_class = train_per_class + test_per_class;
                let mut train_idx = Vec::new();
                let mut test_idx = Vec::new();
                for c in 0..*classes {
                    let start = c * per_class;
                    train_idx.extend(start..start + train_per_class);
                    test_idx.extend(start + train_per_class..start + per_class);
                }
                (full.subset(&train_idx)?, full.subset(&test_idx)?)
            }
            DataSpec::Csv {
                train_path,
                test_path,
            } => {
                let train = load_dataset(train_path)?;
                let test = load_dataset(test_path)?;
                if train.feature_dim() != test.feature_dim() {
                    return Err(Error::Config(format!(
                        "train has {} features but test has {}",
                        train.feature_dim(),
                        test.feature_dim()
                    )));
                }
                let classes = train.num_classes().max(test.num_classes());
                (
                    train.with_num_classes(classes)?,
                    test.with_num_classes(classes)?,
                )
            }
        };

        let (validation, test) = split_validation(
            &test_full,
            config.validation_fraction,
            derive_seed(master, &[STREAM_SPLIT, 0]),
        )?;

        let assignment = partition_iid(
            &train,
            config.n_clients,
            derive_seed(master, &[STREAM_PARTITION, 0]),
        )?;
        let shards = (0..config.n_clients)
            .map(|c| assignment.shard_dataset(&train, c))
            .collect::<Result<Vec<_>>>()?;

        let mut pools = vec![Vec::new(); config.n_pools];
        for client in 0..config.n_clients {
            pools[client % config.n_pools].push(client);
        }

        let arch = config.model.arch_for(train.feature_dim(), train.num_classes());
        let global = init_model(arch, derive_seed(master, &[STREAM_INIT, 0]))?;

        let backdoor_test = match (&config.attack.kind, &config.attack.pattern) {
            (AttackKind::Backdoor, Some(pattern)) => {
                pattern.validate_for(test.feature_dim(), test.num_classes())?;
                Some(build_backdoor_test(&test, pattern)?)
            }
            _ => None,
        };

        let miners = pools
            .iter()
            .enumerate()
            .map(|(p, clients)| MinerState {
                miner_id: p,
                stake: config.stakes.as_ref().map_or(1.0, |s| s[p]),
                clients: clients.clone(),
            })
            .collect();

        let ledger = config.architecture.uses_ledger().then(Ledger::new);

        let sim = Self {
            config,
            arch,
            pools,
            shards,
            validation,
            test,
            backdoor_test,
            miners,
            global,
            ledger,
            round: 0,
        };
        sim.check_aggregation_feasibility()?;
        Ok(sim)
    }

    /// Participant counts are a pure function of the rosters, so robust
    /// aggregation arity can be checked up front.
    fn check_aggregation_feasibility(&self) -> Result<()> {
        let cfg = &self.config;
        let counts: Vec<usize> = self
            .pools
            .iter()
            .map(|roster| cfg.clients_per_round.count_for(roster.len()))
            .collect();
        if counts.contains(&0) {
            return Err(Error::Config("a pool has no participants".into()));
        }
        let needed = cfg.krum_f + 3;
        match cfg.architecture {
            Architecture::Kfc => {
                if counts.iter().any(|&c| c < needed) {
                    return Err(Error::Config(format!(
                        "krum with f={} needs at least {needed} participants per pool",
                        cfg.krum_f
                    )));
                }
            }
            Architecture::KrumCs => {
                let total: usize = counts.iter().sum();
                if total < needed {
                    return Err(Error::Config(format!(
                        "krum with f={} needs at least {needed} participants per round",
                        cfg.krum_f
                    )));
                }
            }
            Architecture::TrimmedMeanCs => {
                let total: usize = counts.iter().sum();
                let dropped = 2 * (total as f64 * cfg.trim_fraction).floor() as usize;
                if dropped >= total {
                    return Err(Error::Config(
                        "trim fraction leaves no participants".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn ledger(&self) -> Option<&Ledger> {
        self.ledger.as_ref()
    }

    pub fn global(&self) -> &Model {
        &self.global
    }

    /// Train one group of participants, attackers included. Training runs in
    /// parallel; the output is ordered like `members`.
    fn train_group(
        &self,
        members: &[usize],
        attackers: &[usize],
        round_seed: u64,
        attempt: u64,
    ) -> Result<Vec<ParamVector>> {
        members
            .par_iter()
            .map(|&client| {
                let spec = TrainSpec {
                    seed: derive_seed(round_seed, &[STREAM_TRAIN, client as u64, attempt]),
                    ..self.config.train_spec
                };
                if attackers.binary_search(&client).is_ok() {
                    attacker_local_train(
                        &self.config.attack,
                        &self.shards[client],
                        &self.global,
                        &spec,
                    )
                } else {
                    Ok(sgd_train(&self.global, &self.shards[client], &spec)?.into_params())
                }
            })
            .collect()
    }

    /// Replace each attacker's update with its replacement-boosted version.
    /// `n` and the attacker count are those of this aggregation group.
    fn boost_group(
        &self,
        members: &[usize],
        mut locals: Vec<ParamVector>,
        attackers: &[usize],
    ) -> Result<Vec<ParamVector>> {
        if !self.config.attack.boost {
            return Ok(locals);
        }
        let in_group: Vec<usize> = members
            .iter()
            .enumerate()
            .filter(|(_, c)| attackers.binary_search(c).is_ok())
            .map(|(i, _)| i)
            .collect();
        if in_group.is_empty() {
            return Ok(locals);
        }
        let n = members.len();
        for i in in_group.iter().copied() {
            locals[i] = boost_update(
                &locals[i],
                self.global.params(),
                n,
                self.config.eta,
                in_group.len(),
            )?;
        }
        Ok(locals)
    }

    fn aggregate_pool(&self, locals: Vec<ParamVector>) -> Result<ParamVector> {
        match self.config.architecture {
            Architecture::Pofl => Ok(fedavg(&UpdateSet::new(
                self.global.params().clone(),
                locals,
                self.config.eta,
            )?)),
            Architecture::Kfc => Ok(krum_select(&locals, self.config.krum_f)?.1),
            _ => unreachable!("pool aggregation only runs for pooled architectures"),
        }
    }

    /// One pool's candidate model for the round, retraining up to the retry
    /// budget when an accuracy goal is configured.
    fn pool_candidate(
        &self,
        members: &[usize],
        attackers: &[usize],
        round_seed: u64,
    ) -> Result<ParamVector> {
        let retries = if self.config.accuracy_goal.is_some() {
            self.config.goal_max_retries
        } else {
            0
        };
        let mut best: Option<(f64, ParamVector)> = None;
        for attempt in 0..=u64::from(retries) {
            let locals = self.train_group(members, attackers, round_seed, attempt)?;
            let locals = self.boost_group(members, locals, attackers)?;
            let candidate = self.aggregate_pool(locals)?;
            let accuracy = evaluate_accuracy(
                &Model::new(self.arch, candidate.clone())?,
                &self.validation,
            )?;
            let improved = best.as_ref().is_none_or(|(a, _)| accuracy > *a);
            if improved {
                best = Some((accuracy, candidate));
            }
            if self.config.accuracy_goal.is_none_or(|goal| accuracy >= goal) {
                break;
            }
        }
        Ok(best.expect("at least one attempt ran").1)
    }

    fn task_metrics(&self, params: &ParamVector) -> Result<TaskMetrics> {
        let model = Model::new(self.arch, params.clone())?;
        let backdoor = match &self.backdoor_test {
            Some(ds) => Some(evaluate_accuracy(&model, ds)?),
            None => None,
        };
        Ok(TaskMetrics {
            original: evaluate_accuracy(&model, &self.test)?,
            backdoor,
            validation: evaluate_accuracy(&model, &self.validation)?,
        })
    }

    /// Execute one learning round and advance the state.
    pub fn step(&mut self) -> Result<RoundMetrics> {
        let cfg = &self.config;
        let t = self.round;
        let round_seed = derive_seed(cfg.master_seed, &[t as u64]);

        // Participants per pool: a seeded sample of each roster.
        let participants: Vec<Vec<usize>> = self
            .pools
            .iter()
            .enumerate()
            .map(|(p, roster)| {
                sample_participants(
                    roster,
                    cfg.clients_per_round,
                    derive_seed(round_seed, &[STREAM_SAMPLE, p as u64]),
                )
            })
            .collect();

        let attackers = if cfg.attack.kind == AttackKind::None {
            Vec::new()
        } else {
            assign_attackers(
                cfg.scenario,
                &participants,
                derive_seed(round_seed, &[STREAM_ATTACKERS]),
            )?
        };

        let (new_params, winner, candidates) = if cfg.architecture.is_pooled() {
            let mut pool_models = Vec::with_capacity(participants.len());
            for members in &participants {
                pool_models.push(self.pool_candidate(members, &attackers, round_seed)?);
            }
            let (winner, _accuracies) = pofl_select(&pool_models, &self.validation, self.arch)?;
            (pool_models[winner].clone(), Some(winner), pool_models)
        } else {
            let flat: Vec<usize> = participants.iter().flatten().copied().collect();
            let locals = self.train_group(&flat, &attackers, round_seed, 0)?;
            let locals = self.boost_group(&flat, locals, &attackers)?;
            let aggregated = match cfg.architecture {
                Architecture::ClientServer | Architecture::Pow | Architecture::Pos => {
                    fedavg(&UpdateSet::new(
                        self.global.params().clone(),
                        locals,
                        cfg.eta,
                    )?)
                }
                Architecture::KrumCs => krum_select(&locals, cfg.krum_f)?.1,
                Architecture::TrimmedMeanCs => trimmed_mean(&locals, cfg.trim_fraction)?,
                _ => unreachable!(),
            };
            let winner = match cfg.architecture {
                Architecture::Pow => Some(pow_select(
                    &self.miners,
                    cfg.pow_difficulty_bits,
                    derive_seed(round_seed, &[STREAM_POW]),
                )?),
                Architecture::Pos => Some(pos_select(&self.miners, t as u64)?),
                _ => None,
            };
            (aggregated.clone(), winner, vec![aggregated])
        };

        if let Some(ledger) = &mut self.ledger {
            let claimed_accuracy = evaluate_accuracy(
                &Model::new(self.arch, new_params.clone())?,
                &self.validation,
            )?;
            if !verify_claim(&new_params, claimed_accuracy, &self.validation, self.arch, 1e-9)? {
                return Err(Error::InvalidArgument(
                    "winning model failed claim verification".into(),
                ));
            }
            ledger.append_block(
                BlockPayload {
                    round: (t + 1) as u64,
                    winner_miner_id: winner.unwrap_or(0) as u64,
                    model_digest: model_digest(&new_params),
                    claimed_accuracy,
                },
                &new_params,
            )?;
        }

        let per_miner = candidates
            .iter()
            .map(|m| self.task_metrics(m))
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0usize;
        for (i, m) in per_miner.iter().enumerate().skip(1) {
            if m.validation > per_miner[best].validation {
                best = i;
            }
        }
        let reported = per_miner[best];

        self.global = Model::new(self.arch, new_params)?;
        self.round += 1;
        Ok(RoundMetrics {
            round: t + 1,
            winner_miner: winner,
            per_miner,
            reported,
        })
    }

    /// Run the configured number of rounds.
    pub fn run(&mut self) -> Result<MetricsSeries> {
        let mut series = MetricsSeries::default();
        for _ in 0..self.config.rounds {
            series.rounds.push(self.step()?);
        }
        Ok(series)
    }
}

fn sample_participants(roster: &[usize], rule: Participation, seed: u64) -> Vec<usize> {
    use rand::SeedableRng;
    let count = rule.count_for(roster.len());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, roster.len(), count)
        .into_iter()
        .map(|i| roster[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Build and run a simulation in one call.
pub fn run_simulation(config: &SimConfig) -> Result<MetricsSeries> {
    Simulation::new(config.clone())?.run()
}
