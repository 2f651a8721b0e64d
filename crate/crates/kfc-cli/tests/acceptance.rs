//! Acceptance suite: one test per exit criterion, each printing a PASS line
//! (run with `-- --nocapture` to see them).
//!
//! The desk-scale reference workload is pinned here: 10-class Gaussian blobs
//! on a 6x6 feature grid (spread 0.12, 120 train / 30 test per class), 30
//! clients in 3 pools with 4 participants per pool per round, 30 rounds of
//! 5-epoch local SGD (lr 0.3, batch 10), server learning rate 1, krum f = 1.
//! Trend criteria are evaluated on the last-ten-round mean accuracy over
//! master seeds {1, 2, 3}.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kfc_core::aggregate::{fedavg, krum_select, UpdateSet};
use kfc_core::attack::{attacker_local_train, boost_update, AttackSpec};
use kfc_core::chain::{hash_block, model_digest, Block, BlockPayload, Ledger};
use kfc_core::data::{generate_synthetic, partition_iid, LabeledExample, PatternKey};
use kfc_core::mlcore::{
    init_model, loss_and_grad, sgd_train, Arch, Model, ParamVector, TrainSpec,
};
use kfc_core::sim::{
    run_simulation, Architecture, DataSpec, MetricsSeries, ModelKind, Participation, Scenario,
    SimConfig,
};

// ---------------------------------------------------------------------------
// Desk-scale reference setup
// ---------------------------------------------------------------------------

const SEEDS: [u64; 3] = [1, 2, 3];

fn desk_config(architecture: Architecture, scenario: Scenario, attack: AttackSpec) -> SimConfig {
    SimConfig {
        architecture,
        n_clients: 30,
        n_pools: 3,
        clients_per_round: Participation::Count(4),
        scenario,
        attack,
        rounds: 30,
        train_spec: TrainSpec::new(5, 0.3, 10, 0).unwrap(),
        model: ModelKind::SoftmaxLinear,
        data: DataSpec::Synthetic {
            classes: 10,
            features: 36,
            train_per_class: 120,
            test_per_class: 30,
            spread: 0.12,
        },
        krum_f: 1,
        trim_fraction: 0.1,
        eta: 1.0,
        validation_fraction: 0.2,
        pow_difficulty_bits: 8,
        stakes: None,
        accuracy_goal: None,
        goal_max_retries: 3,
        master_seed: 1,
    }
}

fn desk_pattern() -> PatternKey {
    PatternKey::cross(6, 2, 2, 0.0, 2).unwrap()
}

fn backdoor_attack() -> AttackSpec {
    AttackSpec::backdoor(desk_pattern())
}

fn byzantine_attack() -> AttackSpec {
    AttackSpec {
        boost: true,
        ..AttackSpec::byzantine_flip(1.0)
    }
}

fn run(architecture: Architecture, scenario: Scenario, attack: AttackSpec, seed: u64) -> MetricsSeries {
    let mut config = desk_config(architecture, scenario, attack);
    config.master_seed = seed;
    run_simulation(&config).unwrap()
}

fn acc10(series: &MetricsSeries) -> f64 {
    series.accuracy_10().unwrap()
}

fn backdoor10(series: &MetricsSeries) -> f64 {
    series.backdoor_accuracy_10().unwrap()
}

// ---------------------------------------------------------------------------
// 1. Krum oracle equivalence
// ---------------------------------------------------------------------------

/// Brute-force reference: full pairwise distances, fully sorted neighbor
/// lists, linear scan for the minimum score.
fn krum_oracle_index(vectors: &[Vec<f64>], f: usize) -> usize {
    let n = vectors.len();
    let m = n - f - 2;
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let mut ds: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dist(&vectors[i], &vectors[j]), j))
                .collect();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ds[..m].iter().map(|(d, _)| d).sum()
        })
        .collect();
    let mut best = 0;
    for i in 1..n {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    best
}

#[test]
fn criterion_01_krum_matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..1000 {
        let n = rng.gen_range(4..=8);
        let d = rng.gen_range(1..=10);
        let raw: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let vectors: Vec<ParamVector> = raw
            .iter()
            .map(|v| ParamVector::new(v.clone()).unwrap())
            .collect();
        let (index, value) = krum_select(&vectors, 1).unwrap();
        let expected = krum_oracle_index(&raw, 1);
        assert_eq!(index, expected, "trial {trial}");
        assert_eq!(value.values(), raw[expected].as_slice(), "trial {trial}");
    }
    println!("criterion 1 (krum oracle equivalence, 1000 instances): PASS");
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness
// ---------------------------------------------------------------------------

fn numeric_grad(model: &Model, batch: &[LabeledExample], eps: f64) -> Vec<f64> {
    let base = model.params().values().to_vec();
    (0..base.len())
        .map(|j| {
            let mut plus = base.clone();
            plus[j] += eps;
            let mut minus = base.clone();
            minus[j] -= eps;
            let lp = loss_and_grad(
                &Model::new(model.arch(), ParamVector::new(plus).unwrap()).unwrap(),
                batch,
            )
            .unwrap()
            .0;
            let lm = loss_and_grad(
                &Model::new(model.arch(), ParamVector::new(minus).unwrap()).unwrap(),
                batch,
            )
            .unwrap()
            .0;
            (lp - lm) / (2.0 * eps)
        })
        .collect()
}

#[test]
fn criterion_02_analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let arch = if trial % 2 == 0 {
            Arch::SoftmaxLinear {
                features: rng.gen_range(2..=10),
                classes: rng.gen_range(2..=6),
            }
        } else {
            Arch::Mlp1 {
                features: rng.gen_range(2..=6),
                hidden: rng.gen_range(2..=8),
                classes: rng.gen_range(2..=4),
            }
        };
        assert!(arch.param_dim() <= 200);
        let model = init_model(arch, rng.gen()).unwrap();
        let batch: Vec<LabeledExample> = (0..rng.gen_range(2..=6))
            .map(|_| LabeledExample {
                features: (0..arch.features()).map(|_| rng.gen_range(0.0..=1.0)).collect(),
                label: rng.gen_range(0..arch.classes()),
            })
            .collect();
        let (_, analytic) = loss_and_grad(&model, &batch).unwrap();
        let numeric = numeric_grad(&model, &batch, 1e-5);
        for (a, n) in analytic.values().iter().zip(&numeric) {
            let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            worst = worst.max(err);
            assert!(err < 1e-4, "trial {trial}: relative error {err}");
        }
    }
    println!("criterion 2 (gradient vs central differences, 50 models, worst {worst:.2e}): PASS");
}

// ---------------------------------------------------------------------------
// 3. Replacement identity
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_replacement_identity_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for trial in 0..100 {
        let n = rng.gen_range(2..=32);
        let d = rng.gen_range(1..=64);
        let attackers = rng.gen_range(1..=3.min(n - 1));
        let v_global =
            ParamVector::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let v_adv =
            ParamVector::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let boosted = boost_update(&v_adv, &v_global, n, 1.0, attackers).unwrap();
        let mut locals = vec![boosted; attackers];
        locals.extend(vec![v_global.clone(); n - attackers]);
        let out = fedavg(&UpdateSet::new(v_global, locals, 1.0).unwrap());
        for (got, want) in out.values().iter().zip(v_adv.values()) {
            assert!(
                (got - want).abs() <= 1e-12,
                "trial {trial}: |{got} - {want}| > 1e-12"
            );
        }
    }
    println!("criterion 3 (replacement identity, 100 instances incl. multi-attacker): PASS");
}

// ---------------------------------------------------------------------------
// 4. Ledger integrity
// ---------------------------------------------------------------------------

fn fresh_ledger(blocks: usize, rng: &mut ChaCha8Rng) -> Ledger {
    let mut ledger = Ledger::new();
    for r in 0..blocks {
        let model =
            ParamVector::new((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        ledger
            .append_block(
                BlockPayload {
                    round: r as u64 + 1,
                    winner_miner_id: rng.gen_range(0..3),
                    model_digest: model_digest(&model),
                    claimed_accuracy: rng.gen_range(0.0..1.0),
                },
                &model,
            )
            .unwrap();
    }
    ledger
}

#[test]
fn criterion_04_tampering_is_detected_at_the_right_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for trial in 0..100 {
        let mut ledger = fresh_ledger(12, &mut rng);
        assert_eq!(ledger.first_invalid_index(), None, "untampered must pass");
        let len = ledger.blocks.len();
        let target = rng.gen_range(0..len);
        let expected = match trial % 5 {
            0 => {
                // Payload bit flip in the claimed accuracy.
                let bits = ledger.blocks[target].payload.claimed_accuracy.to_bits();
                ledger.blocks[target].payload.claimed_accuracy =
                    f64::from_bits(bits ^ (1 << rng.gen_range(0..52)));
                target
            }
            1 => {
                // Payload byte flip in the model digest.
                ledger.blocks[target].payload.model_digest[rng.gen_range(0..32)] ^= 0x5A;
                target
            }
            2 => {
                // Rewritten prev link.
                ledger.blocks[target].prev[rng.gen_range(0..32)] ^= 0x01;
                target
            }
            3 => {
                // Stored digest corruption.
                ledger.blocks[target].digest[rng.gen_range(0..32)] ^= 0x80;
                target
            }
            _ => {
                // Foreign block spliced in with a stale prev link.
                let position = rng.gen_range(1..len);
                let model = ParamVector::new(vec![42.0]).unwrap();
                let payload = BlockPayload {
                    round: 999,
                    winner_miner_id: 9,
                    model_digest: model_digest(&model),
                    claimed_accuracy: 0.99,
                };
                let stale_prev = ledger.blocks[position - 1].prev;
                let block = Block {
                    index: position as u64,
                    prev: stale_prev,
                    payload: payload.clone(),
                    digest: hash_block(position as u64, &stale_prev, &payload),
                };
                ledger.blocks.insert(position, block);
                position
            }
        };
        assert_eq!(
            ledger.first_invalid_index(),
            Some(expected as u64),
            "trial {trial}"
        );
    }
    println!("criterion 4 (ledger tamper detection, 100 trials): PASS");
}

// ---------------------------------------------------------------------------
// 5. Scenario A backdoor trend
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_scenario_a_backdoor_trend() {
    for &seed in &SEEDS {
        let no_attack_pofl = run(Architecture::Pofl, Scenario::None, AttackSpec::none(), seed);
        for arch in [Architecture::Pofl, Architecture::Kfc] {
            let series = run(arch, Scenario::A, backdoor_attack(), seed);
            let backdoor = backdoor10(&series);
            assert!(
                backdoor <= 0.2,
                "seed {seed}: {arch} backdoor accuracy {backdoor} > 0.2"
            );
            if arch == Architecture::Pofl {
                let gap = (acc10(&series) - acc10(&no_attack_pofl)).abs();
                assert!(
                    gap <= 0.05,
                    "seed {seed}: pofl drifted {gap} from its no-attack run"
                );
            }
        }
        for arch in [Architecture::ClientServer, Architecture::Pow, Architecture::Pos] {
            let series = run(arch, Scenario::A, backdoor_attack(), seed);
            let backdoor = backdoor10(&series);
            assert!(
                backdoor >= 0.8,
                "seed {seed}: {arch} backdoor accuracy {backdoor} < 0.8"
            );
        }
    }
    println!("criterion 5 (scenario A backdoor trend over seeds {SEEDS:?}): PASS");
}

// ---------------------------------------------------------------------------
// 6. Scenario B backdoor trend
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_scenario_b_backdoor_trend() {
    for &seed in &SEEDS {
        let pofl = run(Architecture::Pofl, Scenario::B, backdoor_attack(), seed);
        let kfc = run(Architecture::Kfc, Scenario::B, backdoor_attack(), seed);
        let pofl_backdoor = backdoor10(&pofl);
        let kfc_backdoor = backdoor10(&kfc);
        assert!(
            pofl_backdoor >= 0.6,
            "seed {seed}: pofl backdoor accuracy {pofl_backdoor} < 0.6"
        );
        assert!(
            kfc_backdoor <= 0.2,
            "seed {seed}: kfc backdoor accuracy {kfc_backdoor} > 0.2"
        );
        assert!(
            acc10(&kfc) >= acc10(&pofl),
            "seed {seed}: kfc original accuracy below pofl's"
        );
    }
    println!("criterion 6 (scenario B backdoor trend over seeds {SEEDS:?}): PASS");
}

// ---------------------------------------------------------------------------
// 7. Scenario B Byzantine trend
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_scenario_b_byzantine_trend() {
    for &seed in &SEEDS {
        let kfc_clean = run(Architecture::Kfc, Scenario::None, AttackSpec::none(), seed);
        let kfc = run(Architecture::Kfc, Scenario::B, byzantine_attack(), seed);
        let pofl = run(Architecture::Pofl, Scenario::B, byzantine_attack(), seed);
        let gap = (acc10(&kfc) - acc10(&kfc_clean)).abs();
        assert!(
            gap <= 0.05,
            "seed {seed}: kfc drifted {gap} from its no-attack baseline"
        );
        assert!(
            acc10(&kfc) > acc10(&pofl),
            "seed {seed}: kfc {} not strictly above pofl {}",
            acc10(&kfc),
            acc10(&pofl)
        );
    }
    println!("criterion 7 (scenario B byzantine trend over seeds {SEEDS:?}): PASS");
}

// ---------------------------------------------------------------------------
// 8. Krum-in-pool filtering
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_krum_filters_boosted_attackers_in_pools() {
    for pool_size in [4usize, 5] {
        let mut benign_selected = 0;
        for seed in 0..100u64 {
            let data = generate_synthetic(10, 36, 48, 0.12, seed).unwrap();
            let shards = partition_iid(&data, pool_size, seed ^ 0xA5A5).unwrap();
            let arch = Arch::SoftmaxLinear {
                features: 36,
                classes: 10,
            };
            let global = init_model(arch, seed).unwrap();
            let attacker = (seed % pool_size as u64) as usize;
            let spec = |client: u64| TrainSpec::new(5, 0.3, 10, seed * 31 + client).unwrap();
            let locals: Vec<ParamVector> = (0..pool_size)
                .map(|client| {
                    let shard = shards.shard_dataset(&data, client).unwrap();
                    if client == attacker {
                        let adv = attacker_local_train(
                            &backdoor_attack(),
                            &shard,
                            &global,
                            &spec(client as u64),
                        )
                        .unwrap();
                        boost_update(&adv, global.params(), pool_size, 1.0, 1).unwrap()
                    } else {
                        sgd_train(&global, &shard, &spec(client as u64))
                            .unwrap()
                            .into_params()
                    }
                })
                .collect();
            let (selected, _) = krum_select(&locals, 1).unwrap();
            if selected != attacker {
                benign_selected += 1;
            }
        }
        assert!(
            benign_selected >= 95,
            "pool of {pool_size}: krum picked a benign update only {benign_selected}/100 times"
        );
        println!(
            "criterion 8 (krum-in-pool filtering, pool of {pool_size}, {benign_selected}/100 benign): PASS"
        );
    }
}

// ---------------------------------------------------------------------------
// 9. Determinism of the full grid
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_grid_outputs_are_byte_identical() {
    let config = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/desk_grid.toml");
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    for out in [&out_a, &out_b] {
        let code = kfc_cli::run_cli([
            "kfc-sim".to_string(),
            "--config".into(),
            config.display().to_string(),
            "--out".into(),
            out.path().display().to_string(),
            "--seed".into(),
            "1".into(),
        ]);
        assert_eq!(code, 0);
    }
    let mut names: Vec<String> = std::fs::read_dir(out_a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    assert!(names.iter().any(|n| n.ends_with(".csv")));
    for name in &names {
        let a = std::fs::read(out_a.path().join(name)).unwrap();
        let b = std::fs::read(out_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    println!(
        "criterion 9 (grid determinism, {} files byte-identical): PASS",
        names.len()
    );
}

// ---------------------------------------------------------------------------
// 10. Degenerate equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_single_pool_pofl_equals_client_server() {
    let make = |architecture| {
        let mut config = desk_config(architecture, Scenario::None, AttackSpec::none());
        config.n_pools = 1;
        config.n_clients = 10;
        config
    };
    let pofl = run_simulation(&make(Architecture::Pofl)).unwrap();
    let cs = run_simulation(&make(Architecture::ClientServer)).unwrap();
    assert_eq!(pofl.rounds.len(), cs.rounds.len());
    for (a, b) in pofl.rounds.iter().zip(&cs.rounds) {
        // winner_miner is only defined for ledger architectures, so the
        // comparison covers every metric field instead.
        assert_eq!(a.round, b.round);
        assert_eq!(a.per_miner, b.per_miner);
        assert_eq!(a.reported, b.reported);
    }
    println!("criterion 10 (single-pool pofl == client-server): PASS");
}
