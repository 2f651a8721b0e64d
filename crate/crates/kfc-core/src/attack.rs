//! Adversarial client behaviors: label-flipping and pattern-key backdoors,
//! plus the model-replacement boost.
//!
//! An attacker trains on a poisoned copy of its shard and may scale the
//! resulting update so that averaging with stationary benign clients yields
//! the adversarial model exactly. When several attackers share one
//! aggregation, the boost factor is split evenly among them.

use crate::data::{flip_labels, poison_backdoor, Dataset, PatternKey};
use crate::error::{Error, Result};
use crate::mlcore::{sgd_train, Model, ParamVector, TrainSpec};
use crate::seed::derive_seed;

const STREAM_FLIP: u64 = 0x41;
const STREAM_POISON: u64 = 0x42;

/// What kind of adversary a client is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    None,
    ByzantineFlip,
    Backdoor,
}

/// Full description of the adversarial behavior for a run.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub pattern: Option<PatternKey>,
    /// Fraction of the attacker's shard whose labels are flipped.
    pub flip_fraction: f64,
    /// Whether attackers submit the replacement-boosted vector.
    pub boost: bool,
    /// Declared attacker count per round; the simulator derives the actual
    /// count per aggregation group from the scenario.
    pub n_attackers_in_round: usize,
}

impl AttackSpec {
    pub fn none() -> Self {
        Self {
            kind: AttackKind::None,
            pattern: None,
            flip_fraction: 1.0,
            boost: false,
            n_attackers_in_round: 1,
        }
    }

    pub fn byzantine_flip(flip_fraction: f64) -> Self {
        Self {
            kind: AttackKind::ByzantineFlip,
            pattern: None,
            flip_fraction,
            boost: false,
            n_attackers_in_round: 1,
        }
    }

    pub fn backdoor(pattern: PatternKey) -> Self {
        Self {
            kind: AttackKind::Backdoor,
            pattern: Some(pattern),
            flip_fraction: 1.0,
            boost: true,
            n_attackers_in_round: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == AttackKind::Backdoor && self.pattern.is_none() {
            return Err(Error::Config("backdoor attack needs a pattern key".into()));
        }
        if self.kind == AttackKind::ByzantineFlip
            && !(self.flip_fraction > 0.0 && self.flip_fraction <= 1.0)
        {
            return Err(Error::Config(format!(
                "flip fraction must be in (0, 1], got {}",
                self.flip_fraction
            )));
        }
        if self.n_attackers_in_round == 0 {
            return Err(Error::Config("attacker count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Train an adversarial client's local model on its (poisoned) shard and
/// return the resulting parameter vector. `kind = None` degenerates to
/// honest training.
pub fn attacker_local_train(
    behavior: &AttackSpec,
    shard: &Dataset,
    global: &Model,
    spec: &TrainSpec,
) -> Result<ParamVector> {
    behavior.validate()?;
    if shard.is_empty() {
        return Err(Error::InvalidArgument("empty shard".into()));
    }
    let training_data = match behavior.kind {
        AttackKind::None => shard.clone(),
        AttackKind::ByzantineFlip => flip_labels(
            shard,
            behavior.flip_fraction,
            derive_seed(spec.seed, &[STREAM_FLIP]),
        )?,
        AttackKind::Backdoor => {
            let pattern = behavior
                .pattern
                .as_ref()
                .ok_or_else(|| Error::Config("backdoor attack needs a pattern key".into()))?;
            poison_backdoor(shard, pattern, 1.0, derive_seed(spec.seed, &[STREAM_POISON]))?
        }
    };
    Ok(sgd_train(global, &training_data, spec)?.into_params())
}

/// Scale an adversarial update for model replacement.
///
/// Returns `v_global + (beta / n_attackers) * (v_adv - v_global)` with
/// `beta = n / eta`: the vector the attacker submits in place of its local
/// model so that averaging with `n - n_attackers` stationary benign clients
/// reproduces `v_adv`.
pub fn boost_update(
    v_adv: &ParamVector,
    v_global: &ParamVector,
    n: usize,
    eta: f64,
    n_attackers: usize,
) -> Result<ParamVector> {
    if v_adv.dim() != v_global.dim() {
        return Err(Error::Shape {
            expected: v_global.dim(),
            actual: v_adv.dim(),
        });
    }
    if n == 0 || n_attackers == 0 {
        return Err(Error::InvalidArgument(
            "round size and attacker count must be >= 1".into(),
        ));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "server learning rate must be positive, got {eta}"
        )));
    }
    let scale = n as f64 / (eta * n_attackers as f64);
    let values = v_global
        .values()
        .iter()
        .zip(v_adv.values())
        .map(|(g, a)| g + scale * (a - g))
        .collect();
    ParamVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{fedavg, UpdateSet};
    use crate::data::{build_backdoor_test, generate_synthetic};
    use crate::mlcore::{evaluate_accuracy, init_model, Arch};
    use proptest::prelude::*;

    fn pv(values: &[f64]) -> ParamVector {
        ParamVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn honest_kind_is_a_passthrough() {
        let shard = generate_synthetic(2, 4, 20, 0.05, 3).unwrap();
        let global = init_model(
            Arch::SoftmaxLinear {
                features: 4,
                classes: 2,
            },
            1,
        )
        .unwrap();
        let spec = TrainSpec::new(3, 0.2, 8, 9).unwrap();
        let honest = sgd_train(&global, &shard, &spec).unwrap();
        let via_attack = attacker_local_train(&AttackSpec::none(), &shard, &global, &spec).unwrap();
        assert_eq!(via_attack.values(), honest.params().values());
    }

    #[test]
    fn flipped_training_breaks_clean_accuracy() {
        let shard = generate_synthetic(2, 2, 40, 0.02, 14).unwrap();
        let arch = Arch::SoftmaxLinear {
            features: 2,
            classes: 2,
        };
        let global = init_model(arch, 1).unwrap();
        let spec = TrainSpec::new(20, 0.5, 8, 5).unwrap();
        let adv = attacker_local_train(&AttackSpec::byzantine_flip(1.0), &shard, &global, &spec)
            .unwrap();
        let adv_model = Model::new(arch, adv).unwrap();
        let acc = evaluate_accuracy(&adv_model, &shard).unwrap();
        assert!(acc < 0.5, "flipped model scored {acc} on the clean shard");
    }

    #[test]
    fn backdoored_model_learns_the_patterned_task() {
        let shard = generate_synthetic(3, 16, 40, 0.05, 8).unwrap();
        let arch = Arch::SoftmaxLinear {
            features: 16,
            classes: 3,
        };
        let pattern = PatternKey::cross(4, 1, 1, 0.0, 2).unwrap();
        let global = init_model(arch, 4).unwrap();
        let spec = TrainSpec::new(10, 0.5, 10, 6).unwrap();
        let adv =
            attacker_local_train(&AttackSpec::backdoor(pattern.clone()), &shard, &global, &spec)
                .unwrap();
        let adv_model = Model::new(arch, adv).unwrap();
        let patterned = build_backdoor_test(&shard, &pattern).unwrap();
        let acc = evaluate_accuracy(&adv_model, &patterned).unwrap();
        assert!(acc >= 0.9, "backdoor accuracy on patterned shard: {acc}");
    }

    #[test]
    fn backdoor_without_pattern_is_rejected() {
        let mut spec = AttackSpec::backdoor(PatternKey::new(vec![(0, 0.0)], 1).unwrap());
        spec.pattern = None;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn boost_matches_the_replacement_arithmetic() {
        let boosted = boost_update(&pv(&[1.0]), &pv(&[0.0]), 10, 1.0, 1).unwrap();
        assert_eq!(boosted.values(), &[10.0]);
    }

    #[test]
    fn one_boosted_attacker_replaces_the_global_model() {
        let v_global = pv(&[0.5, -1.0, 2.0]);
        let v_adv = pv(&[-3.0, 4.0, 0.25]);
        let boosted = boost_update(&v_adv, &v_global, 10, 1.0, 1).unwrap();
        let mut locals = vec![v_global.clone(); 9];
        locals.insert(0, boosted);
        let out = fedavg(&UpdateSet::new(v_global, locals, 1.0).unwrap());
        for (got, want) in out.values().iter().zip(v_adv.values()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn two_attackers_split_the_boost_factor() {
        let v_global = pv(&[0.0, 1.0]);
        let v_adv = pv(&[2.0, -1.0]);
        let boosted = boost_update(&v_adv, &v_global, 10, 1.0, 2).unwrap();
        // beta / 2 = 5, so each submits global + 5 * delta.
        assert_eq!(boosted.values(), &[10.0, -9.0]);
        let mut locals = vec![boosted.clone(), boosted];
        locals.extend(vec![v_global.clone(); 8]);
        let out = fedavg(&UpdateSet::new(v_global, locals, 1.0).unwrap());
        for (got, want) in out.values().iter().zip(v_adv.values()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_boost_is_the_identity() {
        let v = pv(&[0.1, 0.2, 0.3]);
        let boosted = boost_update(&v, &v, 7, 1.0, 7).unwrap();
        assert_eq!(boosted.values(), v.values());
    }

    #[test]
    fn boosted_update_is_a_norm_outlier_by_exactly_beta() {
        let v_global = pv(&[1.0, 2.0]);
        let v_adv = pv(&[1.5, 1.0]);
        let n = 12;
        let attackers = 3;
        let boosted = boost_update(&v_adv, &v_global, n, 1.0, attackers).unwrap();
        let norm = |a: &ParamVector, b: &ParamVector| -> f64 {
            a.values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let expected = (n as f64 / attackers as f64) * norm(&v_adv, &v_global);
        assert_eq!(norm(&boosted, &v_global), expected);
    }

    #[test]
    fn boost_rejects_bad_arguments() {
        let a = pv(&[1.0]);
        let b = pv(&[1.0, 2.0]);
        assert!(matches!(
            boost_update(&a, &b, 4, 1.0, 1),
            Err(Error::Shape { .. })
        ));
        assert!(boost_update(&a, &a, 0, 1.0, 1).is_err());
        assert!(boost_update(&a, &a, 4, 0.0, 1).is_err());
        assert!(boost_update(&a, &a, 4, 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn replacement_identity_holds_for_random_instances(
            seed in any::<u64>(),
            n in 2usize..24,
            d in 1usize..16,
            attackers in 1usize..4,
        ) {
            use rand::{Rng, SeedableRng};
            prop_assume!(attackers < n);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v_global = pv(&(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let v_adv = pv(&(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let boosted = boost_update(&v_adv, &v_global, n, 1.0, attackers).unwrap();
            let mut locals = vec![boosted; attackers];
            locals.extend(vec![v_global.clone(); n - attackers]);
            let out = fedavg(&UpdateSet::new(v_global, locals, 1.0).unwrap());
            for (got, want) in out.values().iter().zip(v_adv.values()) {
                prop_assert!((got - want).abs() < 1e-12);
            }
        }
    }
}
