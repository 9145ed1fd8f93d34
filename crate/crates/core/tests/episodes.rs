use std::collections::HashSet;

use episodic_al::data::{make_split_plan, Dataset, Oracle, SplitPlan, SyntheticSpec};
use episodic_al::episodic::{
    run_episodes, train_initial, NetworkLearner, Recording, Stage, StrategySpec, SymbolicLearner, TrialSeeds,
};
use episodic_al::network::{Architecture, Provenance, TrainConfig};
use episodic_al::numerics::RngStream;
use episodic_al::uncertainty::{AcquisitionThreshold, McConfig};

fn theta(v: f64) -> AcquisitionThreshold {
    AcquisitionThreshold::new(v).unwrap()
}

/// Expected `N_f` after four episodes with everything acquired, spelled out
/// from each strategy's update and final-training rule.
fn expected_final(id: u8) -> &'static str {
    match id {
        1 => "N0|A1|A2|A3|A4|A1+A2+A3+A4",
        2 => "N0|A1|A1+A2|A1+A2+A3|A1+A2+A3+A4",
        3 => "N0|A1|A2|A3|A4",
        4 => "N0|A1+A2+A3+A4",
        5 => "N0|A1+A2+A3+A4",
        _ => unreachable!(),
    }
}

fn symbolic_plan(episodes: usize, per_episode: usize) -> (SplitPlan, Oracle) {
    let total = (episodes + 1) * per_episode;
    let plan = make_split_plan(total, episodes + 1, 17).unwrap();
    let oracle = Oracle::new((0..total).map(|i| (i % 10) as u8).collect());
    (plan, oracle)
}

#[test]
fn final_network_provenance_follows_the_rules() {
    let (plan, oracle) = symbolic_plan(4, 5);
    for id in 1..=5u8 {
        let rules = StrategySpec::from_id(id).unwrap().active().unwrap();
        let mut learner = SymbolicLearner::acquire_all();
        let n0 = Provenance::root("N0");
        let run = run_episodes(rules, &plan, &oracle, &mut learner, &n0, theta(0.8)).unwrap();
        assert_eq!(run.final_provenance.encode(), expected_final(id), "strategy {id}");
        assert_eq!(run.final_model, run.final_provenance, "strategy {id}");
    }
}

#[test]
fn update_chain_of_each_strategy() {
    let (plan, oracle) = symbolic_plan(3, 4);
    let expected = [
        (1, "N0|A1|A2|A3"),
        (2, "N0|A1|A1+A2|A1+A2+A3"),
        (3, "N0|A1|A2|A3"),
        (4, "N0|A3"),
        (5, "N0|A1+A2+A3"),
    ];
    for (id, chain) in expected {
        let rules = StrategySpec::from_id(id).unwrap().active().unwrap();
        let mut learner = SymbolicLearner::acquire_all();
        let run = run_episodes(rules, &plan, &oracle, &mut learner, &Provenance::root("N0"), theta(0.8)).unwrap();
        assert_eq!(run.last_model.encode(), chain, "strategy {id}");
    }
}

#[test]
fn episodes_without_acquisitions_leave_networks_unchanged() {
    let (plan, oracle) = symbolic_plan(4, 5);
    // only episodes 2 and 4 contain uncertain images
    let entropy = |_: &Provenance, t: u32, ids: &[usize]| vec![if t.is_multiple_of(2) { 2.0 } else { 0.1 }; ids.len()];
    let expected = [
        (1, "N0|A2|A4|A2+A4"),
        (2, "N0|A2|A2+A4"),
        (3, "N0|A2|A4"),
        (4, "N0|A2+A4"),
        (5, "N0|A2+A4"),
    ];
    for (id, fin) in expected {
        let rules = StrategySpec::from_id(id).unwrap().active().unwrap();
        let mut learner = SymbolicLearner::new(entropy);
        let run = run_episodes(rules, &plan, &oracle, &mut learner, &Provenance::root("N0"), theta(0.8)).unwrap();
        assert_eq!(run.final_provenance.encode(), fin, "strategy {id}");
        let acquired: Vec<usize> = run.records.iter().map(|r| r.acquired).collect();
        assert_eq!(acquired, vec![0, 5, 0, 5]);
        let accumulated: Vec<usize> = run.records.iter().map(|r| r.accumulated).collect();
        assert_eq!(accumulated, vec![0, 5, 5, 10]);
    }
}

#[test]
fn nothing_acquired_means_n0_is_final() {
    let (plan, oracle) = symbolic_plan(4, 5);
    for id in 1..=5u8 {
        let rules = StrategySpec::from_id(id).unwrap().active().unwrap();
        let mut learner = Recording::new(SymbolicLearner::new(|_: &Provenance, _, ids: &[usize]| {
            vec![std::f64::consts::LN_10; ids.len()]
        }));
        let run = run_episodes(
            rules,
            &plan,
            &oracle,
            &mut learner,
            &Provenance::root("N0"),
            theta(std::f64::consts::LN_10),
        )
        .unwrap();
        assert_eq!(run.final_provenance.encode(), "N0");
        assert!(learner.trained.is_empty());
        for r in &run.records {
            assert_eq!(r.acquired, 0);
            assert!((r.used_fraction - 0.2).abs() < 1e-12);
        }
    }
}

#[test]
fn stream_discipline_holds_for_random_acquisitions() {
    let (plan, oracle) = symbolic_plan(6, 30);
    for id in 1..=5u8 {
        let rules = StrategySpec::from_id(id).unwrap().active().unwrap();
        let rng = RngStream::new(u64::from(id), 9);
        let entropy = move |_: &Provenance, _: u32, ids: &[usize]| -> Vec<f64> {
            ids.iter().map(|&i| (rng.value_at(i as u64) % 1000) as f64 / 400.0).collect()
        };
        let mut learner = Recording::new(SymbolicLearner::new(entropy));
        let run = run_episodes(rules, &plan, &oracle, &mut learner, &Provenance::root("N0"), theta(0.8)).unwrap();

        let mut seen = HashSet::new();
        for (t, ids) in &learner.scored {
            assert_eq!(ids, &plan.episodes[*t as usize - 1]);
            for i in ids {
                assert!(seen.insert(*i), "strategy {id}: image {i} scored twice");
            }
        }
        assert!(plan.initial.iter().all(|i| !seen.contains(i)));

        for (stage, ids) in &learner.trained {
            let t = match stage {
                Stage::Update(t) | Stage::Final(t) => *t,
            };
            let allowed: HashSet<usize> = run.acquisitions[..t as usize]
                .iter()
                .flat_map(|a| a.items.iter().map(|&(i, _)| i))
                .collect();
            for i in ids {
                assert!(allowed.contains(i), "strategy {id}: unacquired image {i} trained at {stage:?}");
            }
        }
        for a in &run.acquisitions {
            for &(i, label) in &a.items {
                assert_eq!(label, oracle.label(i).unwrap());
            }
        }
    }
}

fn tiny_setup() -> (Dataset, SplitPlan, Architecture, TrainConfig, McConfig) {
    let spec = SyntheticSpec {
        classes: 4,
        image_shape: [3, 8, 8],
        noise: 0.3,
        mixing: 0.3,
        seed: 2,
        ..SyntheticSpec::default()
    };
    let data = spec.dataset(20, 10).unwrap();
    let plan = make_split_plan(data.train.len(), 4, 5).unwrap().with_test_count(data.test.len());
    let arch = Architecture::conv_net([3, 8, 8], [4, 4, 4, 4], 8, 4, 0.25).unwrap();
    let train = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 8,
        max_epochs: 3,
        early_stop_patience: 2,
        ..TrainConfig::default()
    };
    let mc = McConfig {
        passes: 4,
        ..McConfig::default()
    };
    (data, plan, arch, train, mc)
}

#[test]
fn stopping_early_gives_the_same_prefix() {
    let (data, plan, arch, train, mc) = tiny_setup();
    let seeds = TrialSeeds::new(4);
    let n0 = train_initial::<f64>(&data, &plan, &arch, &train, &seeds).unwrap();
    let oracle = Oracle::from_images(&data.train);
    for id in [1u8, 2, 4] {
        let rules = StrategySpec::from_id(id).unwrap().active().unwrap();
        let run = |p: &SplitPlan| {
            let mut learner = NetworkLearner::<f64>::new(&data, train.clone(), mc.clone(), seeds.strategy(id));
            run_episodes(rules, p, &oracle, &mut learner, &n0, theta(0.5)).unwrap()
        };
        let full = run(&plan);
        let short = run(&plan.truncated(2));
        assert_eq!(short.records.len(), 2);
        for (a, b) in short.records.iter().zip(&full.records) {
            assert!(a.same_measurements(b), "strategy {id}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn real_network_acquires_nothing_at_ln10() {
    let (data, plan, arch, train, mc) = tiny_setup();
    let seeds = TrialSeeds::new(1);
    let n0 = train_initial::<f64>(&data, &plan, &arch, &train, &seeds).unwrap();
    let n0_acc = episodic_al::network::evaluate_accuracy(&n0, &data.test_refs()).unwrap();
    let oracle = Oracle::from_images(&data.train);
    // ten classes would be needed to reach ln 10; four classes top out at ln 4
    let rules = StrategySpec::from_id(1).unwrap().active().unwrap();
    let mut learner = NetworkLearner::<f64>::new(&data, train.clone(), mc.clone(), 3);
    let run = run_episodes(rules, &plan, &oracle, &mut learner, &n0, theta(4f64.ln())).unwrap();
    assert!(run.acquisitions.iter().all(|a| a.is_empty()));
    assert_eq!(run.final_model, n0);
    assert!(run.records.iter().all(|r| r.final_accuracy == n0_acc));
}

#[test]
fn oracle_labels_match_the_dataset() {
    let (data, plan, arch, train, mc) = tiny_setup();
    let seeds = TrialSeeds::new(2);
    let n0 = train_initial::<f64>(&data, &plan, &arch, &train, &seeds).unwrap();
    let oracle = Oracle::from_images(&data.train);
    let rules = StrategySpec::from_id(2).unwrap().active().unwrap();
    let mut learner = Recording::new(NetworkLearner::<f64>::new(&data, train.clone(), mc.clone(), 8));
    let run = run_episodes(rules, &plan, &oracle, &mut learner, &n0, theta(0.0)).unwrap();
    // θ = 0 labels every image whose prediction is not certain
    let acquired: usize = run.acquisitions.iter().map(|a| a.len()).sum();
    assert!(acquired > 0);
    for a in &run.acquisitions {
        for &(i, label) in &a.items {
            assert_eq!(label, data.train[i].label);
        }
    }
    assert_eq!(learner.scored.len(), plan.num_episodes());
}
