use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::graph::NetworkGraph;
use crate::model::{train, HybridModelParams, ModelConfig};
use crate::partition::{make_partition, make_splits, SensorPartition, SplitAssignment};
use crate::rng::{seeded, Stream};
use crate::synthetic::{generate_synthetic, SyntheticConfig};
use crate::tensor::Tensor;

fn model_config() -> ModelConfig {
    ModelConfig { hidden_dim: 4, gat_heads: 2, head_hidden: 4, gcn_layers: 1, max_epochs: 20, seed: 1, ..ModelConfig::default() }
}

fn setup(n: usize, seed: u64) -> (NetworkGraph, SensorPartition, SplitAssignment, HybridModelParams) {
    let graph = generate_synthetic(&SyntheticConfig { n_nodes: n, seed, ..SyntheticConfig::default() }).unwrap();
    let partition = make_partition(&graph, 0.2, seed).unwrap();
    let split = make_splits(&partition, 0.2, 0.2, seed).unwrap();
    let config = model_config();
    let mut params = HybridModelParams::init(&config, graph.feature_dim(), graph.edge_dim()).unwrap();
    train(&mut params, &graph, &split, &config).unwrap();
    (graph, partition, split, params)
}

fn env_with(budget: usize, finetune_epochs: usize) -> PlacementEnv {
    let (graph, partition, split, params) = setup(40, 3);
    PlacementEnv::new(&graph, partition, split, params, budget, finetune_epochs, 1e-3).unwrap()
}

fn state(v: &[f64]) -> AgentState {
    AgentState { embedding: v.to_vec(), placements_made: 0 }
}

fn transition(reward: f64, terminal: bool, dim: usize) -> Transition {
    Transition {
        state: vec![0.3; dim],
        action: 0,
        action_embedding: vec![-0.2; dim],
        reward,
        next_state: vec![0.1; dim],
        next_candidates: Arc::new(Tensor::full(2, dim, 0.5)),
        terminal,
    }
}

#[test]
fn reward_is_loss_drop_plus_weighted_bonus() {
    assert!((shaped_reward(2.0, 1.5, 0.1, 1.0) - 0.6).abs() < 1e-15);
    assert_eq!(shaped_reward(2.0, 1.5, 0.0, 7.0), 0.5);
}

#[test]
fn state_of_single_train_node_is_its_embedding() {
    let (graph, _, _, params) = setup(30, 4);
    let partition = SensorPartition::from_existing(30, [5]).unwrap();
    let split = make_splits(&partition, 0.2, 0.2, 4).unwrap();
    let env = PlacementEnv::new(&graph, partition, split, params, 1, 0, 1e-3).unwrap();
    let s = env.observe();
    assert_eq!(s.embedding, env.embeddings().row_slice(5).to_vec());
    assert_eq!(env.observe(), s);
}

#[test]
fn zero_q_network_prefers_lowest_id() {
    let env = env_with(2, 0);
    let q = QNet::new(env.embed_dim(), 8, 1e-3, 25, 0).zeroed();
    let cands = env.candidates();
    let values = q.q_values(&env.observe().embedding, &env.embedding_rows(&cands)).unwrap();
    assert!(values.iter().all(|&v| v == values[0]));
    let policy = ExplorationPolicy::new(ExplorationConfig { epsilon: 0.0, ..ExplorationConfig::default() });
    let idx = policy.choose(&values, &mut seeded(0, Stream::Agent)).unwrap();
    assert_eq!(cands[idx], *cands.iter().min().unwrap());
}

#[test]
fn single_candidate_is_chosen_greedily() {
    let policy = ExplorationPolicy::new(ExplorationConfig::with_kind(ExplorationKind::Standard));
    let mut rng = seeded(1, Stream::Agent);
    for _ in 0..50 {
        assert_eq!(policy.choose(&[-3.0], &mut rng).unwrap(), 0);
    }
    assert_eq!(policy.choose(&[], &mut rng), Err(AgentError::EmptyCandidateSet));
    let q = QNet::new(3, 4, 1e-3, 25, 0);
    assert_eq!(q.q_values(&[0.0; 3], &Tensor::zeros(0, 3)), Err(AgentError::EmptyCandidateSet));
}

#[test]
fn placed_nodes_leave_the_candidate_set() {
    let mut env = env_with(3, 0);
    let first = env.candidates()[4];
    env.step(first).unwrap();
    assert!(!env.candidates().contains(&first));
    assert!(env.partition().new_sensors().contains(&first));
    assert_eq!(env.step(first), Err(AgentError::InvalidAction(first)));
    let held = *env.split().val.iter().next().unwrap();
    assert_eq!(env.step(held), Err(AgentError::InvalidAction(held)));
    let existing = *env.partition().existing().iter().next().unwrap();
    assert_eq!(env.step(existing), Err(AgentError::InvalidAction(existing)));
}

#[test]
fn curiosity_bonus_counts_visits() {
    let mut p = ExplorationPolicy::new(ExplorationConfig::with_kind(ExplorationKind::Curiosity));
    let s = state(&[0.5, -0.05, -2.0]);
    assert_eq!(p.intrinsic_reward(&s).unwrap(), 1.0);
    p.intrinsic_reward(&s).unwrap();
    p.intrinsic_reward(&state(&[0.2, 0.09, -0.3])).unwrap();
    assert_eq!(p.intrinsic_reward(&s).unwrap(), 0.5);
    assert_eq!(p.intrinsic_reward(&state(&[-0.5, 0.0, 0.0])).unwrap(), 1.0);

    let mut standard = ExplorationPolicy::new(ExplorationConfig::with_kind(ExplorationKind::Standard));
    assert_eq!(standard.intrinsic_reward(&s), Err(AgentError::WrongPolicyKind));
    assert_eq!(standard.beta(), 0.0);
}

#[test]
fn zero_finetune_step_has_no_extrinsic_reward() {
    let mut env = env_with(2, 0);
    let before = env.last_val_loss();
    let out = env.step(env.candidates()[0]).unwrap();
    assert_eq!(out.extrinsic, 0.0);
    assert_eq!(out.val_loss, before);
}

#[test]
fn budget_contract() {
    let mut env = env_with(2, 1);
    assert!(!env.step(env.candidates()[0]).unwrap().terminal);
    assert!(env.step(env.candidates()[0]).unwrap().terminal);
    assert_eq!(env.step(env.candidates()[0]), Err(AgentError::BudgetExhausted));
    env.reset().unwrap();
    assert_eq!(env.placements_made(), 0);
    assert!(env.partition().new_sensors().is_empty());

    let (graph, partition, split, params) = setup(40, 3);
    let pool = partition.unlabeled().difference(&split.held_out()).count();
    assert_eq!(
        PlacementEnv::new(&graph, partition, split, params, pool + 1, 0, 1e-3).unwrap_err(),
        AgentError::BudgetTooLarge { budget: pool + 1, available: pool }
    );
}

#[test]
fn td_target_with_zero_gamma_is_reward() {
    let mut q = QNet::new(3, 4, 1e-3, 0, 0).zeroed();
    let mut buffer = ReplayBuffer::new(10);
    buffer.push(transition(1.5, false, 3));
    let loss = q.td_update(&buffer, 32, 0.0, &mut seeded(0, Stream::Replay)).unwrap();
    assert!((loss - 1.5 * 1.5).abs() < 1e-12);
    assert_eq!(q.td_update(&ReplayBuffer::new(4), 32, 0.9, &mut seeded(0, Stream::Replay)), Err(AgentError::EmptyBuffer));
}

#[test]
fn td_loss_vanishes_at_the_target() {
    let q = QNet::new(3, 4, 1e-3, 0, 0).zeroed();
    let inputs = q_inputs_for(&[transition(0.0, true, 3)]);
    let (loss, grads) = q.td_gradients(&inputs, &[0.0]).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
}

fn q_inputs_for(ts: &[Transition]) -> Tensor {
    let mut data = Vec::new();
    for t in ts {
        data.extend_from_slice(&t.state);
        data.extend_from_slice(&t.action_embedding);
    }
    Tensor::matrix(ts.len(), 2 * ts[0].state.len(), data).unwrap()
}

#[test]
fn terminal_transitions_do_not_bootstrap() {
    // Target net outputs 10 everywhere; online outputs 0.
    let mut q = QNet::new(2, 3, 1e-3, 0, 0).zeroed();
    q.params_mut()[3].data_mut()[0] = 10.0;
    q.sync_target();
    q.params_mut()[3].data_mut()[0] = 0.0;
    let mut buffer = ReplayBuffer::new(4);
    buffer.push(transition(2.0, true, 2));
    let loss = q.clone().td_update(&buffer, 1, 0.9, &mut seeded(0, Stream::Replay)).unwrap();
    assert!((loss - 4.0).abs() < 1e-12);
    let mut buffer = ReplayBuffer::new(4);
    buffer.push(transition(2.0, false, 2));
    let loss = q.td_update(&buffer, 1, 0.9, &mut seeded(0, Stream::Replay)).unwrap();
    assert!((loss - 11.0 * 11.0).abs() < 1e-9);
}

#[test]
fn target_network_moves_only_on_sync() {
    let mut q = QNet::new(2, 3, 1e-2, 3, 5);
    let init = q.params().to_vec();
    assert_eq!(q.target_params(), init.as_slice());
    let mut buffer = ReplayBuffer::new(8);
    buffer.push(transition(1.0, false, 2));
    let mut rng = seeded(0, Stream::Replay);
    q.td_update(&buffer, 1, 0.9, &mut rng).unwrap();
    q.td_update(&buffer, 1, 0.9, &mut rng).unwrap();
    assert_ne!(q.params(), init.as_slice());
    assert_eq!(q.target_params(), init.as_slice());
    q.td_update(&buffer, 1, 0.9, &mut rng).unwrap();
    assert_eq!(q.syncs(), 1);
    assert_eq!(q.target_params(), q.params());
    let probe = Tensor::full(3, 2, 0.4);
    assert_eq!(q.q_values(&[0.1, 0.2], &probe).unwrap(), q.target_q_values(&[0.1, 0.2], &probe).unwrap());
}

#[test]
fn q_network_gradient_matches_finite_differences() {
    let q = QNet::new(3, 5, 1e-3, 0, 9);
    let inputs = Tensor::matrix(4, 6, (0..24).map(|i| libm::sin(i as f64 * 0.91)).collect()).unwrap();
    let targets = [0.3, -1.0, 0.8, 0.1];
    let (_, grads) = q.td_gradients(&inputs, &targets).unwrap();
    let h = 1e-4;
    for t in 0..4 {
        for j in 0..q.params()[t].len() {
            let mut plus = q.clone();
            plus.params_mut()[t].data_mut()[j] += h;
            let mut minus = q.clone();
            minus.params_mut()[t].data_mut()[j] -= h;
            let numeric = (plus.td_gradients(&inputs, &targets).unwrap().0 - minus.td_gradients(&inputs, &targets).unwrap().0)
                / (2.0 * h);
            let analytic = grads[t].data()[j];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(err < 1e-4, "tensor {t}[{j}]: {analytic} vs {numeric}");
        }
    }
}

#[test]
fn forced_single_step_trajectory() {
    // 8-node graph: 4 labeled, val/test take 3 of the 4 unlabeled, one left.
    let (graph, _, _, _) = setup(8, 2);
    let partition = SensorPartition::from_existing(8, [0, 1, 2, 3]).unwrap();
    let split = make_splits(&partition, 0.5, 0.25, 2).unwrap();
    let config = model_config();
    let mut params = HybridModelParams::init(&config, graph.feature_dim(), graph.edge_dim()).unwrap();
    train(&mut params, &graph, &split, &config).unwrap();
    let mut env = PlacementEnv::new(&graph, partition, split, params, 1, 2, 1e-3).unwrap();
    let only = env.candidates();
    assert_eq!(only.len(), 1);
    let agent_cfg = AgentConfig { episodes: 1, q_hidden: 4, ..AgentConfig::default() };
    let (agent, traces) = train_agent(&mut env, &agent_cfg, 0).unwrap();
    assert_eq!(traces[0].chosen, only);
    assert_eq!(agent.buffer().len(), 1);
}

#[test]
fn adaptive_epsilon_schedule() {
    let mut p = ExplorationPolicy::new(ExplorationConfig::with_kind(ExplorationKind::AdaptiveEpsilon));
    assert_eq!(p.epsilon(), 1.0);
    p.advance();
    assert!((p.epsilon() - 0.995).abs() < 1e-15);
    for _ in 0..2000 {
        p.advance();
    }
    assert_eq!(p.epsilon(), 0.05);
    let mut s = ExplorationPolicy::new(ExplorationConfig::with_kind(ExplorationKind::Standard));
    s.advance();
    assert_eq!(s.epsilon(), 0.1);
}

#[test]
fn agent_training_is_deterministic_and_telescopes() {
    let config = AgentConfig { episodes: 3, batch_size: 4, q_hidden: 8, finetune_epochs: 2, ..AgentConfig::default() };
    let run = || {
        let mut env = env_with(5, 2);
        train_agent(&mut env, &config, 17).unwrap().1
    };
    let a = run();
    assert_eq!(a, run());
    for ep in &a {
        let total: f64 = ep.extrinsic.iter().sum();
        let drop = ep.val_losses[0] - ep.val_losses[ep.val_losses.len() - 1];
        assert!((total - drop).abs() < 1e-9);
        assert_eq!(ep.chosen.len(), 5);
        let unique: BTreeSet<usize> = ep.chosen.iter().copied().collect();
        assert_eq!(unique.len(), 5);
        for (r, (e, i)) in ep.rewards.iter().zip(ep.extrinsic.iter().zip(&ep.intrinsic)) {
            assert!((r - (e + 0.1 * i)).abs() < 1e-15);
        }
    }
    assert!(!a[2].td_losses.is_empty());
}

#[test]
fn greedy_placement_contract() {
    let mut env = env_with(4, 1);
    let pool: BTreeSet<usize> = env.candidates().into_iter().collect();
    let config = AgentConfig { episodes: 1, batch_size: 2, q_hidden: 8, finetune_epochs: 1, ..AgentConfig::default() };
    let (agent, _) = train_agent(&mut env, &config, 3).unwrap();
    assert!(final_placement(agent.qnet(), &mut env, 0).unwrap().is_empty());
    let chosen = final_placement(agent.qnet(), &mut env, 4).unwrap();
    let unique: BTreeSet<usize> = chosen.iter().copied().collect();
    assert_eq!(unique.len(), 4);
    assert!(unique.is_subset(&pool));
    assert_eq!(chosen, final_placement(agent.qnet(), &mut env, 4).unwrap());
    assert!(matches!(final_placement(agent.qnet(), &mut env, 5), Err(AgentError::BudgetTooLarge { .. })));
}

#[test]
fn qnet_checkpoint_round_trip() {
    let q = QNet::new(3, 5, 1e-3, 25, 4);
    let back = QNet::from_checkpoint(&q.to_checkpoint(), 1e-3, 25).unwrap();
    assert_eq!(back.params(), q.params());
    assert_eq!(back.target_params(), q.params());
}

proptest! {
    #[test]
    fn replay_evicts_oldest_first(capacity in 1usize..40, extra in 0usize..40) {
        let mut buffer = ReplayBuffer::new(capacity);
        for i in 0..capacity + extra {
            let mut t = transition(i as f64, false, 1);
            t.action = i;
            buffer.push(t);
            prop_assert!(buffer.len() <= capacity);
        }
        let kept: Vec<usize> = buffer.iter().map(|t| t.action).collect();
        let expected: Vec<usize> = (extra..capacity + extra).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn adaptive_epsilon_is_monotone_and_bounded(
        start in 0.2f64..1.0, decay in 0.5f64..1.0, floor in 0.0f64..0.2, steps in 0usize..1000
    ) {
        let cfg = ExplorationConfig {
            kind: ExplorationKind::AdaptiveEpsilon,
            epsilon_start: start,
            epsilon_decay: decay,
            epsilon_min: floor,
            ..ExplorationConfig::default()
        };
        let mut p = ExplorationPolicy::new(cfg);
        let mut last = p.epsilon();
        for _ in 0..steps {
            p.advance();
            prop_assert!(p.epsilon() <= last);
            prop_assert!(p.epsilon() >= floor && p.epsilon() <= start);
            last = p.epsilon();
        }
    }

    #[test]
    fn curiosity_bonus_strictly_decreases(v in proptest::collection::vec(-1.0f64..1.0, 1..8), repeats in 2usize..30) {
        let mut p = ExplorationPolicy::new(ExplorationConfig::with_kind(ExplorationKind::Curiosity));
        let s = state(&v);
        let mut last = f64::INFINITY;
        for _ in 0..repeats {
            let r = p.intrinsic_reward(&s).unwrap();
            prop_assert!(r < last && r > 0.0);
            last = r;
        }
    }

    #[test]
    fn choices_stay_in_range(q in proptest::collection::vec(-5.0f64..5.0, 1..50), seed in 0u64..1000) {
        let p = ExplorationPolicy::new(ExplorationConfig::with_kind(ExplorationKind::Standard));
        let i = p.choose(&q, &mut seeded(seed, Stream::Agent)).unwrap();
        prop_assert!(i < q.len());
    }
}
