//! Small learning problems with known answers.

use rand::{Rng as _, SeedableRng};
use usac_core::agent::{AgentConfig, AlphaMode};
use usac_core::{AggregationRule, ReplayBuffer, Rng, Transition, UsacAgent};

fn small_config(gamma: f64) -> AgentConfig {
    AgentConfig {
        gamma,
        tau: 0.05,
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        batch_size: 64,
        buffer_capacity: 10_000,
        hidden: vec![32, 32],
        rule_critic: AggregationRule::Mean,
        rule_actor: AggregationRule::Mean,
        alpha: AlphaMode::Fixed { value: 1e-9 },
        ..AgentConfig::default()
    }
}

#[test]
fn critics_regress_to_the_constant_fixed_point() {
    // r ≡ 1, γ = 1/2, never terminal: Q ≡ r / (1 − γ) = 2 once the
    // entropy bonus is negligible.
    let mut rng = Rng::seed_from_u64(21);
    let mut agent = UsacAgent::new(small_config(0.5), 2, &[-1.0], &[1.0], &mut rng).unwrap();
    let mut buffer = ReplayBuffer::new(10_000, 2, 1, 22).unwrap();
    for _ in 0..2_000 {
        let s = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let s2 = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        buffer
            .push(Transition {
                state: s,
                action: vec![rng.random_range(-1.0..1.0)],
                reward: 1.0,
                next_state: s2,
                terminal: false,
            })
            .unwrap();
    }
    for _ in 0..3_000 {
        agent.training_step(&mut buffer, &mut rng).unwrap();
    }
    let batch = buffer.sample(256).unwrap();
    let (q1, q2) = UsacAgent::critic_pair(&agent.critics, batch.states.view(), batch.actions.view()).unwrap();
    for q in q1.iter().chain(&q2) {
        assert!((q - 2.0).abs() < 0.1, "critic output {q}");
    }
}

#[test]
fn actor_finds_the_bandit_optimum() {
    // One-step problem: reward −4(a − ½)², every transition terminal.
    let mut rng = Rng::seed_from_u64(31);
    let mut cfg = small_config(0.0);
    cfg.alpha = AlphaMode::Fixed { value: 1e-3 };
    cfg.rule_critic = AggregationRule::MinClip;
    cfg.rule_actor = AggregationRule::MinClip;
    let mut agent = UsacAgent::new(cfg, 1, &[-1.0], &[1.0], &mut rng).unwrap();
    let mut buffer = ReplayBuffer::new(10_000, 1, 1, 32).unwrap();
    for _ in 0..4_000 {
        let a: f64 = rng.random_range(-1.0..1.0);
        buffer
            .push(Transition {
                state: vec![0.0],
                action: vec![a],
                reward: -4.0 * (a - 0.5) * (a - 0.5),
                next_state: vec![0.0],
                terminal: true,
            })
            .unwrap();
    }
    for _ in 0..3_000 {
        agent.training_step(&mut buffer, &mut rng).unwrap();
    }
    let a = agent.act_deterministic(&[0.0]).unwrap()[0];
    assert!((a - 0.5).abs() < 0.1, "greedy action {a}");
}

#[test]
fn temperature_falls_while_entropy_exceeds_the_target() {
    // With a flat reward the only pressure on the actor is entropy, which
    // stays above a target of −1 nats, so α must keep shrinking.
    let mut rng = Rng::seed_from_u64(41);
    let mut cfg = small_config(0.0);
    cfg.alpha = AlphaMode::Auto { initial: 0.5 };
    cfg.alpha_lr = 3e-3;
    cfg.target_entropy = Some(-1.0);
    let mut agent = UsacAgent::new(cfg, 1, &[-1.0], &[1.0], &mut rng).unwrap();
    let mut buffer = ReplayBuffer::new(1_000, 1, 1, 42).unwrap();
    for _ in 0..500 {
        buffer
            .push(Transition {
                state: vec![0.0],
                action: vec![rng.random_range(-1.0..1.0)],
                reward: 0.0,
                next_state: vec![0.0],
                terminal: true,
            })
            .unwrap();
    }
    let mut log_probs = Vec::new();
    for i in 0..3_000 {
        let d = agent.training_step(&mut buffer, &mut rng).unwrap();
        if i >= 2_500 {
            log_probs.push(d.mean_log_prob);
        }
        assert!(d.alpha > 0.0 && d.alpha.is_finite());
    }
    let entropy = -log_probs.iter().sum::<f64>() / log_probs.len() as f64;
    assert!(entropy > -1.0, "entropy {entropy}");
    assert!(agent.alpha() < 0.05, "alpha {}", agent.alpha());
}
