use skyvlc_core::{Environment, ScenarioConfig};
use skyvlc_learn::maddpg::{final_window_reward, random_baseline};
use skyvlc_learn::{train, Trainer, TrainerConfig, TrainerKind};

fn tiny_env(uavs: usize) -> Environment {
    let mut cfg = ScenarioConfig::desk();
    cfg.uavs = uavs;
    cfg.master_slots = 4;
    cfg.small_slots = 4;
    Environment::new(cfg).unwrap()
}

fn tiny_cfg(episodes: usize) -> TrainerConfig {
    TrainerConfig {
        episodes,
        actor_hidden: vec![12],
        critic_hidden: vec![12],
        global_critic_hidden: vec![12, 6],
        batch_size: 8,
        buffer_capacity: 128,
        ..TrainerConfig::desk()
    }
}

#[test]
fn same_seed_same_run() {
    let env = tiny_env(2);
    let (a, ta) = train(&env, TrainerKind::Maddpg, tiny_cfg(4), 21, |_, _| Ok(())).unwrap();
    let (b, tb) = train(&env, TrainerKind::Maddpg, tiny_cfg(4), 21, |_, _| Ok(())).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.stats(), tb.stats());
    let (c, _) = train(&env, TrainerKind::Maddpg, tiny_cfg(4), 22, |_, _| Ok(())).unwrap();
    assert_ne!(a, c);
}

#[test]
fn single_agent_decentralized_matches_ddpg() {
    let env = tiny_env(1);
    let (a, _) = train(&env, TrainerKind::Decentralized, tiny_cfg(3), 5, |_, _| Ok(())).unwrap();
    let (b, _) = train(&env, TrainerKind::Ddpg, tiny_cfg(3), 5, |_, _| Ok(())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn every_trainer_kind_runs_and_stays_finite() {
    let env = tiny_env(2);
    for kind in [TrainerKind::Maddpg, TrainerKind::Decentralized, TrainerKind::Ddpg] {
        let (metrics, trainer) = train(&env, kind, tiny_cfg(3), 3, |_, _| Ok(())).unwrap();
        assert_eq!(metrics.len(), 3);
        assert!(metrics.iter().all(|m| m.mean_reward_per_agent.is_finite()));
        assert!(trainer.learners().iter().all(|l| l.actor.is_finite() && l.critic.is_finite()));
        assert_eq!(trainer.global_critics().is_some(), kind == TrainerKind::Maddpg);
        assert!(trainer.stats().global_updates > 0 || kind != TrainerKind::Maddpg);
    }
}

#[test]
fn callback_sees_every_episode_and_can_abort() {
    let env = tiny_env(2);
    let mut seen = Vec::new();
    train(&env, TrainerKind::Maddpg, tiny_cfg(3), 1, |_, m| {
        seen.push(m.episode);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![1, 2, 3]);

    let err = train(&env, TrainerKind::Maddpg, tiny_cfg(3), 1, |_, m| {
        if m.episode == 2 {
            Err(skyvlc_learn::TrainError::Callback("stop".into()))
        } else {
            Ok(())
        }
    });
    assert!(err.is_err());
}

#[test]
fn save_load_restores_every_network() {
    let env = tiny_env(2);
    let (_, trained) = train(&env, TrainerKind::Maddpg, tiny_cfg(2), 8, |_, _| Ok(())).unwrap();
    let mut bytes = Vec::new();
    trained.save(&mut bytes).unwrap();
    let mut fresh = Trainer::for_env(TrainerKind::Maddpg, tiny_cfg(2), &env, 1234).unwrap();
    fresh.load(&mut bytes.as_slice()).unwrap();
    for (a, b) in fresh.learners().iter().zip(trained.learners()) {
        assert_eq!(a.actor.flat_parameters(), b.actor.flat_parameters());
        assert_eq!(a.critic.flat_parameters(), b.critic.flat_parameters());
        assert_eq!(a.actor_target.flat_parameters(), b.actor_target.flat_parameters());
        assert_eq!(a.critic_target.flat_parameters(), b.critic_target.flat_parameters());
    }
    let (g, h) = (fresh.global_critics().unwrap(), trained.global_critics().unwrap());
    for k in 0..2 {
        assert_eq!(g.critics[k].flat_parameters(), h.critics[k].flat_parameters());
        assert_eq!(g.targets[k].flat_parameters(), h.targets[k].flat_parameters());
    }

    // a trainer of a different shape refuses the dump
    let mut other = Trainer::for_env(TrainerKind::Maddpg, TrainerConfig { actor_hidden: vec![5], ..tiny_cfg(2) }, &env, 1).unwrap();
    assert!(other.load(&mut bytes.as_slice()).is_err());
}

#[test]
fn random_baseline_is_seeded() {
    let env = tiny_env(2);
    let a = random_baseline(&env, 3, 4).unwrap();
    assert_eq!(a, random_baseline(&env, 3, 4).unwrap());
    assert!(final_window_reward(&a, 2).is_finite());
    assert!(final_window_reward(&[], 2).is_nan());
}
