//! The policies under comparison: meta-training (both algorithms), pooled
//! joint training, and few-shot adaptation scored on held-out slots.

use regnn_core::error::{Error, Result};
use regnn_core::regnn::RegnnParams;
use regnn_core::rng::mix_seed;
use regnn_core::trainers::{
    adapt, evaluate, meta_train, sgd_train_multi, MetaAlgorithm, MetaLogEntry, MetaState,
    TrainConfig,
};
use regnn_core::{Params64, TaskData64, TrainConfig64};

use crate::config::{ExperimentConfig, MetaSection};
use crate::data::{STREAM_ADAPT, STREAM_INIT, STREAM_INNER, STREAM_JOINT, STREAM_META};

/// Draws rejected before one responds to a probe gradient step. All-negative
/// first-layer taps are a fixed point of training on entrywise-nonnegative
/// channels (every hidden unit starts off and stays off), so a bounded
/// search is guaranteed to end quickly.
const MAX_INIT_DRAWS: u64 = 64;

/// Shared starting point for every method in a repetition: the first draw
/// whose taps move under a single small ascent step on the probe task.
pub fn draw_init(
    cfg: &ExperimentConfig,
    rep_seed: u64,
    probe: &TaskData64,
) -> Result<Params64> {
    let slots: Vec<usize> = probe.train_slots().iter().copied().take(4).collect();
    let config = TrainConfig64 {
        learning_rate: 1e-3,
        steps: 1,
        batch_size: slots.len(),
        seed: 0,
        output_rate_scale: 1.0,
};
    for draw in 0..MAX_INIT_DRAWS {
        let phi = RegnnParams::init_uniform(
            cfg.model.layers,
            cfg.model.order,
            mix_seed(rep_seed, STREAM_INIT, draw),
        )?;
        if adapt(&phi, probe, &slots, &config)? != phi {
            return Ok(phi);
        }
    }
    Err(Error::Domain(format!(
        "no trainable initialization in {MAX_INIT_DRAWS} draws"
    )))
}

fn resolve_batch(requested: usize, available: usize) -> usize {
    if requested == 0 {
        available
    } else {
        requested.min(available)
    }
}

fn meta_section(cfg: &ExperimentConfig, algorithm: MetaAlgorithm) -> &MetaSection {
    match algorithm {
        MetaAlgorithm::Fomaml => &cfg.fomaml,
        MetaAlgorithm::Reptile => &cfg.reptile,
    }
}

/// Meta-trains one algorithm from `phi0` over the task set.
pub fn train_meta(
    cfg: &ExperimentConfig,
    algorithm: MetaAlgorithm,
    phi0: Params64,
    tasks: &[TaskData64],
    rep_seed: u64,
) -> Result<(Params64, Vec<MetaLogEntry<f64>>)> {
    let section = meta_section(cfg, algorithm);
    // The inner loop ranges over the train split (post-adaptation methods)
    // or the pooled split (interpolation); size the full-batch default off
    // the split it will actually see.
    let split_len = match algorithm {
        MetaAlgorithm::Fomaml => cfg.data.train_slots,
        MetaAlgorithm::Reptile => cfg.data.train_slots + cfg.data.test_slots,
    };
    let inner = TrainConfig {
        learning_rate: section.inner_rate,
        steps: section.inner_steps,
        batch_size: resolve_batch(section.inner_batch, split_len),
        seed: mix_seed(rep_seed, STREAM_INNER, 0),
        output_rate_scale: section.output_scale,
    };
    let state = MetaState {
        phi0,
        outer_rate: section.outer_rate,
        outer_output_scale: section.output_scale,
        inner,
        meta_batch: section.meta_batch,
        algorithm,
    };
    let (state, log) = meta_train(
        state,
        tasks,
        section.outer_steps,
        mix_seed(rep_seed, STREAM_META, 0),
        |_, _| Ok(()),
    )?;
    Ok((state.phi0, log))
}

/// Trains one set of taps by SGD over every task's train slots pooled
/// uniformly: the conventional baseline that sees all periods as one batch
/// of data.
pub fn train_joint(
    cfg: &ExperimentConfig,
    phi0: &Params64,
    tasks: &[TaskData64],
    rep_seed: u64,
) -> Result<Params64> {
    let mut items = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        for &t in task.train_slots() {
            items.push((ti, t));
        }
    }
    if items.is_empty() {
        return Err(Error::Config("joint training found no train slots".into()));
    }
    let refs: Vec<&TaskData64> = tasks.iter().collect();
    let config = TrainConfig64 {
        learning_rate: cfg.joint.rate,
        steps: cfg.joint.steps,
        batch_size: resolve_batch(cfg.joint.batch, items.len()),
        seed: mix_seed(rep_seed, STREAM_JOINT, 0),
        output_rate_scale: cfg.joint.output_scale,
    };
    sgd_train_multi(phi0, &refs, &items, &config)
}

/// Fine-tunes on the first `samples` slots of the test task's adaptation
/// pool (full-batch steps), then scores the mean sum rate on its held-out
/// slots. `steps = 0` scores `phi` as-is.
pub fn adapt_and_eval(
    phi: &Params64,
    test: &TaskData64,
    samples: usize,
    steps: usize,
    rate: f64,
    output_scale: f64,
    seed: u64,
) -> Result<f64> {
    let pool = test.train_slots();
    if samples == 0 || samples > pool.len() {
        return Err(Error::Config(format!(
            "adaptation wants {samples} samples, pool holds {}",
            pool.len()
        )));
    }
    let config = TrainConfig64 {
        learning_rate: rate,
        steps,
        batch_size: samples,
        seed,
        output_rate_scale: output_scale,
    };
    let adapted = adapt(phi, test, &pool[..samples], &config)?;
    evaluate(&adapted, test, test.test_slots())
}

/// Scores un-adapted taps on the test task's held-out slots.
pub fn eval_only(phi: &Params64, test: &TaskData64) -> Result<f64> {
    evaluate(phi, test, test.test_slots())
}

/// Seed for the adaptation run at one sample count.
pub fn adapt_seed(rep_seed: u64, samples: usize) -> u64 {
    mix_seed(rep_seed, STREAM_ADAPT, samples as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::data::{build_task_set, rep_seed};

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.seed = 5;
        cfg.data.meta_tasks = 3;
        cfg.data.train_slots = 8;
        cfg.data.test_slots = 6;
        cfg.data.eval_slots = 6;
        cfg.fomaml.outer_steps = 2;
        cfg.reptile.outer_steps = 2;
        cfg.fomaml.meta_batch = 3;
        cfg.reptile.meta_batch = 3;
        cfg.joint.steps = 4;
        cfg.joint.batch = 8;
        cfg
    }

    #[test]
    fn each_method_trains_deterministically() {
        let cfg = tiny_config();
        let seed = rep_seed(cfg.experiment.seed, 0, 0);
        let set = build_task_set(&cfg, 5.0, seed, 6).unwrap();
        let phi0 = draw_init(&cfg, seed, &set.tasks[0]).unwrap();

        for algorithm in [MetaAlgorithm::Fomaml, MetaAlgorithm::Reptile] {
            let (a, log) = train_meta(&cfg, algorithm, phi0.clone(), &set.tasks, seed).unwrap();
            let (b, _) = train_meta(&cfg, algorithm, phi0.clone(), &set.tasks, seed).unwrap();
            assert_eq!(a, b);
            assert_eq!(log.len(), 2);
        }
        let a = train_joint(&cfg, &phi0, &set.tasks, seed).unwrap();
        let b = train_joint(&cfg, &phi0, &set.tasks, seed).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn drawn_inits_respond_to_training() {
        let cfg = tiny_config();
        // Every accepted draw must move under one probe step; sweep a few
        // repetition seeds so the all-negative-row case is exercised.
        for rep in 0..40 {
            let seed = rep_seed(cfg.experiment.seed, 0, rep);
            let set = build_task_set(&cfg, 5.0, seed, 6).unwrap();
            let phi0 = draw_init(&cfg, seed, &set.tasks[0]).unwrap();
            let probed = adapt(
                &phi0,
                &set.tasks[0],
                &set.tasks[0].train_slots()[..4],
                &TrainConfig64 {
                    learning_rate: 1e-3,
                    steps: 1,
                    batch_size: 4,
                    seed: 0,
                    output_rate_scale: 1.0,
},
            )
            .unwrap();
            assert_ne!(probed, phi0, "rep {rep} accepted an unresponsive init");
        }
    }

    #[test]
    fn adaptation_uses_only_the_requested_samples() {
        let cfg = tiny_config();
        let seed = rep_seed(cfg.experiment.seed, 0, 1);
        let set = build_task_set(&cfg, 5.0, seed, 6).unwrap();
        let phi0 = draw_init(&cfg, seed, &set.tasks[0]).unwrap();
        let r1 = adapt_and_eval(&phi0, &set.test, 4, 2, 0.1, 1.0, 3).unwrap();
        let r2 = adapt_and_eval(&phi0, &set.test, 4, 2, 0.1, 1.0, 3).unwrap();
        assert_eq!(r1, r2);
        assert!(adapt_and_eval(&phi0, &set.test, 0, 2, 0.1, 1.0, 3).is_err());
        assert!(adapt_and_eval(&phi0, &set.test, 7, 2, 0.1, 1.0, 3).is_err());
        let zero_steps = adapt_and_eval(&phi0, &set.test, 4, 0, 0.1, 1.0, 3).unwrap();
        assert_eq!(zero_steps, eval_only(&phi0, &set.test).unwrap());
    }
}
