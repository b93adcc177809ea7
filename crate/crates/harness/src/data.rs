//! Builds the meta-training task set plus the held-out test task for one
//! repetition, entirely from the experiment seed. Every stream is derived
//! with `mix_seed`, so a repetition is a pure function of (config, seed) and
//! regenerating beats reloading: `gen-data` exists for inspection and
//! interop, not as a pipeline stage.

use std::fs;
use std::io;
use std::path::Path;

use regnn_core::channel::{sample_episode, split_episode, ChannelEpisode};
use regnn_core::error::{Error, Result};
use regnn_core::rng::mix_seed;
use regnn_core::topology::{generate_drop, sample_network_size, NetworkDrop, TopologyConfig};
use regnn_core::trainers::TaskData;
use regnn_core::TaskData64;

use crate::config::ExperimentConfig;

// Stream labels under a repetition seed. Every consumer of randomness in a
// repetition derives its seed as mix_seed(rep_seed, LABEL, index).
pub const STREAM_TOPOLOGY: u64 = 0;
pub const STREAM_CHANNEL: u64 = 1;
pub const STREAM_SIZE: u64 = 2;
pub const STREAM_INIT: u64 = 3;
pub const STREAM_META: u64 = 4;
pub const STREAM_JOINT: u64 = 5;
pub const STREAM_INNER: u64 = 6;
pub const STREAM_ADAPT: u64 = 7;

/// The material of one repetition: meta-training tasks and the test task.
#[derive(Debug, Clone)]
pub struct TaskSet {
    pub tasks: Vec<TaskData64>,
    pub test: TaskData64,
}

/// Seed for repetition `rep` of a sweep running at `grid_index`.
pub fn rep_seed(experiment_seed: u64, grid_index: u64, rep: u64) -> u64 {
    mix_seed(mix_seed(experiment_seed, grid_index, 0xC0FFEE), rep, 0xA)
}

fn build_task(
    cfg: &ExperimentConfig,
    radius: f64,
    rep_seed: u64,
    index: u64,
    n_train: usize,
    n_test: usize,
) -> Result<TaskData64> {
    let k = sample_network_size(&cfg.size_rule(), mix_seed(rep_seed, STREAM_SIZE, index));
    let topo = TopologyConfig::new(k, radius, mix_seed(rep_seed, STREAM_TOPOLOGY, 0))?;
    let drop = generate_drop(&topo, index)?;
    let channel = cfg.channel_config(n_train + n_test, mix_seed(rep_seed, STREAM_CHANNEL, 0));
    let episode = split_episode(sample_episode(&drop, &channel)?, n_train, n_test)?;
    Ok(TaskData::new(episode))
}

/// Meta-training tasks with train/test splits per the data section.
pub fn build_meta_tasks(
    cfg: &ExperimentConfig,
    radius: f64,
    rep_seed: u64,
) -> Result<Vec<TaskData64>> {
    let mut tasks = Vec::with_capacity(cfg.data.meta_tasks);
    for index in 0..cfg.data.meta_tasks {
        tasks.push(build_task(
            cfg,
            radius,
            rep_seed,
            index as u64,
            cfg.data.train_slots,
            cfg.data.test_slots,
        )?);
    }
    Ok(tasks)
}

/// The held-out test task: its train split is an adaptation pool of `pool`
/// slots, scored on `eval_slots` held-out slots. Drawn as the period after
/// the meta-training tasks.
pub fn build_test_task(
    cfg: &ExperimentConfig,
    radius: f64,
    rep_seed: u64,
    pool: usize,
) -> Result<TaskData64> {
    if pool == 0 {
        return Err(Error::Config("adaptation pool must hold at least 1 slot".into()));
    }
    build_task(
        cfg,
        radius,
        rep_seed,
        cfg.data.meta_tasks as u64,
        pool,
        cfg.data.eval_slots,
    )
}

/// Builds the meta-training tasks and the test task together.
pub fn build_task_set(
    cfg: &ExperimentConfig,
    radius: f64,
    rep_seed: u64,
    pool: usize,
) -> Result<TaskSet> {
    Ok(TaskSet {
        tasks: build_meta_tasks(cfg, radius, rep_seed)?,
        test: build_test_task(cfg, radius, rep_seed, pool)?,
    })
}

fn write_pair(dir: &Path, stem: &str, task: &TaskData64) -> Result<()> {
    let mut drop_file = fs::File::create(dir.join(format!("{stem}.drop.txt")))?;
    task.episode.drop.write_text(&mut drop_file)?;
    let mut episode_file = fs::File::create(dir.join(format!("{stem}.episode.bin")))?;
    task.episode.write_binary(&mut episode_file)?;
    Ok(())
}

/// Writes every task as a drop-text / episode-binary pair plus an index
/// file naming them in order.
pub fn write_task_set(set: &TaskSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = String::new();
    for (i, task) in set.tasks.iter().enumerate() {
        let stem = format!("task-{i:03}");
        write_pair(dir, &stem, task)?;
        index.push_str(&stem);
        index.push('\n');
    }
    write_pair(dir, "test-task", &set.test)?;
    index.push_str("test-task\n");
    fs::write(dir.join("index.txt"), index)?;
    Ok(())
}

/// Reads one stem back; the counterpart of [`write_task_set`]'s pairs.
pub fn read_task(dir: &Path, stem: &str) -> Result<TaskData64> {
    let drop_path = dir.join(format!("{stem}.drop.txt"));
    let mut drop_file = io::BufReader::new(fs::File::open(&drop_path)?);
    let drop = NetworkDrop::read_text(&mut drop_file)?;
    let mut episode_file =
        io::BufReader::new(fs::File::open(dir.join(format!("{stem}.episode.bin")))?);
    let episode = ChannelEpisode::read_binary(&mut episode_file, drop)?;
    Ok(TaskData::new(episode))
}
