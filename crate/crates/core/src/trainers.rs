//! Gradient-ascent training on the empirical sum rate: per-period SGD
//! (joint training and few-shot adaptation) plus meta-training of the
//! shared initialization.
//!
//! Every trainer funnels its parameter update through one shared expression
//! (`taps += rate * (gradient_sum / count)`) and accumulates per-slot
//! gradients in ascending `(task, slot)` order, so degenerate configurations
//! of different trainers coincide bit-for-bit: a zero-rate inner loop makes
//! one meta-step equal one pooled ascent step, and a one-step full-batch
//! adaptation equals the plain single ascent update.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::channel::ChannelEpisode;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::num::{real, Real};
use crate::objective::{rate_gradient, slot_sum_rate};
use crate::regnn::{backward, forward, normalize_channel, RegnnParams};
use crate::rng::{mix_seed, stream_rng, StreamDomain};

/// One period's training material: the episode plus per-slot normalized
/// matrices for the policy. Rates always use the raw matrices.
#[derive(Debug, Clone)]
pub struct TaskData<F> {
    pub episode: ChannelEpisode<F>,
    inputs: Vec<Matrix<F>>,
    scales: Vec<F>,
    p_max: Vec<F>,
}

impl<F: Real> TaskData<F> {
    pub fn new(episode: ChannelEpisode<F>) -> Self {
        let mut inputs = Vec::with_capacity(episode.num_slots());
        let mut scales = Vec::with_capacity(episode.num_slots());
        for m in &episode.matrices {
            let (h, s) = normalize_channel(m);
            inputs.push(h);
            scales.push(s);
        }
        let p_max = episode.max_power_vec();
        TaskData {
            episode,
            inputs,
            scales,
            p_max,
        }
    }

    pub fn num_links(&self) -> usize {
        self.episode.num_links()
    }

    pub fn num_slots(&self) -> usize {
        self.episode.num_slots()
    }

    /// Normalized matrix the policy consumes for slot `t`.
    pub fn input(&self, t: usize) -> &Matrix<F> {
        &self.inputs[t]
    }

    /// Raw matrix the rate objective uses for slot `t`.
    pub fn raw(&self, t: usize) -> &Matrix<F> {
        &self.episode.matrices[t]
    }

    pub fn scale(&self, t: usize) -> F {
        self.scales[t]
    }

    pub fn noise(&self) -> F {
        self.episode.noise()
    }

    pub fn p_max(&self) -> &[F] {
        &self.p_max
    }

    pub fn train_slots(&self) -> &[usize] {
        &self.episode.train_slots
    }

    pub fn test_slots(&self) -> &[usize] {
        &self.episode.test_slots
    }

    /// Train and test slots pooled, ascending.
    pub fn all_split_slots(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .train_slots()
            .iter()
            .chain(self.test_slots())
            .copied()
            .collect();
        v.sort_unstable();
        v
    }
}

/// Settings for one SGD run (outer or inner loop).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig<F> {
    /// Ascent step size; zero is allowed (degenerate but well-defined).
    pub learning_rate: F,
    pub steps: usize,
    /// Slots per gradient estimate.
    pub batch_size: usize,
    /// Seeds the per-epoch batch shuffle.
    pub seed: u64,
    /// Step-size multiplier for the output layer's taps. Row normalization
    /// shrinks the filter features geometrically per layer, so the output
    /// layer sees the smallest signals and needs the largest steps; 1 keeps
    /// a single global rate.
    pub output_rate_scale: F,
}

impl<F: Real> TrainConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= F::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.output_rate_scale > F::zero()) || !self.output_rate_scale.is_finite() {
            return Err(Error::Config(format!(
                "output_rate_scale must be finite and > 0, got {}",
                self.output_rate_scale
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaAlgorithm {
    Fomaml,
    Reptile,
}

impl fmt::Display for MetaAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetaAlgorithm::Fomaml => "fomaml",
            MetaAlgorithm::Reptile => "reptile",
        })
    }
}

/// Shared initialization plus the meta-training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaState<F> {
    pub phi0: RegnnParams<F>,
    /// Outer step size.
    pub outer_rate: F,
    /// Output-layer multiplier for the outer update, mirroring
    /// [`TrainConfig::output_rate_scale`]. Interpolation updates ignore it:
    /// their inner loop already scales the parameter displacement.
    pub outer_output_scale: F,
    /// Inner-loop (adaptation) settings used during meta-training.
    pub inner: TrainConfig<F>,
    /// Periods per outer step; clamped to the dataset size.
    pub meta_batch: usize,
    pub algorithm: MetaAlgorithm,
}

impl<F: Real> MetaState<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_rate > F::zero()) || !self.outer_rate.is_finite() {
            return Err(Error::Config(format!(
                "outer_rate must be finite and > 0, got {}",
                self.outer_rate
            )));
        }
        if !(self.outer_output_scale > F::zero()) || !self.outer_output_scale.is_finite() {
            return Err(Error::Config(format!(
                "outer_output_scale must be finite and > 0, got {}",
                self.outer_output_scale
            )));
        }
        if self.meta_batch == 0 {
            return Err(Error::Config("meta_batch must be >= 1".into()));
        }
        self.inner.validate()
    }
}

/// The single shared ascent expression: `taps += rate * (sum / count)`,
/// with the output layer stepping at `rate * output_scale`.
fn add_scaled_mean<F: Real>(
    taps: &mut RegnnParams<F>,
    rate: F,
    output_scale: F,
    sum: &RegnnParams<F>,
    count: usize,
) {
    debug_assert!(taps.same_shape(sum));
    let n = real::<F>(count as f64);
    let last = (taps.layers() - 1) * taps.order();
    for (i, (t, s)) in taps.taps_mut().iter_mut().zip(sum.taps()).enumerate() {
        let r = if i >= last { rate * output_scale } else { rate };
        *t += r * (*s / n);
    }
}

/// Tap gradient of slot `t`'s sum rate at `params`, added into `acc`;
/// returns the slot's sum rate.
fn accumulate_slot<F: Real>(
    params: &RegnnParams<F>,
    task: &TaskData<F>,
    t: usize,
    acc: &mut RegnnParams<F>,
) -> Result<F> {
    let trace = forward(params, task.input(t), task.p_max())?;
    let grad_p = rate_gradient(task.raw(t), &trace.output, task.noise())?;
    let g = backward(&trace, params, task.input(t), &grad_p)?;
    acc.add_assign(&g);
    slot_sum_rate(task.raw(t), &trace.output, task.noise())
}

/// Summed slot gradients and summed slot rates over `items`, accumulated in
/// the listed order.
fn batch_gradient<F: Real>(
    params: &RegnnParams<F>,
    tasks: &[&TaskData<F>],
    items: &[(usize, usize)],
) -> Result<(RegnnParams<F>, F)> {
    let mut sum = params.zeros_like();
    let mut rate_sum = F::zero();
    for &(ti, slot) in items {
        rate_sum += accumulate_slot(params, tasks[ti], slot, &mut sum)?;
    }
    Ok((sum, rate_sum))
}

/// Stochastic gradient ascent over a pooled slot deck.
///
/// `items` are `(task index, slot index)` pairs. Batch membership comes from
/// a per-epoch without-replacement shuffle, but each batch is visited in
/// ascending `(task, slot)` order, so a full batch is one deterministic pass
/// regardless of the shuffle. A trailing partial epoch is dropped rather
/// than padded.
pub fn sgd_train_multi<F: Real>(
    init: &RegnnParams<F>,
    tasks: &[&TaskData<F>],
    items: &[(usize, usize)],
    config: &TrainConfig<F>,
) -> Result<RegnnParams<F>> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::Config("no training slots".into()));
    }
    if config.batch_size > items.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {} available slots",
            config.batch_size,
            items.len()
        )));
    }
    for &(ti, slot) in items {
        if ti >= tasks.len() || slot >= tasks[ti].num_slots() {
            return Err(Error::Config(format!("slot item ({ti}, {slot}) out of range")));
        }
    }

    let mut params = init.clone();
    let mut deck: Vec<(usize, usize)> = items.to_vec();
    let mut rng = stream_rng(config.seed, StreamDomain::Batching, 0);
    let mut cursor = deck.len();
    let mut batch = Vec::with_capacity(config.batch_size);
    for step in 0..config.steps {
        if cursor + config.batch_size > deck.len() {
            deck.shuffle(&mut rng);
            cursor = 0;
        }
        batch.clear();
        batch.extend_from_slice(&deck[cursor..cursor + config.batch_size]);
        cursor += config.batch_size;
        batch.sort_unstable();
        let (gsum, _) = batch_gradient(&params, tasks, &batch)?;
        add_scaled_mean(
            &mut params,
            config.learning_rate,
            config.output_rate_scale,
            &gsum,
            batch.len(),
        );
        if !params.is_finite() {
            return Err(Error::NonFinite {
                context: format!("taps after update {step} (learning rate too high?)"),
            });
        }
    }
    Ok(params)
}

/// SGD ascent on one task restricted to `slots`.
pub fn sgd_train<F: Real>(
    init: &RegnnParams<F>,
    task: &TaskData<F>,
    slots: &[usize],
    config: &TrainConfig<F>,
) -> Result<RegnnParams<F>> {
    let items: Vec<(usize, usize)> = slots.iter().map(|&t| (0, t)).collect();
    sgd_train_multi(init, &[task], &items, config)
}

/// Few-shot inner loop: [`sgd_train`] starting from the shared
/// initialization. One step with a full batch reproduces the plain single
/// ascent update exactly.
pub fn adapt<F: Real>(
    phi0: &RegnnParams<F>,
    task: &TaskData<F>,
    slots: &[usize],
    config: &TrainConfig<F>,
) -> Result<RegnnParams<F>> {
    sgd_train(phi0, task, slots, config)
}

/// Mean sum rate of the policy over `slots`, bits.
pub fn evaluate<F: Real>(
    params: &RegnnParams<F>,
    task: &TaskData<F>,
    slots: &[usize],
) -> Result<F> {
    if slots.is_empty() {
        return Err(Error::InsufficientSlots {
            needed: 1,
            available: 0,
        });
    }
    let mut total = F::zero();
    for &t in slots {
        let trace = forward(params, task.input(t), task.p_max())?;
        total += slot_sum_rate(task.raw(t), &trace.output, task.noise())?;
    }
    Ok(total / real(slots.len() as f64))
}

/// Inner-loop seed for one task, so tasks see distinct batch schedules
/// while staying reproducible.
fn task_inner_seed(base: u64, task: &TaskData<impl Real>) -> u64 {
    mix_seed(base, task.episode.drop.period_index, 2)
}

/// First-order meta-gradient at `phi0`: adapt on each task's train split,
/// then accumulate slot gradients of the test objective at the adapted
/// parameters across the whole batch in one flat pass (task-major, slots
/// ascending). Slots weigh equally across the batch; with equal per-task
/// test counts this equals the mean of per-task mean gradients.
///
/// Returns the gradient sum, the pooled slot count, and the batch's
/// post-adaptation test objective.
pub fn fomaml_meta_gradient<F: Real>(
    phi0: &RegnnParams<F>,
    inner: &TrainConfig<F>,
    tasks: &[&TaskData<F>],
) -> Result<(RegnnParams<F>, usize, F)> {
    let mut gsum = phi0.zeros_like();
    let mut rate_sum = F::zero();
    let mut count = 0usize;
    for task in tasks {
        if task.train_slots().is_empty() || task.test_slots().is_empty() {
            return Err(Error::Config(
                "meta-training needs nonempty train and test splits".into(),
            ));
        }
        let mut cfg = *inner;
        cfg.seed = task_inner_seed(inner.seed, task);
        let adapted = adapt(phi0, task, task.train_slots(), &cfg)?;
        for &t in task.test_slots() {
            rate_sum += accumulate_slot(&adapted, task, t, &mut gsum)?;
        }
        count += task.test_slots().len();
    }
    Ok((gsum, count, rate_sum / real(count as f64)))
}

/// One first-order meta-update: ascend the shared initialization along the
/// averaged post-adaptation test gradient. Returns the new state and the
/// batch's post-adaptation test objective.
pub fn fomaml_step<F: Real>(
    state: &MetaState<F>,
    tasks: &[&TaskData<F>],
) -> Result<(MetaState<F>, F)> {
    state.validate()?;
    if tasks.is_empty() {
        return Err(Error::Config("empty meta-batch".into()));
    }
    let (gsum, count, objective) = fomaml_meta_gradient(&state.phi0, &state.inner, tasks)?;
    let mut next = state.clone();
    add_scaled_mean(
        &mut next.phi0,
        state.outer_rate,
        state.outer_output_scale,
        &gsum,
        count,
    );
    if !next.phi0.is_finite() {
        return Err(Error::NonFinite {
            context: "shared taps after outer update (outer rate too high?)".into(),
        });
    }
    Ok((next, objective))
}

/// Move the initialization toward the average adapted parameters:
/// `phi0 += epsilon * mean(adapted - phi0)`.
///
/// The delta form makes a zero-step inner loop a fixed point for any rate
/// and batch size; in exact arithmetic it equals the interpolation
/// `(1 - epsilon) phi0 + epsilon mean(adapted)`.
pub fn reptile_update<F: Real>(
    phi0: &RegnnParams<F>,
    adapted: &[RegnnParams<F>],
    epsilon: F,
) -> RegnnParams<F> {
    let mut delta_sum = phi0.zeros_like();
    for a in adapted {
        debug_assert!(a.same_shape(phi0));
        for (d, (av, bv)) in delta_sum
            .taps_mut()
            .iter_mut()
            .zip(a.taps().iter().zip(phi0.taps()))
        {
            *d += *av - *bv;
        }
    }
    let mut next = phi0.clone();
    add_scaled_mean(&mut next, epsilon, F::one(), &delta_sum, adapted.len());
    next
}

/// One interpolation meta-update: adapt on each task's pooled split slots
/// (this method needs no train/test distinction) and interpolate toward the
/// adapted parameters. Returns the new state and the batch's post-adaptation
/// test objective (NaN when no task has test slots).
pub fn reptile_step<F: Real>(
    state: &MetaState<F>,
    tasks: &[&TaskData<F>],
) -> Result<(MetaState<F>, F)> {
    state.validate()?;
    if tasks.is_empty() {
        return Err(Error::Config("empty meta-batch".into()));
    }
    let mut adapted = Vec::with_capacity(tasks.len());
    let mut objective = F::zero();
    let mut scored = 0usize;
    for task in tasks {
        let slots = task.all_split_slots();
        if slots.is_empty() {
            return Err(Error::Config("task has no split slots".into()));
        }
        let mut cfg = state.inner;
        cfg.seed = task_inner_seed(state.inner.seed, task);
        let phi_task = adapt(&state.phi0, task, &slots, &cfg)?;
        if !task.test_slots().is_empty() {
            objective += evaluate(&phi_task, task, task.test_slots())?;
            scored += 1;
        }
        adapted.push(phi_task);
    }
    let mut next = state.clone();
    next.phi0 = reptile_update(&state.phi0, &adapted, state.outer_rate);
    if !next.phi0.is_finite() {
        return Err(Error::NonFinite {
            context: "shared taps after interpolation (inner rate too high?)".into(),
        });
    }
    let objective = if scored > 0 {
        objective / real(scored as f64)
    } else {
        F::nan()
    };
    Ok((next, objective))
}

/// One outer step's log line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaLogEntry<F> {
    pub outer_step: usize,
    pub algorithm: MetaAlgorithm,
    pub meta_objective: F,
    pub wall_ms: u128,
}

/// Write a training log as CSV.
pub fn write_training_log<F: Real>(
    entries: &[MetaLogEntry<F>],
    w: &mut impl Write,
) -> Result<()> {
    writeln!(w, "outer_step,algorithm,meta_objective_bits,wall_ms")?;
    for e in entries {
        writeln!(
            w,
            "{},{},{},{}",
            e.outer_step, e.algorithm, e.meta_objective, e.wall_ms
        )?;
    }
    Ok(())
}

/// Run `outer_steps` meta-updates over batches sampled from `dataset`.
///
/// The batch is the whole dataset, in order, when `meta_batch` covers it;
/// otherwise `meta_batch` distinct tasks are sampled per step (seeded) and
/// visited in dataset order. Inner-loop shuffle seeds are re-derived per
/// outer step. `on_step` sees each log entry and the state after that step,
/// for checkpointing; the full log is also returned.
pub fn meta_train<F: Real, C>(
    state: MetaState<F>,
    dataset: &[TaskData<F>],
    outer_steps: usize,
    seed: u64,
    mut on_step: C,
) -> Result<(MetaState<F>, Vec<MetaLogEntry<F>>)>
where
    C: FnMut(&MetaLogEntry<F>, &MetaState<F>) -> Result<()>,
{
    state.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("empty meta-training dataset".into()));
    }
    let base_inner_seed = state.inner.seed;
    let mut current = state;
    let mut log = Vec::with_capacity(outer_steps);
    for step in 0..outer_steps {
        let start = Instant::now();
        let batch_idx: Vec<usize> = if current.meta_batch >= dataset.len() {
            (0..dataset.len()).collect()
        } else {
            let mut rng = stream_rng(seed, StreamDomain::MetaBatch, step as u64);
            let mut idx =
                rand::seq::index::sample(&mut rng, dataset.len(), current.meta_batch).into_vec();
            idx.sort_unstable();
            idx
        };
        let batch: Vec<&TaskData<F>> = batch_idx.iter().map(|&i| &dataset[i]).collect();
        let mut stepped = current.clone();
        stepped.inner.seed = mix_seed(base_inner_seed, step as u64, 1);
        let (mut next, objective) = match current.algorithm {
            MetaAlgorithm::Fomaml => fomaml_step(&stepped, &batch)?,
            MetaAlgorithm::Reptile => reptile_step(&stepped, &batch)?,
        };
        next.inner.seed = base_inner_seed;
        let entry = MetaLogEntry {
            outer_step: step,
            algorithm: current.algorithm,
            meta_objective: objective,
            wall_ms: start.elapsed().as_millis(),
        };
        on_step(&entry, &next)?;
        log.push(entry);
        current = next;
    }
    Ok((current, log))
}
