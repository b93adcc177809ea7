//! The two experiments: sum rate versus adaptation-sample budget on
//! dynamic-size networks, and relative gain versus interference radius at
//! fixed size. Cells (grid point, repetition) are independent, run on a
//! parallel pool, and collected in fixed order; the emitted rows are a pure
//! function of the resolved config.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use regnn_core::error::Result;
use regnn_core::trainers::MetaAlgorithm;
use regnn_core::{Params64, TaskData64};

use crate::config::ExperimentConfig;
use crate::data::{build_task_set, rep_seed};
use crate::methods::{adapt_and_eval, adapt_seed, draw_init, eval_only, train_joint, train_meta};
use crate::result::{sort_rows, Method, ResultRow, XKind};

/// The three trained parameter sets of one repetition.
struct TrainedCell {
    fomaml: Params64,
    reptile: Params64,
    joint: Params64,
}

fn train_cell(cfg: &ExperimentConfig, tasks: &[TaskData64], seed: u64) -> Result<TrainedCell> {
    let phi0 = draw_init(cfg, seed, &tasks[0])?;
    let (fomaml, _) = train_meta(cfg, MetaAlgorithm::Fomaml, phi0.clone(), tasks, seed)?;
    let (reptile, _) = train_meta(cfg, MetaAlgorithm::Reptile, phi0.clone(), tasks, seed)?;
    let joint = train_joint(cfg, &phi0, tasks, seed)?;
    Ok(TrainedCell {
        fomaml,
        reptile,
        joint,
    })
}

/// Scores all four methods at one adaptation budget and emits their rows.
/// Meta rows carry the relative gain against the jointly trained taps
/// adapted on the identical data.
fn score_budget(
    cfg: &ExperimentConfig,
    cell: &TrainedCell,
    test: &TaskData64,
    joint_unadapted: f64,
    x_kind: XKind,
    x_value: f64,
    samples: usize,
    seed: u64,
    rows: &mut Vec<ResultRow>,
) -> Result<()> {
    let a = &cfg.adaptation;
    let s = adapt_seed(seed, samples);
    // Budget-scaled step counts: each method gets its base steps plus the
    // shared per-sample allowance, so large budgets adapt to convergence.
    let extra = (samples as f64 * a.steps_per_sample).ceil() as usize;
    let c_fomaml = adapt_and_eval(&cell.fomaml, test, samples, a.fomaml_steps + extra, a.rate, a.output_scale, s)?;
    let c_reptile = adapt_and_eval(&cell.reptile, test, samples, a.reptile_steps + extra, a.rate, a.output_scale, s)?;
    let c_joint = adapt_and_eval(&cell.joint, test, samples, a.joint_steps + extra, a.rate, a.output_scale, s)?;
    let scenario = cfg.experiment.scenario;
    let row = |method, rate: f64, gain: f64| ResultRow {
        method,
        scenario,
        x_kind,
        x_value,
        seed,
        sum_rate_bits: rate,
        relative_gain: gain,
    };
    rows.push(row(Method::Fomaml, c_fomaml, (c_fomaml - c_joint) / c_fomaml));
    rows.push(row(
        Method::Reptile,
        c_reptile,
        (c_reptile - c_joint) / c_reptile,
    ));
    rows.push(row(Method::JointAdapt, c_joint, f64::NAN));
    rows.push(row(Method::Joint, joint_unadapted, f64::NAN));
    Ok(())
}

fn run_sample_cell(cfg: &ExperimentConfig, rep: u64) -> Result<Vec<ResultRow>> {
    let seed = rep_seed(cfg.experiment.seed, 0, rep);
    let pool = *cfg.sweep.samples.last().expect("validated nonempty");
    let set = build_task_set(cfg, cfg.network.interference_radius, seed, pool)?;
    let cell = train_cell(cfg, &set.tasks, seed)?;
    let joint_unadapted = eval_only(&cell.joint, &set.test)?;
    let mut rows = Vec::with_capacity(4 * cfg.sweep.samples.len());
    for &n in &cfg.sweep.samples {
        score_budget(
            cfg,
            &cell,
            &set.test,
            joint_unadapted,
            XKind::Samples,
            n as f64,
            n,
            seed,
            &mut rows,
        )?;
    }
    Ok(rows)
}

/// Sum rate across the adaptation-sample grid, all methods, every
/// repetition on a fresh dynamic-size task family.
pub fn run_sample_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    cfg.validate_samples()?;
    let reps: Vec<u64> = (0..cfg.sweep.repetitions as u64).collect();
    let per_rep: Result<Vec<Vec<ResultRow>>> = reps
        .par_iter()
        .map(|&rep| run_sample_cell(cfg, rep))
        .collect();
    let mut rows: Vec<ResultRow> = per_rep?.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

fn run_radius_cell(cfg: &ExperimentConfig, grid_index: usize, rep: u64) -> Result<Vec<ResultRow>> {
    let radius = cfg.sweep.radii[grid_index];
    let seed = rep_seed(cfg.experiment.seed, 1 + grid_index as u64, rep);
    let samples = cfg.sweep.radius_samples;
    let set = build_task_set(cfg, radius, seed, samples)?;
    let cell = train_cell(cfg, &set.tasks, seed)?;
    let joint_unadapted = eval_only(&cell.joint, &set.test)?;
    let mut rows = Vec::with_capacity(4);
    score_budget(
        cfg,
        &cell,
        &set.test,
        joint_unadapted,
        XKind::Radius,
        radius,
        samples,
        seed,
        &mut rows,
    )?;
    Ok(rows)
}

/// Relative gain across the interference-radius grid at a fixed few-shot
/// budget, fixed network size.
pub fn run_radius_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    cfg.validate_radii()?;
    let mut cells = Vec::new();
    for grid_index in 0..cfg.sweep.radii.len() {
        for rep in 0..cfg.sweep.repetitions as u64 {
            cells.push((grid_index, rep));
        }
    }
    let per_cell: Result<Vec<Vec<ResultRow>>> = cells
        .par_iter()
        .map(|&(grid_index, rep)| run_radius_cell(cfg, grid_index, rep))
        .collect();
    let mut rows: Vec<ResultRow> = per_cell?.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// Writes the fully resolved config next to the results; re-running the
/// sweep on this file reproduces the CSV byte-for-byte.
pub fn write_manifest(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    cfg.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scenario;
    use crate::result::{emit_csv, Method};

    fn smoke_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.seed = 77;
        cfg.network.size_min = 3;
        cfg.network.size_max = 6;
        cfg.data.meta_tasks = 2;
        cfg.data.train_slots = 6;
        cfg.data.test_slots = 4;
        cfg.data.eval_slots = 4;
        cfg.fomaml.outer_steps = 1;
        cfg.fomaml.meta_batch = 2;
        cfg.fomaml.inner_steps = 1;
        cfg.reptile.outer_steps = 1;
        cfg.reptile.meta_batch = 2;
        cfg.reptile.inner_steps = 1;
        cfg.joint.steps = 2;
        cfg.sweep.repetitions = 2;
        cfg.sweep.samples = vec![2, 4];
        cfg.sweep.radii = vec![1.0, 8.0];
        cfg.sweep.radius_samples = 3;
        cfg
    }

    #[test]
    fn sample_sweep_emits_one_row_per_method_budget_and_rep() {
        let cfg = smoke_config();
        let rows = run_sample_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4 * 2 * 2);
        let fomaml_rows: Vec<&ResultRow> =
            rows.iter().filter(|r| r.method == Method::Fomaml).collect();
        assert_eq!(fomaml_rows.len(), 4);
        assert!(fomaml_rows.iter().all(|r| r.relative_gain.is_finite()));
        let joint_rows: Vec<&ResultRow> =
            rows.iter().filter(|r| r.method == Method::Joint).collect();
        // The no-adaptation score ignores the sample budget: rows that share a
        // seed must agree across budgets.
        for row in &joint_rows {
            let twin = joint_rows
                .iter()
                .find(|r| r.seed == row.seed && r.x_value != row.x_value)
                .unwrap();
            assert_eq!(row.sum_rate_bits, twin.sum_rate_bits);
        }
        assert!(joint_rows.iter().all(|r| r.relative_gain.is_nan()));
    }

    #[test]
    fn sample_sweep_reruns_byte_identically() {
        let cfg = smoke_config();
        let a = run_sample_sweep(&cfg).unwrap();
        let b = run_sample_sweep(&cfg).unwrap();
        let mut buf_a = Vec::new();
        emit_csv(&a, &mut buf_a).unwrap();
        let mut buf_b = Vec::new();
        emit_csv(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn radius_sweep_covers_the_grid_on_fixed_size_networks() {
        let mut cfg = smoke_config();
        cfg.experiment.scenario = Scenario::FixedSize;
        cfg.network.num_links = 4;
        let rows = run_radius_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4 * 2 * 2);
        assert!(rows.iter().all(|r| r.x_kind == XKind::Radius));
        let radii: Vec<f64> = rows.iter().map(|r| r.x_value).collect();
        assert!(radii.contains(&1.0) && radii.contains(&8.0));
    }

    #[test]
    fn sweeps_enforce_their_scenarios() {
        let mut cfg = smoke_config();
        cfg.experiment.scenario = Scenario::FixedSize;
        assert!(run_sample_sweep(&cfg).is_err());
        cfg.experiment.scenario = Scenario::DynamicSize;
        assert!(run_radius_sweep(&cfg).is_err());
    }
}
