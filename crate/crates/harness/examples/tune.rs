//! Scratch probes for sizing experiment budgets. Not part of the test suite.

use std::time::Instant;

use regnn_core::channel::{dbm_to_linear, sample_episode, split_episode, ChannelConfig};
use regnn_core::oracles::{fd_meta_gradient, grid_search_two_link};
use regnn_core::regnn::RegnnParams;
use regnn_core::rng::mix_seed;
use regnn_core::topology::{generate_drop, TopologyConfig};
use regnn_core::trainers::{
    adapt, evaluate, fomaml_meta_gradient, sgd_train, MetaAlgorithm, TaskData, TrainConfig,
};
use regnn_core::{Params64, TaskData64, TrainConfig64};

use regnn_harness::config::{ExperimentConfig, Scenario};
use regnn_harness::data::{build_meta_tasks, build_test_task, rep_seed};
use regnn_harness::methods::{adapt_and_eval, adapt_seed, draw_init, train_joint, train_meta};

fn channel_config(slots: usize, seed: u64) -> ChannelConfig {
    ChannelConfig {
        pathloss_exponent: 2.2,
        rayleigh_scale: 1.0,
        noise_power: dbm_to_linear(-70.0),
        max_power: dbm_to_linear(-35.0),
        slots,
        seed,
    }
}

fn two_link_task(seed: u64, radius: f64, n_train: usize, n_test: usize) -> TaskData64 {
    let topo = TopologyConfig::new(2, radius, seed).unwrap();
    let drop = generate_drop(&topo, 0).unwrap();
    let episode = sample_episode(&drop, &channel_config(n_train + n_test, mix_seed(seed, 1, 0))).unwrap();
    TaskData::new(split_episode(episode, n_train, n_test).unwrap())
}

fn live_init(layers: usize, order: usize, task: &TaskData64, seed: u64) -> Params64 {
    let slots: Vec<usize> = task.train_slots().iter().copied().take(4).collect();
    let probe = TrainConfig64 {
        learning_rate: 1e-3,
        steps: 1,
        batch_size: slots.len(),
        seed: 0,
        output_rate_scale: 1.0,
};
    for draw in 0.. {
        let phi = RegnnParams::init_uniform(layers, order, mix_seed(seed, 9, draw)).unwrap();
        if adapt(&phi, task, &slots, &probe).unwrap() != phi {
            return phi;
        }
    }
    unreachable!()
}

fn c3(args: &[String]) {
    let eta: f64 = args.first().map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(200);
    let radius: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2.0);
    let batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(200);
    let layers: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2);
    let order: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(4);
    let mut worst = f64::INFINITY;
    let t0 = Instant::now();
    let mut accepted = 0u64;
    let mut draw = 0u64;
    while accepted < 20 {
        let i = draw;
        draw += 1;
        let task = two_link_task(1000 + i, radius, 200, 0);
        let pmax = task.p_max()[0];
        let (best, powers) =
            grid_search_two_link(&task.episode.matrices, task.noise(), pmax, 101).unwrap();
        if powers[0] < 0.05 * pmax || powers[1] < 0.05 * pmax {
            println!("drop {i:2}: rejected, optimum silences a link");
            continue;
        }
        accepted += 1;
        let phi0 = live_init(layers, order, &task, 77 + i);
        let cfg = TrainConfig64 {
            learning_rate: eta,
            steps,
            batch_size: batch,
            seed: 5 + i,
            output_rate_scale: 1.0,
};
        let all: Vec<usize> = (0..200).collect();
        let trained = adapt(&phi0, &task, &all, &cfg).unwrap();
        let got = evaluate(&trained, &task, &all).unwrap();
        let ratio = got / best;
        worst = worst.min(ratio);
        println!(
            "drop {i:2}: grid {best:9.4} at [{:.2e},{:.2e}]  sgd {got:9.4}  ratio {ratio:.4}",
            powers[0] / pmax,
            powers[1] / pmax
        );
    }
    println!("worst ratio {worst:.4}  ({:.1?})", t0.elapsed());
}

fn c5(args: &[String]) {
    let inner_rate: f64 = args.first().map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let inner_steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3);
    let fd_step: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let t0 = Instant::now();
    let mut positive = 0;
    for i in 0..100u64 {
        let task = two_link_task(3000 + i, 2.0, 20, 20);
        let phi0 = RegnnParams::init_uniform(1, 2, mix_seed(31, 7, i)).unwrap();
        let inner = TrainConfig {
            learning_rate: inner_rate,
            steps: inner_steps,
            batch_size: task.train_slots().len(),
            seed: 11 + i,
            output_rate_scale: 1.0,
};
        let (gsum, _, _) = fomaml_meta_gradient(&phi0, &inner, &[&task]).unwrap();
        let fd = fd_meta_gradient(&phi0, &task, &inner, fd_step).unwrap();
        let dot: f64 = gsum
            .taps()
            .iter()
            .zip(&fd)
            .map(|(a, f)| a * f)
            .sum();
        if dot > 0.0 {
            positive += 1;
        } else {
            let fd_norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            println!("trial {i}: dot {dot:.3e}  fd norm {fd_norm:.3e}");
        }
    }
    println!("{positive}/100 positive  ({:.1?})", t0.elapsed());
}

#[allow(clippy::too_many_arguments)]
fn fig2_config(args: &[String]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.scenario = Scenario::DynamicSize;
    cfg.experiment.seed = 42;
    let get = |k: usize, d: f64| -> f64 { args.get(k).map(|s| s.parse().unwrap()).unwrap_or(d) };
    cfg.fomaml.outer_steps = get(0, 60.0) as usize;
    cfg.fomaml.meta_batch = get(1, 20.0) as usize;
    cfg.fomaml.inner_batch = get(2, 100.0) as usize;
    cfg.fomaml.inner_rate = get(3, 0.1);
    cfg.fomaml.outer_rate = get(4, 0.1);
    cfg.reptile.outer_steps = cfg.fomaml.outer_steps;
    cfg.reptile.meta_batch = cfg.fomaml.meta_batch;
    cfg.reptile.inner_batch = cfg.fomaml.inner_batch;
    cfg.reptile.inner_rate = cfg.fomaml.inner_rate;
    cfg.reptile.outer_rate = get(5, 0.5);
    cfg.joint.steps = get(6, 500.0) as usize;
    cfg.joint.rate = get(7, 0.1);
    cfg.joint.batch = get(8, 100.0) as usize;
    cfg.adaptation.rate = get(9, 0.1);
    cfg.network.interference_radius = get(10, 5.0);
    let kappa = get(11, 100.0);
    cfg.fomaml.output_scale = kappa;
    cfg.reptile.output_scale = kappa;
    cfg.joint.output_scale = kappa;
    cfg.adaptation.output_scale = kappa;
    cfg
}

fn fig2(args: &[String]) {
    let cfg = fig2_config(args);
    let rep: u64 = args.get(11).map(|s| s.parse().unwrap()).unwrap_or(0.0 as f64) as u64;
    let seed = rep_seed(cfg.experiment.seed, 0, rep);
    let radius = cfg.network.interference_radius;
    let pool = *cfg.sweep.samples.last().unwrap();

    let t0 = Instant::now();
    let tasks = build_meta_tasks(&cfg, radius, seed).unwrap();
    let test = build_test_task(&cfg, radius, seed, pool).unwrap();
    println!("data: {:.1?}", t0.elapsed());

    let phi0 = draw_init(&cfg, seed, &tasks[0]).unwrap();
    let t0 = Instant::now();
    let (fomaml, flog) = train_meta(&cfg, MetaAlgorithm::Fomaml, phi0.clone(), &tasks, seed).unwrap();
    println!(
        "fomaml train: {:.1?}  objective {:.3} -> {:.3}",
        t0.elapsed(),
        flog.first().unwrap().meta_objective,
        flog.last().unwrap().meta_objective
    );
    let t0 = Instant::now();
    let (reptile, rlog) = train_meta(&cfg, MetaAlgorithm::Reptile, phi0.clone(), &tasks, seed).unwrap();
    println!(
        "reptile train: {:.1?}  objective {:.3} -> {:.3}",
        t0.elapsed(),
        rlog.first().unwrap().meta_objective,
        rlog.last().unwrap().meta_objective
    );
    let t0 = Instant::now();
    let joint = train_joint(&cfg, &phi0, &tasks, seed).unwrap();
    println!("joint train: {:.1?}", t0.elapsed());

    let unadapted = adapt_and_eval(&joint, &test, 1, 0, 0.0, 1.0, 0).unwrap();
    println!("joint unadapted: {unadapted:.3}");
    let t0 = Instant::now();
    println!("samples     fomaml    reptile joint-adapt");
    for &s in &cfg.sweep.samples {
        let sd = adapt_seed(seed, s);
        let f = adapt_and_eval(&fomaml, &test, s, cfg.adaptation.fomaml_steps, cfg.adaptation.rate, 1.0, sd).unwrap();
        let r = adapt_and_eval(&reptile, &test, s, cfg.adaptation.reptile_steps, cfg.adaptation.rate, 1.0, sd).unwrap();
        let j = adapt_and_eval(&joint, &test, s, cfg.adaptation.joint_steps, cfg.adaptation.rate, 1.0, sd).unwrap();
        println!("{s:7} {f:10.3} {r:10.3} {j:10.3}");
    }
    println!("scoring: {:.1?}", t0.elapsed());
}

fn fig3(args: &[String]) {
    let mut cfg = fig2_config(args);
    cfg.experiment.scenario = Scenario::FixedSize;
    cfg.network.num_links = 10;
    let reps: u64 = args.get(11).map(|s| s.parse().unwrap()).unwrap_or(2.0 as f64) as u64;
    let t_all = Instant::now();
    println!("radius    fomaml-gain reptile-gain   (mean over {reps} reps)");
    for (gi, &radius) in cfg.sweep.radii.clone().iter().enumerate() {
        let mut fg = 0.0;
        let mut rg = 0.0;
        for rep in 0..reps {
            let seed = rep_seed(cfg.experiment.seed, 1 + gi as u64, rep);
            let tasks = build_meta_tasks(&cfg, radius, seed).unwrap();
            let test = build_test_task(&cfg, radius, seed, cfg.sweep.radius_samples).unwrap();
            let phi0 = draw_init(&cfg, seed, &tasks[0]).unwrap();
            let (fomaml, _) = train_meta(&cfg, MetaAlgorithm::Fomaml, phi0.clone(), &tasks, seed).unwrap();
            let (reptile, _) = train_meta(&cfg, MetaAlgorithm::Reptile, phi0.clone(), &tasks, seed).unwrap();
            let joint = train_joint(&cfg, &phi0, &tasks, seed).unwrap();
            let s = cfg.sweep.radius_samples;
            let sd = adapt_seed(seed, s);
            let f = adapt_and_eval(&fomaml, &test, s, cfg.adaptation.fomaml_steps, cfg.adaptation.rate, 1.0, sd).unwrap();
            let r = adapt_and_eval(&reptile, &test, s, cfg.adaptation.reptile_steps, cfg.adaptation.rate, 1.0, sd).unwrap();
            let j = adapt_and_eval(&joint, &test, s, cfg.adaptation.joint_steps, cfg.adaptation.rate, 1.0, sd).unwrap();
            fg += (f - j) / f;
            rg += (r - j) / r;
        }
        println!(
            "{radius:7.2} {:12.4} {:12.4}",
            fg / reps as f64,
            rg / reps as f64
        );
    }
    println!("total: {:.1?}", t_all.elapsed());
}

fn dead_rate() {
    let cfg = ExperimentConfig::default();
    let mut rejected = 0;
    let mut draws = 0;
    for rep in 0..200u64 {
        let seed = rep_seed(1234, 0, rep);
        let tasks = build_meta_tasks(&cfg, 5.0, seed).unwrap();
        let task = &tasks[0];
        let slots: Vec<usize> = task.train_slots().iter().copied().take(4).collect();
        let probe = TrainConfig64 {
            learning_rate: 1e-3,
            steps: 1,
            batch_size: slots.len(),
            seed: 0,
            output_rate_scale: 1.0,
};
        for draw in 0.. {
            draws += 1;
            let phi = RegnnParams::init_uniform(2, 4, mix_seed(seed, 3, draw)).unwrap();
            if adapt(&phi, task, &slots, &probe).unwrap() != phi {
                break;
            }
            rejected += 1;
        }
    }
    println!("{rejected} rejected / {draws} draws ({:.1}%)", 100.0 * rejected as f64 / draws as f64);
    let _ = sgd_train::<f64>;
}

fn diagnose(args: &[String]) {
    let i: u64 = args[0].parse().unwrap();
    let eta: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let steps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(200);
    let layers: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2);
    let order: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(4);
    let task = two_link_task(1000 + i, 2.0, 200, 0);
    let pmax = task.p_max()[0];
    let (best, powers) =
        grid_search_two_link(&task.episode.matrices, task.noise(), pmax, 101).unwrap();
    println!("grid {best:.4} at [{:.2},{:.2}] of pmax", powers[0] / pmax, powers[1] / pmax);
    let h = task.raw(0);
    println!(
        "slot0 raw H: [[{:.3e},{:.3e}],[{:.3e},{:.3e}]] noise {:.3e}",
        h.get(0, 0), h.get(0, 1), h.get(1, 0), h.get(1, 1), task.noise()
    );
    let phi0 = live_init(layers, order, &task, 77 + i);
    let all: Vec<usize> = (0..200).collect();
    let cfg = TrainConfig64 { learning_rate: eta, steps, batch_size: batch, seed: 5 + i,
output_rate_scale: 1.0,
};
    let trained = adapt(&phi0, &task, &all, &cfg).unwrap();
    println!("taps {:?}", trained.taps());
    let got = evaluate(&trained, &task, &all).unwrap();
    println!("sgd {got:.4} ratio {:.4}", got / best);
    for t in [0usize, 1, 2] {
        let tr = regnn_core::regnn::forward(&trained, task.input(t), task.p_max()).unwrap();
        let pre = &tr.pre_activations;
        println!(
            "slot {t}: hidden pre {:?} power frac {:?}",
            pre[0],
            tr.output.iter().map(|p| p / pmax).collect::<Vec<_>>()
        );
    }
}

fn ceiling(args: &[String]) {
    let mut cfg = fig2_config(&[]);
    cfg.network.interference_radius = args.get(0).map(|s| s.parse().unwrap()).unwrap_or(5.0);
    let rep: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0);
    let seed = rep_seed(cfg.experiment.seed, 0, rep);
    let radius = cfg.network.interference_radius;
    let pool = *cfg.sweep.samples.last().unwrap();

    let tasks = build_meta_tasks(&cfg, radius, seed).unwrap();
    let test = build_test_task(&cfg, radius, seed, pool).unwrap();
    let phi0 = draw_init(&cfg, seed, &tasks[0]).unwrap();
    let (fomaml, _) = train_meta(&cfg, MetaAlgorithm::Fomaml, phi0.clone(), &tasks, seed).unwrap();
    let joint = train_joint(&cfg, &phi0, &tasks, seed).unwrap();

    let unadapted = adapt_and_eval(&joint, &test, 1, 0, 0.0, 1.0, 0).unwrap();
    let meta_unadapted = adapt_and_eval(&fomaml, &test, 1, 0, 0.0, 1.0, 0).unwrap();
    println!("radius {radius} rep {rep}: joint unadapted {unadapted:.3}  fomaml unadapted {meta_unadapted:.3}");
    println!("budget x steps (joint init, rate {}):", cfg.adaptation.rate);
    println!("samples      5       50      500     2000");
    for &s in &[2usize, 10, 100, 1000] {
        let sd = adapt_seed(seed, s);
        let row: Vec<f64> = [5usize, 50, 500, 2000]
            .iter()
            .map(|&st| adapt_and_eval(&joint, &test, s, st, cfg.adaptation.rate, 1.0, sd).unwrap())
            .collect();
        println!("{s:7} {:7.3} {:7.3} {:7.3} {:7.3}", row[0], row[1], row[2], row[3]);
    }
    println!("same grid from fomaml init:");
    for &s in &[2usize, 10, 100, 1000] {
        let sd = adapt_seed(seed, s);
        let row: Vec<f64> = [5usize, 50, 500, 2000]
            .iter()
            .map(|&st| adapt_and_eval(&fomaml, &test, s, st, cfg.adaptation.rate, 1.0, sd).unwrap())
            .collect();
        println!("{s:7} {:7.3} {:7.3} {:7.3} {:7.3}", row[0], row[1], row[2], row[3]);
    }
}

fn uniform_rate(test: &regnn_core::trainers::TaskData<f64>, frac: f64) -> f64 {
    let p: Vec<f64> = test.p_max().iter().map(|&m| m * frac).collect();
    let slots = test.test_slots();
    let total: f64 = slots
        .iter()
        .map(|&t| regnn_core::objective::slot_sum_rate(test.raw(t), &p, test.noise()).unwrap())
        .sum();
    total / slots.len() as f64
}

fn baselines(args: &[String]) {
    let mut cfg = fig2_config(&[]);
    cfg.network.interference_radius = args.get(0).map(|s| s.parse().unwrap()).unwrap_or(5.0);
    let reps: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(16);
    let pool = *cfg.sweep.samples.last().unwrap();
    println!(
        "radius {} over {reps} reps:",
        cfg.network.interference_radius
    );
    println!("rep   K   full   half  best@frac");
    let mut mean_full = 0.0;
    for rep in 0..reps {
        let seed = rep_seed(cfg.experiment.seed, 0, rep);
        let test = build_test_task(&cfg, cfg.network.interference_radius, seed, pool).unwrap();
        let full = uniform_rate(&test, 1.0);
        let half = uniform_rate(&test, 0.5);
        let best = (1..=20)
            .map(|i| {
                let f = i as f64 / 20.0;
                (f, uniform_rate(&test, f))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        mean_full += full;
        println!(
            "{rep:3} {:3} {full:7.2} {half:7.2} {:7.2}@{:.2}",
            test.num_links(),
            best.1,
            best.0
        );
    }
    println!("mean full-power sum rate: {:.2}", mean_full / reps as f64);
}

fn anchor(args: &[String]) {
    // args: radius reps outer_steps inner_rate joint_train_steps adapt_rate adapt_steps
    let get = |k: usize, d: f64| -> f64 { args.get(k).map(|s| s.parse().unwrap()).unwrap_or(d) };
    let mut cfg = fig2_config(&[]);
    cfg.network.interference_radius = get(0, 16.0);
    let reps = get(1, 8.0) as u64;
    cfg.fomaml.outer_steps = get(2, 60.0) as usize;
    cfg.reptile.outer_steps = cfg.fomaml.outer_steps;
    cfg.fomaml.inner_rate = get(3, 1.0);
    cfg.reptile.inner_rate = cfg.fomaml.inner_rate;
    cfg.joint.steps = get(4, 500.0) as usize;
    let adapt_rate = get(5, cfg.fomaml.inner_rate);
    let adapt_steps = get(6, 5.0) as usize;
    cfg.fomaml.outer_rate = get(7, cfg.fomaml.outer_rate);
    cfg.reptile.outer_rate = get(8, cfg.reptile.outer_rate);
    let kappa = get(9, 100.0);
    cfg.fomaml.output_scale = kappa;
    cfg.reptile.output_scale = kappa;
    cfg.adaptation.output_scale = kappa;
    cfg.joint.rate = get(10, cfg.fomaml.outer_rate);
    cfg.fomaml.inner_batch = get(11, cfg.fomaml.inner_batch as f64) as usize;
    cfg.reptile.inner_batch = cfg.fomaml.inner_batch;
    cfg.joint.batch = 400;
    cfg.joint.output_scale = kappa;
    let radius = cfg.network.interference_radius;
    let pool = *cfg.sweep.samples.last().unwrap();
    let t0 = Instant::now();
    println!(
        "radius {radius} outer {} inner_rate {} joint_steps {} adapt {adapt_steps}@{adapt_rate}",
        cfg.fomaml.outer_steps, cfg.fomaml.inner_rate, cfg.joint.steps
    );
    println!("rep   K   full    j0      j@6     f0      f@6     r0      r@6");
    let mut m = [0.0f64; 7];
    for rep in 0..reps {
        let seed = rep_seed(cfg.experiment.seed, 0, rep);
        let tasks = build_meta_tasks(&cfg, radius, seed).unwrap();
        let test = build_test_task(&cfg, radius, seed, pool).unwrap();
        let phi0 = draw_init(&cfg, seed, &tasks[0]).unwrap();
        let (fomaml, _) = train_meta(&cfg, MetaAlgorithm::Fomaml, phi0.clone(), &tasks, seed).unwrap();
        let (reptile, _) = train_meta(&cfg, MetaAlgorithm::Reptile, phi0.clone(), &tasks, seed).unwrap();
        let joint = train_joint(&cfg, &phi0, &tasks, seed).unwrap();
        let full = uniform_rate(&test, 1.0);
        let sd6 = adapt_seed(seed, 6);
        let row = [
            full,
            adapt_and_eval(&joint, &test, 1, 0, 0.0, 1.0, 0).unwrap(),
            adapt_and_eval(&joint, &test, 6, adapt_steps, adapt_rate, cfg.adaptation.output_scale, sd6).unwrap(),
            adapt_and_eval(&fomaml, &test, 1, 0, 0.0, 1.0, 0).unwrap(),
            adapt_and_eval(&fomaml, &test, 6, adapt_steps, adapt_rate, cfg.adaptation.output_scale, sd6).unwrap(),
            adapt_and_eval(&reptile, &test, 1, 0, 0.0, 1.0, 0).unwrap(),
            adapt_and_eval(&reptile, &test, 6, adapt_steps, adapt_rate, cfg.adaptation.output_scale, sd6).unwrap(),
        ];
        for (acc, v) in m.iter_mut().zip(row) {
            *acc += v;
        }
        println!(
            "{rep:3} {:3} {:6.2} {:7.3} {:7.3} {:7.3} {:7.3} {:7.3} {:7.3}",
            test.num_links(),
            row[0],
            row[1],
            row[2],
            row[3],
            row[4],
            row[5],
            row[6]
        );
    }
    let n = reps as f64;
    println!(
        "means: full {:.2}  j0 {:.2}  j@6 {:.2}  f0 {:.2}  f@6 {:.2}  r0 {:.2}  r@6 {:.2}  ({:.1?})",
        m[0] / n,
        m[1] / n,
        m[2] / n,
        m[3] / n,
        m[4] / n,
        m[5] / n,
        m[6] / n,
        t0.elapsed()
    );
}

fn vitality(phi: &Params64, task: &regnn_core::trainers::TaskData<f64>, slots: &[usize]) -> (f64, f64) {
    // (fraction of hidden units alive, mean |output frac - 0.5|)
    let mut alive = 0usize;
    let mut total = 0usize;
    let mut dev = 0.0;
    let mut n = 0usize;
    for &t in slots {
        let tr = regnn_core::regnn::forward(phi, task.input(t), task.p_max()).unwrap();
        for &v in &tr.pre_activations[0] {
            total += 1;
            if v > 0.0 {
                alive += 1;
            }
        }
        for (p, m) in tr.output.iter().zip(task.p_max()) {
            dev += (p / m - 0.5).abs();
            n += 1;
        }
    }
    (alive as f64 / total as f64, dev / n as f64)
}

fn watch_death(args: &[String]) {
    let get = |k: usize, d: f64| -> f64 { args.get(k).map(|s| s.parse().unwrap()).unwrap_or(d) };
    let mut cfg = fig2_config(&[]);
    cfg.network.interference_radius = get(0, 16.0);
    let rep = get(1, 5.0) as u64;
    let rate = get(2, 0.1);
    let chunks = get(3, 15.0) as usize;
    let kappa = get(4, 1.0);
    let steps_per_chunk = get(5, 1.0) as usize;
    let batch = get(6, 2000.0) as usize;
    let seed = rep_seed(cfg.experiment.seed, 0, rep);
    let tasks = build_meta_tasks(&cfg, cfg.network.interference_radius, seed).unwrap();
    let test = build_test_task(&cfg, cfg.network.interference_radius, seed, 100).unwrap();
    let mut phi = draw_init(&cfg, seed, &tasks[0]).unwrap();
    let probe_slots: Vec<usize> = test.test_slots().iter().copied().take(8).collect();
    let (a, d) = vitality(&phi, &test, &probe_slots);
    println!("init: alive {a:.2} dev {d:.3}  taps {:?}", phi.taps().iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>());
    let items: Vec<(usize, usize)> = tasks
        .iter()
        .enumerate()
        .flat_map(|(ti, task)| task.train_slots().iter().map(move |&t| (ti, t)))
        .collect();
    let refs: Vec<&regnn_core::trainers::TaskData<f64>> = tasks.iter().collect();
    for chunk in 0..chunks {
        let config = TrainConfig64 {
            learning_rate: rate,
            steps: steps_per_chunk,
            batch_size: batch.min(items.len()),
            seed: mix_seed(seed, 90, chunk as u64),
            output_rate_scale: kappa,
        };
        phi = regnn_core::trainers::sgd_train_multi(&phi, &refs, &items, &config).unwrap();
        let (a, d) = vitality(&phi, &test, &probe_slots);
        let score = evaluate(&phi, &test, test.test_slots()).unwrap();
        println!(
            "step {chunk:3}: alive {a:.2} dev {d:.3} score {score:.3}  taps {:?}",
            phi.taps().iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>()
        );
    }
}

fn race(args: &[String]) {
    // hand-rolled two-rate loop: layer 0 at r1, layer 1 at r2
    let get = |k: usize, d: f64| -> f64 { args.get(k).map(|s| s.parse().unwrap()).unwrap_or(d) };
    let mut cfg = fig2_config(&[]);
    cfg.network.interference_radius = get(0, 16.0);
    let rep = get(1, 5.0) as u64;
    let r1 = get(2, 0.1);
    let r2 = get(3, 10.0);
    let chunks = get(4, 20.0) as usize;
    let steps_per_chunk = get(5, 10.0) as usize;
    let batch = get(6, 200.0) as usize;
    let seed = rep_seed(cfg.experiment.seed, 0, rep);
    let tasks = build_meta_tasks(&cfg, cfg.network.interference_radius, seed).unwrap();
    let test = build_test_task(&cfg, cfg.network.interference_radius, seed, 100).unwrap();
    let mut phi = draw_init(&cfg, seed, &tasks[0]).unwrap();
    let probe_slots: Vec<usize> = test.test_slots().iter().copied().take(8).collect();
    let (a, d) = vitality(&phi, &test, &probe_slots);
    let full = uniform_rate(&test, 1.0);
    let half = uniform_rate(&test, 0.5);
    println!("K {} full {full:.2} half {half:.2}", test.num_links());
    println!("init: alive {a:.2} dev {d:.3}  taps {:?}", phi.taps().iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>());
    let items: Vec<(usize, usize)> = tasks
        .iter()
        .enumerate()
        .flat_map(|(ti, task)| task.train_slots().iter().map(move |&t| (ti, t)))
        .collect();
    let order = phi.order();
    let mut pick_state = mix_seed(seed, 91, 0);
    let mut pick = move || {
        // splitmix64 step, plenty for probe sampling
        pick_state = pick_state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = pick_state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    };
    for chunk in 0..chunks {
        for _ in 0..steps_per_chunk {
            let mut gsum = phi.zeros_like();
            for _ in 0..batch {
                let (ti, t) = items[(pick() % items.len() as u64) as usize];
                let task = &tasks[ti];
                let trace = regnn_core::regnn::forward(&phi, task.input(t), task.p_max()).unwrap();
                let gp = regnn_core::objective::rate_gradient(task.raw(t), &trace.output, task.noise()).unwrap();
                let g = regnn_core::regnn::backward(&trace, &phi, task.input(t), &gp).unwrap();
                gsum.add_assign(&g);
            }
            let scale = 1.0 / batch as f64;
            for (i, tap) in phi.taps_mut().iter_mut().enumerate() {
                let rate = if i < order { r1 } else { r2 };
                *tap += rate * scale * gsum.taps()[i];
            }
        }
        let (a, d) = vitality(&phi, &test, &probe_slots);
        let score = evaluate(&phi, &test, test.test_slots()).unwrap();
        println!(
            "chunk {chunk:3}: alive {a:.2} dev {d:.3} score {score:.3}  taps {:?}",
            phi.taps().iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>()
        );
    }
}

fn headroom(args: &[String]) {
    // per rep: full power, pooled joint, single-task ceiling on the test task
    let get = |k: usize, d: f64| -> f64 { args.get(k).map(|s| s.parse().unwrap()).unwrap_or(d) };
    let mut cfg = fig2_config(&[]);
    cfg.network.interference_radius = get(0, 16.0);
    let reps = get(1, 4.0) as u64;
    let rate = get(2, 3.0);
    let kappa = get(3, 100.0);
    let joint_steps = get(4, 600.0) as usize;
    let solo_steps = get(5, 1500.0) as usize;
    cfg.joint.rate = rate;
    cfg.joint.steps = joint_steps;
    cfg.joint.batch = 400;
    cfg.joint.output_scale = kappa;
    let radius = cfg.network.interference_radius;
    println!("radius {radius} rate {rate} kappa {kappa} joint {joint_steps} solo {solo_steps}");
    println!("rep   K   full    half    joint   solo    solo-full");
    let mut m = [0.0f64; 5];
    for rep in 0..reps {
        let seed = rep_seed(cfg.experiment.seed, 0, rep);
        let tasks = build_meta_tasks(&cfg, radius, seed).unwrap();
        let test = build_test_task(&cfg, radius, seed, 1000).unwrap();
        let phi0 = draw_init(&cfg, seed, &tasks[0]).unwrap();
        let joint = train_joint(&cfg, &phi0, &tasks, seed).unwrap();
        let solo_cfg = TrainConfig64 {
            learning_rate: rate,
            steps: solo_steps,
            batch_size: 200,
            seed: mix_seed(seed, 77, 0),
            output_rate_scale: kappa,
        };
        let solo = adapt(&phi0, &test, test.train_slots(), &solo_cfg).unwrap();
        let row = [
            uniform_rate(&test, 1.0),
            uniform_rate(&test, 0.5),
            evaluate(&joint, &test, test.test_slots()).unwrap(),
            evaluate(&solo, &test, test.test_slots()).unwrap(),
            0.0,
        ];
        for (acc, v) in m.iter_mut().zip(row) {
            *acc += v;
        }
        println!(
            "{rep:3} {:3} {:6.2} {:7.3} {:7.3} {:7.3} {:+7.3}",
            test.num_links(),
            row[0],
            row[1],
            row[2],
            row[3],
            row[3] - row[0]
        );
    }
    let n = reps as f64;
    println!(
        "means: full {:.2} half {:.2} joint {:.2} solo {:.2} solo-full {:+.3}",
        m[0] / n,
        m[1] / n,
        m[2] / n,
        m[3] / n,
        (m[3] - m[0]) / n
    );
}

fn stake(args: &[String]) {
    // per-slot oracles vs full power: greedy on/off sweeps, then projected
    // gradient ascent from the greedy point
    let get = |k: usize, d: f64| -> f64 { args.get(k).map(|s| s.parse().unwrap()).unwrap_or(d) };
    let mut cfg = fig2_config(&[]);
    cfg.network.interference_radius = get(0, 64.0);
    let rep = get(1, 2.0) as u64;
    let n_slots = get(2, 100.0) as usize;
    let seed = rep_seed(cfg.experiment.seed, 0, rep);
    let test = build_test_task(&cfg, cfg.network.interference_radius, seed, 100).unwrap();
    let k = test.num_links();
    let pmax = test.p_max()[0];
    let noise = test.noise();
    let mut full_sum = 0.0;
    let mut greedy_sum = 0.0;
    let mut pga_sum = 0.0;
    let slots: Vec<usize> = test.test_slots().iter().copied().take(n_slots).collect();
    for &t in &slots {
        let h = test.raw(t);
        let full = vec![pmax; k];
        full_sum += regnn_core::objective::slot_sum_rate(h, &full, noise).unwrap();
        let mut p = full.clone();
        let mut best = regnn_core::objective::slot_sum_rate(h, &p, noise).unwrap();
        for _ in 0..6 {
            let mut improved = false;
            for i in 0..k {
                let old = p[i];
                p[i] = if old > 0.0 { 0.0 } else { pmax };
                let v = regnn_core::objective::slot_sum_rate(h, &p, noise).unwrap();
                if v > best {
                    best = v;
                    improved = true;
                } else {
                    p[i] = old;
                }
            }
            if !improved {
                break;
            }
        }
        greedy_sum += best;
        // PGA from the greedy point, step sized to the power scale
        let mut q = p.clone();
        for _ in 0..200 {
            let g = regnn_core::objective::rate_gradient(h, &q, noise).unwrap();
            let gmax = g.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            if gmax == 0.0 {
                break;
            }
            let step = 0.05 * pmax / gmax;
            for (qi, gi) in q.iter_mut().zip(&g) {
                *qi = (*qi + step * gi).clamp(0.0, pmax);
            }
        }
        pga_sum += regnn_core::objective::slot_sum_rate(h, &q, noise).unwrap();
    }
    let n = slots.len() as f64;
    println!(
        "radius {} rep {rep} K {k}: full {:.3} greedy {:.3} (+{:.1}%) pga {:.3} (+{:.1}%)",
        cfg.network.interference_radius,
        full_sum / n,
        greedy_sum / n,
        100.0 * (greedy_sum - full_sum) / full_sum,
        pga_sum / n,
        100.0 * (pga_sum - full_sum) / full_sum
    );
}

fn express(args: &[String]) {
    // cross-entropy search over the 8 taps: what can the architecture
    // itself capture of the per-slot stake, training dynamics aside
    let get = |k: usize, d: f64| -> f64 { args.get(k).map(|s| s.parse().unwrap()).unwrap_or(d) };
    let mut cfg = fig2_config(&[]);
    cfg.network.interference_radius = get(0, 16.0);
    let rep = get(1, 2.0) as u64;
    let iters = get(2, 30.0) as usize;
    let pop = get(3, 120.0) as usize;
    let elite = get(4, 20.0) as usize;
    let n_slots = get(5, 100.0) as usize;
    let seed = rep_seed(cfg.experiment.seed, 0, rep);
    let test = build_test_task(&cfg, cfg.network.interference_radius, seed, 200).unwrap();
    let k = test.num_links();
    let pmax = test.p_max()[0];
    let fit_slots: Vec<usize> = test.train_slots().iter().copied().take(n_slots).collect();
    let full = {
        let p = vec![pmax; k];
        let mut s = 0.0;
        for &t in &fit_slots {
            s += regnn_core::objective::slot_sum_rate(test.raw(t), &p, test.noise()).unwrap();
        }
        s / fit_slots.len() as f64
    };
    let dim = cfg.model.layers * cfg.model.order;
    let l1_mean = get(6, 0.0);
    let l2_mean = get(7, 0.0);
    let std0 = get(8, 1.5);
    let mut mean = vec![l1_mean; dim];
    for d in cfg.model.order..dim {
        mean[d] = l2_mean;
    }
    let mut std = vec![std0; dim];
    let mut state = mix_seed(seed, 0xce, 0x111);
    let mut gauss = move || {
        // Box-Muller on splitmix64 uniforms
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        let u1 = ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64;
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut w = state;
        w = (w ^ (w >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        w = (w ^ (w >> 27)).wrapping_mul(0x94D049BB133111EB);
        let u2 = ((w ^ (w >> 31)) >> 11) as f64 / (1u64 << 53) as f64;
        (-2.0 * u1.max(1e-300).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut best_score = f64::NEG_INFINITY;
    let mut best_taps = mean.clone();
    for it in 0..iters {
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(pop);
        for _ in 0..pop {
            let taps: Vec<f64> =
                (0..dim).map(|d| mean[d] + std[d] * gauss()).collect();
            let mut params =
                regnn_core::regnn::RegnnParams::zeros(cfg.model.layers, cfg.model.order)
                    .unwrap();
            params.taps_mut().copy_from_slice(&taps);
            let score = regnn_core::trainers::evaluate(&params, &test, &fit_slots).unwrap();
            scored.push((score, taps));
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        if scored[0].0 > best_score {
            best_score = scored[0].0;
            best_taps = scored[0].1.clone();
        }
        for d in 0..dim {
            let m: f64 = scored[..elite].iter().map(|(_, t)| t[d]).sum::<f64>() / elite as f64;
            let v: f64 = scored[..elite].iter().map(|(_, t)| (t[d] - m).powi(2)).sum::<f64>()
                / elite as f64;
            mean[d] = m;
            std[d] = (v.sqrt()).max(0.05);
        }
        if it % 5 == 0 || it == iters - 1 {
            println!(
                "  it {it:2} best {best_score:.3} (full {full:.3}, +{:.1}%) elite_mean {:.3}",
                100.0 * (best_score - full) / full,
                scored[..elite].iter().map(|(s, _)| s).sum::<f64>() / elite as f64
            );
        }
    }
    let mut params =
        regnn_core::regnn::RegnnParams::zeros(cfg.model.layers, cfg.model.order).unwrap();
    params.taps_mut().copy_from_slice(&best_taps);
    let test_score = regnn_core::trainers::evaluate(&params, &test, test.test_slots()).unwrap();
    let full_test = {
        let p = vec![pmax; k];
        let s: f64 = test
            .test_slots()
            .iter()
            .map(|&t| regnn_core::objective::slot_sum_rate(test.raw(t), &p, test.noise()).unwrap())
            .sum();
        s / test.test_slots().len() as f64
    };
    println!(
        "radius {} rep {rep} K {k}: CEM train {best_score:.3} vs full {full:.3} | test {test_score:.3} vs full {full_test:.3} (+{:.1}%)",
        cfg.network.interference_radius,
        100.0 * (test_score - full_test) / full_test
    );
    println!("  taps {:?}", best_taps.iter().map(|t| (t * 1000.0).round() / 1000.0).collect::<Vec<_>>());
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (verb, rest) = args.split_first().expect("verb required");
    match verb.as_str() {
        "c3" => c3(rest),
        "c5" => c5(rest),
        "fig2" => fig2(rest),
        "fig3" => fig3(rest),
        "ceil" => ceiling(rest),
        "base" => baselines(rest),
        "anchor" => anchor(rest),
        "dead" => dead_rate(),
        "watch" => watch_death(rest),
        "race" => race(rest),
        "head" => headroom(rest),
        "stake" => stake(rest),
        "express" => express(rest),
        "diag" => diagnose(rest),
        other => panic!("unknown probe {other}"),
    }
}
