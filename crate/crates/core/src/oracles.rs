//! Independent slow-path checks used by the test suites: central finite
//! differences and exhaustive grid search. Everything here runs in `f64`;
//! finite differencing needs the headroom.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::objective::{rate_gradient, slot_sum_rate};
use crate::regnn::{backward, forward, ForwardTrace, RegnnParams};
use crate::trainers::{adapt, evaluate, TaskData, TrainConfig};

/// Analytic tap gradient of one slot's sum rate: backprop of the rate
/// through the policy. The fast path that [`fd_tap_gradient`] checks.
pub fn slot_tap_gradient(
    params: &RegnnParams<f64>,
    input: &Matrix<f64>,
    raw: &Matrix<f64>,
    p_max: &[f64],
    noise: f64,
) -> Result<RegnnParams<f64>> {
    let trace = forward(params, input, p_max)?;
    let grad_p = rate_gradient(raw, &trace.output, noise)?;
    backward(&trace, params, input, &grad_p)
}

/// Central finite differences of one slot's sum rate with respect to every
/// tap, in `taps()` order.
pub fn fd_tap_gradient(
    params: &RegnnParams<f64>,
    input: &Matrix<f64>,
    raw: &Matrix<f64>,
    p_max: &[f64],
    noise: f64,
    step: f64,
) -> Result<Vec<f64>> {
    let objective = |p: &RegnnParams<f64>| -> Result<f64> {
        let trace = forward(p, input, p_max)?;
        slot_sum_rate(raw, &trace.output, noise)
    };
    let mut grad = Vec::with_capacity(params.taps().len());
    for i in 0..params.taps().len() {
        let mut plus = params.clone();
        plus.taps_mut()[i] += step;
        let mut minus = params.clone();
        minus.taps_mut()[i] -= step;
        grad.push((objective(&plus)? - objective(&minus)?) / (2.0 * step));
    }
    Ok(grad)
}

/// Central finite differences of a slot's sum rate with respect to the
/// transmit powers.
pub fn fd_power_gradient(
    h: &Matrix<f64>,
    powers: &[f64],
    noise: f64,
    step: f64,
) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(powers.len());
    for i in 0..powers.len() {
        let mut plus = powers.to_vec();
        plus[i] += step;
        let mut minus = powers.to_vec();
        minus[i] -= step;
        grad.push((slot_sum_rate(h, &plus, noise)? - slot_sum_rate(h, &minus, noise)?) / (2.0 * step));
    }
    Ok(grad)
}

/// Smallest |pre-activation| across hidden layers. Near-zero margins put the
/// objective on a ReLU kink, where finite differences are meaningless;
/// callers re-draw such instances.
pub fn relu_margin(trace: &ForwardTrace<f64>) -> f64 {
    let hidden = trace.pre_activations.len().saturating_sub(1);
    trace.pre_activations[..hidden]
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, &v| m.min(v.abs()))
}

/// Exhaustive search over constant power pairs on a `points`-per-axis grid
/// spanning `[0, p_max]`, maximizing the mean sum rate over `slots`.
/// Returns the best mean rate and the powers attaining it (ties keep the
/// lexicographically smallest pair).
pub fn grid_search_two_link(
    slots: &[Matrix<f64>],
    noise: f64,
    p_max: f64,
    points: usize,
) -> Result<(f64, [f64; 2])> {
    if slots.is_empty() {
        return Err(Error::InsufficientSlots {
            needed: 1,
            available: 0,
        });
    }
    if points < 2 {
        return Err(Error::Config("grid needs at least 2 points per axis".into()));
    }
    if !(p_max > 0.0) || !(noise > 0.0) {
        return Err(Error::Config("grid search needs p_max > 0 and noise > 0".into()));
    }
    for h in slots {
        if h.n() != 2 {
            return Err(Error::Dimension(format!(
                "grid search covers 2-link networks, got {}",
                h.n()
            )));
        }
    }
    // Squared gains per slot: own 0, cross into rx 0, own 1, cross into rx 1.
    let gains: Vec<[f64; 4]> = slots
        .iter()
        .map(|h| {
            [
                h.get(0, 0) * h.get(0, 0),
                h.get(1, 0) * h.get(1, 0),
                h.get(1, 1) * h.get(1, 1),
                h.get(0, 1) * h.get(0, 1),
            ]
        })
        .collect();
    let scale = 1.0 / (std::f64::consts::LN_2 * slots.len() as f64);
    let mut best_rate = f64::NEG_INFINITY;
    let mut best_powers = [0.0, 0.0];
    for i in 0..points {
        let p0 = p_max * i as f64 / (points - 1) as f64;
        for j in 0..points {
            let p1 = p_max * j as f64 / (points - 1) as f64;
            let mut total = 0.0;
            for g in &gains {
                total += (g[0] * p0 / (noise + g[1] * p1)).ln_1p()
                    + (g[2] * p1 / (noise + g[3] * p0)).ln_1p();
            }
            let rate = total * scale;
            if rate > best_rate {
                best_rate = rate;
                best_powers = [p0, p1];
            }
        }
    }
    Ok((best_rate, best_powers))
}

/// Central finite differences of the post-adaptation test objective with
/// respect to the initialization: the exact meta-gradient, differentiated
/// through the inner loop.
///
/// The inner loop's batch schedule does not depend on the parameters, so
/// both sides of each difference adapt along the same schedule; use a
/// full-batch `inner` config when the result will be compared against
/// gradients computed through a different adaptation entry point.
pub fn fd_meta_gradient(
    phi0: &RegnnParams<f64>,
    task: &TaskData<f64>,
    inner: &TrainConfig<f64>,
    step: f64,
) -> Result<Vec<f64>> {
    let objective = |p: &RegnnParams<f64>| -> Result<f64> {
        let adapted = adapt(p, task, task.train_slots(), inner)?;
        evaluate(&adapted, task, task.test_slots())
    };
    let mut grad = Vec::with_capacity(phi0.taps().len());
    for i in 0..phi0.taps().len() {
        let mut plus = phi0.clone();
        plus.taps_mut()[i] += step;
        let mut minus = phi0.clone();
        minus.taps_mut()[i] -= step;
        grad.push((objective(&plus)? - objective(&minus)?) / (2.0 * step));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_episode, split_episode, ChannelConfig};
    use crate::regnn::normalize_channel;
    use crate::topology::{generate_drop, TopologyConfig};
    use crate::trainers::fomaml_meta_gradient;

    #[test]
    fn analytic_tap_gradients_match_finite_differences() {
        let mut checked = 0;
        let mut attempt = 0u64;
        while checked < 10 {
            attempt += 1;
            let k = 2 + (attempt as usize % 5);
            let drop =
                generate_drop(&TopologyConfig::new(k, 4.0, attempt).unwrap(), 0).unwrap();
            let cfg = ChannelConfig {
                slots: 1,
                seed: attempt,
                ..ChannelConfig::default()
            };
            let ep = sample_episode::<f64>(&drop, &cfg).unwrap();
            let (input, _) = normalize_channel(&ep.matrices[0]);
            let raw = &ep.matrices[0];
            let p_max = ep.max_power_vec();
            let params = RegnnParams::init_uniform(2, 4, attempt).unwrap();
            let trace = forward(&params, &input, &p_max).unwrap();
            if relu_margin(&trace) < 1e-2 {
                continue;
            }
            let analytic =
                slot_tap_gradient(&params, &input, raw, &p_max, ep.noise()).unwrap();
            let fd = fd_tap_gradient(&params, &input, raw, &p_max, ep.noise(), 1e-4).unwrap();
            let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 3e-4 {
                continue;
            }
            let dist: f64 = analytic
                .taps()
                .iter()
                .zip(&fd)
                .map(|(a, f)| (a - f) * (a - f))
                .sum::<f64>()
                .sqrt();
            assert!(dist / norm < 1e-5, "gradient error {dist} on norm {norm}");
            checked += 1;
        }
    }

    #[test]
    fn interference_free_grid_peaks_at_full_power() {
        let h = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let p_max = 0.5;
        let noise = 0.1;
        let (rate, powers) = grid_search_two_link(&[h.clone()], noise, p_max, 11).unwrap();
        assert_eq!(powers, [p_max, p_max]);
        let expected = slot_sum_rate(&h, &[p_max, p_max], noise).unwrap();
        assert!((rate - expected).abs() < 1e-12);
    }

    #[test]
    fn strong_interference_grid_silences_one_link() {
        let h = Matrix::from_rows(&[vec![1.0, 10.0], vec![10.0, 1.0]]).unwrap();
        let (rate, powers) = grid_search_two_link(&[h], 1.0, 1.0, 11).unwrap();
        assert!((rate - 1.0).abs() < 1e-12, "best mean rate {rate}");
        assert!(powers.contains(&0.0) && powers.contains(&1.0));
    }

    #[test]
    fn grid_search_rejects_degenerate_setups() {
        let h3 = Matrix::<f64>::identity(3);
        assert!(grid_search_two_link(&[h3], 1.0, 1.0, 11).is_err());
        assert!(grid_search_two_link(&[], 1.0, 1.0, 11).is_err());
        let h2 = Matrix::<f64>::identity(2);
        assert!(grid_search_two_link(&[h2], 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn first_order_and_exact_meta_gradients_agree_in_direction() {
        let drop = generate_drop(&TopologyConfig::new(2, 4.0, 5).unwrap(), 0).unwrap();
        let cfg = ChannelConfig {
            slots: 10,
            seed: 5,
            ..ChannelConfig::default()
        };
        let ep = split_episode(sample_episode::<f64>(&drop, &cfg).unwrap(), 5, 5).unwrap();
        let task = TaskData::new(ep);
        let phi0 = RegnnParams::init_uniform(1, 2, 5).unwrap();
        let inner = TrainConfig {
            learning_rate: 0.05,
            steps: 1,
            batch_size: 5,
            seed: 0,
            output_rate_scale: 1.0,
};
        let (gsum, _, _) = fomaml_meta_gradient(&phi0, &inner, &[&task]).unwrap();
        let exact = fd_meta_gradient(&phi0, &task, &inner, 1e-5).unwrap();
        let dot: f64 = gsum.taps().iter().zip(&exact).map(|(a, b)| a * b).sum();
        assert!(dot > 0.0, "first-order and exact meta-gradients disagree: {dot}");
    }
}
