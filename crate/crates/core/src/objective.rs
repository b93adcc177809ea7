//! Per-link achievable rates, slot-averaged sum rate, and the exact gradient
//! of the sum rate with respect to the power vector.
//!
//! Rates are reported in bits throughout (log base 2); the matching `1/ln 2`
//! factor lives inside the gradients. Slot aggregates are averages, not
//! sums, so learning rates are insensitive to the slot count.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::num::{real, Real};

/// Sum-rate summary for a slot sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport<F> {
    /// Per-link rates averaged over slots, bits.
    pub per_link_rates: Vec<F>,
    /// Mean over slots of the per-slot sum rate, bits.
    pub sum_rate: F,
    /// Sum rate of each slot, bits.
    pub per_slot_sum_rates: Vec<F>,
}

fn ln2<F: Real>() -> F {
    real(std::f64::consts::LN_2)
}

fn check_powers<F: Real>(p: &[F]) -> Result<()> {
    if p.iter().any(|v| *v < F::zero()) {
        return Err(Error::Domain("negative transmit power".into()));
    }
    Ok(())
}

/// Achievable rate of link `k`: `log2(1 + S / (noise + I))` where `S` is the
/// direct-channel power and `I` sums the squared column-`k` interferers.
pub fn link_rate<F: Real>(h: &Matrix<F>, p: &[F], k: usize, noise: F) -> Result<F> {
    if h.n() != p.len() || k >= h.n() {
        return Err(Error::Dimension(format!(
            "matrix {0}x{0}, power vector {1}, link {k}",
            h.n(),
            p.len()
        )));
    }
    if !(noise > F::zero()) {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    check_powers(p)?;
    Ok(link_rate_unchecked(h, p, k, noise))
}

fn link_rate_unchecked<F: Real>(h: &Matrix<F>, p: &[F], k: usize, noise: F) -> F {
    let own = h.get(k, k);
    let signal = own * own * p[k];
    let mut denom = noise;
    for j in 0..h.n() {
        if j != k {
            let g = h.get(j, k);
            denom += g * g * p[j];
        }
    }
    (signal / denom).ln_1p() / ln2()
}

/// Sum of all link rates for one slot.
pub fn slot_sum_rate<F: Real>(h: &Matrix<F>, p: &[F], noise: F) -> Result<F> {
    if h.n() != p.len() {
        return Err(Error::Dimension(format!(
            "matrix {0}x{0}, power vector {1}",
            h.n(),
            p.len()
        )));
    }
    check_powers(p)?;
    let mut total = F::zero();
    for k in 0..h.n() {
        total += link_rate_unchecked(h, p, k, noise);
    }
    Ok(total)
}

/// Slot-averaged sum rate of a policy's outputs over a slot sequence.
pub fn sum_rate<F: Real>(
    h_slots: &[Matrix<F>],
    policy_outputs: &[Vec<F>],
    noise: F,
) -> Result<RateReport<F>> {
    if h_slots.is_empty() {
        return Err(Error::InsufficientSlots {
            needed: 1,
            available: 0,
        });
    }
    if h_slots.len() != policy_outputs.len() {
        return Err(Error::Dimension(format!(
            "{} slot matrices but {} policy outputs",
            h_slots.len(),
            policy_outputs.len()
        )));
    }
    let k_links = h_slots[0].n();
    let mut per_link = vec![F::zero(); k_links];
    let mut per_slot = Vec::with_capacity(h_slots.len());
    for (h, p) in h_slots.iter().zip(policy_outputs) {
        if h.n() != k_links || p.len() != k_links {
            return Err(Error::Dimension("ragged slot sequence".into()));
        }
        check_powers(p)?;
        let mut slot_total = F::zero();
        for (k, acc) in per_link.iter_mut().enumerate() {
            let r = link_rate_unchecked(h, p, k, noise);
            *acc += r;
            slot_total += r;
        }
        per_slot.push(slot_total);
    }
    let count = real::<F>(h_slots.len() as f64);
    for acc in per_link.iter_mut() {
        *acc /= count;
    }
    let sum_rate = per_slot.iter().copied().sum::<F>() / count;
    Ok(RateReport {
        per_link_rates: per_link,
        sum_rate,
        per_slot_sum_rates: per_slot,
    })
}

/// Gradient of the slot's sum rate with respect to the power vector.
///
/// Power `p[j]` raises its own link's signal and sits in the interference
/// denominator of every link `k` with a nonzero `(j, k)` entry:
/// `d/dp[j] = g_jj / (I_j + S_j) + sum_k g_jk (1/(I_k + S_k) - 1/I_k)`,
/// all in units of bits (the `1/ln 2` factor is applied).
pub fn rate_gradient<F: Real>(h: &Matrix<F>, p: &[F], noise: F) -> Result<Vec<F>> {
    if h.n() != p.len() {
        return Err(Error::Dimension(format!(
            "matrix {0}x{0}, power vector {1}",
            h.n(),
            p.len()
        )));
    }
    check_powers(p)?;
    let n = h.n();
    let scale = F::one() / ln2();
    let mut grad = vec![F::zero(); n];
    for k in 0..n {
        let own = h.get(k, k);
        let signal = own * own * p[k];
        let mut interference = noise;
        for j in 0..n {
            if j != k {
                let g = h.get(j, k);
                interference += g * g * p[j];
            }
        }
        let total = interference + signal;
        grad[k] += scale * own * own / total;
        for j in 0..n {
            if j != k {
                let g = h.get(j, k);
                if g != F::zero() {
                    grad[j] += scale * g * g * (F::one() / total - F::one() / interference);
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::dbm_to_linear;

    fn matrix(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_power_means_zero_rate() {
        let h = matrix(&[&[1.0, 0.2], &[0.3, 0.9]]);
        let r = link_rate(&h, &[0.0, 0.5], 0, 1e-7).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn single_link_rate_matches_closed_form() {
        // Unit gain at the -35 dBm budget over -70 dBm noise:
        // log2(1 + 10^3.5), frozen from an arbitrary-precision evaluation.
        let h = matrix(&[&[1.0]]);
        let p = dbm_to_linear(-35.0);
        let r = link_rate(&h, &[p], 0, 1e-7).unwrap();
        let expect = 11.62720448021604;
        assert!((r - expect).abs() / expect < 1e-14, "rate {r}");
    }

    #[test]
    fn symmetric_interference_limit_approaches_one_bit() {
        // Equal direct and cross gains at SNR 1e6: each link sees
        // rate -> log2(2) = 1 from above the noise floor.
        let g: f64 = 1.0;
        let noise = 1e-6f64;
        let p = 1.0; // g^2 p / noise = 1e6
        let h = matrix(&[&[g, g], &[g, g]]);
        for k in 0..2 {
            let r = link_rate(&h, &[p, p], k, noise).unwrap();
            assert!((r - 1.0).abs() < 1e-5, "rate {r}");
        }
    }

    #[test]
    fn negative_power_is_rejected() {
        let h = matrix(&[&[1.0]]);
        assert!(matches!(
            link_rate(&h, &[-0.1], 0, 1e-7),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            rate_gradient(&h, &[-0.1], 1e-7),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn diagonal_slot_sums_per_link_point_to_point_rates() {
        let h = matrix(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let p = [0.5, 0.25];
        let noise = 1e-3;
        let report = sum_rate(&[h.clone()], &[p.to_vec()], noise).unwrap();
        let expect0 = (4.0f64 * 0.5 / noise).ln_1p() / std::f64::consts::LN_2;
        let expect1 = (9.0f64 * 0.25 / noise).ln_1p() / std::f64::consts::LN_2;
        assert!((report.per_link_rates[0] - expect0).abs() < 1e-12);
        assert!((report.per_link_rates[1] - expect1).abs() < 1e-12);
        assert!((report.sum_rate - (expect0 + expect1)).abs() < 1e-12);
        assert_eq!(report.per_slot_sum_rates.len(), 1);
    }

    #[test]
    fn duplicated_slots_average_to_the_single_slot_value() {
        let h = matrix(&[&[1.0, 0.4], &[0.2, 1.5]]);
        let p = vec![2e-4, 3e-4];
        let one = sum_rate(&[h.clone()], &[p.clone()], 1e-7).unwrap();
        let two = sum_rate(&[h.clone(), h.clone()], &[p.clone(), p], 1e-7).unwrap();
        assert_eq!(one.sum_rate, two.sum_rate);
    }

    #[test]
    fn empty_slot_sequence_is_rejected() {
        let err = sum_rate::<f64>(&[], &[], 1e-7).unwrap_err();
        assert!(matches!(err, Error::InsufficientSlots { .. }));
    }

    #[test]
    fn rates_are_nonnegative_on_random_instances() {
        use crate::rng::{stream_rng, StreamDomain};
        use rand::Rng;
        let mut rng = stream_rng(3, StreamDomain::Fading, 50);
        for _ in 0..50 {
            let n = rng.gen_range(1..6);
            let h = Matrix::from_fn(n, |_, _| rng.gen_range(0.0..2.0));
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1e-3)).collect();
            for k in 0..n {
                assert!(link_rate(&h, &p, k, 1e-7).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn more_interference_never_helps() {
        let h = matrix(&[&[1.0, 0.6], &[0.5, 1.2]]);
        let noise = 1e-5;
        let base = link_rate(&h, &[3e-4, 1e-4], 0, noise).unwrap();
        let bumped = link_rate(&h, &[3e-4, 2e-4], 0, noise).unwrap();
        assert!(bumped < base);
    }

    #[test]
    fn single_link_gradient_matches_closed_form() {
        let h = matrix(&[&[1.5]]);
        let p = [2e-4];
        let noise = 1e-7;
        let g = rate_gradient(&h, &p, noise).unwrap();
        let expect = (1.0 / std::f64::consts::LN_2) * 2.25 / (noise + 2.25 * p[0]);
        assert!((g[0] - expect).abs() / expect < 1e-14);
        assert!(g[0] > 0.0);
    }

    #[test]
    fn diagonal_gradient_is_strictly_positive() {
        let h = matrix(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let g = rate_gradient(&h, &[1e-4, 5e-5], 1e-7).unwrap();
        assert!(g.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        use crate::rng::{stream_rng, StreamDomain};
        use rand::Rng;
        let mut rng = stream_rng(9, StreamDomain::Fading, 51);
        for trial in 0..50 {
            let n = rng.gen_range(2..=8);
            let h = Matrix::from_fn(n, |_, _| rng.gen_range(0.0..2.0));
            let pmax = 3.2e-4;
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.9) * pmax).collect();
            let noise = 1e-7;
            let grad = rate_gradient(&h, &p, noise).unwrap();
            for j in 0..n {
                // Step sized to the power scale: big enough to clear float
                // noise in the rate, small enough to keep truncation below
                // the tolerance.
                let step = 3e-5 * pmax;
                let mut plus = p.clone();
                plus[j] += step;
                let mut minus = p.clone();
                minus[j] -= step;
                let f = |pv: &[f64]| -> f64 {
                    (0..n)
                        .map(|k| link_rate_unchecked(&h, pv, k, noise))
                        .sum()
                };
                let fd = (f(&plus) - f(&minus)) / (2.0 * step);
                let denom = fd.abs().max(1.0);
                assert!(
                    (grad[j] - fd).abs() / denom < 1e-6,
                    "trial {trial} link {j}: analytic {}, fd {fd}",
                    grad[j]
                );
            }
        }
    }
}
