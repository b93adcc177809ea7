//! The power-control policy: polynomial graph filters with pointwise
//! nonlinearities, mapping a channel matrix to a feasible power vector.
//!
//! The filter taps are the only parameters and their count is independent
//! of the network size, so one parameter matrix evaluates on any K.
//! [`backward`] returns exact reverse-mode gradients of a scalar loss with
//! respect to the taps.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::num::{real, sigmoid, Real};
use crate::rng::{stream_rng, StreamDomain};

/// Filter taps, `layers x order` row-major. Layer `l` uses row `l`; the last
/// layer feeds the sigmoid output map, all earlier layers feed ReLUs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegnnParams<F> {
    layers: usize,
    order: usize,
    taps: Vec<F>,
}

impl<F: Real> RegnnParams<F> {
    pub fn zeros(layers: usize, order: usize) -> Result<Self> {
        if layers == 0 || order == 0 {
            return Err(Error::Config(format!(
                "need at least one layer and one tap, got {layers} x {order}"
            )));
        }
        Ok(RegnnParams {
            layers,
            order,
            taps: vec![F::zero(); layers * order],
        })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let layers = rows.len();
        let order = rows.first().map_or(0, Vec::len);
        let mut p = Self::zeros(layers, order)?;
        for (l, row) in rows.iter().enumerate() {
            if row.len() != order {
                return Err(Error::Dimension(format!(
                    "tap row {l} has {} entries, expected {order}",
                    row.len()
                )));
            }
            p.taps[l * order..(l + 1) * order].copy_from_slice(row);
        }
        Ok(p)
    }

    /// I.i.d. uniform taps in `[-1/sqrt(order), 1/sqrt(order))`, drawn in f64
    /// row-major so every scalar lane sees the same stream.
    pub fn init_uniform(layers: usize, order: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(layers, order)?;
        let bound = 1.0 / (order as f64).sqrt();
        let mut rng = stream_rng(seed, StreamDomain::ParamInit, 0);
        for tap in &mut p.taps {
            *tap = real(rng.gen_range(-bound..bound));
        }
        Ok(p)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn tap(&self, l: usize, m: usize) -> F {
        self.taps[l * self.order + m]
    }

    pub fn row(&self, l: usize) -> &[F] {
        &self.taps[l * self.order..(l + 1) * self.order]
    }

    pub fn taps(&self) -> &[F] {
        &self.taps
    }

    pub fn taps_mut(&mut self) -> &mut [F] {
        &mut self.taps
    }

    pub fn zeros_like(&self) -> Self {
        RegnnParams {
            layers: self.layers,
            order: self.order,
            taps: vec![F::zero(); self.taps.len()],
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers == other.layers && self.order == other.order
    }

    /// Entrywise `self += other`, used for gradient accumulation.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.taps.iter_mut().zip(&other.taps) {
            *a += *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.taps.iter().all(|t| t.is_finite())
    }

    /// Versioned text checkpoint: `regnn-ckpt v1 L M`, then L lines of M
    /// decimal floats. Values round-trip exactly.
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "regnn-ckpt v1 {} {}", self.layers, self.order)?;
        for l in 0..self.layers {
            let row: Vec<String> = self.row(l).iter().map(|t| format!("{t}")).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty checkpoint".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "regnn-ckpt" {
            return Err(Error::Format(format!("bad checkpoint header '{header}'")));
        }
        if fields[1] != "v1" {
            return Err(Error::Format(format!(
                "unsupported checkpoint version '{}'",
                fields[1]
            )));
        }
        let layers: usize = fields[2]
            .parse()
            .map_err(|_| Error::Format("unparseable layer count".into()))?;
        let order: usize = fields[3]
            .parse()
            .map_err(|_| Error::Format("unparseable filter order".into()))?;
        let mut p = Self::zeros(layers, order)?;
        for l in 0..layers {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing tap row {l}")))??;
            let row: Vec<&str> = line.split_whitespace().collect();
            if row.len() != order {
                return Err(Error::Format(format!(
                    "tap row {l} has {} entries, expected {order}",
                    row.len()
                )));
            }
            for (m, tok) in row.iter().enumerate() {
                let v: F = tok
                    .parse()
                    .map_err(|_| Error::Format(format!("unparseable tap '{tok}'")))?;
                p.taps[l * order + m] = v;
            }
        }
        Ok(p)
    }
}

/// Everything [`forward`] computes, retained for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    /// Input to each layer; index 0 is the all-ones vector.
    pub layer_inputs: Vec<Vec<F>>,
    /// Per layer, the cached vectors `H^m z` for m = 1..order.
    pub conv_powers: Vec<Vec<Vec<F>>>,
    /// Per layer, the filter output before the nonlinearity.
    pub pre_activations: Vec<Vec<F>>,
    /// Budget vector the output was scaled by.
    pub p_max: Vec<F>,
    /// Power vector, componentwise in [0, p_max].
    pub output: Vec<F>,
}

/// `sum_m taps[m] H^m x`, by iterated matrix-vector products; `H^m` is never
/// materialized.
pub fn graph_conv<F: Real>(taps_row: &[F], h: &Matrix<F>, x: &[F]) -> Result<Vec<F>> {
    if h.n() != x.len() {
        return Err(Error::Dimension(format!(
            "matrix is {0}x{0} but input has {1} entries",
            h.n(),
            x.len()
        )));
    }
    if taps_row.is_empty() {
        return Err(Error::Dimension("empty tap row".into()));
    }
    let mut acc = vec![F::zero(); x.len()];
    let mut cur = x.to_vec();
    let mut next = vec![F::zero(); x.len()];
    for &tap in taps_row {
        h.matvec_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += tap * *c;
        }
    }
    Ok(acc)
}

/// Evaluate the policy on one channel matrix.
///
/// The input signal is the all-ones vector; hidden layers apply
/// ReLU(graph filter), the final layer applies the sigmoid and scales
/// componentwise by `p_max`, so the output lies in `[0, p_max]` by
/// construction.
pub fn forward<F: Real>(
    params: &RegnnParams<F>,
    h: &Matrix<F>,
    p_max: &[F],
) -> Result<ForwardTrace<F>> {
    let k = h.n();
    if p_max.len() != k {
        return Err(Error::Dimension(format!(
            "budget vector has {} entries for a {k}-link matrix",
            p_max.len()
        )));
    }
    if p_max.iter().any(|pm| !(*pm > F::zero())) {
        return Err(Error::Domain("p_max must be positive componentwise".into()));
    }

    let layers = params.layers();
    let order = params.order();
    let mut layer_inputs = Vec::with_capacity(layers);
    let mut conv_powers = Vec::with_capacity(layers);
    let mut pre_activations = Vec::with_capacity(layers);
    let mut output = Vec::new();

    let mut z = vec![F::one(); k];
    for l in 0..layers {
        let mut powers: Vec<Vec<F>> = Vec::with_capacity(order);
        {
            let mut cur = z.clone();
            let mut next = vec![F::zero(); k];
            for _ in 0..order {
                h.matvec_into(&cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
                powers.push(cur.clone());
            }
        }
        let mut u = vec![F::zero(); k];
        for m in 0..order {
            let tap = params.tap(l, m);
            for (ui, pi) in u.iter_mut().zip(&powers[m]) {
                *ui += tap * *pi;
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("pre-activation of layer {l} (channel not normalized?)"),
            });
        }
        layer_inputs.push(std::mem::take(&mut z));
        if l + 1 < layers {
            z = u
                .iter()
                .map(|&v| if v > F::zero() { v } else { F::zero() })
                .collect();
        } else {
            output = u
                .iter()
                .zip(p_max)
                .map(|(&v, &pm)| pm * sigmoid(v))
                .collect();
        }
        conv_powers.push(powers);
        pre_activations.push(u);
    }

    Ok(ForwardTrace {
        layer_inputs,
        conv_powers,
        pre_activations,
        p_max: p_max.to_vec(),
        output,
    })
}

/// Reverse-mode gradient of a scalar loss with respect to the taps, given
/// the loss gradient with respect to the output power vector.
///
/// The filter adjoints are: for `y = sum_m t_m H^m x`, the tap gradient is
/// `ybar . (H^m x)` and the input adjoint is `sum_m t_m (H^T)^m ybar`, both
/// from the cached powers. ReLU uses subgradient 0 at exactly 0.
pub fn backward<F: Real>(
    trace: &ForwardTrace<F>,
    params: &RegnnParams<F>,
    h: &Matrix<F>,
    grad_wrt_power: &[F],
) -> Result<RegnnParams<F>> {
    let k = h.n();
    let layers = params.layers();
    let order = params.order();
    if trace.layer_inputs.len() != layers
        || trace.conv_powers.len() != layers
        || trace.conv_powers.iter().any(|p| p.len() != order)
        || trace.output.len() != k
        || trace.layer_inputs.iter().any(|z| z.len() != k)
    {
        return Err(Error::Dimension(
            "trace does not match the parameter shape and matrix size".into(),
        ));
    }
    if grad_wrt_power.len() != k {
        return Err(Error::Dimension(format!(
            "loss gradient has {} entries for a {k}-link matrix",
            grad_wrt_power.len()
        )));
    }

    let mut grad = params.zeros_like();

    // Seed at the output layer: p = p_max * sigmoid(u).
    let last = layers - 1;
    let mut ubar: Vec<F> = trace.pre_activations[last]
        .iter()
        .zip(trace.p_max.iter())
        .zip(grad_wrt_power)
        .map(|((&u, &pm), &g)| {
            let s = sigmoid(u);
            g * pm * s * (F::one() - s)
        })
        .collect();

    for l in (0..layers).rev() {
        for m in 0..order {
            let mut dot = F::zero();
            for (ub, pw) in ubar.iter().zip(&trace.conv_powers[l][m]) {
                dot += *ub * *pw;
            }
            grad.taps_mut()[l * order + m] = dot;
        }
        if l > 0 {
            let mut zbar = vec![F::zero(); k];
            let mut cur = ubar.clone();
            let mut next = vec![F::zero(); k];
            for m in 0..order {
                h.tr_matvec_into(&cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
                let tap = params.tap(l, m);
                for (zb, c) in zbar.iter_mut().zip(&cur) {
                    *zb += tap * *c;
                }
            }
            ubar = zbar
                .iter()
                .zip(&trace.pre_activations[l - 1])
                .map(|(&zb, &u)| if u > F::zero() { zb } else { F::zero() })
                .collect();
        }
    }

    Ok(grad)
}

/// Scale a channel matrix so repeated applications stay bounded.
///
/// Divides by the max absolute row sum (an upper bound on the spectral
/// radius) and returns the scale for logging; an all-zero matrix comes back
/// unchanged with scale 1. The rate objective always uses the raw matrix.
pub fn normalize_channel<F: Real>(h: &Matrix<F>) -> (Matrix<F>, F) {
    let s = h.max_abs_row_sum();
    if s == F::zero() {
        (h.clone(), F::one())
    } else {
        (Matrix::from_fn(h.n(), |j, k| h.get(j, k) / s), s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::permute_vec;

    fn diag(values: &[f64]) -> Matrix<f64> {
        let mut m = Matrix::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    fn random_matrix(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = stream_rng(seed, StreamDomain::Fading, 90);
        Matrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_params(layers: usize, order: usize, seed: u64) -> RegnnParams<f64> {
        RegnnParams::init_uniform(layers, order, seed).unwrap()
    }

    #[test]
    fn graph_conv_single_tap_is_one_matvec() {
        let h = random_matrix(4, 1);
        let x = vec![0.3, -0.7, 1.1, 0.2];
        assert_eq!(graph_conv(&[1.0], &h, &x).unwrap(), h.matvec(&x));
    }

    #[test]
    fn graph_conv_matches_hand_computed_diagonal_polynomial() {
        let h = diag(&[1.0, 2.0]);
        let y = graph_conv(&[1.0, 0.5], &h, &[1.0, 1.0]).unwrap();
        assert_eq!(y, vec![1.5, 4.0]);
    }

    #[test]
    fn graph_conv_zero_matrix_annihilates() {
        let h = Matrix::zeros(3);
        let y = graph_conv(&[2.0, -1.0, 0.5], &h, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn graph_conv_rejects_mismatched_input() {
        let h = Matrix::<f64>::identity(3);
        assert!(matches!(
            graph_conv(&[1.0], &h, &[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_taps_emit_half_budget() {
        let params = RegnnParams::<f64>::zeros(2, 4).unwrap();
        let h = random_matrix(5, 2);
        let p_max = vec![2.0, 1.0, 0.5, 4.0, 8.0];
        let trace = forward(&params, &h, &p_max).unwrap();
        let expect: Vec<f64> = p_max.iter().map(|pm| pm * 0.5).collect();
        assert_eq!(trace.output, expect);
    }

    #[test]
    fn output_stays_strictly_inside_the_budget() {
        for seed in 0..20 {
            let params = random_params(2, 4, seed);
            let (h, _) = normalize_channel(&random_matrix(6, seed + 100));
            let p_max = vec![3.0e-4; 6];
            let trace = forward(&params, &h, &p_max).unwrap();
            for &p in &trace.output {
                assert!(p > 0.0 && p < 3.0e-4);
            }
        }
    }

    #[test]
    fn forward_rejects_nonpositive_budget() {
        let params = random_params(1, 2, 3);
        let h = random_matrix(2, 3);
        assert!(matches!(
            forward(&params, &h, &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn forward_names_the_overflowing_layer() {
        let params = RegnnParams::from_rows(&[vec![1e200, 1e200], vec![1.0, 1.0]]).unwrap();
        let mut h = Matrix::zeros(2);
        h.set(0, 0, 1e200);
        h.set(1, 1, 1e200);
        let err = forward(&params, &h, &[1.0, 1.0]).unwrap_err();
        match err {
            Error::NonFinite { context } => assert!(context.contains("layer 0"), "{context}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn all_permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in all_permutations(n - 1) {
            for pos in 0..n {
                let mut q: Vec<usize> = p.iter().map(|&v| if v >= pos { v + 1 } else { v }).collect();
                q.insert(0, pos);
                // q[0] = pos, rest is p relabeled to skip pos.
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn forward_is_permutation_equivariant_over_all_k4_permutations() {
        let params = random_params(2, 4, 7);
        let (h, _) = normalize_channel(&random_matrix(4, 8));
        let p_max = vec![0.5, 1.5, 2.5, 3.5];
        let base = forward(&params, &h, &p_max).unwrap().output;
        let perms = all_permutations(4);
        assert_eq!(perms.len(), 24);
        for perm in perms {
            let hp = h.permuted(&perm);
            let pp = permute_vec(&p_max, &perm);
            let out = forward(&params, &hp, &pp).unwrap().output;
            let expect = permute_vec(&base, &perm);
            for (a, b) in out.iter().zip(&expect) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_loss_gradient_gives_zero_tap_gradient() {
        let params = random_params(2, 3, 11);
        let (h, _) = normalize_channel(&random_matrix(4, 12));
        let trace = forward(&params, &h, &[1.0; 4]).unwrap();
        let grad = backward(&trace, &params, &h, &[0.0; 4]).unwrap();
        assert_eq!(grad.taps(), &[0.0; 6]);
    }

    #[test]
    fn scalar_chain_rule_matches_closed_form() {
        // K=1, L=1, M=1, H=[c]: p = pmax * sigmoid(tap * c), so
        // dp/dtap = pmax * s(1-s) * c.
        let c: f64 = 0.7;
        let tap = 0.3;
        let pmax = 2.0;
        let params = RegnnParams::from_rows(&[vec![tap]]).unwrap();
        let mut h = Matrix::zeros(1);
        h.set(0, 0, c);
        let trace = forward(&params, &h, &[pmax]).unwrap();
        let grad = backward(&trace, &params, &h, &[1.0]).unwrap();
        let s = sigmoid(tap * c);
        let expect = pmax * s * (1.0 - s) * c;
        assert!((grad.tap(0, 0) - expect).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_central_differences_on_a_linear_loss() {
        let weights = [0.7, -0.3, 0.9, 0.4, -1.1];
        let loss = |params: &RegnnParams<f64>, h: &Matrix<f64>| -> f64 {
            let out = forward(params, h, &[1.0; 5]).unwrap().output;
            out.iter().zip(weights.iter()).map(|(p, w)| p * w).sum()
        };
        for seed in 0..10 {
            let params = random_params(2, 4, seed + 40);
            let (h, _) = normalize_channel(&random_matrix(5, seed + 60));
            let trace = forward(&params, &h, &[1.0; 5]).unwrap();
            // Skip instances with a ReLU pre-activation near its kink.
            if trace.pre_activations[0].iter().any(|u| u.abs() < 1e-3) {
                continue;
            }
            let grad = backward(&trace, &params, &h, &weights).unwrap();
            let step = 1e-6;
            for i in 0..params.taps().len() {
                let mut plus = params.clone();
                plus.taps_mut()[i] += step;
                let mut minus = params.clone();
                minus.taps_mut()[i] -= step;
                let fd = (loss(&plus, &h) - loss(&minus, &h)) / (2.0 * step);
                let got = grad.taps()[i];
                let denom = fd.abs().max(1e-8);
                assert!(
                    (got - fd).abs() / denom < 1e-5,
                    "seed {seed} tap {i}: analytic {got}, fd {fd}"
                );
            }
        }
    }

    #[test]
    fn backward_rejects_mismatched_trace() {
        let params = random_params(2, 3, 1);
        let (h, _) = normalize_channel(&random_matrix(4, 2));
        let trace = forward(&params, &h, &[1.0; 4]).unwrap();
        let other = random_params(2, 4, 1);
        assert!(matches!(
            backward(&trace, &other, &h, &[0.0; 4]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn normalization_caps_row_sums_at_one() {
        let mut h = Matrix::zeros(3);
        h.set(0, 0, 1.0);
        h.set(0, 1, -2.0);
        h.set(0, 2, 1.0);
        h.set(1, 1, 0.5);
        h.set(2, 0, 3.0);
        assert_eq!(h.max_abs_row_sum(), 4.0);
        let (hn, s) = normalize_channel(&h);
        assert_eq!(s, 4.0);
        assert!(hn.max_abs_row_sum() <= 1.0 + 1e-12);
    }

    #[test]
    fn normalization_leaves_identity_and_zero_untouched() {
        let i = Matrix::<f64>::identity(4);
        let (ni, si) = normalize_channel(&i);
        assert_eq!(ni, i);
        assert_eq!(si, 1.0);

        let z = Matrix::<f64>::zeros(4);
        let (nz, sz) = normalize_channel(&z);
        assert_eq!(nz, z);
        assert_eq!(sz, 1.0);
    }

    #[test]
    fn normalized_filters_stay_finite_under_large_taps() {
        for seed in 0..20 {
            let mut rng = stream_rng(seed, StreamDomain::ParamInit, 77);
            let rows: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect())
                .collect();
            let params = RegnnParams::from_rows(&rows).unwrap();
            let raw = Matrix::from_fn(64, |_, _| rng.gen_range(0.0..1e6));
            let (h, _) = normalize_channel(&raw);
            let trace = forward(&params, &h, &[1.0; 64]).unwrap();
            assert!(trace.output.iter().all(|p| p.is_finite()));
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact_in_both_lanes() {
        let p64 = random_params(2, 4, 5);
        let mut buf = Vec::new();
        p64.write_checkpoint(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("regnn-ckpt v1 2 4\n"));
        let back = RegnnParams::<f64>::read_checkpoint(&mut text.as_bytes()).unwrap();
        assert_eq!(back, p64);

        let p32 = RegnnParams::<f32>::init_uniform(3, 2, 9).unwrap();
        let mut buf = Vec::new();
        p32.write_checkpoint(&mut buf).unwrap();
        let back = RegnnParams::<f32>::read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, p32);
    }

    #[test]
    fn checkpoint_rejects_malformed_input() {
        for text in [
            "",
            "regnn-ckpt v2 1 1\n0.5\n",
            "not-a-ckpt v1 1 1\n0.5\n",
            "regnn-ckpt v1 2 2\n0.5 0.5\n",
            "regnn-ckpt v1 1 2\n0.5\n",
            "regnn-ckpt v1 1 1\nabc\n",
        ] {
            assert!(
                RegnnParams::<f64>::read_checkpoint(&mut text.as_bytes()).is_err(),
                "accepted {text:?}"
            );
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = RegnnParams::<f64>::init_uniform(2, 4, 33).unwrap();
        let b = RegnnParams::<f64>::init_uniform(2, 4, 33).unwrap();
        assert_eq!(a, b);
        let bound = 0.5;
        assert!(a.taps().iter().all(|t| t.abs() <= bound));
        let c = RegnnParams::<f64>::init_uniform(2, 4, 34).unwrap();
        assert_ne!(a, c);
    }
}
