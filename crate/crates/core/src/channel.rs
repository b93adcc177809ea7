//! Per-slot channel matrices: constant path-loss gains times i.i.d. Rayleigh
//! fast fading, zeroed outside the interference graph.
//!
//! Entry `(j, k)` of a slot matrix is the channel magnitude from transmitter
//! `j` into receiver `k`; column `k` therefore collects everything receiver
//! `k` hears. All power bookkeeping is in linear milliwatts.

use std::io::{Read, Write};

use rand::distributions::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::num::{real, Real};
use crate::rng::{stream_rng, StreamDomain};
use crate::topology::{euclidean, NetworkDrop};

/// Convert a dBm figure to linear milliwatts, `10^(x/10)`.
///
/// Multiples of 10 dBm take an integer-exponent path (powers of ten up to
/// `10^22` are exactly representable), so `dbm_to_linear(-70.0)` is `1e-7`
/// to the last bit.
pub fn dbm_to_linear(dbm: f64) -> f64 {
    let e = dbm / 10.0;
    if e.fract() == 0.0 && e.abs() <= 22.0 {
        let p = 10f64.powi(e.abs() as i32);
        if e < 0.0 {
            1.0 / p
        } else {
            p
        }
    } else {
        10f64.powf(e)
    }
}

/// Physical-layer parameters for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// Path-loss exponent.
    pub pathloss_exponent: f64,
    /// Rayleigh scale: fading density is `(x/a^2) exp(-x^2 / (2 a^2))`.
    pub rayleigh_scale: f64,
    /// Noise power, linear mW.
    pub noise_power: f64,
    /// Per-link power budget, linear mW.
    pub max_power: f64,
    /// Slots per episode.
    pub slots: usize,
    pub seed: u64,
}

impl Default for ChannelConfig {
    /// Exponent 2.2, unit Rayleigh scale, -70 dBm noise, -35 dBm budget,
    /// 400 slots.
    fn default() -> Self {
        ChannelConfig {
            pathloss_exponent: 2.2,
            rayleigh_scale: 1.0,
            noise_power: dbm_to_linear(-70.0),
            max_power: dbm_to_linear(-35.0),
            slots: 400,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pathloss_exponent", self.pathloss_exponent),
            ("rayleigh_scale", self.rayleigh_scale),
            ("noise_power", self.noise_power),
            ("max_power", self.max_power),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.slots == 0 {
            return Err(Error::Config("slots must be >= 1".into()));
        }
        Ok(())
    }
}

/// Free-space gain `||tx - rx||^(-gamma)`.
pub fn pathloss_gain(tx: [f64; 2], rx: [f64; 2], gamma: f64) -> Result<f64> {
    let d = euclidean(tx, rx);
    if d <= 0.0 {
        return Err(Error::CoincidentEndpoints {
            context: format!("tx ({}, {}) on rx ({}, {})", tx[0], tx[1], rx[0], rx[1]),
        });
    }
    Ok(d.powf(-gamma))
}

/// One Rayleigh(scale) magnitude via the inverse CDF.
///
/// `Open01` excludes both endpoints, so the draw is strictly positive.
fn rayleigh_draw(rng: &mut impl Rng, scale: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    scale * (-2.0 * u.ln()).sqrt()
}

/// One period's fading realizations plus its train/test split.
///
/// Split slot sets start empty; [`split_episode`] assigns them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEpisode<F> {
    pub drop: NetworkDrop,
    pub config: ChannelConfig,
    pub matrices: Vec<Matrix<F>>,
    pub train_slots: Vec<usize>,
    pub test_slots: Vec<usize>,
}

impl<F: Real> ChannelEpisode<F> {
    pub fn num_links(&self) -> usize {
        self.drop.num_links()
    }

    pub fn num_slots(&self) -> usize {
        self.matrices.len()
    }

    /// Noise power in the active scalar type.
    pub fn noise(&self) -> F {
        real(self.config.noise_power)
    }

    /// Per-link budget vector (the budget is uniform across links).
    pub fn max_power_vec(&self) -> Vec<F> {
        vec![real(self.config.max_power); self.num_links()]
    }

    /// Binary container: little-endian u64 `K, T, seed`, little-endian f64
    /// exponent, scale, noise, budget, then `T` row-major `K x K` f64
    /// matrices. The drop is persisted separately in its text format.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let k = self.num_links() as u64;
        let t = self.num_slots() as u64;
        w.write_all(&k.to_le_bytes())?;
        w.write_all(&t.to_le_bytes())?;
        w.write_all(&self.config.seed.to_le_bytes())?;
        for v in [
            self.config.pathloss_exponent,
            self.config.rayleigh_scale,
            self.config.noise_power,
            self.config.max_power,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for m in &self.matrices {
            for x in m.data() {
                let wide = x.to_f64().ok_or_else(|| Error::NonFinite {
                    context: "episode entry during serialization".into(),
                })?;
                w.write_all(&wide.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Inverse of [`Self::write_binary`]; the caller supplies the drop the
    /// episode was sampled from. Splits come back empty.
    pub fn read_binary(r: &mut impl Read, drop: NetworkDrop) -> Result<Self> {
        let mut u = [0u8; 8];
        let mut next_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut u)?;
            Ok(u64::from_le_bytes(u))
        };
        let k = next_u64(r)? as usize;
        let t = next_u64(r)? as usize;
        let seed = next_u64(r)?;
        if k != drop.num_links() {
            return Err(Error::Dimension(format!(
                "episode has K={k} but drop has K={}",
                drop.num_links()
            )));
        }
        let mut f = [0u8; 8];
        let mut next_f64 = |r: &mut dyn Read| -> Result<f64> {
            r.read_exact(&mut f)?;
            Ok(f64::from_le_bytes(f))
        };
        let config = ChannelConfig {
            pathloss_exponent: next_f64(r)?,
            rayleigh_scale: next_f64(r)?,
            noise_power: next_f64(r)?,
            max_power: next_f64(r)?,
            slots: t,
            seed,
        };
        config.validate()?;
        let mut matrices = Vec::with_capacity(t);
        let mut buf = [0u8; 8];
        for _ in 0..t {
            let mut m = Matrix::<F>::zeros(k);
            for j in 0..k {
                for col in 0..k {
                    r.read_exact(&mut buf)?;
                    m.set(j, col, real(f64::from_le_bytes(buf)));
                }
            }
            matrices.push(m);
        }
        Ok(ChannelEpisode {
            drop,
            config,
            matrices,
            train_slots: Vec::new(),
            test_slots: Vec::new(),
        })
    }
}

/// Sample the slot sequence for `drop`.
///
/// Path loss is fixed for the whole period; fading is drawn i.i.d. per slot
/// and per in-graph entry, in slot order and within a slot by victim link
/// (diagonal first, then that column's interferers ascending). Draws happen
/// in f64 and are then narrowed, so every scalar lane sees the same stream.
/// Deterministic in `(config.seed, drop.period_index)`.
pub fn sample_episode<F: Real>(
    drop: &NetworkDrop,
    config: &ChannelConfig,
) -> Result<ChannelEpisode<F>> {
    config.validate()?;
    let k = drop.num_links();

    let mut pathloss = Matrix::<f64>::zeros(k);
    for victim in 0..k {
        let own = pathloss_gain(drop.tx[victim], drop.rx[victim], config.pathloss_exponent)
            .map_err(|_| Error::CoincidentEndpoints {
                context: format!("link {victim}"),
            })?;
        pathloss.set(victim, victim, own);
        for &source in &drop.neighbors[victim] {
            let gain = pathloss_gain(drop.tx[source], drop.rx[victim], config.pathloss_exponent)
                .map_err(|_| Error::CoincidentEndpoints {
                    context: format!("tx of link {source} on rx of link {victim}"),
                })?;
            pathloss.set(source, victim, gain);
        }
    }

    let mut rng = stream_rng(config.seed, StreamDomain::Fading, drop.period_index);
    let mut matrices = Vec::with_capacity(config.slots);
    for _ in 0..config.slots {
        let mut h = Matrix::<F>::zeros(k);
        for victim in 0..k {
            let own = pathloss.get(victim, victim) * rayleigh_draw(&mut rng, config.rayleigh_scale);
            debug_assert!(own > 0.0);
            h.set(victim, victim, real(own));
            for &source in &drop.neighbors[victim] {
                let mag =
                    pathloss.get(source, victim) * rayleigh_draw(&mut rng, config.rayleigh_scale);
                h.set(source, victim, real(mag));
            }
        }
        matrices.push(h);
    }

    Ok(ChannelEpisode {
        drop: drop.clone(),
        config: *config,
        matrices,
        train_slots: Vec::new(),
        test_slots: Vec::new(),
    })
}

/// Assign the first `n_train` slots to the train split and the next `n_test`
/// to the test split. Slots are i.i.d., so contiguous assignment is
/// distributionally equivalent to a random one.
pub fn split_episode<F: Real>(
    mut episode: ChannelEpisode<F>,
    n_train: usize,
    n_test: usize,
) -> Result<ChannelEpisode<F>> {
    let t = episode.num_slots();
    if n_train + n_test > t {
        return Err(Error::InsufficientSlots {
            needed: n_train + n_test,
            available: t,
        });
    }
    episode.train_slots = (0..n_train).collect();
    episode.test_slots = (n_train..n_train + n_test).collect();
    Ok(episode)
}
