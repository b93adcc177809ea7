//! Random geometric link drops and the induced interference graph.
//!
//! One drop describes one operating period: `K` transmitter/receiver pairs
//! placed in the plane, plus the per-link interferer sets. Positions are
//! always double precision regardless of the scalar lane used downstream.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamDomain};

/// Bounds of the dynamic-size protocol: K drawn uniformly from [4, 20].
pub const DYNAMIC_SIZE_MIN: usize = 4;
pub const DYNAMIC_SIZE_MAX: usize = 20;

/// How the number of links is chosen for a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeRule {
    Fixed(usize),
    /// Discrete uniform over `lo..=hi` (K is a link count).
    UniformInt { lo: usize, hi: usize },
}

impl SizeRule {
    /// The dynamic-size protocol, K ~ Uniform{4, ..., 20}.
    pub fn dynamic() -> Self {
        SizeRule::UniformInt {
            lo: DYNAMIC_SIZE_MIN,
            hi: DYNAMIC_SIZE_MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SizeRule::Fixed(k) if k >= 1 => Ok(()),
            SizeRule::Fixed(k) => Err(Error::Config(format!("num_links must be >= 1, got {k}"))),
            SizeRule::UniformInt { lo, hi } => {
                if lo < 1 || hi < lo {
                    Err(Error::Config(format!(
                        "uniform size rule needs 1 <= lo <= hi, got [{lo}, {hi}]"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Draw a network size under `rule`, deterministically in `seed`.
pub fn sample_network_size(rule: &SizeRule, seed: u64) -> usize {
    match *rule {
        SizeRule::Fixed(k) => k,
        SizeRule::UniformInt { lo, hi } => {
            let mut rng = stream_rng(seed, StreamDomain::NetworkSize, 0);
            rng.gen_range(lo..=hi)
        }
    }
}

/// Parameters for one drop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyConfig {
    /// Number of links K.
    pub num_links: usize,
    /// Interference radius r: transmitter j interferes with link k when
    /// `dist(Tx_j, Rx_k) <= r`.
    pub interference_radius: f64,
    pub seed: u64,
}

impl TopologyConfig {
    pub fn new(num_links: usize, interference_radius: f64, seed: u64) -> Result<Self> {
        if num_links == 0 {
            return Err(Error::Config("num_links must be >= 1".into()));
        }
        if !(interference_radius >= 0.0) {
            return Err(Error::Config(format!(
                "interference_radius must be >= 0, got {interference_radius}"
            )));
        }
        Ok(TopologyConfig {
            num_links,
            interference_radius,
            seed,
        })
    }
}

/// One period's geometry and interference graph.
///
/// `neighbors[k]` is the sorted set of links whose transmitter lies within
/// the interference radius of receiver `k` (excluding `k` itself). Note the
/// relation is asymmetric: it uses `dist(Tx_j, Rx_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDrop {
    pub tx: Vec<[f64; 2]>,
    pub rx: Vec<[f64; 2]>,
    pub neighbors: Vec<Vec<usize>>,
    pub period_index: u64,
    pub interference_radius: f64,
    pub seed: u64,
}

impl NetworkDrop {
    pub fn num_links(&self) -> usize {
        self.tx.len()
    }

    pub fn is_neighbor(&self, j: usize, k: usize) -> bool {
        j != k && self.neighbors[k].binary_search(&j).is_ok()
    }

    /// Line-oriented text form: header `K r seed`, then K position rows
    /// `txx txy rxx rxy`, then K adjacency rows `k: j1 j2 ...` (0-based).
    /// The period index is not part of the format.
    pub fn write_text(&self, w: &mut impl Write) -> Result<()> {
        writeln!(
            w,
            "{} {} {}",
            self.num_links(),
            self.interference_radius,
            self.seed
        )?;
        for k in 0..self.num_links() {
            writeln!(
                w,
                "{} {} {} {}",
                self.tx[k][0], self.tx[k][1], self.rx[k][0], self.rx[k][1]
            )?;
        }
        for (k, nbrs) in self.neighbors.iter().enumerate() {
            write!(w, "{k}:")?;
            for j in nbrs {
                write!(w, " {j}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("drop text is ASCII")
    }

    pub fn read_text(r: &mut impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty drop file".into()))??;
        let mut it = header.split_whitespace();
        let k: usize = parse_tok(it.next(), "K")?;
        let radius: f64 = parse_tok(it.next(), "r")?;
        let seed: u64 = parse_tok(it.next(), "seed")?;

        let mut tx = Vec::with_capacity(k);
        let mut rx = Vec::with_capacity(k);
        for i in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing position row {i}")))??;
            let mut it = line.split_whitespace();
            let txx: f64 = parse_tok(it.next(), "txx")?;
            let txy: f64 = parse_tok(it.next(), "txy")?;
            let rxx: f64 = parse_tok(it.next(), "rxx")?;
            let rxy: f64 = parse_tok(it.next(), "rxy")?;
            tx.push([txx, txy]);
            rx.push([rxx, rxy]);
        }
        let mut neighbors = vec![Vec::new(); k];
        for i in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing adjacency row {i}")))??;
            let (head, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("adjacency row {i} lacks ':'")))?;
            let idx: usize = head
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad adjacency index '{head}'")))?;
            if idx != i {
                return Err(Error::Format(format!(
                    "adjacency rows out of order: expected {i}, got {idx}"
                )));
            }
            for tok in rest.split_whitespace() {
                let j: usize = tok
                    .parse()
                    .map_err(|_| Error::Format(format!("bad neighbor '{tok}'")))?;
                if j >= k {
                    return Err(Error::Format(format!("neighbor {j} out of range")));
                }
                neighbors[i].push(j);
            }
        }
        Ok(NetworkDrop {
            tx,
            rx,
            neighbors,
            period_index: 0,
            interference_radius: radius,
            seed,
        })
    }
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>, name: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Format(format!("missing field '{name}'")))?
        .parse()
        .map_err(|_| Error::Format(format!("unparseable field '{name}'")))
}

pub fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Generate the drop for `period_index` under `config`.
///
/// Tx_k is uniform in `[-K, K]^2`; Rx_k is uniform in the `K/4` box around
/// its transmitter. Deterministic in `(config.seed, period_index)`.
pub fn generate_drop(config: &TopologyConfig, period_index: u64) -> Result<NetworkDrop> {
    let cfg = TopologyConfig::new(config.num_links, config.interference_radius, config.seed)?;
    let k = cfg.num_links;
    let kf = k as f64;
    let mut rng = stream_rng(cfg.seed, StreamDomain::Topology, period_index);

    let mut tx = Vec::with_capacity(k);
    for _ in 0..k {
        let x = rng.gen_range(-kf..kf);
        let y = rng.gen_range(-kf..kf);
        tx.push([x, y]);
    }
    let half = kf / 4.0;
    let mut rx = Vec::with_capacity(k);
    for t in &tx {
        let x = t[0] + rng.gen_range(-half..half);
        let y = t[1] + rng.gen_range(-half..half);
        rx.push([x, y]);
    }

    let mut neighbors = vec![Vec::new(); k];
    for (victim, nbrs) in neighbors.iter_mut().enumerate() {
        for source in 0..k {
            if source != victim && euclidean(tx[source], rx[victim]) <= cfg.interference_radius {
                nbrs.push(source);
            }
        }
    }

    Ok(NetworkDrop {
        tx,
        rx,
        neighbors,
        period_index,
        interference_radius: cfg.interference_radius,
        seed: cfg.seed,
    })
}
