//! Seeded fixtures: Gaussian-mixture flow datasets whose derived columns obey
//! the default constraints exactly, label-noise injection, and a pcap writer.

use std::net::Ipv4Addr;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::features::default_schema;
use crate::flow::{BaseFeatures, Dataset, Protocol, Schema};
use crate::nn::train::seeded_rng;
use crate::nn::Matrix;

/// Traffic classes and their corpus shares used by [`SynthConfig`] defaults.
pub const DEFAULT_CLASSES: [(&str, f64); 10] = [
    ("YouTube", 0.4185),
    ("Skype_VideoCall", 0.0544),
    ("Skype_Chat", 0.1080),
    ("FTPS", 0.0748),
    ("SFTP", 0.0369),
    ("SCP", 0.0444),
    ("Facebook_Audio", 0.0604),
    ("Email", 0.1086),
    ("Tor_YouTube", 0.0438),
    ("VPN_Vimeo", 0.0501),
];

/// Base quantities drawn per flow, all in natural-log space.
pub const BASE_DIMS: [&str; 8] = [
    "up_packets",
    "down_packets",
    "up_pkt_len",
    "down_pkt_len",
    "duration",
    "std_pkt_len",
    "std_iat",
    "burst_count",
];

const BASE_CENTER: [f64; 8] = [3.0, 3.0, 5.0, 6.0, 1.0, 4.0, -2.0, 1.0];

/// A fully specified mixture: one Gaussian per class over [`BASE_DIMS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub class_names: Vec<String>,
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
    /// Probability of a UDP flow per class.
    pub udp_prob: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn classes(&self) -> usize {
        self.priors.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.priors.len();
        if k < 2 {
            return Err(Error::config("synth: at least two classes are needed"));
        }
        if self.class_names.len() != k || self.means.len() != k || self.stds.len() != k || self.udp_prob.len() != k {
            return Err(Error::config("synth: per-class arrays disagree in length"));
        }
        if self.priors.iter().any(|p| !(*p >= 0.0)) || (self.priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("synth: priors must be non-negative and sum to 1"));
        }
        for c in 0..k {
            if self.means[c].len() != BASE_DIMS.len() || self.stds[c].len() != BASE_DIMS.len() {
                return Err(Error::config(format!("synth: class {c} needs {} means and stds", BASE_DIMS.len())));
            }
            if self.stds[c].iter().any(|s| !(*s > 0.0)) {
                return Err(Error::config(format!("synth: class {c} has a non-positive std")));
            }
            if !(0.0..=1.0).contains(&self.udp_prob[c]) {
                return Err(Error::config(format!("synth: class {c} udp_prob outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Compact description of a mixture; class means are drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub samples: usize,
    pub class_names: Vec<String>,
    pub priors: Vec<f64>,
    /// Spread of class means around the common center, in log units.
    pub separation: f64,
    /// Within-class standard deviation, in log units.
    pub spread: f64,
    /// Fraction of rows flipped by [`inject_noise`] when building noisy fixtures.
    pub noise_rate: f64,
    /// Fraction of rows kept as the labeled seed set.
    pub seed_fraction: f64,
    /// Fraction of rows held out for evaluation.
    pub test_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            samples: 5000,
            class_names: DEFAULT_CLASSES.iter().map(|(n, _)| n.to_string()).collect(),
            priors: DEFAULT_CLASSES.iter().map(|(_, p)| *p).collect(),
            separation: 0.5,
            spread: 0.4,
            noise_rate: 0.1,
            seed_fraction: 0.1,
            test_fraction: 0.2,
        }
    }
}

impl SynthConfig {
    /// Draw the class means and build the full spec. Priors are normalized.
    pub fn spec(&self, seed: u64) -> Result<SynthSpec> {
        let k = self.priors.len();
        if self.class_names.len() != k {
            return Err(Error::config("synth: class_names and priors differ in length"));
        }
        if !(self.spread > 0.0) || !(self.separation >= 0.0) {
            return Err(Error::config("synth: spread must be positive and separation non-negative"));
        }
        for (name, v) in [("noise_rate", self.noise_rate), ("seed_fraction", self.seed_fraction), ("test_fraction", self.test_fraction)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("synth: {name} must lie in [0, 1)")));
            }
        }
        if self.seed_fraction + self.test_fraction >= 1.0 {
            return Err(Error::config("synth: seed and test fractions leave no unlabeled rows"));
        }
        let total: f64 = self.priors.iter().sum();
        if !(total > 0.0) || self.priors.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::config("synth: priors must be non-negative with a positive sum"));
        }
        let mut rng = seeded_rng(seed, 0x5e);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let means = (0..k)
            .map(|_| BASE_CENTER.iter().map(|c| c + self.separation * unit.sample(&mut rng)).collect())
            .collect();
        let udp_prob = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let spec = SynthSpec {
            class_names: self.class_names.clone(),
            priors: self.priors.iter().map(|p| p / total).collect(),
            means,
            stds: vec![vec![self.spread; BASE_DIMS.len()]; k],
            udp_prob,
            samples: self.samples,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn flow_from_base(v: &[f64], udp: bool) -> BaseFeatures {
    let up_packets = v[0].exp().round().max(1.0);
    let down_packets = v[1].exp().round();
    let up_len = v[2].exp().clamp(40.0, 1500.0).round();
    let down_len = v[3].exp().clamp(40.0, 1500.0).round();
    let std_len = v[5].exp().min(700.0);
    let packets = up_packets + down_packets;
    let duration = v[4].exp();
    let std_iat = v[6].exp();
    let mean_iat = duration / (packets - 1.0).max(1.0);
    BaseFeatures {
        up_packets,
        down_packets,
        up_bytes: up_packets * up_len,
        down_bytes: down_packets * down_len,
        duration,
        min_pkt_len: (up_len.min(if down_packets > 0.0 { down_len } else { up_len }) - std_len).max(40.0).round(),
        max_pkt_len: (up_len.max(down_len) + std_len).min(1500.0).round(),
        std_pkt_len: std_len,
        min_iat: 0.1 * mean_iat,
        max_iat: mean_iat + 3.0 * std_iat,
        std_iat,
        burst_count: v[7].exp().round().clamp(1.0, packets),
        protocol: if udp { Protocol::Udp } else { Protocol::Tcp },
    }
}

/// Draw `spec.samples` labeled flows in the default schema (raw units).
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let schema: Schema = default_schema();
    let mut rng = seeded_rng(spec.seed, 0x5f);
    let normals: Vec<Vec<Normal<f64>>> = (0..spec.classes())
        .map(|c| {
            spec.means[c]
                .iter()
                .zip(&spec.stds[c])
                .map(|(&m, &s)| Normal::new(m, s).map_err(|e| Error::config(format!("synth: {e}"))))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(spec.samples * schema.len());
    let mut labels = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let c = draw_class(&spec.priors, rng.gen::<f64>());
        let v: Vec<f64> = normals[c].iter().map(|d| d.sample(&mut rng)).collect();
        let udp = rng.gen::<f64>() < spec.udp_prob[c];
        data.extend(flow_from_base(&v, udp).row(&schema)?);
        labels.push(c);
    }
    Dataset::new(schema, Matrix::from_vec(spec.samples, data.len() / spec.samples.max(1), data)?)?.with_labels(labels)
}

fn draw_class(priors: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (c, p) in priors.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    priors.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Flip exactly `⌊rate·n⌋` distinct rows, each to a uniformly drawn different
/// class. Returns the noisy labels and the flip mask.
pub fn inject_noise(labels: &[usize], classes: usize, rate: f64, seed: u64) -> Result<(Vec<usize>, Vec<bool>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!("noise rate {rate} outside [0, 1)")));
    }
    if classes < 2 {
        return Err(Error::config("noise injection needs at least two classes"));
    }
    let n = labels.len();
    let flips = (rate * n as f64).floor() as usize;
    let mut rng = seeded_rng(seed, 0x6e);
    let mut noisy = labels.to_vec();
    let mut mask = vec![false; n];
    for i in sample(&mut rng, n, flips).into_iter() {
        let shift = rng.gen_range(1..classes);
        noisy[i] = (labels[i] + shift) % classes;
        mask[i] = true;
    }
    Ok((noisy, mask))
}

/// Row indices split into seed, unlabeled and test sets, stratified by label
/// so every class keeps at least one seed row when it has two or more rows.
pub fn split(labels: &[usize], classes: usize, seed_fraction: f64, test_fraction: f64, seed: u64) -> Split {
    use rand::seq::SliceRandom;
    let mut rng = seeded_rng(seed, 0x5b);
    let mut out = Split::default();
    for c in 0..classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rows.shuffle(&mut rng);
        let n = rows.len();
        let n_seed = ((seed_fraction * n as f64).round() as usize).max(usize::from(n >= 2)).min(n);
        let n_test = ((test_fraction * n as f64).round() as usize).min(n - n_seed);
        out.seed.extend(&rows[..n_seed]);
        out.test.extend(&rows[n_seed..n_seed + n_test]);
        out.unlabeled.extend(&rows[n_seed + n_test..]);
    }
    out.seed.sort_unstable();
    out.test.sort_unstable();
    out.unlabeled.sort_unstable();
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub seed: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
}

/// Writes classic pcap captures packet by packet (Ethernet + IPv4 + TCP/UDP).
#[derive(Debug, Clone)]
pub struct PcapBuilder {
    big_endian: bool,
    nanos: bool,
    buf: Vec<u8>,
}

impl PcapBuilder {
    pub fn new(big_endian: bool, nanos: bool) -> Self {
        let mut b = Self {
            big_endian,
            nanos,
            buf: Vec::new(),
        };
        let magic = if nanos { 0xa1b2_3c4d } else { 0xa1b2_c3d4 };
        b.put32(magic);
        b.put16(2);
        b.put16(4);
        b.put32(0);
        b.put32(0);
        b.put32(65535);
        b.put32(1);
        b
    }

    fn put32(&mut self, v: u32) {
        let bytes = if self.big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
        self.buf.extend_from_slice(&bytes);
    }

    fn put16(&mut self, v: u16) {
        let bytes = if self.big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
        self.buf.extend_from_slice(&bytes);
    }

    /// Append one packet. `ts_ns` is truncated to microseconds for classic captures.
    #[allow(clippy::too_many_arguments)]
    pub fn packet(
        &mut self,
        ts_ns: u64,
        protocol: Protocol,
        src: Ipv4Addr,
        sport: u16,
        dst: Ipv4Addr,
        dport: u16,
        payload: usize,
    ) -> &mut Self {
        let l4_len = match protocol {
            Protocol::Tcp => 20,
            Protocol::Udp => 8,
        };
        let total = 20 + l4_len + payload;
        let mut frame = Vec::with_capacity(14 + total);
        frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 1, 0x02, 0, 0, 0, 0, 2, 0x08, 0x00]);
        frame.extend_from_slice(&[0x45, 0]);
        frame.extend_from_slice(&(total as u16).to_be_bytes());
        frame.extend_from_slice(&[0, 0, 0x40, 0, 64, protocol.number(), 0, 0]);
        frame.extend_from_slice(&src.octets());
        frame.extend_from_slice(&dst.octets());
        frame.extend_from_slice(&sport.to_be_bytes());
        frame.extend_from_slice(&dport.to_be_bytes());
        match protocol {
            Protocol::Tcp => {
                frame.extend_from_slice(&[0; 8]);
                frame.extend_from_slice(&[0x50, 0x18, 0xff, 0xff, 0, 0, 0, 0]);
            }
            Protocol::Udp => {
                frame.extend_from_slice(&((8 + payload) as u16).to_be_bytes());
                frame.extend_from_slice(&[0, 0]);
            }
        }
        frame.resize(14 + total, 0xab);
        let secs = ts_ns / 1_000_000_000;
        let rem = ts_ns % 1_000_000_000;
        self.put32(secs as u32);
        self.put32(if self.nanos { rem } else { rem / 1000 } as u32);
        self.put32(frame.len() as u32);
        self.put32(frame.len() as u32);
        self.buf.extend_from_slice(&frame);
        self
    }

    pub fn bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        std::fs::write(path, &self.buf).map_err(|e| Error::io(path, e))
    }
}
