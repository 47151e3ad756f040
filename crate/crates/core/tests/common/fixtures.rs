use std::net::Ipv4Addr;

use flowssl::flow::{Protocol, Standardizer};
use flowssl::fusion::{summarize, BranchPrediction};
use flowssl::nn::Matrix;
use flowssl::synth::{generate, inject_noise, split, PcapBuilder, SynthConfig};
use rand::Rng;

use super::rng;

pub const NOISE_RATE: f64 = 0.1;

/// The default ten-class mixture with exactly 10% of the labels flipped.
pub struct NoisyFixture {
    pub x: Matrix,
    pub clean: Vec<usize>,
    pub noisy: Vec<usize>,
    pub flipped: Vec<bool>,
    pub classes: usize,
}

pub fn noisy_fixture(seed: u64, samples: usize) -> NoisyFixture {
    let cfg = SynthConfig {
        samples,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg.spec(seed).unwrap()).unwrap();
    let clean = ds.labels.clone().unwrap();
    let classes = cfg.priors.len();
    let (noisy, flipped) = inject_noise(&clean, classes, NOISE_RATE, seed).unwrap();
    NoisyFixture {
        x: ds.standardize().unwrap().encode(),
        clean,
        noisy,
        flipped,
        classes,
    }
}

/// Train rows carry flipped labels; test rows keep the clean ones.
pub struct AblationFixture {
    pub x_train: Matrix,
    pub y_train: Vec<usize>,
    pub flipped: Vec<bool>,
    pub x_test: Matrix,
    pub y_test: Vec<usize>,
    pub classes: usize,
}

pub fn ablation_fixture(seed: u64, samples: usize) -> AblationFixture {
    let cfg = SynthConfig {
        samples,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg.spec(seed).unwrap()).unwrap();
    let labels = ds.labels.clone().unwrap();
    let classes = cfg.priors.len();
    let parts = split(&labels, classes, cfg.seed_fraction, cfg.test_fraction, seed);
    let mut train_rows = parts.seed.clone();
    train_rows.extend(&parts.unlabeled);
    train_rows.sort_unstable();
    let train = ds.subset(&train_rows);
    let test = ds.subset(&parts.test);
    let t = Standardizer::fit(&train);
    let clean_train = train.labels.clone().unwrap();
    let (y_train, flipped) = inject_noise(&clean_train, classes, NOISE_RATE, seed).unwrap();
    AblationFixture {
        x_train: train.apply_standardizer(&t).unwrap().encode(),
        y_train,
        flipped,
        x_test: test.apply_standardizer(&t).unwrap().encode(),
        y_test: test.labels.clone().unwrap(),
        classes,
    }
}

/// Two branches whose mistakes fall on disjoint halves of the classes, plus
/// a small share of rows where both are wrong. Wrong answers tend to be
/// less confident, with overlap.
pub fn complementary_branches(seed: u64, n: usize, k: usize) -> (Vec<usize>, BranchPrediction, BranchPrediction) {
    let mut r = rng(seed);
    let truth: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
    let mut pa = Matrix::zeros(n, k);
    let mut pb = Matrix::zeros(n, k);
    for (i, &y) in truth.iter().enumerate() {
        let both = r.gen_bool(0.02);
        let a_wrong = both || (y < k / 2 && r.gen_bool(0.25));
        let b_wrong = both || (y >= k / 2 && r.gen_bool(0.25));
        for (m, wrong) in [(&mut pa, a_wrong), (&mut pb, b_wrong)] {
            let (label, conf) = if wrong {
                ((y + r.gen_range(1..k)) % k, r.gen_range(0.3..0.6))
            } else {
                (y, r.gen_range(0.45..0.95))
            };
            let row = m.row_mut(i);
            row.fill((1.0 - conf) / (k - 1) as f64);
            row[label] = conf;
        }
    }
    (truth, summarize(&pa).unwrap(), summarize(&pb).unwrap())
}

const CLIENT: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 1);
const WEB: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);
const RESOLVER_CLIENT: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 3);
const RESOLVER: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 4);
const SINK: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 5);
const PUSHER: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 6);

type Pkt = (u64, Protocol, Ipv4Addr, u16, Ipv4Addr, u16, usize);

fn ms(v: u64) -> u64 {
    v * 1_000_000
}

/// Packets of the capture fixture, in time order.
///
/// * web: TCP 10.0.0.1:40000 ↔ 10.0.0.2:443 at 0, 0.5, 1 and 3 s, then
///   idle for 17 s (over the 15 s idle timeout) and two more at 20 and 20.2 s.
/// * dns: UDP 10.0.0.3:5353 ↔ 10.0.0.4:53 every 10 s from 0.1 to 110.1 s,
///   then 118.1 s; 125.1 s is past the 120 s active timeout, so 125.1 and
///   125.6 s start a second flow.
/// * push: TCP 10.0.0.6:80 → 10.0.0.5:50000 at 5 and 5.25 s, one direction.
pub fn capture_packets() -> Vec<Pkt> {
    let tcp = Protocol::Tcp;
    let udp = Protocol::Udp;
    let mut p: Vec<Pkt> = vec![
        (ms(0), tcp, CLIENT, 40000, WEB, 443, 100),
        (ms(500), tcp, WEB, 443, CLIENT, 40000, 1000),
        (ms(1000), tcp, CLIENT, 40000, WEB, 443, 0),
        (ms(3000), tcp, WEB, 443, CLIENT, 40000, 500),
        (ms(20000), tcp, CLIENT, 40000, WEB, 443, 60),
        (ms(20200), tcp, WEB, 443, CLIENT, 40000, 200),
        (ms(5000), tcp, PUSHER, 80, SINK, 50000, 0),
        (ms(5250), tcp, PUSHER, 80, SINK, 50000, 10),
        (ms(118100), udp, RESOLVER, 53, RESOLVER_CLIENT, 5353, 30),
        (ms(125100), udp, RESOLVER_CLIENT, 5353, RESOLVER, 53, 50),
        (ms(125600), udp, RESOLVER, 53, RESOLVER_CLIENT, 5353, 30),
    ];
    for k in 0..12u64 {
        let t = ms(100 + 10_000 * k);
        if k == 1 {
            p.push((t, udp, RESOLVER, 53, RESOLVER_CLIENT, 5353, 30));
        } else {
            p.push((t, udp, RESOLVER_CLIENT, 5353, RESOLVER, 53, 50));
        }
    }
    p.sort_by_key(|x| x.0);
    p
}

pub fn capture(big_endian: bool, nanos: bool) -> PcapBuilder {
    let mut b = PcapBuilder::new(big_endian, nanos);
    for (t, proto, src, sport, dst, dport, payload) in capture_packets() {
        b.packet(t, proto, src, sport, dst, dport, payload);
    }
    b
}

/// Hand-derived feature rows of [`capture`], in order of first packet.
/// IPv4 total lengths: TCP is 40 bytes plus payload, UDP 28 plus payload.
pub fn expected_flows() -> Vec<(&'static str, Vec<(&'static str, f64)>)> {
    vec![
        (
            "web, first segment",
            vec![
                ("total_packets", 4.0),
                ("total_bytes", 1760.0),
                ("duration", 3.0),
                ("mean_pkt_len", 440.0),
                ("min_pkt_len", 40.0),
                ("max_pkt_len", 1040.0),
                // lengths 140, 1040, 40, 540 around 440
                ("std_pkt_len", (620000.0f64 / 4.0).sqrt()),
                ("mean_iat", 1.0),
                ("min_iat", 0.5),
                ("max_iat", 2.0),
                ("std_iat", 0.5f64.sqrt()),
                ("throughput", 1760.0 / 3.0),
                ("up_bytes", 180.0),
                ("down_bytes", 1580.0),
                ("up_packets", 2.0),
                ("down_packets", 2.0),
                ("up_down_byte_ratio", 180.0 / 1580.0),
                ("burst_count", 2.0),
                ("mean_burst_len", 2.0),
                ("protocol", 0.0),
                ("direction", 2.0),
            ],
        ),
        (
            "dns, first segment",
            vec![
                ("total_packets", 13.0),
                ("total_bytes", 974.0),
                ("duration", 118.0),
                ("mean_pkt_len", 974.0 / 13.0),
                ("min_pkt_len", 58.0),
                ("max_pkt_len", 78.0),
                // eleven 78s and two 58s
                ("std_pkt_len", 8800.0f64.sqrt() / 13.0),
                ("mean_iat", 118.0 / 12.0),
                ("min_iat", 8.0),
                ("max_iat", 10.0),
                // eleven gaps of 10 s and one of 8 s
                ("std_iat", 11.0f64.sqrt() / 6.0),
                ("throughput", 974.0 / 118.0),
                ("up_bytes", 858.0),
                ("down_bytes", 116.0),
                ("up_packets", 11.0),
                ("down_packets", 2.0),
                ("up_down_byte_ratio", 858.0 / 116.0),
                ("burst_count", 13.0),
                ("mean_burst_len", 1.0),
                ("protocol", 1.0),
                ("direction", 2.0),
            ],
        ),
        (
            "push",
            vec![
                ("total_packets", 2.0),
                ("total_bytes", 90.0),
                ("duration", 0.25),
                ("mean_pkt_len", 45.0),
                ("min_pkt_len", 40.0),
                ("max_pkt_len", 50.0),
                ("std_pkt_len", 5.0),
                ("mean_iat", 0.25),
                ("min_iat", 0.25),
                ("max_iat", 0.25),
                ("std_iat", 0.0),
                ("throughput", 360.0),
                ("up_bytes", 90.0),
                ("down_bytes", 0.0),
                ("up_packets", 2.0),
                ("down_packets", 0.0),
                ("up_down_byte_ratio", 90.0),
                ("burst_count", 1.0),
                ("mean_burst_len", 2.0),
                ("protocol", 0.0),
                ("direction", 0.0),
            ],
        ),
        (
            "web, after idle timeout",
            vec![
                ("total_packets", 2.0),
                ("total_bytes", 340.0),
                ("duration", 0.2),
                ("mean_pkt_len", 170.0),
                ("min_pkt_len", 100.0),
                ("max_pkt_len", 240.0),
                ("std_pkt_len", 70.0),
                ("mean_iat", 0.2),
                ("min_iat", 0.2),
                ("max_iat", 0.2),
                ("std_iat", 0.0),
                ("throughput", 1700.0),
                ("up_bytes", 100.0),
                ("down_bytes", 240.0),
                ("up_packets", 1.0),
                ("down_packets", 1.0),
                ("up_down_byte_ratio", 100.0 / 240.0),
                ("burst_count", 1.0),
                ("mean_burst_len", 2.0),
                ("protocol", 0.0),
                ("direction", 2.0),
            ],
        ),
        (
            "dns, after active timeout",
            vec![
                ("total_packets", 2.0),
                ("total_bytes", 136.0),
                ("duration", 0.5),
                ("mean_pkt_len", 68.0),
                ("min_pkt_len", 58.0),
                ("max_pkt_len", 78.0),
                ("std_pkt_len", 10.0),
                ("mean_iat", 0.5),
                ("min_iat", 0.5),
                ("max_iat", 0.5),
                ("std_iat", 0.0),
                ("throughput", 272.0),
                ("up_bytes", 78.0),
                ("down_bytes", 58.0),
                ("up_packets", 1.0),
                ("down_packets", 1.0),
                ("up_down_byte_ratio", 78.0 / 58.0),
                ("burst_count", 1.0),
                ("mean_burst_len", 2.0),
                ("protocol", 1.0),
                ("direction", 2.0),
            ],
        ),
    ]
}
