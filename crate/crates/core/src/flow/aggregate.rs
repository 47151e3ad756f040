use std::collections::HashMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::pcap::{PacketRecord, Protocol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

/// Direction-free 5-tuple: the lexicographically smaller endpoint comes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub protocol: Protocol,
    pub lo: Endpoint,
    pub hi: Endpoint,
}

impl FlowKey {
    pub fn of(p: &PacketRecord) -> Self {
        let s = Endpoint {
            ip: p.src_ip,
            port: p.src_port,
        };
        let d = Endpoint {
            ip: p.dst_ip,
            port: p.dst_port,
        };
        let (lo, hi) = if s <= d { (s, d) } else { (d, s) };
        Self {
            protocol: p.protocol,
            lo,
            hi,
        }
    }
}

/// Flow segmentation thresholds, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timeouts {
    pub idle: f64,
    pub active: f64,
    pub burst_gap: f64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self {
            idle: 15.0,
            active: 120.0,
            burst_gap: 1.0,
        }
    }
}

fn secs_to_ns(s: f64) -> u64 {
    (s * 1e9).round().max(0.0) as u64
}

/// One bidirectional flow. "Up" is the direction of the first packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub initiator: Endpoint,
    pub up_packets: u64,
    pub up_bytes: u64,
    pub down_packets: u64,
    pub down_bytes: u64,
    pub len_min: u32,
    pub len_max: u32,
    pub len_sum: u64,
    pub len_sum_sq: u128,
    pub iat_min_ns: u64,
    pub iat_max_ns: u64,
    pub iat_sum_ns: u64,
    pub iat_sum_sq_ns: u128,
    pub first_ns: u64,
    pub last_ns: u64,
    pub bursts: u64,
}

impl FlowRecord {
    fn start(p: &PacketRecord) -> Self {
        let len = p.total_length;
        Self {
            key: FlowKey::of(p),
            initiator: Endpoint {
                ip: p.src_ip,
                port: p.src_port,
            },
            up_packets: 1,
            up_bytes: len as u64,
            down_packets: 0,
            down_bytes: 0,
            len_min: len,
            len_max: len,
            len_sum: len as u64,
            len_sum_sq: (len as u128) * (len as u128),
            iat_min_ns: 0,
            iat_max_ns: 0,
            iat_sum_ns: 0,
            iat_sum_sq_ns: 0,
            first_ns: p.ts_ns,
            last_ns: p.ts_ns,
            bursts: 1,
        }
    }

    fn push(&mut self, p: &PacketRecord, burst_gap_ns: u64) {
        let len = p.total_length;
        if p.src_ip == self.initiator.ip && p.src_port == self.initiator.port {
            self.up_packets += 1;
            self.up_bytes += len as u64;
        } else {
            self.down_packets += 1;
            self.down_bytes += len as u64;
        }
        let iat = p.ts_ns - self.last_ns;
        if self.packets() == 2 {
            self.iat_min_ns = iat;
            self.iat_max_ns = iat;
        } else {
            self.iat_min_ns = self.iat_min_ns.min(iat);
            self.iat_max_ns = self.iat_max_ns.max(iat);
        }
        self.iat_sum_ns += iat;
        self.iat_sum_sq_ns += (iat as u128) * (iat as u128);
        if iat > burst_gap_ns {
            self.bursts += 1;
        }
        self.len_min = self.len_min.min(len);
        self.len_max = self.len_max.max(len);
        self.len_sum += len as u64;
        self.len_sum_sq += (len as u128) * (len as u128);
        self.last_ns = p.ts_ns;
    }

    pub fn packets(&self) -> u64 {
        self.up_packets + self.down_packets
    }

    pub fn bytes(&self) -> u64 {
        self.up_bytes + self.down_bytes
    }

    pub fn duration(&self) -> f64 {
        (self.last_ns - self.first_ns) as f64 * 1e-9
    }

    /// Fewer than two packets: timing statistics are degenerate.
    pub fn is_flagged(&self) -> bool {
        self.packets() < 2
    }

    pub fn mean_len(&self) -> f64 {
        self.len_sum as f64 / self.packets() as f64
    }

    /// Population standard deviation of packet lengths, from exact integer sums.
    pub fn std_len(&self) -> f64 {
        exact_std(self.packets(), self.len_sum as u128, self.len_sum_sq)
    }

    pub fn iat_count(&self) -> u64 {
        self.packets() - 1
    }

    pub fn mean_iat(&self) -> f64 {
        match self.iat_count() {
            0 => 0.0,
            n => self.iat_sum_ns as f64 / n as f64 * 1e-9,
        }
    }

    pub fn std_iat(&self) -> f64 {
        exact_std(self.iat_count(), self.iat_sum_ns as u128, self.iat_sum_sq_ns) * 1e-9
    }
}

fn exact_std(n: u64, sum: u128, sum_sq: u128) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let n = n as u128;
    // n·Σx² − (Σx)² is an exact non-negative integer
    let num = n * sum_sq - sum * sum;
    ((num as f64) / ((n * n) as f64)).sqrt()
}

/// Group packets into bidirectional flows.
///
/// Packets are stably sorted by timestamp first. A packet more than `idle`
/// after its flow's last packet, or more than `active` after its first,
/// starts a new record. Output is ordered by first packet.
pub fn aggregate(packets: &[PacketRecord], timeouts: &Timeouts) -> Vec<FlowRecord> {
    let idle = secs_to_ns(timeouts.idle);
    let active = secs_to_ns(timeouts.active);
    let burst_gap = secs_to_ns(timeouts.burst_gap);
    let mut sorted: Vec<&PacketRecord> = packets.iter().collect();
    sorted.sort_by_key(|p| p.ts_ns);

    let mut open: HashMap<FlowKey, usize> = HashMap::new();
    let mut flows: Vec<FlowRecord> = Vec::new();
    for p in sorted {
        let key = FlowKey::of(p);
        match open.get(&key) {
            Some(&i)
                if p.ts_ns - flows[i].last_ns <= idle && p.ts_ns - flows[i].first_ns <= active =>
            {
                flows[i].push(p, burst_gap);
            }
            _ => {
                open.insert(key, flows.len());
                flows.push(FlowRecord::start(p));
            }
        }
    }
    flows
}
