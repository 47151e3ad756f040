//! Classic libpcap reader (micro- and nanosecond variants, either byte order).

use std::io::Read;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
pub const MAGIC_NANOS: u32 = 0xa1b2_3c4d;

pub const LINKTYPE_NULL: u32 = 0;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;
pub const LINKTYPE_LINUX_SLL: u32 = 113;
pub const LINKTYPE_IPV4: u32 = 228;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
}

impl Protocol {
    pub fn number(self) -> u8 {
        match self {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketRecord {
    /// Capture time in integer nanoseconds since the epoch.
    pub ts_ns: u64,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    /// IPv4 total length.
    pub total_length: u32,
    /// Bytes after the IP and transport headers.
    pub payload_length: u32,
}

impl PacketRecord {
    /// Capture time in seconds.
    pub fn timestamp(&self) -> f64 {
        self.ts_ns as f64 * 1e-9
    }
}

/// Counters for everything the parser saw but did not turn into a record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStats {
    pub frames: u64,
    pub accepted: u64,
    pub non_ipv4: u64,
    pub other_protocol: u64,
    pub fragments: u64,
    pub truncated: u64,
}

impl ParseStats {
    pub fn skipped(&self) -> u64 {
        self.frames - self.accepted
    }

    pub fn merge(&mut self, other: &ParseStats) {
        self.frames += other.frames;
        self.accepted += other.accepted;
        self.non_ipv4 += other.non_ipv4;
        self.other_protocol += other.other_protocol;
        self.fragments += other.fragments;
        self.truncated += other.truncated;
    }
}

#[derive(Debug, Clone, Copy)]
struct Header {
    swapped: bool,
    nanos: bool,
    linktype: u32,
}

impl Header {
    fn u32(&self, b: &[u8]) -> u32 {
        let raw = [b[0], b[1], b[2], b[3]];
        if self.swapped {
            u32::from_be_bytes(raw)
        } else {
            u32::from_le_bytes(raw)
        }
    }
}

fn parse_header(b: &[u8; 24]) -> Result<Header> {
    let le = u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let be = u32::from_be_bytes([b[0], b[1], b[2], b[3]]);
    // "swapped" means the file is big-endian relative to the reader's LE decode
    let (swapped, nanos) = match (le, be) {
        (MAGIC_MICROS, _) => (false, false),
        (MAGIC_NANOS, _) => (false, true),
        (_, MAGIC_MICROS) => (true, false),
        (_, MAGIC_NANOS) => (true, true),
        _ => return Err(Error::Format(format!("not a pcap capture (magic {le:#010x})"))),
    };
    let mut h = Header {
        swapped,
        nanos,
        linktype: 0,
    };
    h.linktype = h.u32(&b[20..24]) & 0x0fff_ffff;
    match h.linktype {
        LINKTYPE_NULL | LINKTYPE_ETHERNET | LINKTYPE_RAW | LINKTYPE_LINUX_SLL | LINKTYPE_IPV4 => Ok(h),
        other => Err(Error::Format(format!("unsupported link type {other}"))),
    }
}

/// Read a whole capture, returning IPv4 TCP/UDP packets in file order.
pub fn parse_pcap<R: Read>(mut input: R) -> Result<(Vec<PacketRecord>, ParseStats)> {
    let mut gh = [0u8; 24];
    read_full(&mut input, &mut gh)?
        .then_some(())
        .ok_or_else(|| Error::Format("capture shorter than the pcap global header".into()))?;
    let header = parse_header(&gh)?;
    let mut stats = ParseStats::default();
    let mut packets = Vec::new();
    let mut rh = [0u8; 16];
    let mut frame = Vec::new();
    loop {
        match read_full(&mut input, &mut rh)? {
            true => {}
            false => break,
        }
        let secs = header.u32(&rh[0..4]) as u64;
        let frac = header.u32(&rh[4..8]) as u64;
        let incl = header.u32(&rh[8..12]) as usize;
        stats.frames += 1;
        if incl > 1 << 26 {
            stats.truncated += 1;
            break;
        }
        frame.resize(incl, 0);
        if !read_full(&mut input, &mut frame)? {
            // capture cut mid-record
            stats.truncated += 1;
            break;
        }
        let ts_ns = secs * 1_000_000_000 + if header.nanos { frac } else { frac * 1000 };
        match decode_frame(&frame, header, ts_ns) {
            Ok(p) => {
                stats.accepted += 1;
                packets.push(p);
            }
            Err(Skip::NonIpv4) => stats.non_ipv4 += 1,
            Err(Skip::Other) => stats.other_protocol += 1,
            Err(Skip::Fragment) => stats.fragments += 1,
            Err(Skip::Truncated) => stats.truncated += 1,
        }
    }
    Ok((packets, stats))
}

/// Fill `buf` entirely. Returns false on a clean EOF before any byte, and
/// also on a short read (the caller treats that as truncation).
fn read_full<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => return Ok(false),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Format(format!("read failed: {e}"))),
        }
    }
    Ok(true)
}

enum Skip {
    NonIpv4,
    Other,
    Fragment,
    Truncated,
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn decode_frame(frame: &[u8], header: Header, ts_ns: u64) -> Result<PacketRecord, Skip> {
    let ip = match header.linktype {
        LINKTYPE_ETHERNET => {
            let mut off = 12;
            if frame.len() < off + 2 {
                return Err(Skip::Truncated);
            }
            let mut ethertype = be16(frame, off);
            while ethertype == 0x8100 || ethertype == 0x88a8 {
                off += 4;
                if frame.len() < off + 2 {
                    return Err(Skip::Truncated);
                }
                ethertype = be16(frame, off);
            }
            if ethertype != 0x0800 {
                return Err(Skip::NonIpv4);
            }
            &frame[off + 2..]
        }
        LINKTYPE_LINUX_SLL => {
            if frame.len() < 16 {
                return Err(Skip::Truncated);
            }
            if be16(frame, 14) != 0x0800 {
                return Err(Skip::NonIpv4);
            }
            &frame[16..]
        }
        LINKTYPE_NULL => {
            if frame.len() < 4 {
                return Err(Skip::Truncated);
            }
            // address family in the capturing host's byte order
            let le = u32::from_le_bytes([frame[0], frame[1], frame[2], frame[3]]);
            let be = u32::from_be_bytes([frame[0], frame[1], frame[2], frame[3]]);
            if le != 2 && be != 2 {
                return Err(Skip::NonIpv4);
            }
            &frame[4..]
        }
        _ => frame,
    };
    decode_ipv4(ip, ts_ns)
}

fn decode_ipv4(ip: &[u8], ts_ns: u64) -> Result<PacketRecord, Skip> {
    if ip.is_empty() {
        return Err(Skip::Truncated);
    }
    if ip[0] >> 4 != 4 {
        return Err(Skip::NonIpv4);
    }
    if ip.len() < 20 {
        return Err(Skip::Truncated);
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ihl < 20 || ip.len() < ihl {
        return Err(Skip::Truncated);
    }
    let total_length = be16(ip, 2) as u32;
    let frag_offset = be16(ip, 6) & 0x1fff;
    let protocol = match ip[9] {
        6 => Protocol::Tcp,
        17 => Protocol::Udp,
        _ => return Err(Skip::Other),
    };
    if frag_offset != 0 {
        return Err(Skip::Fragment);
    }
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let l4 = &ip[ihl..];
    let (l4_header, src_port, dst_port) = match protocol {
        Protocol::Tcp => {
            if l4.len() < 20 {
                return Err(Skip::Truncated);
            }
            ((l4[12] >> 4) as u32 * 4, be16(l4, 0), be16(l4, 2))
        }
        Protocol::Udp => {
            if l4.len() < 8 {
                return Err(Skip::Truncated);
            }
            (8, be16(l4, 0), be16(l4, 2))
        }
    };
    Ok(PacketRecord {
        ts_ns,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        protocol,
        total_length,
        payload_length: total_length.saturating_sub(ihl as u32 + l4_header),
    })
}
