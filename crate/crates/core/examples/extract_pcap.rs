//! Extract flow features from a capture.
//!
//! `cargo run --example extract_pcap [capture.pcap]`; without an argument a
//! small two-flow capture is built first.

use std::net::Ipv4Addr;
use std::path::PathBuf;

use flowssl::flow::{extract, FeatureConfig, Protocol};
use flowssl::synth::PcapBuilder;

fn main() -> flowssl::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let (client, server) = (Ipv4Addr::new(192, 168, 1, 10), Ipv4Addr::new(192, 168, 1, 1));
            let mut b = PcapBuilder::new(false, false);
            b.packet(0, Protocol::Tcp, client, 51000, server, 443, 120);
            b.packet(40_000_000, Protocol::Tcp, server, 443, client, 51000, 1400);
            b.packet(90_000_000, Protocol::Tcp, server, 443, client, 51000, 1400);
            b.packet(2_000_000_000, Protocol::Tcp, client, 51000, server, 443, 0);
            b.packet(10_000_000, Protocol::Udp, client, 40000, server, 53, 32);
            b.packet(25_000_000, Protocol::Udp, server, 53, client, 40000, 96);
            let p = std::env::temp_dir().join("flowssl_example.pcap");
            b.write(&p)?;
            p
        }
    };
    let (ds, stats) = extract(&[path.clone()], &FeatureConfig::default())?;
    println!("{}: {} packets, {} skipped, {} flows", path.display(), stats.accepted, stats.skipped(), ds.len());
    let names = ds.schema.names();
    for (i, row) in ds.features.iter_rows().enumerate() {
        println!("flow {i}");
        for (name, v) in names.iter().zip(row) {
            println!("  {name:<20} {v:.6}");
        }
    }
    Ok(())
}
