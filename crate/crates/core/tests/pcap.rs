//! The hand-built capture against hand-derived feature rows.

mod common;

use common::fixtures::{capture, capture_packets, expected_flows};
use flowssl::flow::{extract, flows_from_file, parse_pcap, FeatureConfig};

const TOLERANCE: f64 = 1e-9;

fn check(big_endian: bool, nanos: bool) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.pcap");
    capture(big_endian, nanos).write(&path).unwrap();
    let cfg = FeatureConfig::default();
    let (ds, stats) = extract(&[path.clone()], &cfg).unwrap();
    assert_eq!(stats.accepted, capture_packets().len() as u64);
    assert_eq!(stats.skipped(), 0);
    let expected = expected_flows();
    assert_eq!(ds.len(), expected.len());
    let names = ds.schema.names();
    for (row, (label, values)) in expected.iter().enumerate() {
        assert_eq!(values.len(), names.len(), "{label}");
        for (name, want) in values {
            let col = names.iter().position(|n| n == name).unwrap_or_else(|| panic!("no column {name}"));
            let got = ds.features[(row, col)];
            assert!((got - want).abs() <= TOLERANCE, "{label}: {name} = {got}, expected {want}");
        }
    }
    let (flows, _) = flows_from_file(&path, &cfg.timeouts().unwrap()).unwrap();
    assert_eq!(flows.len(), expected.len());
}

#[test]
fn little_endian_nanosecond_capture() {
    check(false, true);
}

#[test]
fn big_endian_microsecond_capture() {
    check(true, false);
}

#[test]
fn byte_orders_and_resolutions_parse_to_the_same_packets() {
    let a = parse_pcap(capture(false, true).bytes()).unwrap().0;
    let b = parse_pcap(capture(true, false).bytes()).unwrap().0;
    assert_eq!(a, b);
}

#[test]
fn truncated_capture_keeps_whole_records() {
    let builder = capture(false, false);
    let bytes = builder.bytes();
    let (full, _) = parse_pcap(bytes).unwrap();
    let (cut, _) = parse_pcap(&bytes[..bytes.len() - 5]).unwrap();
    assert_eq!(&full[..full.len() - 1], cut.as_slice());
}
