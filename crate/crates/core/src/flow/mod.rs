//! From packet captures to a tabular flow dataset.

pub mod aggregate;
pub mod dataset;
pub mod features;
pub mod pcap;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use aggregate::{aggregate, Endpoint, FlowKey, FlowRecord, Timeouts};
pub use dataset::{Dataset, FeatureDef, FeatureKind, Schema, Standardizer};
pub use features::{default_constraints, default_schema, featurize, BaseFeatures, FeatureConfig};
pub use pcap::{parse_pcap, PacketRecord, ParseStats, Protocol};

use crate::error::{Error, Result};

/// Parse and aggregate one capture file.
pub fn flows_from_file(path: &Path, timeouts: &Timeouts) -> Result<(Vec<FlowRecord>, ParseStats)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (packets, stats) = parse_pcap(std::io::BufReader::new(file)).map_err(|e| e.in_file(path))?;
    Ok((aggregate(&packets, timeouts), stats))
}

/// Flows from several captures, processed in parallel and concatenated in
/// the order the paths were given.
pub fn extract(paths: &[PathBuf], cfg: &FeatureConfig) -> Result<(Dataset, ParseStats)> {
    let timeouts = cfg.timeouts()?;
    let per_file: Vec<_> = paths
        .par_iter()
        .map(|p| flows_from_file(p, &timeouts))
        .collect::<Result<_>>()?;
    let mut flows = Vec::new();
    let mut stats = ParseStats::default();
    for (f, s) in per_file {
        flows.extend(f);
        stats.merge(&s);
    }
    Ok((featurize(&flows, cfg)?, stats))
}
