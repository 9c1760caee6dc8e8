//! Post-processing: collapsed-point analysis and convergence tables.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use gcs_core::constellation::{BitLabeling, Constellation};
use gcs_core::metrics::MetricRecord;
use gcs_core::trainers::convergence_point;
use gcs_core::Scalar;

/// Merge distance for the collapsed-point analysis.
pub const DEFAULT_MERGE_TOL: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Point indices, ascending.
    pub members: Vec<usize>,
    /// Per bit position (MSB first): the common value if all members agree.
    pub shared_bits: Vec<Option<u8>>,
}

impl Cluster {
    pub fn shared_count(&self) -> usize {
        self.shared_bits.iter().filter(|b| b.is_some()).count()
    }

    /// Label mask such as `10x1x`; `x` marks differing positions.
    pub fn mask(&self) -> String {
        self.shared_bits
            .iter()
            .map(|b| match b {
                Some(0) => '0',
                Some(_) => '1',
                None => 'x',
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistinctPoints {
    pub tol: f64,
    /// Sorted by first member.
    pub clusters: Vec<Cluster>,
}

impl DistinctPoints {
    pub fn count(&self) -> usize {
        self.clusters.len()
    }

    pub fn largest(&self) -> Option<&Cluster> {
        self.clusters.iter().max_by_key(|c| (c.members.len(), c.shared_count()))
    }

    pub fn max_shared_bits_in_merged(&self) -> usize {
        self.clusters.iter().filter(|c| c.members.len() > 1).map(Cluster::shared_count).max().unwrap_or(0)
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clusters of points closer than `tol`. Without a labeling
/// the shared-bit masks are empty.
pub fn distinct_points<T: Scalar>(c: &Constellation<T>, labeling: Option<&BitLabeling>, tol: f64) -> DistinctPoints {
    let pts = c.points();
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if (pts[i] - pts[j]).norm().to_f64_lossy() < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..pts.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let clusters = groups
        .into_values()
        .map(|members| {
            let shared_bits = match labeling {
                Some(l) => (0..l.bits_per_symbol())
                    .map(|p| {
                        let b = l.bit(members[0], p);
                        members.iter().all(|&m| l.bit(m, p) == b).then_some(b)
                    })
                    .collect(),
                None => Vec::new(),
            };
            Cluster { members, shared_bits }
        })
        .collect();
    DistinctPoints { tol, clusters }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub label: String,
    pub final_epoch: usize,
    pub final_mi: f64,
    /// First validated epoch at 99.5 % of the final MI.
    pub epochs_to_converge: usize,
    pub propagations_to_converge: u64,
    pub propagations_per_epoch: f64,
}

/// Convergence table for labeled record streams.
pub fn convergence_report(runs: &[(String, Vec<MetricRecord>)]) -> Result<Vec<ConvergenceRow>> {
    if runs.is_empty() {
        bail!("no record streams to report on");
    }
    runs.iter()
        .map(|(label, recs)| {
            if recs.is_empty() {
                bail!("{label}: empty record stream");
            }
            if recs.windows(2).any(|w| w[1].propagations < w[0].propagations || w[1].epoch < w[0].epoch) {
                bail!("{label}: epochs or propagation counts decrease");
            }
            let last = recs.last().unwrap();
            let Some(final_mi) = last.mi_bits else {
                bail!("{label}: final record has no MI");
            };
            let conv = convergence_point(recs).expect("final record qualifies");
            Ok(ConvergenceRow {
                label: label.clone(),
                final_epoch: last.epoch,
                final_mi,
                epochs_to_converge: conv.epoch,
                propagations_to_converge: conv.propagations,
                propagations_per_epoch: if last.epoch == 0 {
                    0.0
                } else {
                    last.propagations as f64 / last.epoch as f64
                },
            })
        })
        .collect()
}

pub const CONVERGENCE_HEADER: &str =
    "run,final_epoch,final_mi_bits,epochs_to_converge,propagations_to_converge,propagations_per_epoch";

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from(CONVERGENCE_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.label, r.final_epoch, r.final_mi, r.epochs_to_converge, r.propagations_to_converge, r.propagations_per_epoch
        )
        .unwrap();
    }
    s
}
