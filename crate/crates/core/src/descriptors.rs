//! Structural descriptors: observable clusters, average cluster sizes and
//! coordination numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    contact_graph, fractal_dimension, mixing_ratio, Aggregate, ContactGraph, Label, MassWeighting, DEFAULT_KF,
};
use crate::union_find::UnionFind;

/// Maximal connected same-label subsets for `label`, each sorted ascending and
/// ordered by smallest index.
pub fn observable_clusters(a: &Aggregate, label: Label) -> Vec<Vec<usize>> {
    observable_clusters_in(a, &contact_graph(a), label)
}

fn observable_clusters_in(a: &Aggregate, g: &ContactGraph, label: Label) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(a.len());
    for &(i, j) in &g.edges {
        if a.particles[i].label == label && a.particles[j].label == label {
            uf.union(i, j);
        }
    }
    let members: Vec<usize> = (0..a.len()).filter(|&i| a.particles[i].label == label).collect();
    uf.sets_of(&members)
}

pub fn average_cluster_size(a: &Aggregate, label: Label) -> Result<f64> {
    mean_size(&observable_clusters(a, label)).ok_or(Error::LabelAbsent(label as u8))
}

fn mean_size(clusters: &[Vec<usize>]) -> Option<f64> {
    if clusters.is_empty() {
        return None;
    }
    Some(clusters.iter().map(Vec::len).sum::<usize>() as f64 / clusters.len() as f64)
}

/// Mean number of contacts with particles of the other label.
pub fn hetero_coordination(a: &Aggregate) -> f64 {
    let g = contact_graph(a);
    2.0 * hetero_contacts(a, &g) as f64 / a.len() as f64
}

/// Mean number of contacts per particle.
pub fn total_coordination(a: &Aggregate) -> f64 {
    2.0 * contact_graph(a).edges.len() as f64 / a.len() as f64
}

fn hetero_contacts(a: &Aggregate, g: &ContactGraph) -> usize {
    g.edges.iter().filter(|&&(i, j)| a.particles[i].label != a.particles[j].label).count()
}

/// How batch-level average cluster sizes are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchAveraging {
    /// Mean of the per-aggregate averages (aggregates lacking the label are
    /// skipped).
    PerAggregate,
    /// Total particle count over total cluster count, pooled over the batch.
    Pooled,
}

pub fn batch_average_cluster_size(batch: &[Aggregate], label: Label, mode: BatchAveraging) -> Result<f64> {
    let per: Vec<Vec<Vec<usize>>> = batch.iter().map(|a| observable_clusters(a, label)).collect();
    let value = match mode {
        BatchAveraging::PerAggregate => {
            let means: Vec<f64> = per.iter().filter_map(|c| mean_size(c)).collect();
            (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
        }
        BatchAveraging::Pooled => {
            let clusters: usize = per.iter().map(Vec::len).sum();
            let particles: usize = per.iter().flatten().map(Vec::len).sum();
            (clusters > 0).then(|| particles as f64 / clusters as f64)
        }
    };
    value.ok_or(Error::LabelAbsent(label as u8))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorReport {
    pub n_particles: usize,
    /// Equal-mass fractal dimension; absent for degenerate geometry.
    pub fractal_dim: Option<f64>,
    pub mixing_ratio: f64,
    pub avg_cluster_size_label0: Option<f64>,
    pub avg_cluster_size_label1: Option<f64>,
    pub z_hetero: f64,
    pub z_total: f64,
    /// `cluster_size_histogram[l][k]` = number of observable clusters of
    /// label `l` with `k + 1` particles.
    pub cluster_size_histogram: [Vec<usize>; 2],
}

/// CSV columns of [`DescriptorReport::csv_row`], in order. Histograms are
/// written as `;`-separated counts for cluster sizes 1, 2, 3, ...
pub const DESCRIPTOR_COLUMNS: [&str; 9] = [
    "n_particles",
    "fractal_dim",
    "mixing_ratio",
    "avg_cluster_size_label0",
    "avg_cluster_size_label1",
    "z_hetero",
    "z_total",
    "cluster_hist_label0",
    "cluster_hist_label1",
];

impl DescriptorReport {
    pub fn csv_header() -> String {
        DESCRIPTOR_COLUMNS.join(",")
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let hist = |h: &[usize]| h.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        vec![
            self.n_particles.to_string(),
            opt(self.fractal_dim),
            self.mixing_ratio.to_string(),
            opt(self.avg_cluster_size_label0),
            opt(self.avg_cluster_size_label1),
            self.z_hetero.to_string(),
            self.z_total.to_string(),
            hist(&self.cluster_size_histogram[0]),
            hist(&self.cluster_size_histogram[1]),
        ]
    }

    pub fn csv_row(&self) -> String {
        self.csv_fields().join(",")
    }

    /// Parses the fields written by [`Self::csv_fields`].
    pub fn from_csv_fields(fields: &[&str]) -> Result<Self> {
        if fields.len() != DESCRIPTOR_COLUMNS.len() {
            return Err(Error::parse(0, format!("expected {} descriptor fields", DESCRIPTOR_COLUMNS.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| Error::parse(0, format!("bad {} value {:?}", DESCRIPTOR_COLUMNS[i], fields[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let hist = |i: usize| -> Result<Vec<usize>> {
            if fields[i].is_empty() {
                return Ok(Vec::new());
            }
            fields[i]
                .split(';')
                .map(|v| v.parse().map_err(|_| Error::parse(0, format!("bad histogram count {v:?}"))))
                .collect()
        };
        Ok(Self {
            n_particles: fields[0].parse().map_err(|_| Error::parse(0, "bad n_particles"))?,
            fractal_dim: opt(1)?,
            mixing_ratio: num(2)?,
            avg_cluster_size_label0: opt(3)?,
            avg_cluster_size_label1: opt(4)?,
            z_hetero: num(5)?,
            z_total: num(6)?,
            cluster_size_histogram: [hist(7)?, hist(8)?],
        })
    }
}

pub fn descriptor_report(a: &Aggregate) -> DescriptorReport {
    let g = contact_graph(a);
    let n = a.len();
    let per_label = Label::ALL.map(|l| observable_clusters_in(a, &g, l));
    let histogram = |clusters: &[Vec<usize>]| {
        let max = clusters.iter().map(Vec::len).max().unwrap_or(0);
        let mut h = vec![0; max];
        for c in clusters {
            h[c.len() - 1] += 1;
        }
        h
    };
    DescriptorReport {
        n_particles: n,
        fractal_dim: fractal_dimension(a, DEFAULT_KF, MassWeighting::Equal).ok(),
        mixing_ratio: mixing_ratio(a),
        avg_cluster_size_label0: mean_size(&per_label[0]),
        avg_cluster_size_label1: mean_size(&per_label[1]),
        z_hetero: 2.0 * hetero_contacts(a, &g) as f64 / n as f64,
        z_total: 2.0 * g.edges.len() as f64 / n as f64,
        cluster_size_histogram: [histogram(&per_label[0]), histogram(&per_label[1])],
    }
}
