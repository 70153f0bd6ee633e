//! Entity cluster assignment.
//!
//! Role-to-box attention is summed over the roles of each entity group and
//! the boxes of each visual cluster, giving a group × cluster affinity. Each
//! group is grounded to its most attended cluster. The assignment then
//! defines a fixed attention map that spreads every grouped role's attention
//! uniformly over its cluster, used to pool cluster-restricted embeddings.
//!
//! Attention rows are consumed as given; callers decide whether they are
//! normalized.

use crate::error::{MecError, Result};
use crate::model::{AttentionMatrix, EmbeddingMatrix, EntityGroupSet, Matrix, VisualClusterSet};

/// Group × cluster affinity, `J × N`, in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupClusterAffinity {
    groups: usize,
    clusters: usize,
    data: Vec<f64>,
}

impl GroupClusterAffinity {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let clusters = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == clusters), "ragged affinity rows");
        GroupClusterAffinity {
            groups: rows.len(),
            clusters,
            data: rows.concat(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.groups, self.clusters)
    }

    pub fn get(&self, group: usize, cluster: usize) -> f64 {
        self.data[group * self.clusters + cluster]
    }

    pub fn row(&self, group: usize) -> &[f64] {
        &self.data[group * self.clusters..(group + 1) * self.clusters]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Selected cluster per group.
    pub cluster: Vec<usize>,
    /// Affinity mass of the selected cluster per group.
    pub mass: Vec<f64>,
}

/// `aff[j][n] = Σ_{g ∈ group j} Σ_{b ∈ cluster n} A[g, b]`.
pub fn aggregate_attention(
    a: &AttentionMatrix,
    groups: &EntityGroupSet,
    clusters: &VisualClusterSet,
) -> Result<GroupClusterAffinity> {
    let (rows, cols) = a.shape();
    let mut col_cluster = vec![None; cols];
    for (n, members) in clusters.clusters.iter().enumerate() {
        for &b in members {
            if b >= cols {
                return Err(MecError::Index(format!(
                    "cluster {n} references proposal {b}, attention has {cols} columns"
                )));
            }
            col_cluster[b] = Some(n);
        }
    }
    let n_clusters = clusters.len();
    let mut data = vec![0.0f64; groups.len() * n_clusters];
    for (j, group) in groups.groups.iter().enumerate() {
        let out = &mut data[j * n_clusters..(j + 1) * n_clusters];
        for slot in group {
            let r = slot.query_row();
            if r >= rows {
                return Err(MecError::Index(format!(
                    "role {slot} maps to attention row {r}, matrix has {rows} rows"
                )));
            }
            for (b, &v) in a.row(r).iter().enumerate() {
                if let Some(n) = col_cluster[b] {
                    out[n] += v as f64;
                }
            }
        }
    }
    Ok(GroupClusterAffinity {
        groups: groups.len(),
        clusters: n_clusters,
        data,
    })
}

/// Most attended cluster per group; ties go to the lowest cluster index.
/// Several groups may select the same cluster.
pub fn assign_clusters(aff: &GroupClusterAffinity) -> Assignment {
    let mut cluster = Vec::with_capacity(aff.groups);
    let mut mass = Vec::with_capacity(aff.groups);
    for j in 0..aff.groups {
        let (best, m) = aff
            .row(j)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (n, &v)| if v > bv { (n, v) } else { (bi, bv) });
        cluster.push(best);
        mass.push(if aff.clusters == 0 { 0.0 } else { m });
    }
    Assignment { cluster, mass }
}

/// Fixed attention map of shape `shape`: the row of every role in group `j`
/// is `1/|T_j|` on the boxes of its assigned cluster `T_j` and 0 elsewhere.
/// Rows of ungrouped roles are all zero.
pub fn build_fixed_attention(
    asgn: &Assignment,
    groups: &EntityGroupSet,
    clusters: &VisualClusterSet,
    shape: (usize, usize),
) -> Result<Matrix> {
    let (rows, cols) = shape;
    let mut out = Matrix::zeros(rows, cols);
    for (j, group) in groups.groups.iter().enumerate() {
        let n = *asgn
            .cluster
            .get(j)
            .ok_or_else(|| MecError::Index(format!("no assignment for group {j}")))?;
        let members = clusters
            .clusters
            .get(n)
            .ok_or_else(|| MecError::Index(format!("group {j} assigned to missing cluster {n}")))?;
        if members.is_empty() {
            return Err(MecError::DegenerateCluster { group: j, cluster: n });
        }
        let w = 1.0 / members.len() as f32;
        for slot in group {
            let r = slot.query_row();
            if r >= rows {
                return Err(MecError::Index(format!("role {slot} maps to row {r} of {rows}")));
            }
            for &b in members {
                if b >= cols {
                    return Err(MecError::Index(format!("proposal {b} outside {cols} columns")));
                }
                out.set(r, b, w);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbeddings {
    /// One vector per member of each group, in group order.
    pub per_role: Vec<Vec<Vec<f64>>>,
    /// Mean of the group's role vectors.
    pub per_group: Vec<Vec<f64>>,
}

/// Cluster-restricted role embeddings: each grouped role's row of the fixed
/// map applied to the box embeddings, and their mean per group.
pub fn pooled_entity_embedding(
    fixed: &Matrix,
    x: &EmbeddingMatrix,
    groups: &EntityGroupSet,
) -> Result<PooledEmbeddings> {
    if fixed.cols() != x.rows() {
        return Err(MecError::Index(format!(
            "fixed attention has {} columns, embeddings have {} rows",
            fixed.cols(),
            x.rows()
        )));
    }
    let dim = x.cols();
    let mut per_role = Vec::with_capacity(groups.len());
    let mut per_group = Vec::with_capacity(groups.len());
    for group in &groups.groups {
        let mut vectors = Vec::with_capacity(group.len());
        for slot in group {
            let r = slot.query_row();
            if r >= fixed.rows() {
                return Err(MecError::Index(format!("role {slot} maps to row {r}")));
            }
            let mut z = vec![0.0f64; dim];
            for (b, &w) in fixed.row(r).iter().enumerate() {
                if w != 0.0 {
                    for (acc, &v) in z.iter_mut().zip(x.row(b)) {
                        *acc += w as f64 * v as f64;
                    }
                }
            }
            vectors.push(z);
        }
        let mut mean = vec![0.0f64; dim];
        for v in &vectors {
            for (m, &c) in mean.iter_mut().zip(v) {
                *m += c;
            }
        }
        if !vectors.is_empty() {
            for m in &mut mean {
                *m /= vectors.len() as f64;
            }
        }
        per_role.push(vectors);
        per_group.push(mean);
    }
    Ok(PooledEmbeddings { per_role, per_group })
}
