//! Grouping fingertips into hands.
//!
//! The component tree already clusters fingertips spatially: two fingertips
//! of one hand usually share an ancestor well below the root. The tree is
//! walked children first; at every node the clusters handed up by its
//! children are agglomerated with complete linkage, and the allowed linkage
//! distance grows with the size of the merged cluster. Only a handful of
//! clusters meet at any node, so the cubic cost of agglomeration stays small.

mod registration;

use serde::{Deserialize, Serialize};

pub use registration::{
    classify_handedness, identify_thumb, order_contour, register, Finger, HandRegistration, Handedness,
    RegistrationError,
};

use crate::image::BoundingBox;
use crate::mser::{ComponentTree, RegionId};

/// Largest number of fingertips in one cluster.
pub const MAX_CLUSTER_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    /// Maximum complete-link distance (pixels) for a merge producing a
    /// cluster of 2, 3, 4 and 5 fingertips respectively.
    pub max_distance: [f64; 4],
}

impl Default for ClusterConfig {
    fn default() -> Self {
        crate::config::PipelineConfig::default().hands
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("max_distance must be finite, positive and non-decreasing")]
pub struct ClusterConfigError;

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterConfigError> {
        let d = &self.max_distance;
        if d.iter().all(|v| v.is_finite() && *v > 0.0) && d.windows(2).all(|w| w[0] <= w[1]) {
            Ok(())
        } else {
            Err(ClusterConfigError)
        }
    }

    /// Distance limit for a merged cluster of `size` fingertips.
    pub fn limit(&self, size: usize) -> Option<f64> {
        (2..=MAX_CLUSTER_SIZE).contains(&size).then(|| self.max_distance[size - 2])
    }
}

/// A fingertip taking part in clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterInput {
    /// Caller-chosen id, unique within the frame; lower ids win ties.
    pub id: usize,
    pub leaf: RegionId,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandCluster {
    /// Member ids, ascending.
    pub members: Vec<usize>,
    /// Member positions, in the order of `members`.
    pub positions: Vec<[f64; 2]>,
    pub bbox: BoundingBox,
    pub registration: Option<HandRegistration>,
    /// Why a five-member cluster could not be registered.
    pub unregistered: Option<RegistrationError>,
}

impl HandCluster {
    fn singleton(f: &ClusterInput) -> Self {
        HandCluster::new(vec![f.id], vec![f.position])
    }

    pub fn new(members: Vec<usize>, positions: Vec<[f64; 2]>) -> Self {
        assert_eq!(members.len(), positions.len());
        let bbox = BoundingBox::around(&positions).expect("clusters are never empty");
        HandCluster {
            members,
            positions,
            bbox,
            registration: None,
            unregistered: None,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Registers five-member clusters; smaller ones are left anonymous.
    pub fn register(&mut self) {
        if self.len() != MAX_CLUSTER_SIZE {
            return;
        }
        match register(&self.positions) {
            Ok(r) => self.registration = Some(r),
            Err(e) => self.unregistered = Some(e),
        }
    }

    fn absorb(&mut self, other: HandCluster) {
        self.bbox = BoundingBox::around(self.positions.iter().chain(&other.positions)).expect("non-empty");
        let mut pairs: Vec<_> = self
            .members
            .drain(..)
            .zip(self.positions.drain(..))
            .chain(other.members.into_iter().zip(other.positions))
            .collect();
        pairs.sort_by_key(|p| p.0);
        (self.members, self.positions) = pairs.into_iter().unzip();
    }
}

/// Largest distance between a member of `a` and a member of `b`.
pub fn complete_link(a: &HandCluster, b: &HandCluster) -> f64 {
    let mut d = 0.0f64;
    for p in &a.positions {
        for q in &b.positions {
            d = d.max((p[0] - q[0]).hypot(p[1] - q[1]));
        }
    }
    d
}

/// One performed merge, kept so callers can re-check the criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeRecord {
    pub node: Option<RegionId>,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub distance: f64,
}

/// Merges the closest admissible pair until none is left. Pairs are ordered
/// by distance, then by the smallest member ids of the two clusters.
pub fn agglomerate(
    clusters: &mut Vec<HandCluster>,
    cfg: &ClusterConfig,
    node: Option<RegionId>,
    log: &mut Vec<MergeRecord>,
) {
    loop {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let Some(limit) = cfg.limit(clusters[i].len() + clusters[j].len()) else {
                    continue;
                };
                let d = complete_link(&clusters[i], &clusters[j]);
                if d > limit {
                    continue;
                }
                let (ki, kj) = (clusters[i].members[0], clusters[j].members[0]);
                let key = (ki.min(kj), ki.max(kj));
                let better = match &best {
                    None => true,
                    Some((bd, bk, _, _)) => d < *bd || (d == *bd && key < *bk),
                };
                if better {
                    best = Some((d, key, i, j));
                }
            }
        }
        let Some((distance, _, i, j)) = best else {
            return;
        };
        let b = clusters.remove(j);
        log.push(MergeRecord {
            node,
            a: clusters[i].members.clone(),
            b: b.members.clone(),
            distance,
        });
        clusters[i].absorb(b);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Clustering {
    /// Surviving clusters, ordered by their smallest member id.
    pub clusters: Vec<HandCluster>,
    pub merges: Vec<MergeRecord>,
}

/// Clusters fingertips along `tree` from the leaves up.
pub fn cluster_fingertips(tree: &ComponentTree, fingertips: &[ClusterInput], cfg: &ClusterConfig) -> Clustering {
    let mut at: Vec<Vec<HandCluster>> = vec![Vec::new(); tree.len()];
    for f in fingertips {
        debug_assert!(tree.is_leaf(f.leaf));
        at[f.leaf].push(HandCluster::singleton(f));
    }
    let mut merges = Vec::new();
    // ids ascend in postfix order: children before parents
    for id in 0..tree.len() {
        if tree.is_leaf(id) {
            agglomerate(&mut at[id], cfg, Some(id), &mut merges);
        } else {
            let occupied: Vec<RegionId> = tree.children(id).filter(|&c| !at[c].is_empty()).collect();
            let mut children = occupied.into_iter();
            let Some(first) = children.next() else {
                continue;
            };
            let mut clusters = std::mem::take(&mut at[first]);
            let mut joined = false;
            for c in children {
                clusters.append(&mut at[c]);
                joined = true;
            }
            if joined {
                clusters.sort_by_key(|c| c.members[0]);
                agglomerate(&mut clusters, cfg, Some(id), &mut merges);
            }
            at[id] = clusters;
        }
        if let Some(p) = tree.parent(id) {
            debug_assert!(p > id);
        }
    }
    let mut clusters = std::mem::take(&mut at[tree.root()]);
    clusters.sort_by_key(|c| c.members[0]);
    Clustering { clusters, merges }
}
