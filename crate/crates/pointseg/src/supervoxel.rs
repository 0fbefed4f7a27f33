//! Graph-based over-segmentation into supervoxels and expansion of click
//! labels to supervoxel-level weak labels.
//!
//! The partition runs the Felzenszwalb-Huttenlocher merge criterion on a
//! spatial k-nearest-neighbor graph. Edge weights measure appearance only
//! (color and normal differences), so a supervoxel is a patch of points
//! that look alike.

use serde::{Deserialize, Serialize};

use crate::pointcloud::{ClickAnnotation, Scene};
use crate::{Error, Label, Result, SENTINEL_NONE};

/// Per-point supervoxel ids, dense in `[0, num_supervoxels)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervoxelPartition {
    pub sv_id: Vec<usize>,
    pub num_supervoxels: usize,
}

impl SupervoxelPartition {
    /// Point indices per supervoxel, each list ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_supervoxels];
        for (i, &sv) in self.sv_id.iter().enumerate() {
            members[sv].push(i);
        }
        members
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervoxelParams {
    pub k_neighbors: usize,
    /// Felzenszwalb-Huttenlocher scale constant; larger values merge more.
    pub merge_threshold: f64,
    /// Segments smaller than this are absorbed into their lowest-weight
    /// neighbor.
    pub min_size: usize,
    pub color_scale: f64,
    pub normal_scale: f64,
}

impl Default for SupervoxelParams {
    fn default() -> Self {
        SupervoxelParams {
            k_neighbors: 8,
            merge_threshold: 0.05,
            min_size: 4,
            color_scale: 1.0,
            normal_scale: 1.0,
        }
    }
}

impl SupervoxelParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::InvalidInput("k_neighbors must be at least 1".into()));
        }
        if self.merge_threshold < 0.0 {
            return Err(Error::InvalidInput("merge_threshold must be nonnegative".into()));
        }
        if self.color_scale < 0.0 || self.normal_scale < 0.0 {
            return Err(Error::InvalidInput("feature scales must be nonnegative".into()));
        }
        Ok(())
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    // Largest edge weight merged inside each component.
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize, weight: f64) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = self.internal[big].max(self.internal[small]).max(weight);
    }
}

/// Undirected k-NN edges `(i, j, weight)` with `i < j`, weight measured in
/// scaled (color, normal) feature space.
fn knn_edges(scene: &Scene, params: &SupervoxelParams) -> Vec<(usize, usize, f64)> {
    let n = scene.len();
    let k = params.k_neighbors.min(n.saturating_sub(1));
    let mut edge_set = std::collections::BTreeSet::new();
    for i in 0..n {
        let pi = scene.positions[i];
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let pj = scene.positions[j];
                let d2 = (0..3).map(|d| (pi[d] - pj[d]).powi(2)).sum::<f64>();
                (d2, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in dists.iter().take(k) {
            edge_set.insert((i.min(j), i.max(j)));
        }
    }
    edge_set
        .into_iter()
        .map(|(i, j)| {
            let dc: f64 = (0..3)
                .map(|d| ((scene.colors[i][d] - scene.colors[j][d]) * params.color_scale).powi(2))
                .sum();
            let dn: f64 = (0..3)
                .map(|d| ((scene.normals[i][d] - scene.normals[j][d]) * params.normal_scale).powi(2))
                .sum();
            (i, j, (dc + dn).sqrt())
        })
        .collect()
}

/// Segments the scene into supervoxels.
///
/// Deterministic given its inputs. Ids are dense and ordered by first point
/// occurrence.
pub fn build_partition(scene: &Scene, params: &SupervoxelParams) -> Result<SupervoxelPartition> {
    params.validate()?;
    scene.validate()?;
    let n = scene.len();
    let mut edges = knn_edges(scene, params);
    edges.sort_by(|a, b| {
        a.2.partial_cmp(&b.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });

    let mut ds = DisjointSet::new(n);
    for &(a, b, w) in &edges {
        let (ra, rb) = (ds.find(a), ds.find(b));
        if ra == rb {
            continue;
        }
        let reach_a = ds.internal[ra] + params.merge_threshold / ds.size[ra] as f64;
        let reach_b = ds.internal[rb] + params.merge_threshold / ds.size[rb] as f64;
        if w <= reach_a.min(reach_b) {
            ds.union(ra, rb, w);
        }
    }
    // Absorb undersized segments into their cheapest neighbor.
    if params.min_size > 1 {
        for &(a, b, w) in &edges {
            let (ra, rb) = (ds.find(a), ds.find(b));
            if ra != rb && (ds.size[ra] < params.min_size || ds.size[rb] < params.min_size) {
                ds.union(ra, rb, w);
            }
        }
    }

    let mut id_of_root = std::collections::BTreeMap::new();
    let mut sv_id = vec![0usize; n];
    for (i, id) in sv_id.iter_mut().enumerate() {
        let root = ds.find(i);
        let next = id_of_root.len();
        *id = *id_of_root.entry(root).or_insert(next);
    }
    Ok(SupervoxelPartition {
        sv_id,
        num_supervoxels: id_of_root.len(),
    })
}

/// Weak labels after supervoxel expansion. Labeled points form a union of
/// whole supervoxels and agree within each supervoxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakLabels {
    pub instance: Vec<Label>,
    pub semantic: Vec<Label>,
}

impl WeakLabels {
    pub fn labeled_count(&self) -> usize {
        self.instance.iter().filter(|&&l| l != SENTINEL_NONE).count()
    }
}

/// Expands each click to every point of its supervoxel.
///
/// Two clicks with different instance ids in one supervoxel mean the
/// partition is too coarse for the annotation; that is a hard error rather
/// than a vote, since silently mixed labels would corrupt the metric
/// learning losses.
pub fn expand_labels(
    partition: &SupervoxelPartition,
    clicks: &ClickAnnotation,
) -> Result<WeakLabels> {
    let n = partition.sv_id.len();
    let mut sv_instance: Vec<Label> = vec![SENTINEL_NONE; partition.num_supervoxels];
    let mut sv_semantic: Vec<Label> = vec![SENTINEL_NONE; partition.num_supervoxels];
    for c in &clicks.clicks {
        if c.point >= n {
            return Err(Error::InvalidInput(format!(
                "click point index {} out of range (N={n})",
                c.point
            )));
        }
        let sv = partition.sv_id[c.point];
        if sv_instance[sv] != SENTINEL_NONE && sv_instance[sv] != c.instance {
            return Err(Error::LabelConflict {
                supervoxel: sv,
                first: sv_instance[sv],
                second: c.instance,
            });
        }
        sv_instance[sv] = c.instance;
        sv_semantic[sv] = c.class;
    }
    let mut instance = vec![SENTINEL_NONE; n];
    let mut semantic = vec![SENTINEL_NONE; n];
    for i in 0..n {
        let sv = partition.sv_id[i];
        instance[i] = sv_instance[sv];
        semantic[i] = sv_semantic[sv];
    }
    Ok(WeakLabels { instance, semantic })
}

/// Debug dump: one `point_index sv_id` row per point.
pub fn partition_to_string(partition: &SupervoxelPartition) -> String {
    let mut out = String::new();
    for (i, sv) in partition.sv_id.iter().enumerate() {
        out.push_str(&format!("{i} {sv}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{
        generate_scene, ObjectTemplate, PartSpec, Placement, PrimitiveKind, SceneSpec,
    };
    use crate::pointcloud::simulate_clicks;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn two_cluster_scene() -> Scene {
        // Two blobs 10 m apart, uniform color within each, different across.
        let mut positions = Vec::new();
        let mut colors = Vec::new();
        let mut normals = Vec::new();
        let mut gt_semantic = Vec::new();
        let mut gt_instance = Vec::new();
        for g in 0..2 {
            let cx = g as f64 * 10.0;
            for i in 0..12 {
                let t = i as f64 * 0.01;
                positions.push([cx + t, t * 0.5, 0.0]);
                colors.push(if g == 0 { [0.9, 0.1, 0.1] } else { [0.1, 0.1, 0.9] });
                normals.push([0.0, 0.0, 1.0]);
                gt_semantic.push(g as Label);
                gt_instance.push(g as Label);
            }
        }
        Scene {
            positions,
            colors,
            normals,
            gt_semantic,
            gt_instance,
            num_classes: 2,
        }
    }

    /// Brute-force oracle: connected components of the k-NN graph keeping
    /// only edges within the merge threshold.
    fn thresholded_components(scene: &Scene, params: &SupervoxelParams) -> Vec<usize> {
        let edges = knn_edges(scene, params);
        let mut ds = DisjointSet::new(scene.len());
        for (a, b, w) in edges {
            if w <= params.merge_threshold {
                ds.union(a, b, w);
            }
        }
        let mut map = std::collections::BTreeMap::new();
        (0..scene.len())
            .map(|i| {
                let r = ds.find(i);
                let next = map.len();
                *map.entry(r).or_insert(next)
            })
            .collect()
    }

    #[test]
    fn separated_clusters_give_two_supervoxels() {
        let scene = two_cluster_scene();
        let params = SupervoxelParams {
            min_size: 1,
            merge_threshold: 0.5,
            ..SupervoxelParams::default()
        };
        let part = build_partition(&scene, &params).unwrap();
        assert_eq!(part.num_supervoxels, 2);
        let oracle = thresholded_components(&scene, &params);
        assert_eq!(part.sv_id, oracle);
        for i in 0..scene.len() {
            assert_eq!(part.sv_id[i], if i < 12 { 0 } else { 1 });
        }
    }

    #[test]
    fn infinite_threshold_merges_everything() {
        let scene = two_cluster_scene();
        let params = SupervoxelParams {
            merge_threshold: f64::INFINITY,
            k_neighbors: 12,
            min_size: 1,
            ..SupervoxelParams::default()
        };
        // k=12 bridges the two blobs, making the graph connected.
        let part = build_partition(&scene, &params).unwrap();
        assert_eq!(part.num_supervoxels, 1);
    }

    #[test]
    fn zero_threshold_keeps_every_point_separate() {
        let spec = SceneSpec {
            num_instances: 2,
            points_per_instance: (30, 30),
            color_jitter: 0.03,
            seed: 5,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let params = SupervoxelParams {
            merge_threshold: 0.0,
            min_size: 1,
            ..SupervoxelParams::default()
        };
        let part = build_partition(&scene, &params).unwrap();
        assert_eq!(part.num_supervoxels, scene.len());
    }

    #[test]
    fn partition_invariant_under_permutation() {
        let spec = SceneSpec {
            num_instances: 3,
            points_per_instance: (40, 40),
            seed: 21,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let params = SupervoxelParams::default();
        let part = build_partition(&scene, &params).unwrap();

        let mut order: Vec<usize> = (0..scene.len()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        order.shuffle(&mut rng);
        let shuffled = Scene {
            positions: order.iter().map(|&i| scene.positions[i]).collect(),
            colors: order.iter().map(|&i| scene.colors[i]).collect(),
            normals: order.iter().map(|&i| scene.normals[i]).collect(),
            gt_semantic: order.iter().map(|&i| scene.gt_semantic[i]).collect(),
            gt_instance: order.iter().map(|&i| scene.gt_instance[i]).collect(),
            num_classes: scene.num_classes,
        };
        let part2 = build_partition(&shuffled, &params).unwrap();
        assert_eq!(part.num_supervoxels, part2.num_supervoxels);
        // Same partition up to relabeling: ids must correspond one-to-one.
        let mut fwd = std::collections::BTreeMap::new();
        for (new_idx, &old_idx) in order.iter().enumerate() {
            let a = part.sv_id[old_idx];
            let b = part2.sv_id[new_idx];
            assert_eq!(*fwd.entry(a).or_insert(b), b);
        }
    }

    #[test]
    fn expansion_labels_whole_supervoxels() {
        let scene = two_cluster_scene();
        let params = SupervoxelParams {
            min_size: 1,
            merge_threshold: 0.5,
            ..SupervoxelParams::default()
        };
        let part = build_partition(&scene, &params).unwrap();
        let clicks = ClickAnnotation {
            clicks: vec![crate::pointcloud::Click {
                point: 0,
                instance: 0,
                class: 0,
            }],
            clicks_per_instance: 1,
        };
        let weak = expand_labels(&part, &clicks).unwrap();
        assert_eq!(weak.labeled_count(), 12);
        for i in 0..12 {
            assert_eq!(weak.instance[i], 0);
            assert_eq!(weak.semantic[i], 0);
        }
        for i in 12..24 {
            assert_eq!(weak.instance[i], SENTINEL_NONE);
        }
    }

    #[test]
    fn expansion_conflict_is_an_error() {
        let scene = two_cluster_scene();
        let params = SupervoxelParams {
            min_size: 1,
            merge_threshold: 0.5,
            ..SupervoxelParams::default()
        };
        let part = build_partition(&scene, &params).unwrap();
        let clicks = ClickAnnotation {
            clicks: vec![
                crate::pointcloud::Click { point: 0, instance: 0, class: 0 },
                crate::pointcloud::Click { point: 1, instance: 1, class: 0 },
            ],
            clicks_per_instance: 1,
        };
        match expand_labels(&part, &clicks).unwrap_err() {
            Error::LabelConflict { supervoxel, first, second } => {
                assert_eq!(supervoxel, 0);
                assert_eq!((first, second), (0, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn same_instance_clicks_in_one_supervoxel_agree() {
        let scene = two_cluster_scene();
        let params = SupervoxelParams {
            min_size: 1,
            merge_threshold: 0.5,
            ..SupervoxelParams::default()
        };
        let part = build_partition(&scene, &params).unwrap();
        let clicks = ClickAnnotation {
            clicks: vec![
                crate::pointcloud::Click { point: 0, instance: 0, class: 0 },
                crate::pointcloud::Click { point: 5, instance: 0, class: 0 },
            ],
            clicks_per_instance: 2,
        };
        let weak = expand_labels(&part, &clicks).unwrap();
        assert_eq!(weak.labeled_count(), 12);
    }

    #[test]
    fn expanded_labels_are_pure_on_separated_scenes() {
        let spec = SceneSpec {
            templates: vec![
                ObjectTemplate {
                    parts: vec![PartSpec {
                        kind: PrimitiveKind::Box,
                        size: [0.1, 0.1, 0.1],
                        offset: [0.0, 0.0, 0.1],
                        color: [0.9, 0.1, 0.1],
                    }],
                },
                ObjectTemplate {
                    parts: vec![PartSpec {
                        kind: PrimitiveKind::Sphere,
                        size: [0.1, 0.1, 0.1],
                        offset: [0.0, 0.0, 0.1],
                        color: [0.1, 0.1, 0.9],
                    }],
                },
            ],
            num_instances: 4,
            points_per_instance: (60, 60),
            placement: Placement { pitch: 1.5, jitter: 0.1 },
            seed: 31,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let part = build_partition(&scene, &SupervoxelParams::default()).unwrap();
        let clicks = simulate_clicks(&scene, 1, 7).unwrap();
        let weak = expand_labels(&part, &clicks).unwrap();
        assert!(weak.labeled_count() > 0);
        for i in 0..scene.len() {
            if weak.instance[i] != SENTINEL_NONE {
                assert_eq!(weak.instance[i], scene.gt_instance[i], "impure label at {i}");
                assert_eq!(weak.semantic[i], scene.gt_semantic[i]);
            }
        }
    }
}
