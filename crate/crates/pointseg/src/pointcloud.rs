//! Scene data model, synthetic scene generation with ground truth, click
//! simulation, and the scene/click file formats.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::fsutil;
use crate::{Error, Label, Result, SENTINEL_NONE};

/// A point cloud with ground-truth labels.
///
/// All per-point vectors have the same length. `gt_instance` is
/// [`SENTINEL_NONE`] for unassigned background points; every other instance
/// id maps to exactly one semantic class.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub positions: Vec<[f64; 3]>,
    pub colors: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
    pub gt_semantic: Vec<Label>,
    pub gt_instance: Vec<Label>,
    pub num_classes: usize,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Lowest z coordinate, used as the floor reference for height features.
    pub fn min_z(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| p[2])
            .fold(f64::INFINITY, f64::min)
    }

    /// Distinct instance ids (excluding the sentinel), ascending.
    pub fn instance_ids(&self) -> Vec<Label> {
        let mut ids: Vec<Label> = self
            .gt_instance
            .iter()
            .copied()
            .filter(|&id| id != SENTINEL_NONE)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Point indices of one instance, ascending.
    pub fn instance_points(&self, id: Label) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.gt_instance[i] == id)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::InvalidInput("scene has no points".into()));
        }
        if self.colors.len() != n
            || self.normals.len() != n
            || self.gt_semantic.len() != n
            || self.gt_instance.len() != n
        {
            return Err(Error::InvalidInput(format!(
                "per-point list lengths differ: positions={} colors={} normals={} semantic={} instance={}",
                n,
                self.colors.len(),
                self.normals.len(),
                self.gt_semantic.len(),
                self.gt_instance.len()
            )));
        }
        for (i, p) in self.positions.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("position of point {i}")));
            }
        }
        for (i, nrm) in self.normals.iter().enumerate() {
            let len = (nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]).sqrt();
            if (len - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "normal of point {i} has length {len}, expected 1"
                )));
            }
        }
        let k = self.num_classes as Label;
        let mut class_of_instance: std::collections::BTreeMap<Label, Label> =
            std::collections::BTreeMap::new();
        for i in 0..n {
            let sem = self.gt_semantic[i];
            if sem < 0 || sem >= k {
                return Err(Error::InvalidInput(format!(
                    "semantic class {sem} of point {i} outside [0, {k})"
                )));
            }
            let inst = self.gt_instance[i];
            if inst < SENTINEL_NONE {
                return Err(Error::InvalidInput(format!(
                    "instance id {inst} of point {i} is negative"
                )));
            }
            if inst != SENTINEL_NONE {
                match class_of_instance.get(&inst) {
                    None => {
                        class_of_instance.insert(inst, sem);
                    }
                    Some(&prev) if prev != sem => {
                        return Err(Error::InvalidInput(format!(
                            "instance {inst} spans semantic classes {prev} and {sem}"
                        )));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// One annotated point: `(point index, instance id, semantic class)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Click {
    pub point: usize,
    pub instance: Label,
    pub class: Label,
}

/// The sparse supervision: at most `clicks_per_instance` annotated points
/// per ground-truth instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickAnnotation {
    pub clicks: Vec<Click>,
    pub clicks_per_instance: usize,
}

impl ClickAnnotation {
    /// Distinct instance ids covered by clicks, ascending.
    pub fn instance_ids(&self) -> Vec<Label> {
        let mut ids: Vec<Label> = self.clicks.iter().map(|c| c.instance).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn validate(&self, scene: &Scene) -> Result<()> {
        if self.clicks_per_instance == 0 {
            return Err(Error::InvalidInput("clicks_per_instance must be positive".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut per_instance: std::collections::BTreeMap<Label, usize> =
            std::collections::BTreeMap::new();
        for c in &self.clicks {
            if c.point >= scene.len() {
                return Err(Error::InvalidInput(format!(
                    "click point index {} out of range (N={})",
                    c.point,
                    scene.len()
                )));
            }
            if !seen.insert(c.point) {
                return Err(Error::InvalidInput(format!(
                    "duplicate click on point {}",
                    c.point
                )));
            }
            if scene.gt_semantic[c.point] != c.class {
                return Err(Error::InvalidInput(format!(
                    "click on point {} carries class {} but the scene says {}",
                    c.point, c.class, scene.gt_semantic[c.point]
                )));
            }
            *per_instance.entry(c.instance).or_insert(0) += 1;
        }
        for (inst, count) in &per_instance {
            if *count > self.clicks_per_instance {
                return Err(Error::InvalidInput(format!(
                    "instance {inst} has {count} clicks, more than m={}",
                    self.clicks_per_instance
                )));
            }
            if self.clicks_per_instance == 1 && *count != 1 {
                return Err(Error::InvalidInput(format!(
                    "instance {inst} has {count} clicks under one-click annotation"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Box,
    Sphere,
    Cylinder,
}

/// One surface-sampled primitive of an object template.
///
/// `size` is interpreted per kind: box half-extents `(hx, hy, hz)`, sphere
/// radius in `size[0]`, cylinder radius in `size[0]` and half-height in
/// `size[2]`. `offset` places the part relative to the instance anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub kind: PrimitiveKind,
    pub size: [f64; 3],
    pub offset: [f64; 3],
    pub color: [f64; 3],
}

/// An object class: one or more parts sampled together. The semantic class
/// of a template is its index in [`SceneSpec::templates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub parts: Vec<PartSpec>,
}

/// Jittered-grid placement of instance anchors on the z=0 plane. A small
/// `pitch` produces touching instances, a large one well-separated scenes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub pitch: f64,
    pub jitter: f64,
}

/// Everything needed to generate a scene deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub templates: Vec<ObjectTemplate>,
    pub num_instances: usize,
    /// Inclusive range of surface samples per instance.
    pub points_per_instance: (usize, usize),
    /// Stddev of per-channel Gaussian color jitter, clamped to [0, 1].
    pub color_jitter: f64,
    /// Stddev of Gaussian position noise in meters. Normals stay analytic.
    pub noise_stddev: f64,
    pub placement: Placement,
    /// Adds floor and wall points with their own semantic classes and no
    /// instance id.
    pub background: bool,
    pub background_points: usize,
    pub floor_color: [f64; 3],
    pub wall_color: [f64; 3],
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            templates: vec![
                ObjectTemplate {
                    parts: vec![PartSpec {
                        kind: PrimitiveKind::Box,
                        size: [0.12, 0.10, 0.10],
                        offset: [0.0, 0.0, 0.10],
                        color: [0.85, 0.15, 0.12],
                    }],
                },
                ObjectTemplate {
                    parts: vec![PartSpec {
                        kind: PrimitiveKind::Sphere,
                        size: [0.11, 0.11, 0.11],
                        offset: [0.0, 0.0, 0.11],
                        color: [0.10, 0.75, 0.18],
                    }],
                },
                ObjectTemplate {
                    parts: vec![PartSpec {
                        kind: PrimitiveKind::Cylinder,
                        size: [0.08, 0.08, 0.14],
                        offset: [0.0, 0.0, 0.14],
                        color: [0.12, 0.20, 0.85],
                    }],
                },
            ],
            num_instances: 4,
            points_per_instance: (80, 120),
            color_jitter: 0.02,
            noise_stddev: 0.004,
            placement: Placement {
                pitch: 1.0,
                jitter: 0.15,
            },
            background: false,
            background_points: 300,
            floor_color: [0.45, 0.42, 0.40],
            wall_color: [0.80, 0.80, 0.75],
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Number of semantic classes: one per template plus floor and wall
    /// when background is enabled.
    pub fn num_classes(&self) -> usize {
        self.templates.len() + if self.background { 2 } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::InvalidSpec("no object templates".into()));
        }
        for (ti, t) in self.templates.iter().enumerate() {
            if t.parts.is_empty() {
                return Err(Error::InvalidSpec(format!("template {ti} has no parts")));
            }
            for p in &t.parts {
                if p.size.iter().any(|&s| s <= 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "template {ti} has a part with nonpositive size"
                    )));
                }
                if p.color.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
                    return Err(Error::InvalidSpec(format!(
                        "template {ti} has a color channel outside [0, 1]"
                    )));
                }
            }
        }
        if self.num_instances == 0 {
            return Err(Error::InvalidSpec("num_instances must be positive".into()));
        }
        let (lo, hi) = self.points_per_instance;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidSpec(format!(
                "points_per_instance range ({lo}, {hi}) invalid"
            )));
        }
        if self.color_jitter < 0.0 || self.noise_stddev < 0.0 {
            return Err(Error::InvalidSpec("noise levels must be nonnegative".into()));
        }
        if self.placement.pitch <= 0.0 || self.placement.jitter < 0.0 {
            return Err(Error::InvalidSpec("placement pitch/jitter invalid".into()));
        }
        if self.background && self.background_points == 0 {
            return Err(Error::InvalidSpec(
                "background enabled with zero background points".into(),
            ));
        }
        Ok(())
    }
}

/// World-space placement of one generated instance, for tests and debugging.
#[derive(Debug, Clone)]
pub struct PlacedInstance {
    pub class: Label,
    pub parts: Vec<PlacedPart>,
}

#[derive(Debug, Clone)]
pub struct PlacedPart {
    pub kind: PrimitiveKind,
    pub size: [f64; 3],
    pub center: [f64; 3],
}

fn part_area(p: &PartSpec) -> f64 {
    match p.kind {
        PrimitiveKind::Box => {
            let [hx, hy, hz] = p.size;
            8.0 * (hx * hy + hy * hz + hz * hx)
        }
        PrimitiveKind::Sphere => {
            let r = p.size[0];
            4.0 * std::f64::consts::PI * r * r
        }
        PrimitiveKind::Cylinder => {
            let r = p.size[0];
            let h = 2.0 * p.size[2];
            2.0 * std::f64::consts::PI * r * (h + r)
        }
    }
}

/// Uniform surface sample of one part in its local frame.
/// Returns (position, analytic normal).
fn sample_part(part: &PartSpec, rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    match part.kind {
        PrimitiveKind::Box => {
            let [hx, hy, hz] = part.size;
            // Face picked by area: +x, -x, +y, -y, +z, -z.
            let areas = [hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.random_range(0.0..total);
            let mut face = 0;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    face = i;
                    break;
                }
                pick -= a;
            }
            let u = rng.random_range(-1.0..1.0);
            let v = rng.random_range(-1.0..1.0);
            match face {
                0 => ([hx, u * hy, v * hz], [1.0, 0.0, 0.0]),
                1 => ([-hx, u * hy, v * hz], [-1.0, 0.0, 0.0]),
                2 => ([u * hx, hy, v * hz], [0.0, 1.0, 0.0]),
                3 => ([u * hx, -hy, v * hz], [0.0, -1.0, 0.0]),
                4 => ([u * hx, v * hy, hz], [0.0, 0.0, 1.0]),
                _ => ([u * hx, v * hy, -hz], [0.0, 0.0, -1.0]),
            }
        }
        PrimitiveKind::Sphere => {
            let r = part.size[0];
            let z = rng.random_range(-1.0..1.0f64);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - z * z).max(0.0).sqrt();
            let n = [s * phi.cos(), s * phi.sin(), z];
            ([r * n[0], r * n[1], r * n[2]], n)
        }
        PrimitiveKind::Cylinder => {
            let r = part.size[0];
            let hz = part.size[2];
            let lateral = std::f64::consts::TAU * r * 2.0 * hz;
            let cap = std::f64::consts::PI * r * r;
            let pick = rng.random_range(0.0..lateral + 2.0 * cap);
            if pick < lateral {
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let z = rng.random_range(-hz..hz);
                ([r * phi.cos(), r * phi.sin(), z], [phi.cos(), phi.sin(), 0.0])
            } else {
                let up = pick < lateral + cap;
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let rr = r * rng.random_range(0.0..1.0f64).sqrt();
                let z = if up { hz } else { -hz };
                let nz = if up { 1.0 } else { -1.0 };
                ([rr * phi.cos(), rr * phi.sin(), z], [0.0, 0.0, nz])
            }
        }
    }
}

/// Generates a scene and the world-space layout of its instances.
///
/// Pure function of the spec: the same spec (seed included) always yields
/// the same scene.
pub fn generate_scene_with_layout(spec: &SceneSpec) -> Result<(Scene, Vec<PlacedInstance>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_stddev.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let jitter = Normal::new(0.0, spec.color_jitter.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;

    let cols = (spec.num_instances as f64).sqrt().ceil() as usize;
    let rows = spec.num_instances.div_ceil(cols);
    let half_w = (cols.saturating_sub(1)) as f64 * spec.placement.pitch / 2.0;
    let half_d = (rows.saturating_sub(1)) as f64 * spec.placement.pitch / 2.0;

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut normals = Vec::new();
    let mut gt_semantic = Vec::new();
    let mut gt_instance = Vec::new();
    let mut layout = Vec::new();

    for inst in 0..spec.num_instances {
        let class = inst % spec.templates.len();
        let template = &spec.templates[class];
        let col = inst % cols;
        let row = inst / cols;
        let anchor = [
            col as f64 * spec.placement.pitch - half_w
                + rng.random_range(-spec.placement.jitter..=spec.placement.jitter),
            row as f64 * spec.placement.pitch - half_d
                + rng.random_range(-spec.placement.jitter..=spec.placement.jitter),
            0.0,
        ];
        layout.push(PlacedInstance {
            class: class as Label,
            parts: template
                .parts
                .iter()
                .map(|p| PlacedPart {
                    kind: p.kind,
                    size: p.size,
                    center: [
                        anchor[0] + p.offset[0],
                        anchor[1] + p.offset[1],
                        anchor[2] + p.offset[2],
                    ],
                })
                .collect(),
        });

        let (lo, hi) = spec.points_per_instance;
        let n_points = rng.random_range(lo..=hi);
        let areas: Vec<f64> = template.parts.iter().map(part_area).collect();
        let total_area: f64 = areas.iter().sum();
        for _ in 0..n_points {
            let mut pick = rng.random_range(0.0..total_area);
            let mut part_idx = template.parts.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    part_idx = i;
                    break;
                }
                pick -= a;
            }
            let part = &template.parts[part_idx];
            let (local, normal) = sample_part(part, &mut rng);
            let mut pos = [
                anchor[0] + part.offset[0] + local[0],
                anchor[1] + part.offset[1] + local[1],
                anchor[2] + part.offset[2] + local[2],
            ];
            if spec.noise_stddev > 0.0 {
                for v in pos.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            } else {
                for _ in 0..3 {
                    noise.sample(&mut rng);
                }
            }
            let mut color = part.color;
            for c in color.iter_mut() {
                let j = jitter.sample(&mut rng);
                if spec.color_jitter > 0.0 {
                    *c = (*c + j).clamp(0.0, 1.0);
                }
            }
            positions.push(pos);
            colors.push(color);
            normals.push(normal);
            gt_semantic.push(class as Label);
            gt_instance.push(inst as Label);
        }
    }

    if spec.background {
        let floor_class = spec.templates.len() as Label;
        let wall_class = floor_class + 1;
        let margin = spec.placement.pitch * 0.6;
        let x_range = (-half_w - margin, half_w + margin);
        let y_range = (-half_d - margin, half_d + margin);
        let n_floor = spec.background_points * 2 / 3;
        let n_wall = spec.background_points - n_floor;
        for _ in 0..n_floor {
            let x = rng.random_range(x_range.0..=x_range.1);
            let y = rng.random_range(y_range.0..=y_range.1);
            let mut pos = [x, y, 0.0];
            if spec.noise_stddev > 0.0 {
                for v in pos.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            } else {
                for _ in 0..3 {
                    noise.sample(&mut rng);
                }
            }
            let mut color = spec.floor_color;
            for c in color.iter_mut() {
                let j = jitter.sample(&mut rng);
                if spec.color_jitter > 0.0 {
                    *c = (*c + j).clamp(0.0, 1.0);
                }
            }
            positions.push(pos);
            colors.push(color);
            normals.push([0.0, 0.0, 1.0]);
            gt_semantic.push(floor_class);
            gt_instance.push(SENTINEL_NONE);
        }
        let wall_y = y_range.1 + margin * 0.5;
        for _ in 0..n_wall {
            let x = rng.random_range(x_range.0..=x_range.1);
            let z = rng.random_range(0.0..=0.8);
            let mut pos = [x, wall_y, z];
            if spec.noise_stddev > 0.0 {
                for v in pos.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            } else {
                for _ in 0..3 {
                    noise.sample(&mut rng);
                }
            }
            let mut color = spec.wall_color;
            for c in color.iter_mut() {
                let j = jitter.sample(&mut rng);
                if spec.color_jitter > 0.0 {
                    *c = (*c + j).clamp(0.0, 1.0);
                }
            }
            positions.push(pos);
            colors.push(color);
            normals.push([0.0, -1.0, 0.0]);
            gt_semantic.push(wall_class);
            gt_instance.push(SENTINEL_NONE);
        }
    }

    let scene = Scene {
        positions,
        colors,
        normals,
        gt_semantic,
        gt_instance,
        num_classes: spec.num_classes(),
    };
    scene.validate()?;
    Ok((scene, layout))
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    generate_scene_with_layout(spec).map(|(s, _)| s)
}

/// Samples `m` distinct annotated points per instance, uniformly.
pub fn simulate_clicks(scene: &Scene, m: usize, seed: u64) -> Result<ClickAnnotation> {
    simulate_clicks_from(scene, m, seed, |_, _| true)
}

/// Click simulation restricted to the boundary of each instance: candidates
/// are the `boundary_fraction` of points farthest from the instance's
/// position centroid.
pub fn simulate_clicks_boundary(
    scene: &Scene,
    m: usize,
    boundary_fraction: f64,
    seed: u64,
) -> Result<ClickAnnotation> {
    if !(0.0 < boundary_fraction && boundary_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "boundary fraction {boundary_fraction} outside (0, 1]"
        )));
    }
    let mut boundary: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
    for id in scene.instance_ids() {
        let points = scene.instance_points(id);
        let mut centroid = [0.0; 3];
        for &i in &points {
            for d in 0..3 {
                centroid[d] += scene.positions[i][d];
            }
        }
        for c in centroid.iter_mut() {
            *c /= points.len() as f64;
        }
        let mut by_dist: Vec<(f64, usize)> = points
            .iter()
            .map(|&i| {
                let p = scene.positions[i];
                let d2 = (0..3).map(|d| (p[d] - centroid[d]).powi(2)).sum::<f64>();
                (d2, i)
            })
            .collect();
        by_dist.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let keep = ((points.len() as f64 * boundary_fraction).ceil() as usize).max(1);
        for &(_, i) in by_dist.iter().take(keep) {
            boundary.insert(i);
        }
    }
    simulate_clicks_from(scene, m, seed, |i, _| boundary.contains(&i))
}

fn simulate_clicks_from(
    scene: &Scene,
    m: usize,
    seed: u64,
    admit: impl Fn(usize, Label) -> bool,
) -> Result<ClickAnnotation> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clicks = Vec::new();
    for id in scene.instance_ids() {
        let mut candidates: Vec<usize> = scene
            .instance_points(id)
            .into_iter()
            .filter(|&i| admit(i, id))
            .collect();
        if candidates.len() < m {
            return Err(Error::InvalidInput(format!(
                "instance {id} has only {} candidate points, fewer than m={m}",
                candidates.len()
            )));
        }
        // Partial Fisher-Yates: the first m slots become the sample.
        for j in 0..m {
            let pick = j + rng.random_range(0..candidates.len() - j);
            candidates.swap(j, pick);
        }
        let mut chosen: Vec<usize> = candidates[..m].to_vec();
        chosen.sort_unstable();
        for i in chosen {
            clicks.push(Click {
                point: i,
                instance: id,
                class: scene.gt_semantic[i],
            });
        }
    }
    let ann = ClickAnnotation {
        clicks,
        clicks_per_instance: m,
    };
    ann.validate(scene)?;
    Ok(ann)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Serializes a scene: header `CSCENE v1 N=<n> K=<k>`, then one row per
/// point `x y z r g b nx ny nz sem inst` with `inst=-1` for no instance.
pub fn scene_to_string(scene: &Scene) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "CSCENE v1 N={} K={}\n",
        scene.len(),
        scene.num_classes
    ));
    for i in 0..scene.len() {
        let p = scene.positions[i];
        let c = scene.colors[i];
        let n = scene.normals[i];
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} {} {}\n",
            p[0], p[1], p[2], c[0], c[1], c[2], n[0], n[1], n[2], scene.gt_semantic[i], scene.gt_instance[i]
        ));
    }
    out
}

pub fn write_scene(scene: &Scene, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &scene_to_string(scene))
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    parse_scene(&fsutil::read_to_string(path)?)
}

/// Splits text into (byte offset, line) pairs, dropping blank tails.
fn offset_lines(text: &str) -> Vec<(usize, &str)> {
    let mut lines = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        lines.push((offset, trimmed));
        offset += line.len();
    }
    while matches!(lines.last(), Some((_, l)) if l.trim().is_empty()) {
        lines.pop();
    }
    lines
}

pub fn parse_scene(text: &str) -> Result<Scene> {
    let lines = offset_lines(text);
    let (header_offset, header) = match lines.first() {
        Some(&(o, l)) if !l.trim().is_empty() => (o, l),
        _ => return Err(Error::parse(0, "missing header")),
    };
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "CSCENE" || tokens[1] != "v1" {
        return Err(Error::parse(header_offset, "malformed header, expected `CSCENE v1 N=<int> K=<int>`"));
    }
    let n: usize = tokens[2]
        .strip_prefix("N=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(header_offset, "malformed N field in header"))?;
    let k: usize = tokens[3]
        .strip_prefix("K=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(header_offset, "malformed K field in header"))?;

    let body = &lines[1..];
    if body.len() != n {
        // Truncated body points at end of file, surplus rows at the first
        // extra row.
        let offset = body.get(n).map(|&(o, _)| o).unwrap_or(text.len());
        return Err(Error::parse(
            offset,
            format!(
                "count mismatch at row {}: header declares {} rows, found {}",
                body.len().min(n) + 1,
                n,
                body.len()
            ),
        ));
    }

    let mut scene = Scene {
        positions: Vec::with_capacity(n),
        colors: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        gt_semantic: Vec::with_capacity(n),
        gt_instance: Vec::with_capacity(n),
        num_classes: k,
    };
    for (row, &(offset, line)) in body.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 11 {
            return Err(Error::parse(
                offset,
                format!("row {}: expected 11 fields, found {}", row + 1, fields.len()),
            ));
        }
        let mut values = [0.0f64; 9];
        for (i, v) in values.iter_mut().enumerate() {
            *v = fields[i].parse().map_err(|_| {
                Error::parse(offset, format!("row {}: bad number `{}`", row + 1, fields[i]))
            })?;
        }
        let sem: Label = fields[9].parse().map_err(|_| {
            Error::parse(offset, format!("row {}: bad semantic label `{}`", row + 1, fields[9]))
        })?;
        let inst: Label = fields[10].parse().map_err(|_| {
            Error::parse(offset, format!("row {}: bad instance label `{}`", row + 1, fields[10]))
        })?;
        scene.positions.push([values[0], values[1], values[2]]);
        scene.colors.push([values[3], values[4], values[5]]);
        scene.normals.push([values[6], values[7], values[8]]);
        scene.gt_semantic.push(sem);
        scene.gt_instance.push(inst);
    }
    scene.validate()?;
    Ok(scene)
}

/// Clicks file: one row per click, `point_index instance_id semantic_class`.
pub fn clicks_to_string(ann: &ClickAnnotation) -> String {
    let mut out = String::new();
    for c in &ann.clicks {
        out.push_str(&format!("{} {} {}\n", c.point, c.instance, c.class));
    }
    out
}

pub fn write_clicks(ann: &ClickAnnotation, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &clicks_to_string(ann))
}

pub fn parse_clicks(text: &str) -> Result<ClickAnnotation> {
    let mut clicks = Vec::new();
    for (offset, line) in offset_lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(offset, format!("expected 3 fields, found {}", fields.len())));
        }
        let point: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(offset, format!("bad point index `{}`", fields[0])))?;
        let instance: Label = fields[1]
            .parse()
            .map_err(|_| Error::parse(offset, format!("bad instance id `{}`", fields[1])))?;
        let class: Label = fields[2]
            .parse()
            .map_err(|_| Error::parse(offset, format!("bad class id `{}`", fields[2])))?;
        clicks.push(Click { point, instance, class });
    }
    let mut per_instance: std::collections::BTreeMap<Label, usize> = std::collections::BTreeMap::new();
    for c in &clicks {
        *per_instance.entry(c.instance).or_insert(0) += 1;
    }
    let m = per_instance.values().copied().max().unwrap_or(1);
    Ok(ClickAnnotation {
        clicks,
        clicks_per_instance: m,
    })
}

pub fn read_clicks(path: &Path) -> Result<ClickAnnotation> {
    parse_clicks(&fsutil::read_to_string(path)?)
}
