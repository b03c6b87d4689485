//! Deterministic synthetic cohort generator.
//!
//! Real cohorts for this pipeline are clinical and private, so the test bed
//! is built from tube phantoms: two bright tubes (aorta and pulmonary
//! artery) over a noisy background, with three morphology classes that
//! differ in tube layout and, crucially, in where their tubes sit along y.
//! Class bands are `2·misalign_shift + tube_radius` apart, so as long as
//! `misalign_shift > tube_radius` a segmentation mask borrowed from the
//! wrong class cannot touch the true foreground — the separability premise
//! the whole cascade rests on, provable by construction here.
//!
//! Segmentation simulation has two modes. A matched atlas reproduces the
//! ground truth minus a seeded 25% of its surface voxels (mild boundary
//! erosion). A mismatched atlas paints its *own* class geometry, rigidly
//! shifted along x by `misalign_shift` (seeded sign) and with up to two
//! z-slabs erased — a mask that covers background and fragments.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::volume::{linear_index, LabelVolume, ScalarVolume, StructureId};

/// Knobs for one cohort. Defaults give a 48³ volume whose three class
/// geometries fit with margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub dims: [u32; 3],
    pub spacing: [f32; 3],
    pub foreground_mean: f64,
    pub background_mean: f64,
    pub noise_std: f64,
    pub tube_radius: u32,
    pub misalign_shift: u32,
    pub rng_seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            dims: [48, 48, 48],
            spacing: [1.0, 1.0, 1.0],
            foreground_mean: 300.0,
            background_mean: 50.0,
            noise_std: 10.0,
            tube_radius: 4,
            misalign_shift: 6,
            rng_seed: 0,
        }
    }
}

impl PhantomConfig {
    /// Checks the separability invariants and that all three class
    /// geometries fit inside the volume.
    pub fn validate(&self) -> Result<()> {
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Config(format!(
                "spacing must be positive and finite, got {:?}",
                self.spacing
            )));
        }
        for (name, v) in [
            ("foreground_mean", self.foreground_mean),
            ("background_mean", self.background_mean),
            ("noise_std", self.noise_std),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        if self.noise_std <= 0.0 {
            return Err(Error::Config(format!(
                "noise_std must be positive, got {}",
                self.noise_std
            )));
        }
        if self.foreground_mean <= self.background_mean + 5.0 * self.noise_std {
            return Err(Error::Config(format!(
                "foreground mean {} must exceed background {} by more than 5 noise deviations ({})",
                self.foreground_mean,
                self.background_mean,
                5.0 * self.noise_std
            )));
        }
        if self.tube_radius == 0 {
            return Err(Error::Config("tube_radius must be at least 1".into()));
        }
        if self.misalign_shift <= self.tube_radius {
            return Err(Error::Config(format!(
                "misalign_shift {} must exceed tube_radius {} or wrong-class masks can touch true foreground",
                self.misalign_shift, self.tube_radius
            )));
        }
        for cls in MorphClass::ALL {
            class_geometry(self, cls)?;
        }
        Ok(())
    }
}

/// The three morphologies: parallel tubes, crossed tubes, and offset tubes
/// with a baffle-like jog. Each lives in its own y band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MorphClass {
    #[serde(rename = "A_normal")]
    ANormal,
    #[serde(rename = "B_arterial")]
    BArterial,
    #[serde(rename = "C_atrial")]
    CAtrial,
}

impl MorphClass {
    pub const ALL: [MorphClass; 3] = [MorphClass::ANormal, MorphClass::BArterial, MorphClass::CAtrial];

    pub fn id(self) -> &'static str {
        match self {
            MorphClass::ANormal => "A_normal",
            MorphClass::BArterial => "B_arterial",
            MorphClass::CAtrial => "C_atrial",
        }
    }

    /// Single-letter tag used in case ids.
    pub fn tag(self) -> &'static str {
        match self {
            MorphClass::ANormal => "A",
            MorphClass::BArterial => "B",
            MorphClass::CAtrial => "C",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        MorphClass::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown morphology class '{s}'")))
    }

    fn index(self) -> u64 {
        match self {
            MorphClass::ANormal => 0,
            MorphClass::BArterial => 1,
            MorphClass::CAtrial => 2,
        }
    }
}

impl fmt::Display for MorphClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Per-slice tube axis centers: entry k is the (x, y) center at z0 + k.
struct TubePath {
    centers: Vec<(f64, f64)>,
}

struct ClassGeometry {
    aorta: TubePath,
    pulmonary: TubePath,
    z0: u32,
}

/// Lays out the two tube paths for a class and verifies the discs stay
/// inside the volume.
fn class_geometry(cfg: &PhantomConfig, cls: MorphClass) -> Result<ClassGeometry> {
    let [nx, ny, nz] = cfg.dims;
    let z0 = nz / 10;
    let z1 = nz - nz / 10;
    if z1.saturating_sub(z0) < 2 {
        return Err(Error::Config(format!(
            "volume depth {nz} leaves no room for tubes"
        )));
    }
    let span = (z1 - z0) as usize;
    let r = cfg.tube_radius as f64;
    let cx = nx as f64 / 2.0;
    let cy = ny as f64 / 2.0;
    // Class bands along y. The gap between adjacent bands exceeds the sum of
    // any two class extents exactly when misalign_shift > tube_radius.
    let band_sep = (2 * cfg.misalign_shift + cfg.tube_radius) as f64;
    let band = match cls {
        MorphClass::ANormal => cy - band_sep,
        MorphClass::BArterial => cy,
        MorphClass::CAtrial => cy + band_sep,
    };
    let sep = (2 * cfg.tube_radius + 2) as f64;
    // Crossed tubes pass each other with this much clearance along y.
    let dodge = r + 1.0;
    let jog = cfg.misalign_shift as f64;

    let mut aorta = Vec::with_capacity(span);
    let mut pulmonary = Vec::with_capacity(span);
    for k in 0..span {
        let t = k as f64 / (span - 1) as f64;
        let (ao, pa) = match cls {
            MorphClass::ANormal => ((cx - sep, band), (cx + sep, band)),
            MorphClass::BArterial => (
                (cx - sep + 2.0 * sep * t, band - dodge),
                (cx + sep - 2.0 * sep * t, band + dodge),
            ),
            MorphClass::CAtrial => {
                let ramp = match t {
                    t if t < 0.30 => 0.0,
                    t if t < 0.45 => (t - 0.30) / 0.15,
                    t if t < 0.70 => 1.0,
                    t if t < 0.85 => (0.85 - t) / 0.15,
                    _ => 0.0,
                };
                ((cx - sep, band), (cx + sep + jog * ramp, band))
            }
        };
        aorta.push(ao);
        pulmonary.push(pa);
    }
    for (x, y) in aorta.iter().chain(pulmonary.iter()) {
        if x - r < 0.0 || x + r > (nx - 1) as f64 || y - r < 0.0 || y + r > (ny - 1) as f64 {
            return Err(Error::Config(format!(
                "class {} tube at ({x:.1}, {y:.1}) with radius {r} leaves the {nx}x{ny} slice",
                cls.id()
            )));
        }
    }
    Ok(ClassGeometry {
        aorta: TubePath { centers: aorta },
        pulmonary: TubePath { centers: pulmonary },
        z0,
    })
}

/// Rasterizes a tube path into a voxel mask, clamping discs at the volume
/// edge (callers that forbid clamping check bounds beforehand).
fn paint_tube(dims: [u32; 3], path: &TubePath, z0: u32, radius: u32, mask: &mut [bool]) {
    let [nx, ny, _] = dims;
    let r = radius as f64;
    let r2 = r * r;
    for (k, &(fx, fy)) in path.centers.iter().enumerate() {
        let z = z0 + k as u32;
        let x_lo = (fx - r).floor().max(0.0) as u32;
        let x_hi = ((fx + r).ceil() as i64).min(nx as i64 - 1) as u32;
        let y_lo = (fy - r).floor().max(0.0) as u32;
        let y_hi = ((fy + r).ceil() as i64).min(ny as i64 - 1) as u32;
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let dx = x as f64 - fx;
                let dy = y as f64 - fy;
                if dx * dx + dy * dy <= r2 {
                    mask[linear_index(dims, x, y, z)] = true;
                }
            }
        }
    }
}

fn paint_class(
    cfg: &PhantomConfig,
    cls: MorphClass,
    shift_x: f64,
) -> Result<(Vec<bool>, Vec<bool>)> {
    let geom = class_geometry(cfg, cls)?;
    let n = cfg.dims.iter().map(|&d| d as usize).product();
    let mut ao = vec![false; n];
    let mut pa = vec![false; n];
    let shifted = |p: &TubePath| TubePath {
        centers: p.centers.iter().map(|&(x, y)| (x + shift_x, y)).collect(),
    };
    paint_tube(cfg.dims, &shifted(&geom.aorta), geom.z0, cfg.tube_radius, &mut ao);
    paint_tube(cfg.dims, &shifted(&geom.pulmonary), geom.z0, cfg.tube_radius, &mut pa);
    Ok((ao, pa))
}

fn masks_to_labels(cfg: &PhantomConfig, ao: &[bool], pa: &[bool]) -> Result<LabelVolume> {
    let labels: Vec<u16> = ao
        .iter()
        .zip(pa)
        .map(|(&a, &p)| {
            if a {
                StructureId::AORTA.code()
            } else if p {
                StructureId::PULMONARY_ARTERY.code()
            } else {
                0
            }
        })
        .collect();
    LabelVolume::new(cfg.dims, cfg.spacing, labels)
}

/// Builds one case: an intensity volume (background noise plus bright
/// tubes) and its ground-truth labels. Deterministic in (cfg, cls,
/// case_seed). Callers are responsible for cfg satisfying
/// [`PhantomConfig::validate`]; only geometry-in-bounds is enforced here.
pub fn generate_case(
    cfg: &PhantomConfig,
    cls: MorphClass,
    case_seed: u64,
) -> Result<(ScalarVolume, LabelVolume)> {
    let (ao, pa) = paint_class(cfg, cls, 0.0)?;
    let truth = masks_to_labels(cfg, &ao, &pa)?;
    let mut g = SplitMix64::new(derive_seed(case_seed, 0));
    let data: Vec<f32> = ao
        .iter()
        .zip(&pa)
        .map(|(&a, &p)| {
            let mean = if a || p {
                cfg.foreground_mean
            } else {
                cfg.background_mean
            };
            g.normal_scaled(mean, cfg.noise_std) as f32
        })
        .collect();
    let img = ScalarVolume::new(cfg.dims, cfg.spacing, data)?;
    Ok((img, truth))
}

/// Fraction of surface voxels a matched-atlas segmentation loses.
const JITTER_DROP: f64 = 0.25;

fn erode_surface(cfg: &PhantomConfig, truth: &LabelVolume, g: &mut SplitMix64) -> Result<LabelVolume> {
    let [nx, ny, nz] = cfg.dims;
    let src = truth.labels();
    let mut out = src.to_vec();
    let neighbor_differs = |x: u32, y: u32, z: u32, label: u16| -> bool {
        let deltas: [(i64, i64, i64); 6] =
            [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];
        deltas.iter().any(|&(dx, dy, dz)| {
            let (qx, qy, qz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
            if qx < 0 || qy < 0 || qz < 0 || qx >= nx as i64 || qy >= ny as i64 || qz >= nz as i64 {
                return true;
            }
            src[linear_index(cfg.dims, qx as u32, qy as u32, qz as u32)] != label
        })
    };
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let idx = linear_index(cfg.dims, x, y, z);
                if src[idx] != 0 && neighbor_differs(x, y, z, src[idx]) && g.next_f64() < JITTER_DROP {
                    out[idx] = 0;
                }
            }
        }
    }
    LabelVolume::new(cfg.dims, cfg.spacing, out)
}

/// Simulates segmenting a case of `truth_class` with the atlas set of
/// `atlas_class`. Matching atlases reproduce the ground truth minus seeded
/// surface erosion; mismatched atlases paint their own geometry shifted
/// along x by `misalign_shift` and lose up to two z-slabs.
pub fn simulate_segmentation(
    cfg: &PhantomConfig,
    truth_class: MorphClass,
    atlas_class: MorphClass,
    truth: &LabelVolume,
    case_seed: u64,
) -> Result<LabelVolume> {
    let mut g = SplitMix64::new(derive_seed(case_seed, 1 + atlas_class.index()));
    if truth_class == atlas_class {
        return erode_surface(cfg, truth, &mut g);
    }
    let shift = if g.next_f64() < 0.5 {
        -(cfg.misalign_shift as f64)
    } else {
        cfg.misalign_shift as f64
    };
    let (ao, pa) = paint_class(cfg, atlas_class, shift)?;
    let mut seg = masks_to_labels(cfg, &ao, &pa)?;
    let [nx, ny, nz] = cfg.dims;
    let z0 = nz / 10;
    let z1 = nz - nz / 10;
    let slab_height = ((z1 - z0) / 6).max(2);
    let slabs = g.next_index(3);
    let mut labels = seg.labels().to_vec();
    for _ in 0..slabs {
        let start = z0 + g.next_index((z1 - z0) as usize) as u32;
        for z in start..(start + slab_height).min(nz) {
            for y in 0..ny {
                for x in 0..nx {
                    labels[linear_index(cfg.dims, x, y, z)] = 0;
                }
            }
        }
    }
    seg = LabelVolume::new(cfg.dims, cfg.spacing, labels)?;
    Ok(seg)
}

/// Whether a cohort entry is an evaluation case or an atlas exemplar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Case,
    Atlas,
}

impl Role {
    pub fn id(self) -> &'static str {
        match self {
            Role::Case => "case",
            Role::Atlas => "atlas",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "case" => Ok(Role::Case),
            "atlas" => Ok(Role::Atlas),
            other => Err(Error::Data(format!("unknown role '{other}'"))),
        }
    }
}

/// One cohort entry; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub case_id: String,
    pub role: Role,
    pub true_class: MorphClass,
    pub seed: u64,
    pub intensity_path: String,
    pub truth_path: String,
}

pub const MANIFEST_FILE: &str = "manifest.csv";
const MANIFEST_HEADER: [&str; 6] = [
    "case_id",
    "role",
    "true_class",
    "seed",
    "intensity_path",
    "truth_path",
];

/// Simulated segmentation file name for one (case, atlas class) pair.
pub fn seg_file_name(case_id: &str, atlas_class: MorphClass) -> String {
    format!("{case_id}__seg_{}.mvol", atlas_class.id())
}

pub fn write_manifest<P: AsRef<Path>>(path: P, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        w.write_record([
            r.case_id.as_str(),
            r.role.id(),
            r.true_class.id(),
            &r.seed.to_string(),
            &r.intensity_path,
            &r.truth_path,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest<P: AsRef<Path>>(path: P) -> Result<Vec<ManifestRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path.as_ref())?;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if i == 0 {
            if record.iter().ne(MANIFEST_HEADER) {
                return Err(Error::Data(format!(
                    "manifest header is {:?}, expected {MANIFEST_HEADER:?}",
                    record.iter().collect::<Vec<_>>()
                )));
            }
            continue;
        }
        if record.len() != MANIFEST_HEADER.len() {
            return Err(Error::Data(format!(
                "manifest row {i} has {} fields, expected {}",
                record.len(),
                MANIFEST_HEADER.len()
            )));
        }
        rows.push(ManifestRow {
            case_id: record[0].to_string(),
            role: Role::parse(&record[1])?,
            true_class: MorphClass::parse(&record[2])?,
            seed: record[3].parse().map_err(|e| {
                Error::Data(format!("manifest row {i}: bad seed '{}': {e}", &record[3]))
            })?,
            intensity_path: record[4].to_string(),
            truth_path: record[5].to_string(),
        });
    }
    Ok(rows)
}

/// Generates the full cohort on disk: `per_class` evaluation cases and
/// `atlas_per_class` atlas exemplars per morphology class, each with an
/// intensity volume and ground-truth labels, plus one simulated segmentation
/// per (evaluation case, atlas class) pair and the manifest CSV. Returns the
/// manifest rows in file order.
pub fn generate_cohort(
    cfg: &PhantomConfig,
    per_class: usize,
    atlas_per_class: usize,
    out_dir: &Path,
) -> Result<Vec<ManifestRow>> {
    cfg.validate()?;
    if per_class == 0 || atlas_per_class == 0 {
        return Err(Error::Config(format!(
            "per_class {per_class} and atlas_per_class {atlas_per_class} must both be at least 1"
        )));
    }
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    let mut stream = 0u64;
    let mut plan: Vec<(String, Role, MorphClass)> = Vec::new();
    for cls in MorphClass::ALL {
        for i in 0..per_class {
            plan.push((format!("case_{}_{i:02}", cls.tag()), Role::Case, cls));
        }
    }
    for cls in MorphClass::ALL {
        for i in 0..atlas_per_class {
            plan.push((format!("atlas_{}_{i:02}", cls.tag()), Role::Atlas, cls));
        }
    }
    for (case_id, role, cls) in plan {
        let case_seed = derive_seed(cfg.rng_seed, stream);
        stream += 1;
        let (img, truth) = generate_case(cfg, cls, case_seed)?;
        let intensity_path = format!("{case_id}.mvol");
        let truth_path = format!("{case_id}_truth.mvol");
        img.store(out_dir.join(&intensity_path))?;
        truth.store(out_dir.join(&truth_path))?;
        if role == Role::Case {
            for atlas in MorphClass::ALL {
                let seg = simulate_segmentation(cfg, cls, atlas, &truth, case_seed)?;
                seg.store(out_dir.join(seg_file_name(&case_id, atlas)))?;
            }
        }
        rows.push(ManifestRow {
            case_id,
            role,
            true_class: cls,
            seed: case_seed,
            intensity_path,
            truth_path,
        });
    }
    write_manifest(out_dir.join(MANIFEST_FILE), &rows)?;
    Ok(rows)
}

/// Returns the manifest path inside a cohort directory.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{connected_components, masked_stats, Connectivity};

    #[test]
    fn ground_truth_has_one_component_per_structure() {
        let cfg = PhantomConfig::default();
        cfg.validate().unwrap();
        for cls in MorphClass::ALL {
            let (_, truth) = generate_case(&cfg, cls, 17).unwrap();
            for s in [StructureId::AORTA, StructureId::PULMONARY_ARTERY] {
                assert!(truth.structure_voxels(s) > 0, "{cls} {s}");
                assert_eq!(
                    connected_components(&truth, s, Connectivity::TwentySix),
                    1,
                    "{cls} {s}"
                );
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = PhantomConfig::default();
        let (img_a, truth_a) = generate_case(&cfg, MorphClass::BArterial, 99).unwrap();
        let (img_b, truth_b) = generate_case(&cfg, MorphClass::BArterial, 99).unwrap();
        assert_eq!(img_a.data(), img_b.data());
        assert_eq!(truth_a.labels(), truth_b.labels());
        let (img_c, _) = generate_case(&cfg, MorphClass::BArterial, 100).unwrap();
        assert_ne!(img_a.data(), img_c.data());
    }

    #[test]
    fn oversized_tubes_are_config_errors() {
        let cfg = PhantomConfig {
            tube_radius: 24,
            misalign_shift: 25,
            ..PhantomConfig::default()
        };
        assert!(matches!(
            generate_case(&cfg, MorphClass::ANormal, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn invariant_violations_are_rejected() {
        let no_contrast = PhantomConfig {
            foreground_mean: 90.0,
            ..PhantomConfig::default()
        };
        assert!(matches!(no_contrast.validate(), Err(Error::Config(_))));
        let small_shift = PhantomConfig {
            misalign_shift: 4,
            ..PhantomConfig::default()
        };
        assert!(matches!(small_shift.validate(), Err(Error::Config(_))));
    }

    /// The zero-overlap guarantee: a mask painted from any wrong class —
    /// with the rigid shift applied — never touches the true foreground.
    #[test]
    fn wrong_class_masks_miss_the_true_foreground_entirely() {
        let cfg = PhantomConfig::default();
        for truth_cls in MorphClass::ALL {
            let (_, truth) = generate_case(&cfg, truth_cls, 5).unwrap();
            for atlas in MorphClass::ALL {
                if atlas == truth_cls {
                    continue;
                }
                let seg = simulate_segmentation(&cfg, truth_cls, atlas, &truth, 5).unwrap();
                let overlap = seg
                    .labels()
                    .iter()
                    .zip(truth.labels())
                    .filter(|&(&s, &t)| s != 0 && t != 0)
                    .count();
                assert_eq!(overlap, 0, "{truth_cls} segmented with {atlas}");
            }
        }
    }

    #[test]
    fn matched_atlas_reproduces_most_of_the_truth() {
        let cfg = PhantomConfig::default();
        for cls in MorphClass::ALL {
            let (_, truth) = generate_case(&cfg, cls, 11).unwrap();
            let seg = simulate_segmentation(&cfg, cls, cls, &truth, 11).unwrap();
            for s in [StructureId::AORTA, StructureId::PULMONARY_ARTERY] {
                let kept = seg
                    .labels()
                    .iter()
                    .zip(truth.labels())
                    .filter(|&(&a, &b)| a == s.code() && b == s.code())
                    .count();
                let total = truth.structure_voxels(s);
                assert!(
                    kept as f64 / total as f64 > 0.8,
                    "{cls} {s}: kept {kept} of {total}"
                );
                // Erosion only removes voxels, never invents them.
                let invented = seg
                    .labels()
                    .iter()
                    .zip(truth.labels())
                    .filter(|&(&a, &b)| a == s.code() && b != s.code())
                    .count();
                assert_eq!(invented, 0);
                assert_eq!(connected_components(&seg, s, Connectivity::TwentySix), 1);
            }
        }
    }

    #[test]
    fn mismatched_masks_average_background_intensity() {
        let cfg = PhantomConfig::default();
        let midpoint = (cfg.foreground_mean + cfg.background_mean) / 2.0;
        let (img, truth) = generate_case(&cfg, MorphClass::ANormal, 21).unwrap();
        for atlas in [MorphClass::BArterial, MorphClass::CAtrial] {
            let seg =
                simulate_segmentation(&cfg, MorphClass::ANormal, atlas, &truth, 21).unwrap();
            for s in [StructureId::AORTA, StructureId::PULMONARY_ARTERY] {
                let st = masked_stats(&img, &seg, s, Connectivity::TwentySix).unwrap();
                assert!(st.voxel_count > 0);
                assert!(
                    st.mean < midpoint,
                    "{atlas} {s}: mean {} not below {midpoint}",
                    st.mean
                );
            }
        }
        // The matched mask, for contrast, averages foreground.
        let seg = simulate_segmentation(&cfg, MorphClass::ANormal, MorphClass::ANormal, &truth, 21)
            .unwrap();
        let st = masked_stats(&img, &seg, StructureId::AORTA, Connectivity::TwentySix).unwrap();
        assert!(st.mean > midpoint);
    }

    #[test]
    fn cohort_emits_every_file_the_manifest_names() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PhantomConfig::default();
        let rows = generate_cohort(&cfg, 2, 1, dir.path()).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows.iter().filter(|r| r.role == Role::Case).count(), 6);
        assert_eq!(rows.iter().filter(|r| r.role == Role::Atlas).count(), 3);
        for r in &rows {
            assert!(dir.path().join(&r.intensity_path).is_file(), "{r:?}");
            assert!(dir.path().join(&r.truth_path).is_file(), "{r:?}");
            if r.role == Role::Case {
                for atlas in MorphClass::ALL {
                    assert!(dir.path().join(seg_file_name(&r.case_id, atlas)).is_file());
                }
            }
        }
        let mvol_count = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .path()
                    .extension()
                    .is_some_and(|x| x == "mvol")
            })
            .count();
        // 9 intensities + 9 truths + 6 cases x 3 segmentations.
        assert_eq!(mvol_count, 36);
        let back = read_manifest(manifest_path(dir.path())).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn cohort_rejects_empty_classes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PhantomConfig::default();
        assert!(matches!(
            generate_cohort(&cfg, 0, 1, dir.path()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_cohort(&cfg, 1, 0, dir.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cohorts_are_byte_identical_across_reruns() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg = PhantomConfig {
            rng_seed: 7,
            ..PhantomConfig::default()
        };
        generate_cohort(&cfg, 1, 1, dir_a.path()).unwrap();
        generate_cohort(&cfg, 1, 1, dir_b.path()).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs between reruns");
        }
    }

    #[test]
    fn class_names_round_trip() {
        for cls in MorphClass::ALL {
            assert_eq!(MorphClass::parse(cls.id()).unwrap(), cls);
        }
        assert!(MorphClass::parse("D_other").is_err());
        assert_eq!(MorphClass::BArterial.to_string(), "B_arterial");
        assert_eq!(
            serde_json::to_string(&MorphClass::CAtrial).unwrap(),
            "\"C_atrial\""
        );
    }
}
