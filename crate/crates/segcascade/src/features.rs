//! Segmentation-quality features.
//!
//! Given an intensity volume and a label volume on the same grid, this module
//! summarizes each labeled structure with first-order statistics (mean,
//! population standard deviation, min, max), its voxel count, and the number
//! of connected components under a chosen neighborhood. A well-fitting mask
//! sits on bright, contiguous vessel lumen; a misregistered mask collects
//! background voxels and falls apart into fragments, and these summaries are
//! what the downstream classifiers see.
//!
//! Feature schema `v1` packs, per structure (aorta then pulmonary artery):
//! mean, std, min, max, voxel_count, component_count, range — then one joint
//! slot, the aorta/PA mean ratio. 15 slots total, fixed order, defined in
//! `docs/FORMATS.md` together with the feature-table CSV layout.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{linear_index, same_grid, Grid, LabelVolume, ScalarVolume, StructureId};

/// Voxel neighborhood used for connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Face, edge and corner neighbors.
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<(i64, i64, i64)> {
        match self {
            Connectivity::Six => vec![
                (1, 0, 0),
                (-1, 0, 0),
                (0, 1, 0),
                (0, -1, 0),
                (0, 0, 1),
                (0, 0, -1),
            ],
            Connectivity::TwentySix => {
                let mut offs = Vec::with_capacity(26);
                for dz in -1..=1i64 {
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            if (dx, dy, dz) != (0, 0, 0) {
                                offs.push((dx, dy, dz));
                            }
                        }
                    }
                }
                offs
            }
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Connectivity::Six => write!(f, "6"),
            Connectivity::TwentySix => write!(f, "26"),
        }
    }
}

/// Number of connected components of the voxels labeled `s`.
///
/// Iterative breadth-first flood fill over the mask; an empty mask has zero
/// components.
pub fn connected_components(seg: &LabelVolume, s: StructureId, conn: Connectivity) -> usize {
    let dims = seg.dims();
    let code = s.code();
    let labels = seg.labels();
    let offsets = conn.offsets();

    let mut visited = vec![false; labels.len()];
    let mut stack: Vec<(u32, u32, u32)> = Vec::new();
    let mut components = 0;

    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let idx = linear_index(dims, x, y, z);
                if labels[idx] != code || visited[idx] {
                    continue;
                }
                components += 1;
                visited[idx] = true;
                stack.push((x, y, z));
                while let Some((cx, cy, cz)) = stack.pop() {
                    for &(dx, dy, dz) in &offsets {
                        let nx = cx as i64 + dx;
                        let ny = cy as i64 + dy;
                        let nz = cz as i64 + dz;
                        if nx < 0
                            || ny < 0
                            || nz < 0
                            || nx >= dims[0] as i64
                            || ny >= dims[1] as i64
                            || nz >= dims[2] as i64
                        {
                            continue;
                        }
                        let (nx, ny, nz) = (nx as u32, ny as u32, nz as u32);
                        let nidx = linear_index(dims, nx, ny, nz);
                        if labels[nidx] == code && !visited[nidx] {
                            visited[nidx] = true;
                            stack.push((nx, ny, nz));
                        }
                    }
                }
            }
        }
    }
    components
}

/// First-order statistics of the intensities under one structure's mask.
///
/// `voxel_count == 0` is the empty-mask signal: every other field is zero and
/// the caller decides what that means (feature extraction encodes it as a
/// degenerate all-zero block rather than failing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskedStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub voxel_count: usize,
    pub component_count: usize,
}

impl MaskedStats {
    pub fn is_empty(&self) -> bool {
        self.voxel_count == 0
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// Computes [`MaskedStats`] for structure `s`. The two volumes must share a
/// grid. Standard deviation is the population form (divide by n), via
/// Welford's recurrence.
pub fn masked_stats(
    img: &ScalarVolume,
    seg: &LabelVolume,
    s: StructureId,
    conn: Connectivity,
) -> Result<MaskedStats> {
    if !same_grid(img, seg) {
        return Err(Error::GridMismatch(format!(
            "image grid {:?}/{:?} vs segmentation grid {:?}/{:?}",
            img.dims(),
            img.spacing(),
            seg.dims(),
            seg.spacing()
        )));
    }

    let code = s.code();
    let mut count = 0usize;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;

    for (value, label) in img.data().iter().zip(seg.labels().iter()) {
        if *label != code {
            continue;
        }
        let v = *value as f64;
        count += 1;
        let delta = v - mean;
        mean += delta / count as f64;
        m2 += delta * (v - mean);
        if v < min {
            min = v;
        }
        if v > max {
            max = v;
        }
    }

    if count == 0 {
        return Ok(MaskedStats {
            mean: 0.0,
            std: 0.0,
            min: 0.0,
            max: 0.0,
            voxel_count: 0,
            component_count: 0,
        });
    }

    Ok(MaskedStats {
        mean,
        std: (m2 / count as f64).sqrt(),
        min,
        max,
        voxel_count: count,
        component_count: connected_components(seg, s, conn),
    })
}

/// What a feature slot measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    Mean,
    StdDev,
    Min,
    Max,
    VoxelCount,
    ComponentCount,
    Range,
    /// Ratio of the first structure's mean to the second's.
    MeanRatio,
}

/// One slot of a feature schema: which structure (None for joint slots) and
/// which statistic fills it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub structure: Option<StructureId>,
    pub statistic: Statistic,
}

pub const FEATURE_LEN: usize = 15;

const PER_STRUCTURE: [Statistic; 7] = [
    Statistic::Mean,
    Statistic::StdDev,
    Statistic::Min,
    Statistic::Max,
    Statistic::VoxelCount,
    Statistic::ComponentCount,
    Statistic::Range,
];

/// Ordered slot layout for feature extraction. The id travels with every
/// vector and trained model so that train and test time cannot silently use
/// different layouts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    id: String,
    connectivity: Connectivity,
    structures: [StructureId; 2],
}

impl FeatureSchema {
    /// Schema `v1`: aorta block, pulmonary-artery block, aorta/PA mean ratio;
    /// 26-connectivity components.
    pub fn v1() -> Self {
        FeatureSchema {
            id: "v1".into(),
            connectivity: Connectivity::TwentySix,
            structures: [StructureId::AORTA, StructureId::PULMONARY_ARTERY],
        }
    }

    /// `v1` layout with 6-connectivity components (id `v1-c6`); mainly for
    /// exercising the connectivity switch in tests.
    pub fn v1_six_connectivity() -> Self {
        FeatureSchema {
            id: "v1-c6".into(),
            connectivity: Connectivity::Six,
            structures: [StructureId::AORTA, StructureId::PULMONARY_ARTERY],
        }
    }

    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            "v1" => Ok(Self::v1()),
            "v1-c6" => Ok(Self::v1_six_connectivity()),
            other => Err(Error::Config(format!("unknown feature schema '{other}'"))),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn len(&self) -> usize {
        FEATURE_LEN
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The ordered slot descriptors.
    pub fn slots(&self) -> Vec<Slot> {
        let mut slots = Vec::with_capacity(FEATURE_LEN);
        for s in self.structures {
            for stat in PER_STRUCTURE {
                slots.push(Slot {
                    structure: Some(s),
                    statistic: stat,
                });
            }
        }
        slots.push(Slot {
            structure: None,
            statistic: Statistic::MeanRatio,
        });
        slots
    }
}

/// A fixed-length, finite feature vector tagged with the schema that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    schema_id: String,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(Error::Shape(format!(
                "feature vector has {} values, schema requires {FEATURE_LEN}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!(
                "non-finite feature value at slot {pos}"
            )));
        }
        Ok(FeatureVector {
            schema_id: schema_id.into(),
            values,
        })
    }

    pub fn schema_id(&self) -> &str {
        &self.schema_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn stats_block(st: &MaskedStats) -> [f64; 7] {
    if st.is_empty() {
        return [0.0; 7];
    }
    [
        st.mean,
        st.std,
        st.min,
        st.max,
        st.voxel_count as f64,
        st.component_count as f64,
        st.range(),
    ]
}

/// Extracts the schema's feature vector from one image/segmentation pair.
///
/// Empty masks are encoded as an all-zero block for that structure (and a
/// zero joint ratio) rather than an error: a segmentation that misses a
/// structure entirely is a legitimate, maximally-bad input downstream.
pub fn extract_features(
    img: &ScalarVolume,
    seg: &LabelVolume,
    schema: &FeatureSchema,
) -> Result<FeatureVector> {
    let a = masked_stats(img, seg, schema.structures[0], schema.connectivity)?;
    let p = masked_stats(img, seg, schema.structures[1], schema.connectivity)?;

    let mut values = Vec::with_capacity(FEATURE_LEN);
    values.extend_from_slice(&stats_block(&a));
    values.extend_from_slice(&stats_block(&p));
    let ratio = if a.is_empty() || p.is_empty() || p.mean == 0.0 {
        0.0
    } else {
        a.mean / p.mean
    };
    values.push(ratio);

    FeatureVector::new(schema.id.clone(), values)
}

/// One row of the feature table: a (case, atlas) pair with its true class.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub case_id: String,
    pub atlas_class: String,
    pub true_class: String,
    pub features: FeatureVector,
}

/// 9-significant-digit scientific notation; the canonical float encoding of
/// the feature table.
pub fn format_feature_value(v: f64) -> String {
    format!("{v:.8e}")
}

fn table_header() -> Vec<String> {
    let mut h = vec![
        "case_id".to_string(),
        "atlas_class".to_string(),
        "true_class".to_string(),
    ];
    for i in 1..=FEATURE_LEN {
        h.push(format!("f{i:02}"));
    }
    h
}

/// Writes the feature table CSV (header `case_id,atlas_class,true_class,
/// f01..f15`, floats at 9 significant digits). Row order is preserved, so
/// identical inputs produce identical bytes.
pub fn write_feature_table<P: AsRef<Path>>(path: P, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(table_header())?;
    for row in rows {
        let mut record = vec![
            row.case_id.clone(),
            row.atlas_class.clone(),
            row.true_class.clone(),
        ];
        for v in row.features.values() {
            record.push(format_feature_value(*v));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a feature table written by [`write_feature_table`]. The caller names
/// the schema the table was extracted with; the vectors are stamped with it.
pub fn read_feature_table<P: AsRef<Path>>(path: P, schema_id: &str) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let expected = table_header();
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        if i == 0 {
            let got: Vec<&str> = record.iter().collect();
            if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::Data(format!(
                    "feature table {path:?} has unexpected header {got:?}"
                )));
            }
            continue;
        }
        if record.len() != 3 + FEATURE_LEN {
            return Err(Error::Data(format!(
                "feature table {path:?} row {i}: expected {} fields, found {}",
                3 + FEATURE_LEN,
                record.len()
            )));
        }
        let mut values = Vec::with_capacity(FEATURE_LEN);
        for (j, field) in record.iter().skip(3).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Data(format!(
                    "feature table {path:?} row {i} column f{:02}: cannot parse '{field}'",
                    j + 1
                ))
            })?;
            values.push(v);
        }
        rows.push(FeatureRow {
            case_id: record[0].to_string(),
            atlas_class: record[1].to_string(),
            true_class: record[2].to_string(),
            features: FeatureVector::new(schema_id, values)?,
        });
    }
    Ok(rows)
}
