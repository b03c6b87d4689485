//! In-memory 3-D volumes and the MVOL file format.
//!
//! Two voxel types cover everything the pipeline needs: scalar intensity
//! volumes (f32) and label maps (u16, one structure id per voxel). Both carry
//! grid geometry — dims plus per-axis spacing in millimetres — and store
//! voxels x-fastest: `index = x + dims[0] * (y + dims[1] * z)`.
//!
//! MVOL is a little-endian container with a fixed 32-byte header:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MVOL"
//! 4       1     version (1)
//! 5       1     dtype: 1 = f32 scalar, 2 = u16 label
//! 6       2     reserved, must be zero
//! 8       12    dims, 3 x u32
//! 20      12    spacing, 3 x f32
//! 32      ...   payload, voxels in x-fastest order
//! ```
//!
//! Round trips are bit-exact; see `docs/FORMATS.md` for the normative
//! description.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MVOL_MAGIC: [u8; 4] = *b"MVOL";
pub const MVOL_VERSION: u8 = 1;
const DTYPE_SCALAR: u8 = 1;
const DTYPE_LABEL: u8 = 2;
const HEADER_LEN: usize = 32;

/// Anatomical structure id inside a label volume. Zero is background and is
/// not a valid structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StructureId(u16);

impl StructureId {
    pub const AORTA: StructureId = StructureId(1);
    pub const PULMONARY_ARTERY: StructureId = StructureId(2);

    pub fn new(code: u16) -> Result<Self> {
        if code == 0 {
            return Err(Error::Config(
                "structure id 0 is reserved for background".into(),
            ));
        }
        Ok(StructureId(code))
    }

    pub fn code(self) -> u16 {
        self.0
    }
}

impl std::fmt::Display for StructureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn check_geometry(dims: [u32; 3], spacing: [f32; 3]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::InvalidVolume(format!(
            "dims must be positive, got {dims:?}"
        )));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidVolume(format!(
            "spacing must be positive and finite, got {spacing:?}"
        )));
    }
    (dims[0] as usize)
        .checked_mul(dims[1] as usize)
        .and_then(|p| p.checked_mul(dims[2] as usize))
        .ok_or_else(|| Error::InvalidVolume(format!("dims {dims:?} overflow the address space")))
}

/// x-fastest linear index for a voxel coordinate.
#[inline]
pub fn linear_index(dims: [u32; 3], x: u32, y: u32, z: u32) -> usize {
    debug_assert!(x < dims[0] && y < dims[1] && z < dims[2]);
    x as usize + dims[0] as usize * (y as usize + dims[1] as usize * z as usize)
}

/// Shared geometry accessors for anything living on a voxel grid.
pub trait Grid {
    fn dims(&self) -> [u32; 3];
    fn spacing(&self) -> [f32; 3];

    fn voxel_count(&self) -> usize {
        let d = self.dims();
        d[0] as usize * d[1] as usize * d[2] as usize
    }
}

/// True when two volumes share dims exactly and spacing within 1e-9 relative.
pub fn same_grid<A: Grid + ?Sized, B: Grid + ?Sized>(a: &A, b: &B) -> bool {
    if a.dims() != b.dims() {
        return false;
    }
    a.spacing()
        .iter()
        .zip(b.spacing().iter())
        .all(|(&sa, &sb)| {
            let (sa, sb) = (sa as f64, sb as f64);
            (sa - sb).abs() <= 1e-9 * sa.abs().max(sb.abs())
        })
}

/// Scalar intensity volume, f32 voxels, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    dims: [u32; 3],
    spacing: [f32; 3],
    data: Vec<f32>,
}

impl ScalarVolume {
    pub fn new(dims: [u32; 3], spacing: [f32; 3], data: Vec<f32>) -> Result<Self> {
        let expected = check_geometry(dims, spacing)?;
        if data.len() != expected {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {:?} ({} voxels)",
                data.len(),
                dims,
                expected
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "non-finite intensity at linear index {pos}"
            )));
        }
        Ok(ScalarVolume {
            dims,
            spacing,
            data,
        })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, z: u32) -> f32 {
        self.data[linear_index(self.dims, x, y, z)]
    }

    pub fn store<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut payload = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        write_mvol(path.as_ref(), DTYPE_SCALAR, self.dims, self.spacing, &payload)
    }
}

impl Grid for ScalarVolume {
    fn dims(&self) -> [u32; 3] {
        self.dims
    }
    fn spacing(&self) -> [f32; 3] {
        self.spacing
    }
}

/// Label map, u16 voxels; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [u32; 3],
    spacing: [f32; 3],
    labels: Vec<u16>,
}

impl LabelVolume {
    pub fn new(dims: [u32; 3], spacing: [f32; 3], labels: Vec<u16>) -> Result<Self> {
        let expected = check_geometry(dims, spacing)?;
        if labels.len() != expected {
            return Err(Error::InvalidVolume(format!(
                "label length {} does not match dims {:?} ({} voxels)",
                labels.len(),
                dims,
                expected
            )));
        }
        Ok(LabelVolume {
            dims,
            spacing,
            labels,
        })
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, z: u32) -> u16 {
        self.labels[linear_index(self.dims, x, y, z)]
    }

    /// Voxel count carrying the given structure id.
    pub fn structure_voxels(&self, s: StructureId) -> usize {
        self.labels.iter().filter(|&&l| l == s.code()).count()
    }

    pub fn store<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut payload = Vec::with_capacity(self.labels.len() * 2);
        for v in &self.labels {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        write_mvol(path.as_ref(), DTYPE_LABEL, self.dims, self.spacing, &payload)
    }
}

impl Grid for LabelVolume {
    fn dims(&self) -> [u32; 3] {
        self.dims
    }
    fn spacing(&self) -> [f32; 3] {
        self.spacing
    }
}

/// Either voxel type, as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Scalar(ScalarVolume),
    Label(LabelVolume),
}

impl Volume {
    pub fn into_scalar(self) -> Result<ScalarVolume> {
        match self {
            Volume::Scalar(v) => Ok(v),
            Volume::Label(_) => Err(Error::Data(
                "expected a scalar volume, found a label volume".into(),
            )),
        }
    }

    pub fn into_label(self) -> Result<LabelVolume> {
        match self {
            Volume::Label(v) => Ok(v),
            Volume::Scalar(_) => Err(Error::Data(
                "expected a label volume, found a scalar volume".into(),
            )),
        }
    }
}

impl Grid for Volume {
    fn dims(&self) -> [u32; 3] {
        match self {
            Volume::Scalar(v) => v.dims(),
            Volume::Label(v) => v.dims(),
        }
    }
    fn spacing(&self) -> [f32; 3] {
        match self {
            Volume::Scalar(v) => v.spacing(),
            Volume::Label(v) => v.spacing(),
        }
    }
}

fn write_mvol(
    path: &Path,
    dtype: u8,
    dims: [u32; 3],
    spacing: [f32; 3],
    payload: &[u8],
) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + payload.len());
    bytes.extend_from_slice(&MVOL_MAGIC);
    bytes.push(MVOL_VERSION);
    bytes.push(dtype);
    bytes.extend_from_slice(&[0, 0]);
    for d in dims {
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    for s in spacing {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    bytes.extend_from_slice(payload);
    fs::write(path, bytes)?;
    Ok(())
}

pub fn store_volume<P: AsRef<Path>>(volume: &Volume, path: P) -> Result<()> {
    match volume {
        Volume::Scalar(v) => v.store(path),
        Volume::Label(v) => v.store(path),
    }
}

pub fn load_volume<P: AsRef<Path>>(path: P) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let fail = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };

    if bytes.len() < HEADER_LEN {
        return Err(fail(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[0..4] != MVOL_MAGIC {
        return Err(fail(format!("bad magic {:?}", &bytes[0..4])));
    }
    if bytes[4] != MVOL_VERSION {
        return Err(fail(format!(
            "unsupported version {} (expected {MVOL_VERSION})",
            bytes[4]
        )));
    }
    let dtype = bytes[5];
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(fail("reserved header bytes must be zero".into()));
    }

    let mut dims = [0u32; 3];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    }
    let mut spacing = [0f32; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        *s = f32::from_le_bytes(bytes[20 + 4 * i..24 + 4 * i].try_into().unwrap());
    }

    let voxels = check_geometry(dims, spacing)?;
    let payload = &bytes[HEADER_LEN..];
    let item = match dtype {
        DTYPE_SCALAR => 4,
        DTYPE_LABEL => 2,
        other => return Err(fail(format!("unknown dtype {other}"))),
    };
    let expected = voxels
        .checked_mul(item)
        .ok_or_else(|| fail("payload size overflows".into()))?;
    if payload.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN + expected,
            found: bytes.len(),
        });
    }

    match dtype {
        DTYPE_SCALAR => {
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Volume::Scalar(ScalarVolume::new(dims, spacing, data)?))
        }
        DTYPE_LABEL => {
            let labels: Vec<u16> = payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Volume::Label(LabelVolume::new(dims, spacing, labels)?))
        }
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use tempfile::tempdir;

    fn arbitrary_scalar(g: &mut SplitMix64) -> ScalarVolume {
        let dims = [
            1 + g.next_index(6) as u32,
            1 + g.next_index(6) as u32,
            1 + g.next_index(6) as u32,
        ];
        let spacing = [
            g.uniform(0.2, 3.0) as f32,
            g.uniform(0.2, 3.0) as f32,
            g.uniform(0.2, 3.0) as f32,
        ];
        let n = (dims[0] * dims[1] * dims[2]) as usize;
        let data: Vec<f32> = (0..n).map(|_| g.uniform(-500.0, 500.0) as f32).collect();
        ScalarVolume::new(dims, spacing, data).unwrap()
    }

    #[test]
    fn scalar_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vol.mvol");
        let vol = ScalarVolume::new(
            [2, 3, 4],
            [1.0, 1.5, 2.0],
            (0..24).map(|i| i as f32 * 0.25 - 3.0).collect(),
        )
        .unwrap();
        vol.store(&path).unwrap();
        let loaded = load_volume(&path).unwrap().into_scalar().unwrap();
        assert_eq!(vol, loaded);
        // Store again: identical bytes.
        let path2 = dir.path().join("vol2.mvol");
        loaded.store(&path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn label_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("seg.mvol");
        let vol = LabelVolume::new([3, 2, 2], [1.0, 1.0, 1.0], vec![0, 1, 2, 0, 1, 1, 0, 0, 2, 2, 1, 0])
            .unwrap();
        vol.store(&path).unwrap();
        let loaded = load_volume(&path).unwrap().into_label().unwrap();
        assert_eq!(vol, loaded);
    }

    #[test]
    fn random_volumes_round_trip() {
        let dir = tempdir().unwrap();
        let mut g = SplitMix64::new(0xC0FFEE);
        for i in 0..100 {
            let path = dir.path().join(format!("v{i}.mvol"));
            let vol = arbitrary_scalar(&mut g);
            vol.store(&path).unwrap();
            let loaded = load_volume(&path).unwrap().into_scalar().unwrap();
            assert_eq!(vol, loaded, "round trip mismatch at volume {i}");
        }
    }

    #[test]
    fn payload_ordering_is_x_fastest() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ord.mvol");
        let dims = [4u32, 3, 5];
        let n = 60usize;
        let data: Vec<f32> = (0..n).map(|i| i as f32).collect();
        let vol = ScalarVolume::new(dims, [1.0; 3], data).unwrap();
        vol.store(&path).unwrap();
        let bytes = fs::read(&path).unwrap();

        let mut g = SplitMix64::new(31);
        for _ in 0..20 {
            let x = g.next_index(4) as u32;
            let y = g.next_index(3) as u32;
            let z = g.next_index(5) as u32;
            let li = linear_index(dims, x, y, z);
            let off = HEADER_LEN + 4 * li;
            let from_file = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            assert_eq!(from_file, vol.get(x, y, z));
            assert_eq!(from_file, li as f32);
        }
    }

    #[test]
    fn version_mismatch_names_the_version() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v3.mvol");
        let vol = ScalarVolume::new([1, 1, 1], [1.0; 3], vec![0.5]).unwrap();
        vol.store(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 3;
        fs::write(&path, bytes).unwrap();
        let err = load_volume(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("version 3"), "unexpected message: {msg}");
    }

    #[test]
    fn truncated_payload_reports_counts() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.mvol");
        let vol = ScalarVolume::new([2, 2, 2], [1.0; 3], vec![1.0; 8]).unwrap();
        vol.store(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match load_volume(&path).unwrap_err() {
            Error::Truncated {
                expected, found, ..
            } => {
                assert_eq!(expected, 32 + 32);
                assert_eq!(found, 32 + 32 - 5);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_reserved_bytes_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.mvol");
        let vol = ScalarVolume::new([1, 1, 1], [1.0; 3], vec![0.0]).unwrap();
        vol.store(&path).unwrap();
        let good = fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(load_volume(&path), Err(Error::Format { .. })));

        let mut bad_reserved = good;
        bad_reserved[6] = 1;
        fs::write(&path, &bad_reserved).unwrap();
        assert!(matches!(load_volume(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        assert!(matches!(
            ScalarVolume::new([0, 1, 1], [1.0; 3], vec![]),
            Err(Error::InvalidVolume(_))
        ));
        assert!(matches!(
            ScalarVolume::new([1, 1, 1], [0.0, 1.0, 1.0], vec![1.0]),
            Err(Error::InvalidVolume(_))
        ));
        assert!(matches!(
            ScalarVolume::new([1, 1, 1], [1.0; 3], vec![f32::NAN]),
            Err(Error::InvalidVolume(_))
        ));
        assert!(matches!(
            ScalarVolume::new([2, 2, 2], [1.0; 3], vec![1.0; 7]),
            Err(Error::InvalidVolume(_))
        ));
        assert!(matches!(
            LabelVolume::new([2, 2, 2], [1.0; 3], vec![0; 9]),
            Err(Error::InvalidVolume(_))
        ));
        assert!(StructureId::new(0).is_err());
        assert_eq!(StructureId::new(7).unwrap().code(), 7);
    }

    #[test]
    fn same_grid_compares_dims_and_spacing() {
        let a = ScalarVolume::new([2, 2, 2], [1.0, 1.0, 1.0], vec![0.0; 8]).unwrap();
        let b = LabelVolume::new([2, 2, 2], [1.0, 1.0, 1.0], vec![0; 8]).unwrap();
        assert!(same_grid(&a, &b));

        let c = LabelVolume::new([2, 2, 2], [1.0, 1.0, 1.001], vec![0; 8]).unwrap();
        assert!(!same_grid(&a, &c));

        let d = LabelVolume::new([2, 2, 1], [1.0; 3], vec![0; 4]).unwrap();
        assert!(!same_grid(&a, &d));
    }
}
