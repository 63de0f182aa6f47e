//! Binary scene files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size      | content                                   |
//! |--------|-----------|-------------------------------------------|
//! | 0      | 8         | magic `VFSCENE\0`                         |
//! | 8      | 4         | format version (`u32`, currently 1)       |
//! | 12     | 4         | class label (`u32`)                       |
//! | 16     | 4         | name length `L` in bytes (`u32`)          |
//! | 20     | L         | name, UTF-8                               |
//! | 20+L   | 12        | resolution `nx, ny, nz` (`u32` each)      |
//! | 32+L   | 48        | bbox `min.xyz, max.xyz` (`f64` each)      |
//! | 80+L   | 4·n       | densities (`f32`), x-fastest              |
//! | 80+L+4n| 12·n      | colors, `r, g, b` (`f32`) per voxel       |
//!
//! where `n = nx·ny·nz`. Trailing bytes are rejected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Aabb, SceneSpec, VoxelField};

pub const MAGIC: &[u8; 8] = b"VFSCENE\0";
pub const VERSION: u32 = 1;

const MAX_VOXELS: usize = 1 << 28;

pub fn encode_scene(scene: &SceneSpec) -> Vec<u8> {
    let f = &scene.field;
    let n = f.voxel_count();
    let mut out = Vec::with_capacity(80 + scene.name.len() + 16 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(scene.label as u32).to_le_bytes());
    out.extend_from_slice(&(scene.name.len() as u32).to_le_bytes());
    out.extend_from_slice(scene.name.as_bytes());
    for r in f.resolution() {
        out.extend_from_slice(&(r as u32).to_le_bytes());
    }
    for x in f.bbox().min.iter().chain(f.bbox().max.iter()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for d in f.densities() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for c in f.colors() {
        for ch in c {
            out.extend_from_slice(&ch.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated {what}: need {n} bytes, {} remain", self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(count * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_scene(bytes: &[u8]) -> Result<SceneSpec> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "bad magic, not a scene file".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let label = r.u32("label")? as usize;
    let name_len = r.u32("name length")? as usize;
    let name_at = r.pos;
    let name = std::str::from_utf8(r.take(name_len, "name")?)
        .map_err(|e| Error::Parse {
            offset: name_at + e.valid_up_to(),
            message: "scene name is not valid UTF-8".into(),
        })?
        .to_string();
    let res_at = r.pos;
    let mut resolution = [0usize; 3];
    for v in &mut resolution {
        *v = r.u32("resolution")? as usize;
    }
    let n = resolution
        .iter()
        .try_fold(1usize, |acc, &v| acc.checked_mul(v))
        .filter(|&n| n > 0 && n <= MAX_VOXELS)
        .ok_or_else(|| Error::Parse {
            offset: res_at,
            message: format!("unsupported resolution {resolution:?}"),
        })?;
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    for v in &mut min {
        *v = r.f64("bbox")?;
    }
    for v in &mut max {
        *v = r.f64("bbox")?;
    }
    let densities = r.f32s(n, "densities")?;
    let flat = r.f32s(3 * n, "colors")?;
    if r.pos != bytes.len() {
        return Err(Error::Parse {
            offset: r.pos,
            message: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    let colors = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let field = VoxelField::new(resolution, Aabb::new(min, max)?, densities, colors)?;
    Ok(SceneSpec { field, label, name })
}

pub fn save_scene(scene: &SceneSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_scene(scene)).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneSpec> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_scene(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_primitive_scene, PrimitiveKind, ShapeParams};

    fn scene(kind: PrimitiveKind) -> SceneSpec {
        SceneSpec {
            field: build_primitive_scene(kind, [6, 5, 4], &ShapeParams::default()).unwrap(),
            label: 3,
            name: format!("{kind}-ü"),
        }
    }

    #[test]
    fn every_primitive_round_trips() {
        for kind in PrimitiveKind::ALL {
            let s = scene(kind);
            let back = decode_scene(&encode_scene(&s)).unwrap();
            assert_eq!(back, s);
            let bits = |f: &VoxelField| f.densities().iter().map(|d| d.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back.field), bits(&s.field));
        }
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let bytes = encode_scene(&scene(PrimitiveKind::Box));
        for cut in [0, 7, 12, 30, bytes.len() - 1] {
            match decode_scene(&bytes[..cut]) {
                Err(Error::Parse { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_scene(&scene(PrimitiveKind::Box));
        let len = bytes.len();
        bytes.push(0);
        assert!(matches!(decode_scene(&bytes), Err(Error::Parse { offset, .. }) if offset == len));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode_scene(&scene(PrimitiveKind::Sphere));
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            decode_scene(&bytes),
            Err(Error::Version { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn negative_density_names_voxel() {
        let s = scene(PrimitiveKind::Box);
        let mut bytes = encode_scene(&s);
        let start = 80 + s.name.len() + 4 * 17;
        bytes[start..start + 4].copy_from_slice(&(-1.0f32).to_le_bytes());
        match decode_scene(&bytes) {
            Err(Error::Validation(msg)) => assert!(msg.contains("voxel 17"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_scene(&scene(PrimitiveKind::Box));
        bytes[0] = b'X';
        assert!(matches!(decode_scene(&bytes), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.vfscene");
        let s = scene(PrimitiveKind::AsymmetricMarker);
        save_scene(&s, &path).unwrap();
        assert_eq!(load_scene(&path).unwrap(), s);
        assert!(matches!(load_scene(dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
