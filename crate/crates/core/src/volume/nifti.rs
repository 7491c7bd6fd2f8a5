//! NIfTI-1 single-file reader (`.nii` / `.nii.gz`).

use flate2::read::MultiGzDecoder;
use nalgebra::{Matrix3, Vector3};
use std::io::Read;
use std::path::Path;

use super::{AxisMap, Volume, OBLIQUE_WARN};
use crate::{Error, Outcome, Result};

const HEADER_SIZE: usize = 348;

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Header<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Header<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

/// Read a NIfTI-1 file from disk, detecting gzip compression from its
/// leading bytes.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<Outcome<Volume>> {
    let bytes = std::fs::read(path)?;
    let gzipped = bytes.starts_with(&[0x1f, 0x8b]);
    parse_nifti(&bytes, gzipped)
}

/// Decode a NIfTI-1 byte stream into a [`Volume`].
///
/// Scale slope/intercept are applied (a zero slope counts as 1). The
/// voxel-to-world directions come from the qform when `qform_code > 0`, else
/// from the sform, else the identity; they are snapped to the nearest signed
/// permutation and a warning is attached for oblique inputs.
pub fn parse_nifti(bytes: &[u8], gzipped: bool) -> Result<Outcome<Volume>> {
    let inflated;
    let bytes = if gzipped {
        let mut out = Vec::new();
        MultiGzDecoder::new(bytes).read_to_end(&mut out)?;
        inflated = out;
        &inflated[..]
    } else {
        bytes
    };
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Truncated {
            needed: HEADER_SIZE,
            available: bytes.len(),
        });
    }
    let endian = match (
        i32::from_le_bytes(bytes[0..4].try_into().unwrap()),
        i32::from_be_bytes(bytes[0..4].try_into().unwrap()),
    ) {
        (348, _) => Endian::Little,
        (_, 348) => Endian::Big,
        _ => return Err(Error::Header("sizeof_hdr is not 348".into())),
    };
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::BadMagic);
    }
    let h = Header { bytes, endian };
    let mut warnings = Vec::new();

    let dim: [i16; 8] = std::array::from_fn(|k| h.i16(40 + 2 * k));
    let ndim = dim[0];
    let extra_singleton = (4..=7).all(|k| k as i16 > ndim || dim[k] <= 1);
    if !(3..=7).contains(&ndim) || !extra_singleton || dim[1..4].iter().any(|&d| d < 1) {
        return Err(Error::NotThreeDimensional(dim));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];

    let datatype = h.i16(70);
    let width = match datatype {
        2 | 256 => 1,
        4 | 512 => 2,
        8 | 16 | 768 => 4,
        64 => 8,
        other => return Err(Error::UnsupportedDatatype(other)),
    };

    let pixdim: [f32; 8] = std::array::from_fn(|k| h.f32(76 + 4 * k));
    let mut spacing = [0f64; 3];
    for k in 0..3 {
        let s = (pixdim[k + 1] as f64).abs();
        spacing[k] = if s > 0.0 && s.is_finite() {
            s
        } else {
            warnings.push(format!("pixdim[{}] = {} replaced by 1", k + 1, pixdim[k + 1]));
            1.0
        };
    }

    let vox_offset = h.f32(108);
    if !(vox_offset >= HEADER_SIZE as f32) || !vox_offset.is_finite() {
        return Err(Error::Header(format!("vox_offset {vox_offset} inside header")));
    }
    let start = vox_offset as usize;
    let count = dims[0] * dims[1] * dims[2];
    let needed = start + count * width;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: bytes.len(),
        });
    }

    let mut slope = h.f32(112) as f64;
    let inter = h.f32(116) as f64;
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    let inter = if inter.is_finite() { inter } else { 0.0 };

    let payload = &bytes[start..needed];
    let data = decode(payload, datatype, endian, count)
        .into_iter()
        .map(|v| v * slope + inter)
        .collect::<Vec<_>>();

    let (rotation, origin) = voxel_to_world(&h, pixdim[0]);
    let (orientation, off_axis) = AxisMap::snap(&rotation)?;
    if off_axis > OBLIQUE_WARN {
        warnings.push(format!(
            "oblique acquisition snapped to {} (off-axis component {off_axis:.3})",
            orientation.label()
        ));
    }

    let volume = Volume {
        dims,
        spacing,
        data,
        orientation,
        origin,
    };
    volume.validate()?;
    Ok(Outcome::with_warnings(volume, warnings))
}

fn decode(payload: &[u8], datatype: i16, endian: Endian, count: usize) -> Vec<f64> {
    macro_rules! read_as {
        ($t:ty) => {{
            const W: usize = std::mem::size_of::<$t>();
            payload
                .chunks_exact(W)
                .take(count)
                .map(|c| {
                    let b: [u8; W] = c.try_into().unwrap();
                    (match endian {
                        Endian::Little => <$t>::from_le_bytes(b),
                        Endian::Big => <$t>::from_be_bytes(b),
                    }) as f64
                })
                .collect()
        }};
    }
    match datatype {
        2 => read_as!(u8),
        256 => read_as!(i8),
        4 => read_as!(i16),
        512 => read_as!(u16),
        8 => read_as!(i32),
        768 => read_as!(u32),
        16 => read_as!(f32),
        64 => read_as!(f64),
        _ => unreachable!("datatype validated by caller"),
    }
}

/// Direction matrix (unit columns) and origin of voxel (0,0,0).
fn voxel_to_world(h: &Header<'_>, qfac: f32) -> (Matrix3<f64>, [f64; 3]) {
    let qform_code = h.i16(252);
    let sform_code = h.i16(254);
    if qform_code > 0 {
        let (b, c, d) = (h.f32(256) as f64, h.f32(260) as f64, h.f32(264) as f64);
        let mut a2 = 1.0 - (b * b + c * c + d * d);
        let (mut b, mut c, mut d) = (b, c, d);
        if a2 < 1e-7 {
            // a is zero: renormalize (b, c, d)
            let n = (b * b + c * c + d * d).sqrt();
            if n > 0.0 {
                b /= n;
                c /= n;
                d /= n;
            }
            a2 = 0.0;
        }
        let a = a2.sqrt();
        let mut r = Matrix3::new(
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - c * c - b * b,
        );
        if qfac < 0.0 {
            let mut col = r.column_mut(2);
            col *= -1.0;
        }
        let origin = [h.f32(268) as f64, h.f32(272) as f64, h.f32(276) as f64];
        return (r, origin);
    }
    if sform_code > 0 {
        let row = |off: usize| [0, 1, 2, 3].map(|k| h.f32(off + 4 * k) as f64);
        let rows = [row(280), row(296), row(312)];
        let mut m = Matrix3::from_fn(|i, j| rows[i][j]);
        for j in 0..3 {
            let n = Vector3::from(m.column(j)).norm();
            if n > 0.0 {
                let mut col = m.column_mut(j);
                col /= n;
            }
        }
        return (m, [rows[0][3], rows[1][3], rows[2][3]]);
    }
    (Matrix3::identity(), [0.0; 3])
}

/// Encode `v` as a little-endian single-file NIfTI-1 image with float32
/// voxels and an sform carrying orientation, spacing and origin.
pub fn write_nifti(v: &Volume, gzip: bool) -> Result<Vec<u8>> {
    v.validate()?;
    let mut b = vec![0u8; HEADER_SIZE + 4];
    let put_i16 = |b: &mut [u8], off: usize, x: i16| b[off..off + 2].copy_from_slice(&x.to_le_bytes());
    let put_f32 = |b: &mut [u8], off: usize, x: f32| b[off..off + 4].copy_from_slice(&x.to_le_bytes());
    b[0..4].copy_from_slice(&348i32.to_le_bytes());
    if v.dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::InvalidVolume(format!("dims {:?} exceed the NIfTI-1 limit", v.dims)));
    }
    for (k, d) in [3, v.dims[0], v.dims[1], v.dims[2], 1, 1, 1, 1].iter().enumerate() {
        put_i16(&mut b, 40 + 2 * k, *d as i16);
    }
    put_i16(&mut b, 70, 16);
    put_i16(&mut b, 72, 32);
    put_f32(&mut b, 76, 1.0);
    for k in 0..3 {
        put_f32(&mut b, 80 + 4 * k, v.spacing[k] as f32);
    }
    put_f32(&mut b, 108, (HEADER_SIZE + 4) as f32);
    put_f32(&mut b, 112, 1.0);
    b[123] = 2; // xyzt_units: mm
    put_i16(&mut b, 254, 1);
    let m = v.orientation.matrix();
    for i in 0..3 {
        for j in 0..3 {
            put_f32(&mut b, 280 + 16 * i + 4 * j, (m[(i, j)] * v.spacing[j]) as f32);
        }
        put_f32(&mut b, 280 + 16 * i + 12, v.origin[i] as f32);
    }
    b[344..348].copy_from_slice(b"n+1\0");
    b.reserve(4 * v.data.len());
    for x in &v.data {
        b.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    if !gzip {
        return Ok(b);
    }
    let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
    std::io::Write::write_all(&mut enc, &b)?;
    Ok(enc.finish()?)
}

/// Write `v` to `path`, gzipped when the name ends in `.gz`.
pub fn save_nifti(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let gz = path.extension().is_some_and(|e| e == "gz");
    std::fs::write(path, write_nifti(v, gz)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::OrientationCode;
    use std::io::Write;

    /// 348-byte header + 4 extension bytes + 2x2x2 int16 payload, written field
    /// by field with the standard offsets.
    fn handmade(little: bool) -> Vec<u8> {
        let mut b = vec![0u8; 352];
        let put_i32 = |b: &mut [u8], off: usize, v: i32| {
            let x = if little { v.to_le_bytes() } else { v.to_be_bytes() };
            b[off..off + 4].copy_from_slice(&x);
        };
        let put_i16 = |b: &mut [u8], off: usize, v: i16| {
            let x = if little { v.to_le_bytes() } else { v.to_be_bytes() };
            b[off..off + 2].copy_from_slice(&x);
        };
        let put_f32 = |b: &mut [u8], off: usize, v: f32| {
            let x = if little { v.to_le_bytes() } else { v.to_be_bytes() };
            b[off..off + 4].copy_from_slice(&x);
        };
        put_i32(&mut b, 0, 348);
        for (k, d) in [3i16, 2, 2, 2, 1, 1, 1, 1].iter().enumerate() {
            put_i16(&mut b, 40 + 2 * k, *d);
        }
        put_i16(&mut b, 70, 4); // int16
        put_i16(&mut b, 72, 16);
        for (k, p) in [1f32, 1.0, 1.0, 1.0].iter().enumerate() {
            put_f32(&mut b, 76 + 4 * k, *p);
        }
        put_f32(&mut b, 108, 352.0);
        put_f32(&mut b, 112, 1.0);
        put_i16(&mut b, 252, 1); // qform_code, zero quaternion = identity
        b[344..348].copy_from_slice(b"n+1\0");
        for v in [-3i16, 0, 1, 2, 100, 200, 300, 32767] {
            let x = if little { v.to_le_bytes() } else { v.to_be_bytes() };
            b.extend_from_slice(&x);
        }
        b
    }

    #[test]
    fn handmade_int16_header() {
        let bytes = handmade(true);
        // independent inspection of the raw payload bytes
        assert_eq!(&bytes[352..356], &[0xfd, 0xff, 0x00, 0x00]);
        let v = parse_nifti(&bytes, false).unwrap().value;
        assert_eq!(v.dims, [2, 2, 2]);
        assert_eq!(v.data, vec![-3.0, 0.0, 1.0, 2.0, 100.0, 200.0, 300.0, 32767.0]);
        assert_eq!(v.orientation, OrientationCode::RAS.map());
    }

    #[test]
    fn big_endian_matches_little_endian() {
        let le = parse_nifti(&handmade(true), false).unwrap().value;
        let be = parse_nifti(&handmade(false), false).unwrap().value;
        assert_eq!(le, be);
    }

    #[test]
    fn gzip_round_trip() {
        let raw = handmade(true);
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        let gz = enc.finish().unwrap();
        let a = parse_nifti(&raw, false).unwrap().value;
        let b = parse_nifti(&gz, true).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn writer_round_trip() {
        let v = Volume::from_fn([3, 4, 5], [1.0, 2.0, 0.5], |x, y, z| (x + 10 * y + 100 * z) as f64)
            .unwrap()
            .with_orientation(OrientationCode::from_label("PIR").unwrap());
        for gz in [false, true] {
            let back = parse_nifti(&write_nifti(&v, gz).unwrap(), gz).unwrap();
            assert!(back.warnings.is_empty());
            assert_eq!(back.value, v);
        }
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = handmade(true);
        bytes[345] = b'X';
        let err = parse_nifti(&bytes, false).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = handmade(true);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(parse_nifti(&bytes, false), Err(Error::Truncated { .. })));
    }

    #[test]
    fn unsupported_datatype() {
        let mut bytes = handmade(true);
        bytes[70..72].copy_from_slice(&1792i16.to_le_bytes()); // complex128
        assert!(matches!(parse_nifti(&bytes, false), Err(Error::UnsupportedDatatype(1792))));
    }

    #[test]
    fn four_d_is_rejected() {
        let mut bytes = handmade(true);
        bytes[40..42].copy_from_slice(&4i16.to_le_bytes());
        bytes[48..50].copy_from_slice(&5i16.to_le_bytes());
        assert!(matches!(parse_nifti(&bytes, false), Err(Error::NotThreeDimensional(_))));
    }

    #[test]
    fn zero_slope_means_one() {
        let mut bytes = handmade(true);
        bytes[112..116].copy_from_slice(&0f32.to_le_bytes());
        bytes[116..120].copy_from_slice(&10f32.to_le_bytes());
        let v = parse_nifti(&bytes, false).unwrap().value;
        assert_eq!(v.data[0], 7.0);
    }

    #[test]
    fn sform_used_when_qform_absent() {
        let mut bytes = handmade(true);
        bytes[252..254].copy_from_slice(&0i16.to_le_bytes());
        bytes[254..256].copy_from_slice(&1i16.to_le_bytes());
        // srow: x <- -y, y <- z, z <- x  (columns give voxel axis directions)
        let rows = [[0f32, -2.0, 0.0, 5.0], [0.0, 0.0, 2.0, 6.0], [2.0, 0.0, 0.0, 7.0]];
        for (r, row) in rows.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let off = 280 + 16 * r + 4 * k;
                bytes[off..off + 4].copy_from_slice(&v.to_le_bytes());
            }
        }
        let v = parse_nifti(&bytes, false).unwrap().value;
        assert_eq!(v.orientation.label(), "SLA");
        assert_eq!(v.origin, [5.0, 6.0, 7.0]);
    }
}
