//! Minimal single-file NIfTI-1 (`.nii`) reader and writer.
//!
//! Only the header fields needed to recover a scaled 3-D grid are read:
//! `sizeof_hdr`, `dim`, `datatype`, `vox_offset`, `scl_slope`, `scl_inter`
//! and `magic`. Byte order is detected by probing `dim[0]`.

use super::{Dims, Modality, Volume};
use crate::{Error, Result};

pub const HEADER_SIZE: usize = 348;
/// Header plus the four-byte extension flag.
pub const DEFAULT_VOX_OFFSET: usize = 352;
pub const MAGIC_SINGLE_FILE: &[u8; 4] = b"n+1\0";
pub const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

const OFF_SIZEOF_HDR: usize = 0;
const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_MAGIC: usize = 344;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    Uint8,
    Int16,
    Float32,
    Float64,
}

impl NiftiDatatype {
    pub const ALL: [NiftiDatatype; 4] = [
        NiftiDatatype::Uint8,
        NiftiDatatype::Int16,
        NiftiDatatype::Float32,
        NiftiDatatype::Float64,
    ];

    pub fn code(self) -> i16 {
        match self {
            NiftiDatatype::Uint8 => 2,
            NiftiDatatype::Int16 => 4,
            NiftiDatatype::Float32 => 16,
            NiftiDatatype::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(NiftiDatatype::Uint8),
            4 => Ok(NiftiDatatype::Int16),
            16 => Ok(NiftiDatatype::Float32),
            64 => Ok(NiftiDatatype::Float64),
            other => Err(Error::UnsupportedFormat(format!(
                "datatype code {other} (supported: uint8=2, int16=4, float32=16, float64=64)"
            ))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            NiftiDatatype::Uint8 => 1,
            NiftiDatatype::Int16 => 2,
            NiftiDatatype::Float32 => 4,
            NiftiDatatype::Float64 => 8,
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn take<const N: usize>(&self, off: usize) -> [u8; N] {
        self.bytes[off..off + N].try_into().unwrap()
    }

    fn i16(&self, off: usize) -> i16 {
        let b = self.take::<2>(off);
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn i32(&self, off: usize) -> i32 {
        let b = self.take::<4>(off);
        match self.endian {
            Endian::Little => i32::from_le_bytes(b),
            Endian::Big => i32::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b = self.take::<4>(off);
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }

    fn f64(&self, off: usize) -> f64 {
        let b = self.take::<8>(off);
        match self.endian {
            Endian::Little => f64::from_le_bytes(b),
            Endian::Big => f64::from_be_bytes(b),
        }
    }

    fn voxel(&self, datatype: NiftiDatatype, off: usize) -> f64 {
        match datatype {
            NiftiDatatype::Uint8 => self.bytes[off] as f64,
            NiftiDatatype::Int16 => self.i16(off) as f64,
            NiftiDatatype::Float32 => self.f32(off) as f64,
            NiftiDatatype::Float64 => self.f64(off),
        }
    }
}

fn detect_endian(bytes: &[u8]) -> Result<Endian> {
    let plausible = |e: Endian| {
        let dim0 = Reader { bytes, endian: e }.i16(OFF_DIM);
        (1..=7).contains(&dim0)
    };
    if plausible(Endian::Little) {
        Ok(Endian::Little)
    } else if plausible(Endian::Big) {
        Ok(Endian::Big)
    } else {
        Err(Error::parse("dim[0]", "not in 1..=7 in either byte order"))
    }
}

/// Parses a single-file NIfTI-1 image into a volume (scaling applied).
pub fn parse_nifti(bytes: &[u8], modality: Modality) -> Result<Volume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::parse(
            "header",
            format!("truncated: {} bytes, need {HEADER_SIZE}", bytes.len()),
        ));
    }
    let endian = detect_endian(bytes)?;
    let r = Reader { bytes, endian };

    let sizeof_hdr = r.i32(OFF_SIZEOF_HDR);
    if sizeof_hdr == 540 {
        return Err(Error::UnsupportedFormat("NIfTI-2 header (sizeof_hdr = 540)".into()));
    }
    if sizeof_hdr != HEADER_SIZE as i32 {
        return Err(Error::parse("sizeof_hdr", format!("expected 348, got {sizeof_hdr}")));
    }

    let magic = &bytes[OFF_MAGIC..OFF_MAGIC + 4];
    if magic == MAGIC_PAIR {
        return Err(Error::UnsupportedFormat(
            "two-file NIfTI-1 (magic \"ni1\"); only single-file .nii is supported".into(),
        ));
    }
    if magic != MAGIC_SINGLE_FILE {
        return Err(Error::parse("magic", format!("expected \"n+1\\0\", got {magic:?}")));
    }

    let dim0 = r.i16(OFF_DIM) as usize;
    let dim: Vec<i16> = (0..8).map(|i| r.i16(OFF_DIM + 2 * i)).collect();
    let mut extent = [1usize; 3];
    for (axis, e) in extent.iter_mut().enumerate().take(dim0.min(3)) {
        let d = dim[axis + 1];
        if d < 1 {
            return Err(Error::parse(
                format!("dim[{}]", axis + 1),
                format!("must be >= 1, got {d}"),
            ));
        }
        *e = d as usize;
    }
    for (i, &d) in dim.iter().enumerate().take(dim0 + 1).skip(4) {
        if d > 1 {
            return Err(Error::UnsupportedFormat(format!(
                "dim[{i}] = {d}; only single 3-D volumes are supported"
            )));
        }
    }
    let dims = Dims::new(extent[0], extent[1], extent[2]);

    let datatype = NiftiDatatype::from_code(r.i16(OFF_DATATYPE))?;
    let vox_offset = r.f32(OFF_VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::parse("vox_offset", format!("invalid offset {vox_offset}")));
    }
    let vox_offset = vox_offset as usize;

    let mut slope = r.f32(OFF_SCL_SLOPE) as f64;
    let mut inter = r.f32(OFF_SCL_INTER) as f64;
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    if !inter.is_finite() {
        inter = 0.0;
    }

    let n = dims.voxel_count();
    let needed = vox_offset + n * datatype.size();
    if bytes.len() < needed {
        return Err(Error::parse(
            "voxel data",
            format!(
                "truncated: {} bytes, need {needed} for {dims} {datatype:?}",
                bytes.len()
            ),
        ));
    }
    let voxels = (0..n)
        .map(|i| (r.voxel(datatype, vox_offset + i * datatype.size()) * slope + inter) as f32)
        .collect();
    Volume::new(dims, voxels, modality)
}

/// Encodes raw (unscaled) voxel values into a single-file NIfTI-1 image.
///
/// Values are cast to `datatype` with `as` semantics; callers pass values
/// representable in the target type.
pub fn encode_nifti(
    dims: Dims,
    raw: &[f64],
    datatype: NiftiDatatype,
    endian: Endian,
    scl_slope: f32,
    scl_inter: f32,
) -> Result<Vec<u8>> {
    dims.validate()?;
    if raw.len() != dims.voxel_count() {
        return Err(Error::shape("nifti payload", dims.voxel_count(), raw.len()));
    }
    let mut out = vec![0u8; DEFAULT_VOX_OFFSET + raw.len() * datatype.size()];
    let mut put = |off: usize, le: &[u8], be: &[u8]| {
        let src = match endian {
            Endian::Little => le,
            Endian::Big => be,
        };
        out[off..off + src.len()].copy_from_slice(src);
    };
    macro_rules! put_num {
        ($off:expr, $v:expr) => {{
            let v = $v;
            put($off, &v.to_le_bytes(), &v.to_be_bytes())
        }};
    }

    put_num!(OFF_SIZEOF_HDR, 348i32);
    let dim: [i16; 8] = [3, dims.nx as i16, dims.ny as i16, dims.nz as i16, 1, 1, 1, 1];
    for (i, d) in dim.into_iter().enumerate() {
        put_num!(OFF_DIM + 2 * i, d);
    }
    put_num!(OFF_DATATYPE, datatype.code());
    put_num!(OFF_BITPIX, (datatype.size() * 8) as i16);
    for i in 0..8 {
        put_num!(OFF_PIXDIM + 4 * i, 1.0f32);
    }
    put_num!(OFF_VOX_OFFSET, DEFAULT_VOX_OFFSET as f32);
    put_num!(OFF_SCL_SLOPE, scl_slope);
    put_num!(OFF_SCL_INTER, scl_inter);
    put(OFF_MAGIC, MAGIC_SINGLE_FILE, MAGIC_SINGLE_FILE);

    for (i, &v) in raw.iter().enumerate() {
        let off = DEFAULT_VOX_OFFSET + i * datatype.size();
        match datatype {
            NiftiDatatype::Uint8 => put(off, &[v as u8], &[v as u8]),
            NiftiDatatype::Int16 => put_num!(off, v as i16),
            NiftiDatatype::Float32 => put_num!(off, v as f32),
            NiftiDatatype::Float64 => put_num!(off, v),
        }
    }
    Ok(out)
}

/// Writes a volume as little-endian float32 with identity scaling.
pub fn write_nifti(volume: &Volume) -> Vec<u8> {
    let raw: Vec<f64> = volume.voxels.iter().map(|&v| v as f64).collect();
    encode_nifti(volume.dims, &raw, NiftiDatatype::Float32, Endian::Little, 1.0, 0.0)
        .expect("volume dimensions are validated on construction")
}
