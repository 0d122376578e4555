use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// MRI-derived input channel. The ordinal order fixes feature concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Adc,
    Cbf,
    Cbv,
    Dwi,
    Tmax,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Adc,
        Modality::Cbf,
        Modality::Cbv,
        Modality::Dwi,
        Modality::Tmax,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Adc => "ADC",
            Modality::Cbf => "CBF",
            Modality::Cbv => "CBV",
            Modality::Dwi => "DWI",
            Modality::Tmax => "Tmax",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown modality `{s}`")))
    }
}

/// Volume extent `(nx, ny, nz)`; `nz` counts axial slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::Usage(format!("degenerate volume dimensions {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// A 3-D scalar volume stored x-fastest (`x + nx * (y + ny * z)`), as in NIfTI.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: Dims,
    pub voxels: Vec<f32>,
    pub modality: Modality,
}

impl Volume {
    pub fn new(dims: Dims, voxels: Vec<f32>, modality: Modality) -> Result<Self> {
        dims.validate()?;
        if voxels.len() != dims.voxel_count() {
            return Err(Error::shape(
                format!("{modality} volume"),
                format!("{} voxels ({dims})", dims.voxel_count()),
                format!("{} voxels", voxels.len()),
            ));
        }
        Ok(Self { dims, voxels, modality })
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.nx * (y + self.dims.ny * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.index(x, y, z)]
    }

    /// Axial slice `z`, flattened x-fastest.
    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.dims.slice_len();
        &self.voxels[z * n..(z + 1) * n]
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f32]> {
        self.voxels.chunks_exact(self.dims.slice_len())
    }
}

/// Per-volume min-max scaling to `[0, 1]`; a constant volume maps to zeros.
pub fn normalize_volume(v: &Volume) -> Result<Volume> {
    if let Some(i) = v.voxels.iter().position(|x| !x.is_finite()) {
        return Err(Error::Data(format!(
            "{} volume has non-finite voxel {} at index {i}",
            v.modality, v.voxels[i]
        )));
    }
    let (lo, hi) = v
        .voxels
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let range = hi as f64 - lo as f64;
    let voxels = if range > 0.0 {
        v.voxels
            .iter()
            .map(|&x| ((x as f64 - lo as f64) / range) as f32)
            .collect()
    } else {
        vec![0.0; v.voxels.len()]
    };
    Ok(Volume {
        dims: v.dims,
        voxels,
        modality: v.modality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vol(values: Vec<f32>) -> Volume {
        let n = values.len();
        Volume::new(Dims::new(n, 1, 1), values, Modality::Adc).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_volume(&vol(vec![0.0, 5.0, 10.0])).unwrap().voxels,
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(normalize_volume(&vol(vec![3.0; 4])).unwrap().voxels, vec![0.0; 4]);
        let unit = vec![0.0, 0.25, 1.0, 0.75];
        assert_eq!(normalize_volume(&vol(unit.clone())).unwrap().voxels, unit);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(matches!(
            normalize_volume(&vol(vec![0.0, f32::NAN])),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn modality_order_and_names() {
        let names: Vec<_> = Modality::ALL.iter().map(|m| m.name()).collect();
        assert_eq!(names, ["ADC", "CBF", "CBV", "DWI", "Tmax"]);
        assert_eq!("tmax".parse::<Modality>().unwrap(), Modality::Tmax);
        assert!(Modality::Adc < Modality::Tmax);
    }

    #[test]
    fn slices_are_contiguous_planes() {
        let dims = Dims::new(2, 2, 3);
        let v = Volume::new(dims, (0..12).map(|i| i as f32).collect(), Modality::Dwi).unwrap();
        assert_eq!(v.slice(1), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(v.get(1, 0, 2), 9.0);
        assert_eq!(v.slices().count(), 3);
    }

    proptest! {
        #[test]
        fn normalized_range_is_exactly_unit(values in prop::collection::vec(-1e3f32..1e3, 2..64)) {
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let out = normalize_volume(&vol(values.clone())).unwrap();
            let lo = out.voxels.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = out.voxels.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            prop_assert_eq!(lo, 0.0);
            prop_assert_eq!(hi, 1.0);
        }
    }
}
