//! Synthetic multimodal cohort.
//!
//! Each patient gets five volumes built from the same geometry: an
//! ellipsoidal brain mask filled with a per-modality tissue level plus smooth
//! low-frequency noise, and one ellipsoidal lesion. All positions are in
//! normalized coordinates `u = (i + 0.5) / n` per axis, so the lesion is a
//! sphere in field-of-view units.
//!
//! * lesion radius: `0.05 + 0.20 * mrs / 6` (5% to 25% of the field of view)
//! * lesion strength: `0.25 + 0.05 * mrs + LESION_CLASS_BOOST * label`,
//!   multiplied by the modality's signed contrast weight
//!
//! Before normalization the mean lesion shift of a poor-outcome patient
//! exceeds that of any good-outcome patient by at least
//! `(0.05 + LESION_CLASS_BOOST) * |weight|` for every modality, which gives
//! downstream models a learnable class signal.

use super::{normalize_volume, Cohort, Dims, Modality, PatientRecord, Provenance, Volume};
use crate::nn::Rng;
use crate::{Error, Result};

/// Extra lesion strength added for poor-outcome patients.
pub const LESION_CLASS_BOOST: f64 = 0.25;

/// `(tissue level, signed lesion contrast weight)` per modality, in
/// [`Modality::ALL`] order. Diffusion restriction lowers ADC, hypoperfusion
/// lowers CBF/CBV, while DWI and Tmax brighten.
pub const MODALITY_PROFILES: [(f64, f64); 5] = [(0.55, -0.8), (0.50, -0.9), (0.45, -0.7), (0.35, 1.0), (0.30, 0.9)];

const NOISE_TERMS: usize = 4;
const NOISE_AMPLITUDE: f64 = 0.04;
const BRAIN_RADII: [f64; 3] = [0.45, 0.45, 0.55];
const CENTER_JITTER: [f64; 3] = [0.12, 0.12, 0.15];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub dims: Dims,
    pub seed: u64,
    pub poor_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 119,
            dims: Dims::new(32, 32, 12),
            seed: 0,
            poor_fraction: 0.34,
        }
    }
}

impl SynthSpec {
    /// `round(n * poor_fraction)`, kept within `1..=n-1`.
    pub fn poor_count(&self) -> usize {
        let raw = (self.n as f64 * self.poor_fraction).round() as usize;
        raw.clamp(1, self.n - 1)
    }
}

struct NoiseField {
    terms: Vec<([f64; 3], f64)>,
}

impl NoiseField {
    fn new(rng: &mut Rng) -> Self {
        let terms = (0..NOISE_TERMS)
            .map(|_| {
                let freq = [0, 1, 2].map(|_| rng.uniform_in(0.5, 2.0) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 });
                (freq, rng.uniform_in(0.0, std::f64::consts::TAU))
            })
            .collect();
        Self { terms }
    }

    fn at(&self, u: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(f, phase)| {
                let arg = std::f64::consts::TAU * (f[0] * u[0] + f[1] * u[1] + f[2] * u[2]) + phase;
                NOISE_AMPLITUDE * arg.cos()
            })
            .sum()
    }
}

fn inside(u: [f64; 3], center: [f64; 3], radii: [f64; 3]) -> bool {
    (0..3).map(|a| ((u[a] - center[a]) / radii[a]).powi(2)).sum::<f64>() <= 1.0
}

fn render_patient(id: String, dims: Dims, mrs: u8, label: u8, rng: &mut Rng) -> Result<PatientRecord> {
    let center = [0, 1, 2].map(|a| 0.5 + rng.uniform_in(-CENTER_JITTER[a], CENTER_JITTER[a]));
    let radius = 0.05 + 0.20 * mrs as f64 / 6.0;
    let strength = 0.25 + 0.05 * mrs as f64 + LESION_CLASS_BOOST * label as f64;

    let mut volumes = Vec::with_capacity(5);
    for (m, &(tissue, weight)) in Modality::ALL.into_iter().zip(&MODALITY_PROFILES) {
        let noise = NoiseField::new(rng);
        let mut voxels = Vec::with_capacity(dims.voxel_count());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    let u = [
                        (x as f64 + 0.5) / dims.nx as f64,
                        (y as f64 + 0.5) / dims.ny as f64,
                        (z as f64 + 0.5) / dims.nz as f64,
                    ];
                    let value = if inside(u, [0.5; 3], BRAIN_RADII) {
                        let mut v = tissue + noise.at(u);
                        if inside(u, center, [radius; 3]) {
                            v += weight * strength;
                        }
                        v.max(0.0)
                    } else {
                        0.0
                    };
                    voxels.push(value as f32);
                }
            }
        }
        volumes.push(normalize_volume(&Volume::new(dims, voxels, m)?)?);
    }
    let volumes: [Volume; 5] = volumes.try_into().expect("five modalities");
    PatientRecord::new(id, volumes, mrs)
}

/// Deterministic synthetic cohort with `round(n * poor_fraction)` poor outcomes.
pub fn generate_synthetic_cohort(spec: &SynthSpec) -> Result<Cohort> {
    if spec.n < 2 {
        return Err(Error::Usage(format!("synthetic cohort needs n >= 2, got {}", spec.n)));
    }
    if !(spec.poor_fraction > 0.0 && spec.poor_fraction < 1.0) {
        return Err(Error::Usage(format!(
            "poor_fraction must lie in (0, 1), got {}",
            spec.poor_fraction
        )));
    }
    spec.dims.validate()?;

    let n_poor = spec.poor_count();
    let mut labels: Vec<u8> = (0..spec.n).map(|i| u8::from(i < n_poor)).collect();
    Rng::derive(spec.seed, 0).shuffle(&mut labels);

    let patients = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut rng = Rng::derive(spec.seed, i as u64 + 1);
            let mrs = if label == 1 { 3 + rng.below(4) } else { rng.below(3) } as u8;
            render_patient(format!("syn{:03}", i + 1), spec.dims, mrs, label, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Cohort::new(patients, Provenance::Synthetic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, seed: u64) -> SynthSpec {
        SynthSpec {
            n,
            dims: Dims::new(16, 16, 4),
            seed,
            poor_fraction: 0.34,
        }
    }

    #[test]
    fn class_counts_follow_rounding_rule() {
        let s = SynthSpec { n: 119, ..spec(119, 0) };
        assert_eq!(s.poor_count(), 40);
        let c = generate_synthetic_cohort(&spec(2, 1)).unwrap();
        assert_eq!(c.poor_count(), 1);
        let c = generate_synthetic_cohort(&spec(10, 3)).unwrap();
        assert_eq!(c.poor_count(), 3);
        for p in &c.patients {
            assert_eq!(p.label, u8::from(p.mrs >= 3));
            for v in &p.volumes {
                assert!(v.voxels.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            generate_synthetic_cohort(&spec(6, 9)).unwrap(),
            generate_synthetic_cohort(&spec(6, 9)).unwrap()
        );
        assert_ne!(
            generate_synthetic_cohort(&spec(6, 9)).unwrap(),
            generate_synthetic_cohort(&spec(6, 10)).unwrap()
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_synthetic_cohort(&spec(1, 0)).is_err());
        let mut s = spec(4, 0);
        s.dims = Dims::new(0, 4, 4);
        assert!(matches!(generate_synthetic_cohort(&s), Err(Error::Usage(_))));
        s = spec(4, 0);
        s.poor_fraction = 1.0;
        assert!(generate_synthetic_cohort(&s).is_err());
    }

    #[test]
    fn full_cohort_class_rate() {
        let s = SynthSpec {
            n: 119,
            dims: Dims::new(8, 8, 2),
            seed: 5,
            poor_fraction: 0.34,
        };
        let c = generate_synthetic_cohort(&s).unwrap();
        assert_eq!(c.len(), 119);
        assert_eq!(c.poor_count(), 40);
    }

    #[test]
    fn lesion_signal_separates_classes() {
        // Dark ADC voxels: air is the same for every patient, so the
        // difference comes from the hypointense lesion.
        let s = SynthSpec {
            n: 30,
            dims: Dims::new(24, 24, 8),
            seed: 2,
            poor_fraction: 0.5,
        };
        let c = generate_synthetic_cohort(&s).unwrap();
        let mean_of = |label: u8| {
            let ps: Vec<_> = c.patients.iter().filter(|p| p.label == label).collect();
            ps.iter()
                .map(|p| {
                    let adc = &p.volume(Modality::Adc).voxels;
                    adc.iter().filter(|&&v| v < 0.2).count() as f64
                })
                .sum::<f64>()
                / ps.len() as f64
        };
        assert!(mean_of(1) > mean_of(0));
    }
}
