//! Volume ingestion, preprocessing, outcome labels and the synthetic cohort
//! generator.

mod cohort;
mod manifest;
pub mod nifti;
mod synth;
mod volume;

pub use cohort::{binarize_mrs, Cohort, PatientRecord, Provenance};
pub use manifest::{load_manifest_cohort, parse_manifest, write_manifest, ManifestEntry};
pub use nifti::{encode_nifti, parse_nifti, write_nifti, Endian, NiftiDatatype};
pub use synth::{generate_synthetic_cohort, SynthSpec, LESION_CLASS_BOOST, MODALITY_PROFILES};
pub use volume::{normalize_volume, Dims, Modality, Volume};
