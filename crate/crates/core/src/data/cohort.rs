use std::collections::HashSet;

use super::{Dims, Modality, Volume};
use crate::{Error, Result};

/// Good outcome (`0`) for mRS 0-2, poor outcome (`1`) for mRS 3-6.
pub fn binarize_mrs(mrs: u8) -> Result<u8> {
    match mrs {
        0..=2 => Ok(0),
        3..=6 => Ok(1),
        _ => Err(Error::Usage(format!("mRS must be in 0..=6, got {mrs}"))),
    }
}

/// Five co-registered modality volumes and the 3-month outcome of one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    /// Indexed by [`Modality::index`].
    pub volumes: [Volume; 5],
    pub mrs: u8,
    pub label: u8,
}

impl PatientRecord {
    pub fn new(id: impl Into<String>, volumes: [Volume; 5], mrs: u8) -> Result<Self> {
        let id = id.into();
        let label = binarize_mrs(mrs)?;
        let dims = volumes[0].dims;
        for (m, v) in Modality::ALL.iter().zip(&volumes) {
            if v.modality != *m {
                return Err(Error::Data(format!(
                    "patient {id}: volume in {m} position is tagged {}",
                    v.modality
                )));
            }
            if v.dims != dims {
                return Err(Error::Data(format!(
                    "patient {id}: {m} volume is {} but {} is {dims}",
                    v.dims,
                    Modality::Adc
                )));
            }
        }
        Ok(Self {
            id,
            volumes,
            mrs,
            label,
        })
    }

    pub fn dims(&self) -> Dims {
        self.volumes[0].dims
    }

    pub fn volume(&self, m: Modality) -> &Volume {
        &self.volumes[m.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Synthetic,
    Ingested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub patients: Vec<PatientRecord>,
    pub provenance: Provenance,
}

impl Cohort {
    pub fn new(patients: Vec<PatientRecord>, provenance: Provenance) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &patients {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Data(format!("duplicate patient id `{}`", p.id)));
            }
        }
        Ok(Self { patients, provenance })
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.patients.iter().map(|p| p.label).collect()
    }

    /// Number of poor-outcome patients.
    pub fn poor_count(&self) -> usize {
        self.patients.iter().filter(|p| p.label == 1).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let poor = self.poor_count();
        poor > 0 && poor < self.len()
    }

    pub fn get(&self, id: &str) -> Option<&PatientRecord> {
        self.patients.iter().find(|p| p.id == id)
    }
}
