//! Speaker metadata table: `speaker_id,gender,accent` CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn as_str(&self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

impl std::str::FromStr for Gender {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "female" => Ok(Gender::Female),
            "male" => Ok(Gender::Male),
            other => Err(Error::Metadata {
                detail: format!("unknown gender `{other}` (expected female or male)"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerMetadata {
    pub speaker_id: String,
    pub gender: Gender,
    pub accent: String,
}

/// In-memory metadata table keyed by speaker id.
#[derive(Debug, Clone, Default)]
pub struct MetadataTable {
    by_speaker: BTreeMap<String, SpeakerMetadata>,
}

impl MetadataTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: SpeakerMetadata) -> Result<()> {
        if entry.speaker_id.is_empty() || entry.accent.is_empty() {
            return Err(Error::Metadata {
                detail: format!(
                    "speaker `{}`: speaker_id and accent must be nonempty",
                    entry.speaker_id
                ),
            });
        }
        if self.by_speaker.contains_key(&entry.speaker_id) {
            return Err(Error::Metadata {
                detail: format!("duplicate speaker_id `{}`", entry.speaker_id),
            });
        }
        self.by_speaker.insert(entry.speaker_id.clone(), entry);
        Ok(())
    }

    pub fn get(&self, speaker_id: &str) -> Option<&SpeakerMetadata> {
        self.by_speaker.get(speaker_id)
    }

    pub fn len(&self) -> usize {
        self.by_speaker.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_speaker.is_empty()
    }

    pub fn speakers(&self) -> impl Iterator<Item = &SpeakerMetadata> {
        self.by_speaker.values()
    }

    /// Parses the `speaker_id,gender,accent` CSV. Labels never contain commas,
    /// so plain splitting is sufficient.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Metadata {
            detail: format!("{}: empty metadata file", path.display()),
        })?;
        if header.trim() != "speaker_id,gender,accent" {
            return Err(Error::Metadata {
                detail: format!(
                    "{}: expected header `speaker_id,gender,accent`, got `{header}`",
                    path.display()
                ),
            });
        }
        let mut table = MetadataTable::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Metadata {
                    detail: format!(
                        "{}:{}: expected 3 fields, got {}",
                        path.display(),
                        lineno + 2,
                        fields.len()
                    ),
                });
            }
            table.insert(SpeakerMetadata {
                speaker_id: fields[0].trim().to_string(),
                gender: fields[1].trim().parse()?,
                accent: fields[2].trim().to_string(),
            })?;
        }
        Ok(table)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("speaker_id,gender,accent\n");
        for m in self.by_speaker.values() {
            out.push_str(&format!("{},{},{}\n", m.speaker_id, m.gender.as_str(), m.accent));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let mut table = MetadataTable::new();
        table
            .insert(SpeakerMetadata {
                speaker_id: "s01".into(),
                gender: Gender::Female,
                accent: "accent-00".into(),
            })
            .unwrap();
        table
            .insert(SpeakerMetadata {
                speaker_id: "s02".into(),
                gender: Gender::Male,
                accent: "accent-01".into(),
            })
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metadata.csv");
        table.write_csv(&p).unwrap();
        let back = MetadataTable::from_csv(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get("s01").unwrap().gender, Gender::Female);
        assert_eq!(back.get("s02").unwrap().accent, "accent-01");
    }

    #[test]
    fn duplicate_speaker_rejected() {
        let mut table = MetadataTable::new();
        let m = SpeakerMetadata {
            speaker_id: "s01".into(),
            gender: Gender::Male,
            accent: "a".into(),
        };
        table.insert(m.clone()).unwrap();
        assert!(table.insert(m).is_err());
    }

    #[test]
    fn empty_accent_rejected() {
        let mut table = MetadataTable::new();
        let err = table.insert(SpeakerMetadata {
            speaker_id: "s01".into(),
            gender: Gender::Male,
            accent: "".into(),
        });
        assert!(err.is_err());
    }
}
