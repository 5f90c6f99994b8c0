//! `path,mode,pitch,vowel` CSV manifests.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledClip};

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    path: String,
    mode: String,
    #[serde(default)]
    pitch: Option<String>,
    #[serde(default)]
    vowel: Option<String>,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

pub fn parse_manifest(reader: impl Read) -> Result<Vec<LabeledClip>, DatasetError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut seen = HashSet::new();
    let mut clips = Vec::new();
    for (i, row) in csv.deserialize::<Row>().enumerate() {
        let row = row?;
        if row.path.is_empty() {
            return Err(DatasetError::MissingPath { row: i + 1 });
        }
        if !seen.insert(row.path.clone()) {
            return Err(DatasetError::DuplicatePath(row.path));
        }
        clips.push(LabeledClip {
            mode: row.mode.parse()?,
            id: row.path,
            pitch: non_empty(row.pitch),
            vowel: non_empty(row.vowel),
        });
    }
    Ok(clips)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<LabeledClip>, DatasetError> {
    parse_manifest(std::fs::File::open(path)?)
}

pub fn write_manifest(writer: impl Write, clips: &[LabeledClip]) -> Result<(), DatasetError> {
    let mut csv = csv::Writer::from_writer(writer);
    for clip in clips {
        csv.serialize(Row {
            path: clip.id.clone(),
            mode: clip.mode.name().to_string(),
            pitch: clip.pitch.clone(),
            vowel: clip.vowel.clone(),
        })?;
    }
    csv.flush()?;
    Ok(())
}
