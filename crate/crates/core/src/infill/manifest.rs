//! Corpus manifests: UTF-8, one tab-separated record per line with clip id,
//! WAV path (relative to the manifest), style, song id and phrase id.
//! Cyclic records append the source and reference clip ids.

use std::path::Path;

use crate::error::{Error, Result};
use crate::formats::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub wav_path: String,
    pub style: String,
    pub song_id: String,
    pub phrase_id: u32,
}

/// Provenance of a cyclic item: converted from `source` with the style of `reference`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclicRecord {
    pub clip: ClipRecord,
    pub source_clip: String,
    pub reference_clip: String,
}

fn check_field(f: &str) -> Result<()> {
    if f.is_empty() || f.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!("manifest field {f:?} is empty or contains tabs/newlines")));
    }
    Ok(())
}

fn clip_line(c: &ClipRecord) -> Result<String> {
    for f in [&c.clip_id, &c.wav_path, &c.style, &c.song_id] {
        check_field(f)?;
    }
    Ok(format!("{}\t{}\t{}\t{}\t{}", c.clip_id, c.wav_path, c.style, c.song_id, c.phrase_id))
}

pub fn write_manifest(path: &Path, records: &[ClipRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&clip_line(r)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_cyclic_manifest(path: &Path, records: &[CyclicRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        check_field(&r.source_clip)?;
        check_field(&r.reference_clip)?;
        out.push_str(&format!("{}\t{}\t{}\n", clip_line(&r.clip)?, r.source_clip, r.reference_clip));
    }
    write_atomic(path, out.as_bytes())
}

fn parse_lines(path: &Path, want: usize) -> Result<Vec<Vec<String>>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|_| Error::format(path, "manifest is not UTF-8"))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != want {
            return Err(Error::format(path, format!("line {}: expected {want} fields, got {}", n + 1, fields.len())));
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn clip_from(path: &Path, f: &[String]) -> Result<ClipRecord> {
    let phrase_id = f[4]
        .parse()
        .map_err(|_| Error::format(path, format!("bad phrase id {:?}", f[4])))?;
    Ok(ClipRecord {
        clip_id: f[0].clone(),
        wav_path: f[1].clone(),
        style: f[2].clone(),
        song_id: f[3].clone(),
        phrase_id,
    })
}

pub fn read_manifest(path: &Path) -> Result<Vec<ClipRecord>> {
    parse_lines(path, 5)?.iter().map(|f| clip_from(path, f)).collect()
}

pub fn read_cyclic_manifest(path: &Path) -> Result<Vec<CyclicRecord>> {
    parse_lines(path, 7)?
        .iter()
        .map(|f| {
            Ok(CyclicRecord {
                clip: clip_from(path, f)?,
                source_clip: f[5].clone(),
                reference_clip: f[6].clone(),
            })
        })
        .collect()
}
