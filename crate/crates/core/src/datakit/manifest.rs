use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use super::image::Image;
use super::synth::group_names;
use super::{Dataset, Sample, SplitTag};
use crate::error::{Error, Result};

pub const DEFAULT_MANIFEST_SIDE: usize = 128;
const FST_RANGE: std::ops::RangeInclusive<usize> = 1..=6;

/// One manifest line: `id,path,label,fst`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub path: String,
    pub label: String,
    pub fst: String,
}

/// Reads `classes.txt`: one class name per line, line order is the class index.
pub fn read_classes(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let names: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if names.is_empty() {
        return Err(Error::Ingest(format!("{} lists no classes", path.display())));
    }
    Ok(names)
}

fn classes_path(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("classes.txt")
}

/// Parses the manifest and its sidecar class list without decoding images.
pub fn read_manifest_rows(path: &Path) -> Result<(Vec<ManifestRow>, Vec<String>)> {
    if !path.exists() {
        return Err(Error::Ingest(format!("manifest {} not found", path.display())));
    }
    let classes = read_classes(&classes_path(path))?;
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "path", "label", "fst"] {
        return Err(Error::Ingest(format!(
            "{}: header must be id,path,label,fst",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Ingest(format!("malformed row {row}: {e}")))?;
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(Error::Ingest("no samples".into()));
    }
    Ok((rows, classes))
}

fn resolve_row(row_no: usize, row: &ManifestRow, classes: &[String]) -> Result<(usize, usize)> {
    let label = classes
        .iter()
        .position(|c| c == &row.label)
        .ok_or_else(|| {
            Error::Ingest(format!("unknown class '{}' at row {row_no}", row.label))
        })?;
    let fst: usize = row
        .fst
        .trim()
        .parse()
        .map_err(|_| Error::Ingest(format!("tone out of range [1,6] at row {row_no}")))?;
    if !FST_RANGE.contains(&fst) {
        return Err(Error::Ingest(format!("tone out of range [1,6] at row {row_no}")));
    }
    Ok((label, fst - 1))
}

pub fn load_manifest(path: &Path) -> Result<Dataset> {
    load_manifest_with(path, DEFAULT_MANIFEST_SIDE)
}

/// Loads a manifest, decoding every image and resizing it to `side x side`
/// with values scaled to [0,1]. Image paths are relative to the manifest.
pub fn load_manifest_with(path: &Path, side: usize) -> Result<Dataset> {
    let (rows, classes) = read_manifest_rows(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let row_no = i + 1;
        let (label, tone) = resolve_row(row_no, row, &classes)?;
        let image = decode(&base.join(&row.path), side)
            .map_err(|e| Error::Ingest(format!("undecodable image at row {row_no}: {e}")))?;
        samples.push(Sample {
            id: row.id.clone(),
            image,
            label,
            tone,
            mask: None,
        });
    }
    Dataset::new(samples, classes, group_names(6), SplitTag::Unsplit)
}

fn decode(path: &Path, side: usize) -> std::result::Result<Image, String> {
    let img = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let rgb = img.to_rgb32f();
    let resized = if rgb.width() as usize == side && rgb.height() as usize == side {
        rgb
    } else {
        image::imageops::resize(&rgb, side as u32, side as u32, FilterType::Triangle)
    };
    let plane = side * side;
    let mut data = vec![0.0f32; 3 * plane];
    for (x, y, px) in resized.enumerate_pixels() {
        let p = y as usize * side + x as usize;
        for c in 0..3 {
            data[c * plane + p] = px[c].clamp(0.0, 1.0);
        }
    }
    Image::new(side, side, data).map_err(|e| e.to_string())
}

/// Writes `manifest.csv`, `classes.txt` and 16-bit PNG images under `dir`.
pub fn export_manifest(d: &Dataset, dir: &Path) -> Result<PathBuf> {
    if d.n_groups() > 6 {
        return Err(Error::Config(format!(
            "manifest format holds at most 6 tone groups, dataset has {}",
            d.n_groups()
        )));
    }
    let img_dir = dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let classes = dir.join("classes.txt");
    fs::write(&classes, d.class_names().join("\n") + "\n").map_err(|e| Error::io(&classes, e))?;

    let manifest = dir.join("manifest.csv");
    let mut writer =
        csv::Writer::from_path(&manifest).map_err(|e| Error::Ingest(e.to_string()))?;
    for s in d.samples() {
        let rel = format!("images/{}.png", s.id);
        let (h, w) = (s.image.height(), s.image.width());
        let plane = h * w;
        let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            let p = y as usize * w + x as usize;
            let q = |c: usize| (s.image.data()[c * plane + p].clamp(0.0, 1.0) * 65535.0).round() as u16;
            Rgb([q(0), q(1), q(2)])
        });
        let target = dir.join(&rel);
        buf.save(&target)
            .map_err(|e| Error::Internal(format!("{}: {e}", target.display())))?;
        writer
            .serialize(ManifestRow {
                id: s.id.clone(),
                path: rel,
                label: d.class_names()[s.label].clone(),
                fst: (s.tone + 1).to_string(),
            })
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
