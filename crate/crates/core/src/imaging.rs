//! Haar wavelets, patch grids, PGM I/O and compressed-domain image retrieval.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::construct::Measurement;
use crate::error::{Error, Result};
use crate::recovery::substream;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Grayscale image with real-valued pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::ShapeError(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Image { height, width, pixels })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image { height, width, pixels: vec![0.0; height * width] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }

    /// Binary (P5) PGM, pixels rounded and clamped to 0..=255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pgm())?;
        Ok(())
    }

    /// Parses 8-bit P2 (ASCII) or P5 (binary) PGM.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut header = Vec::new();
        // magic, width, height, maxval; '#' starts a comment running to end of line.
        while header.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::ParseError { line: 1, msg: "truncated PGM header".into() });
            }
            header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::ParseError { line: 1, msg: format!("bad PGM header field {s:?}: {e}") })
        };
        let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(Error::ParseError { line: 1, msg: format!("only 8-bit PGM is supported (maxval {maxval})") });
        }
        let count = width * height;
        let pixels: Vec<f64> = match header[0].as_str() {
            "P5" => {
                let data = &bytes[(pos + 1).min(bytes.len())..];
                if data.len() < count {
                    return Err(Error::ParseError { line: 1, msg: "truncated PGM raster".into() });
                }
                data[..count].iter().map(|&b| b as f64).collect()
            }
            "P2" => {
                let text = String::from_utf8_lossy(&bytes[pos..]);
                let vals: Vec<f64> = text
                    .split_whitespace()
                    .take(count)
                    .map(|t| t.parse::<u32>().map(f64::from))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::ParseError { line: 1, msg: format!("bad PGM sample: {e}") })?;
                if vals.len() < count {
                    return Err(Error::ParseError { line: 1, msg: "truncated PGM raster".into() });
                }
                vals
            }
            other => return Err(Error::ParseError { line: 1, msg: format!("unsupported PGM magic {other:?}") }),
        };
        Image::new(height, width, pixels)
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        Image::from_pgm(&fs::read(path)?)
    }
}

fn check_patch_size(p: usize) -> Result<u32> {
    if p == 0 || !p.is_power_of_two() {
        return Err(Error::PatchSizeError(p));
    }
    Ok(p.trailing_zeros())
}

fn check_haar_args(len: usize, p: usize, levels: u32) -> Result<()> {
    let depth = check_patch_size(p)?;
    if levels > depth {
        return Err(Error::InvalidInput(format!("{levels} Haar levels exceed the depth {depth} of a {p}x{p} patch")));
    }
    if len != p * p {
        return Err(Error::ShapeError(format!("patch has {len} values, expected {}", p * p)));
    }
    Ok(())
}

/// Full depth for a P x P patch.
pub fn max_levels(p: usize) -> Result<u32> {
    check_patch_size(p)
}

/// Orthonormal 2-D Haar analysis of a row-major P x P patch (standard
/// pyramid: each level splits rows then columns of the current approximation).
pub fn haar_forward(patch: &[f64], p: usize, levels: u32) -> Result<Vec<f64>> {
    check_haar_args(patch.len(), p, levels)?;
    let mut out = patch.to_vec();
    let mut tmp = vec![0.0; p];
    for level in 0..levels {
        let s = p >> level;
        let h = s / 2;
        for i in 0..s {
            for j in 0..h {
                let (a, b) = (out[i * p + 2 * j], out[i * p + 2 * j + 1]);
                tmp[j] = (a + b) * FRAC_1_SQRT_2;
                tmp[h + j] = (a - b) * FRAC_1_SQRT_2;
            }
            out[i * p..i * p + s].copy_from_slice(&tmp[..s]);
        }
        for j in 0..s {
            for i in 0..h {
                let (a, b) = (out[2 * i * p + j], out[(2 * i + 1) * p + j]);
                tmp[i] = (a + b) * FRAC_1_SQRT_2;
                tmp[h + i] = (a - b) * FRAC_1_SQRT_2;
            }
            for i in 0..s {
                out[i * p + j] = tmp[i];
            }
        }
    }
    Ok(out)
}

pub fn haar_inverse(coeffs: &[f64], p: usize, levels: u32) -> Result<Vec<f64>> {
    check_haar_args(coeffs.len(), p, levels)?;
    let mut out = coeffs.to_vec();
    let mut tmp = vec![0.0; p];
    for level in (0..levels).rev() {
        let s = p >> level;
        let h = s / 2;
        for j in 0..s {
            for i in 0..h {
                let (a, d) = (out[i * p + j], out[(h + i) * p + j]);
                tmp[2 * i] = (a + d) * FRAC_1_SQRT_2;
                tmp[2 * i + 1] = (a - d) * FRAC_1_SQRT_2;
            }
            for i in 0..s {
                out[i * p + j] = tmp[i];
            }
        }
        for i in 0..s {
            for j in 0..h {
                let (a, d) = (out[i * p + j], out[i * p + h + j]);
                tmp[2 * j] = (a + d) * FRAC_1_SQRT_2;
                tmp[2 * j + 1] = (a - d) * FRAC_1_SQRT_2;
            }
            out[i * p..i * p + s].copy_from_slice(&tmp[..s]);
        }
    }
    Ok(out)
}

/// Row-major tiling of an image into P x P patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
    pub patch: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch: usize) -> Result<Self> {
        check_patch_size(patch)?;
        if height % patch != 0 || width % patch != 0 || height == 0 || width == 0 {
            return Err(Error::PatchGridError { height, width, patch });
        }
        Ok(PatchGrid { height, width, patch })
    }

    pub fn patches_per_row(&self) -> usize {
        self.width / self.patch
    }

    pub fn count(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }
}

/// Splits an image into row-major P x P patches, each vectorized row-major.
pub fn patchify(image: &Image, patch: usize) -> Result<(PatchGrid, Vec<Vec<f64>>)> {
    let grid = PatchGrid::new(image.height, image.width, patch)?;
    let per_row = grid.patches_per_row();
    let patches = (0..grid.count())
        .map(|idx| {
            let (pr, pc) = (idx / per_row * patch, idx % per_row * patch);
            let mut v = Vec::with_capacity(patch * patch);
            for r in 0..patch {
                let start = (pr + r) * image.width + pc;
                v.extend_from_slice(&image.pixels[start..start + patch]);
            }
            v
        })
        .collect();
    Ok((grid, patches))
}

pub fn unpatchify(grid: &PatchGrid, patches: &[Vec<f64>]) -> Result<Image> {
    let p = grid.patch;
    if patches.len() != grid.count() || patches.iter().any(|v| v.len() != p * p) {
        return Err(Error::ShapeError("patch list does not match the grid".into()));
    }
    let mut image = Image::zeros(grid.height, grid.width);
    let per_row = grid.patches_per_row();
    for (idx, v) in patches.iter().enumerate() {
        let (pr, pc) = (idx / per_row * p, idx % per_row * p);
        for r in 0..p {
            let start = (pr + r) * grid.width + pc;
            image.pixels[start..start + p].copy_from_slice(&v[r * p..(r + 1) * p]);
        }
    }
    Ok(image)
}

/// Concatenation of `T · haar(patch)` over all patches in grid order.
pub fn extract_features<T: Measurement + ?Sized>(image: &Image, matrix: &T, patch: usize, levels: u32) -> Result<Vec<f64>> {
    let (rows, cols) = matrix.shape();
    if cols != patch * patch {
        return Err(Error::ShapeError(format!(
            "matrix has {cols} columns but a {patch}x{patch} patch has {}",
            patch * patch
        )));
    }
    let (_, patches) = patchify(image, patch)?;
    let mut feature = Vec::with_capacity(patches.len() * rows);
    for p in &patches {
        feature.extend(matrix.measure(&haar_forward(p, patch, levels)?));
    }
    Ok(feature)
}

/// Zero-lag normalized cross-correlation. `None` when either input has zero variance.
pub fn normalized_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        num += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(num / (va * vb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub id: String,
    pub label: String,
    pub path: String,
    pub feature: Vec<f64>,
}

/// Compressed-domain features of a labelled image collection.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDb {
    pub patch: usize,
    pub levels: u32,
    /// Text descriptor of the measurement matrix.
    pub matrix: String,
    pub entries: Vec<FeatureEntry>,
}

const DB_MAGIC: &[u8; 4] = b"ESFD";
const DB_VERSION: u32 = 1;

pub fn matrix_hash(descriptor: &str) -> [u8; 32] {
    Sha256::digest(descriptor.as_bytes()).into()
}

/// A labelled image to index.
pub struct LabelledImage {
    pub id: String,
    pub label: String,
    pub path: String,
    pub image: Image,
}

impl FeatureDb {
    pub fn build<T: Measurement + ?Sized>(
        matrix: &T,
        descriptor: &str,
        patch: usize,
        levels: u32,
        images: &[LabelledImage],
    ) -> Result<Self> {
        let entries = images
            .par_iter()
            .map(|li| {
                Ok(FeatureEntry {
                    id: li.id.clone(),
                    label: li.label.clone(),
                    path: li.path.clone(),
                    feature: extract_features(&li.image, matrix, patch, levels)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(len) = entries.first().map(|e| e.feature.len()) {
            if entries.iter().any(|e| e.feature.len() != len) {
                return Err(Error::ShapeError("images produce features of different lengths".into()));
            }
        }
        Ok(FeatureDb { patch, levels, matrix: descriptor.to_string(), entries })
    }

    pub fn feature_len(&self) -> usize {
        self.entries.first().map_or(0, |e| e.feature.len())
    }

    pub fn labels(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|e| (e.id.clone(), e.label.clone())).collect()
    }

    fn paths(prefix: &Path) -> (PathBuf, PathBuf) {
        let with = |ext: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        (with(".tsv"), with(".bin"))
    }

    /// Writes `<prefix>.tsv` (manifest) and `<prefix>.bin` (feature blocks).
    pub fn save(&self, prefix: &Path) -> Result<()> {
        let (manifest, blocks) = Self::paths(prefix);
        let mut tsv = format!(
            "#eulercs-features v{DB_VERSION} patch={} levels={} matrix={}\n",
            self.patch, self.levels, self.matrix
        );
        for e in &self.entries {
            tsv.push_str(&format!("{}\t{}\t{}\n", e.id, e.label, e.path));
        }
        fs::write(manifest, tsv)?;

        let mut bin = Vec::with_capacity(48 + self.entries.len() * self.feature_len() * 8);
        bin.extend_from_slice(DB_MAGIC);
        bin.extend_from_slice(&DB_VERSION.to_le_bytes());
        bin.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        bin.extend_from_slice(&(self.feature_len() as u64).to_le_bytes());
        bin.extend_from_slice(&matrix_hash(&self.matrix));
        for e in &self.entries {
            for v in &e.feature {
                bin.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::File::create(blocks)?.write_all(&bin)?;
        Ok(())
    }

    pub fn load(prefix: &Path) -> Result<Self> {
        let (manifest, blocks) = Self::paths(prefix);
        let tsv = fs::read_to_string(manifest)?;
        let mut lines = tsv.lines();
        let header = lines.next().ok_or(Error::ParseError { line: 1, msg: "empty manifest".into() })?;
        let rest = header
            .strip_prefix("#eulercs-features v1 ")
            .ok_or(Error::ParseError { line: 1, msg: "not a feature manifest".into() })?;
        let (fields, matrix) = rest
            .split_once(" matrix=")
            .ok_or(Error::ParseError { line: 1, msg: "manifest lacks matrix descriptor".into() })?;
        let mut patch = None;
        let mut levels = None;
        for kv in fields.split_whitespace() {
            match kv.split_once('=') {
                Some(("patch", v)) => patch = v.parse().ok(),
                Some(("levels", v)) => levels = v.parse().ok(),
                _ => {}
            }
        }
        let (Some(patch), Some(levels)) = (patch, levels) else {
            return Err(Error::ParseError { line: 1, msg: "manifest needs patch and levels".into() });
        };
        let mut meta = Vec::new();
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::ParseError { line: i + 2, msg: "expected id, class, path".into() });
            }
            meta.push((parts[0].to_string(), parts[1].to_string(), parts[2].to_string()));
        }

        let bin = fs::read(blocks)?;
        let bad = |msg: &str| Error::ParseError { line: 0, msg: format!("feature blocks: {msg}") };
        if bin.len() < 56 || &bin[..4] != DB_MAGIC {
            return Err(bad("bad magic"));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bin[o..o + 8].try_into().unwrap()) as usize;
        let version = u32::from_le_bytes(bin[4..8].try_into().unwrap());
        if version != DB_VERSION {
            return Err(bad("unsupported version"));
        }
        let (count, len) = (u64_at(8), u64_at(16));
        if bin[24..56] != matrix_hash(matrix) {
            return Err(bad("matrix hash does not match the manifest"));
        }
        if count != meta.len() || bin.len() != 56 + count * len * 8 {
            return Err(bad("size mismatch"));
        }
        let entries = meta
            .into_iter()
            .enumerate()
            .map(|(i, (id, label, path))| {
                let base = 56 + i * len * 8;
                let feature = (0..len)
                    .map(|t| f64::from_le_bytes(bin[base + 8 * t..base + 8 * t + 8].try_into().unwrap()))
                    .collect();
                FeatureEntry { id, label, path, feature }
            })
            .collect();
        Ok(FeatureDb { patch, levels, matrix: matrix.to_string(), entries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub label: String,
    pub similarity: f64,
    /// Zero-variance feature; similarity was set to 0.
    pub degenerate: bool,
}

/// Ranks database members by normalized correlation with `query`, best first;
/// equal similarities are ordered by id.
pub fn retrieve(query: &[f64], db: &FeatureDb, top_n: usize) -> Result<Vec<Hit>> {
    if db.entries.iter().any(|e| e.feature.len() != query.len()) {
        return Err(Error::ShapeError(format!("query feature length {} does not match the database", query.len())));
    }
    let mut hits: Vec<Hit> = db
        .entries
        .iter()
        .map(|e| {
            let sim = normalized_correlation(query, &e.feature);
            Hit {
                id: e.id.clone(),
                label: e.label.clone(),
                similarity: sim.unwrap_or(0.0),
                degenerate: sim.is_none(),
            }
        })
        .collect();
    hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.id.cmp(&b.id)));
    hits.truncate(top_n);
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub label: String,
    /// Relevant images retrieved.
    pub correct: usize,
    /// Irrelevant images retrieved.
    pub false_alarms: usize,
    /// Relevant images in the database.
    pub relevant: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub queries: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub top_n: usize,
    pub per_query: Vec<QueryScore>,
    pub per_class: BTreeMap<String, ClassScore>,
    /// Sorted class names indexing the confusion matrix.
    pub classes: Vec<String>,
    /// `confusion[q][r]`: retrieved images of class r for queries of class q.
    pub confusion: Vec<Vec<usize>>,
}

/// Scores ranked id lists against database labels. `queries` pairs each
/// query's class with the ids it retrieved; only the first `top_n` count.
pub fn score_retrieval(
    queries: &[(String, Vec<String>)],
    labels: &BTreeMap<String, String>,
    top_n: usize,
) -> Result<RetrievalMetrics> {
    let mut classes: Vec<String> = labels.values().cloned().collect();
    classes.extend(queries.iter().map(|(l, _)| l.clone()));
    classes.sort();
    classes.dedup();
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    let mut per_query = Vec::with_capacity(queries.len());

    for (label, ids) in queries {
        let relevant = labels.values().filter(|l| *l == label).count();
        let mut correct = 0;
        let retrieved = &ids[..ids.len().min(top_n)];
        for id in retrieved {
            let got = labels.get(id).ok_or_else(|| Error::LabelError(id.clone()))?;
            confusion[index[label.as_str()]][index[got.as_str()]] += 1;
            if got == label {
                correct += 1;
            }
        }
        let false_alarms = retrieved.len() - correct;
        per_query.push(QueryScore {
            label: label.clone(),
            correct,
            false_alarms,
            relevant,
            precision: if retrieved.is_empty() { 0.0 } else { correct as f64 / retrieved.len() as f64 },
            recall: if relevant == 0 { 0.0 } else { correct as f64 / relevant as f64 },
        });
    }

    let mut per_class: BTreeMap<String, ClassScore> = BTreeMap::new();
    for q in &per_query {
        let e = per_class.entry(q.label.clone()).or_insert(ClassScore { queries: 0, precision: 0.0, recall: 0.0 });
        e.queries += 1;
        e.precision += q.precision;
        e.recall += q.recall;
    }
    for s in per_class.values_mut() {
        s.precision /= s.queries as f64;
        s.recall /= s.queries as f64;
    }
    Ok(RetrievalMetrics { top_n, per_query, per_class, classes, confusion })
}

/// Image whose every patch has exactly `sparsity` nonzero Haar coefficients
/// (uniform positions, standard-normal values scaled by `amplitude`).
pub fn sparse_haar_image(
    height: usize,
    width: usize,
    patch: usize,
    levels: u32,
    sparsity: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Image> {
    let grid = PatchGrid::new(height, width, patch)?;
    let dim = patch * patch;
    if sparsity == 0 || sparsity > dim {
        return Err(Error::InvalidSparsity { k: sparsity, dim });
    }
    let patches = (0..grid.count())
        .map(|idx| {
            let mut rng = substream(seed, idx as u64);
            let mut coeffs = vec![0.0; dim];
            for i in rand::seq::index::sample(&mut rng, dim, sparsity) {
                coeffs[i] = amplitude * rng.sample::<f64, _>(StandardNormal);
            }
            haar_inverse(&coeffs, patch, levels)
        })
        .collect::<Result<Vec<_>>>()?;
    unpatchify(&grid, &patches)
}

/// Labelled synthetic corpus: each class is a distinct oriented sinusoidal
/// texture with its own brightness; instances add phase jitter and noise.
pub fn synthetic_corpus(classes: usize, per_class: usize, size: usize, seed: u64) -> Vec<LabelledImage> {
    let mut out = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let angle = std::f64::consts::PI * c as f64 / classes as f64;
        let freq = 2.0 + 1.5 * c as f64;
        let base = 60.0 + 120.0 * c as f64 / classes.max(1) as f64;
        for i in 0..per_class {
            let mut rng = substream(seed, (c * per_class + i) as u64);
            let phase: f64 = rng.random::<f64>() * 0.6;
            let pixels = (0..size * size)
                .map(|idx| {
                    let (r, col) = ((idx / size) as f64 / size as f64, (idx % size) as f64 / size as f64);
                    let t = r * angle.cos() + col * angle.sin();
                    let v = base
                        + 50.0 * (2.0 * std::f64::consts::PI * freq * t + phase).sin()
                        + 4.0 * rng.sample::<f64, _>(StandardNormal);
                    v.clamp(0.0, 255.0)
                })
                .collect();
            out.push(LabelledImage {
                id: format!("c{c}_{i:03}"),
                label: format!("class{c}"),
                path: String::new(),
                image: Image { height: size, width: size, pixels },
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::build_binary_matrix;
    use crate::euler::euler_square;

    fn ramp(p: usize) -> Vec<f64> {
        (0..p * p).map(|i| ((i * 37) % 11) as f64 - 3.5).collect()
    }

    #[test]
    fn constant_patch_has_one_coefficient() {
        let c = haar_forward(&vec![2.0; 64], 8, 3).unwrap();
        assert!((c[0] - 16.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn haar_round_trip_and_energy() {
        for (p, levels) in [(2, 1), (8, 3), (16, 2), (32, 5)] {
            let x = ramp(p);
            let c = haar_forward(&x, p, levels).unwrap();
            let back = haar_inverse(&c, p, levels).unwrap();
            assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() <= 1e-10));
            let e = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((e(&x) - e(&c)).abs() <= 1e-10);
        }
    }

    #[test]
    fn haar_argument_errors() {
        assert_eq!(haar_forward(&[0.0; 36], 6, 1), Err(Error::PatchSizeError(6)));
        assert!(matches!(haar_forward(&[0.0; 16], 4, 3), Err(Error::InvalidInput(_))));
        assert!(matches!(haar_forward(&[0.0; 15], 4, 1), Err(Error::ShapeError(_))));
    }

    #[test]
    fn patch_grid() {
        let img = Image::new(256, 256, (0..256 * 256).map(|v| (v % 251) as f64).collect()).unwrap();
        let (grid, patches) = patchify(&img, 32).unwrap();
        assert_eq!(grid.count(), 64);
        assert_eq!(patches.len(), 64);
        assert_eq!(unpatchify(&grid, &patches).unwrap(), img);
        let bad = Image::zeros(250, 250);
        assert_eq!(patchify(&bad, 32).unwrap_err(), Error::PatchGridError { height: 250, width: 250, patch: 32 });
    }

    #[test]
    fn features_basic() {
        let t = build_binary_matrix(&euler_square(8, 4).unwrap()).unwrap();
        let zero = Image::zeros(16, 16);
        let f = extract_features(&zero, &t, 8, 3).unwrap();
        assert_eq!(f.len(), 4 * 32);
        assert!(f.iter().all(|&v| v == 0.0));
        let img = sparse_haar_image(16, 16, 8, 3, 3, 10.0, 1).unwrap();
        assert_eq!(extract_features(&img, &t, 8, 3).unwrap(), extract_features(&img.clone(), &t, 8, 3).unwrap());
        assert!(matches!(extract_features(&img, &t, 4, 2), Err(Error::ShapeError(_))));
    }

    #[test]
    fn correlation_ranking_by_hand() {
        // q = (1,2,3): mean 2, deviations (-1,0,1).
        // a = (2,4,6): deviations (-2,0,2) -> correlation 1.
        // b = (3,1,2): deviations (1,-1,0) -> (-1)/(√2·√2) = -0.5.
        // c = (1,3,2): deviations (-1,1,0) -> 1/(√2·√2) = 0.5.
        let db = FeatureDb {
            patch: 1,
            levels: 0,
            matrix: "toy".into(),
            entries: [("a", vec![2.0, 4.0, 6.0]), ("b", vec![3.0, 1.0, 2.0]), ("c", vec![1.0, 3.0, 2.0])]
                .into_iter()
                .map(|(id, feature)| FeatureEntry { id: id.into(), label: "x".into(), path: String::new(), feature })
                .collect(),
        };
        let hits = retrieve(&[1.0, 2.0, 3.0], &db, 3).unwrap();
        let got: Vec<(&str, f64)> = hits.iter().map(|h| (h.id.as_str(), h.similarity)).collect();
        assert_eq!(got.iter().map(|g| g.0).collect::<Vec<_>>(), vec!["a", "c", "b"]);
        assert!((got[0].1 - 1.0).abs() < 1e-15);
        assert!((got[1].1 - 0.5).abs() < 1e-15);
        assert!((got[2].1 + 0.5).abs() < 1e-15);

        let negated = retrieve(&[-2.0, -4.0, -6.0], &db, 3).unwrap();
        assert_eq!(negated.last().unwrap().id, "a");
        assert!((negated.last().unwrap().similarity + 1.0).abs() < 1e-15);

        let flat = retrieve(&[5.0, 5.0, 5.0], &db, 3).unwrap();
        assert!(flat.iter().all(|h| h.degenerate && h.similarity == 0.0));
        assert_eq!(flat[0].id, "a");
    }

    #[test]
    fn precision_recall_examples() {
        let mut labels = BTreeMap::new();
        for i in 0..20 {
            labels.insert(format!("a{i}"), "A".to_string());
            labels.insert(format!("b{i}"), "B".to_string());
        }
        let all_a: Vec<String> = (0..10).map(|i| format!("a{i}")).collect();
        let all_b: Vec<String> = (0..10).map(|i| format!("b{i}")).collect();
        let m = score_retrieval(&[("A".into(), all_a), ("A".into(), all_b)], &labels, 10).unwrap();
        assert_eq!((m.per_query[0].precision, m.per_query[0].recall), (1.0, 0.5));
        assert_eq!((m.per_query[1].precision, m.per_query[1].recall), (0.0, 0.0));
        assert_eq!(m.confusion, vec![vec![10, 10], vec![0, 0]]);
        assert_eq!(m.per_class["A"].precision, 0.5);
        assert_eq!(
            score_retrieval(&[("A".into(), vec!["zz".into()])], &labels, 10),
            Err(Error::LabelError("zz".into()))
        );
    }

    #[test]
    fn pgm_round_trip() {
        let img = Image::new(2, 3, vec![0.0, 10.0, 20.0, 255.0, 128.0, 7.0]).unwrap();
        assert_eq!(Image::from_pgm(&img.to_pgm()).unwrap(), img);
        let ascii = b"P2\n# comment\n3 2\n255\n0 10 20\n255 128 7\n";
        assert_eq!(Image::from_pgm(ascii).unwrap(), img);
        assert!(Image::from_pgm(b"P6\n1 1\n255\n\0\0\0").is_err());
    }

    #[test]
    fn feature_db_persistence() {
        let t = build_binary_matrix(&euler_square(8, 4).unwrap()).unwrap();
        let corpus = synthetic_corpus(2, 3, 16, 5);
        let db = FeatureDb::build(&t, "euler n=8 k=4", 8, 3, &corpus).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("db");
        db.save(&prefix).unwrap();
        assert_eq!(FeatureDb::load(&prefix).unwrap(), db);

        let tsv = prefix.with_extension("tsv");
        let text = fs::read_to_string(&tsv).unwrap().replace("matrix=euler n=8 k=4", "matrix=euler n=8 k=3");
        fs::write(&tsv, text).unwrap();
        assert!(matches!(FeatureDb::load(&prefix), Err(Error::ParseError { .. })));
    }
}
