//! Dataset manifests: image/mask pairs, split bookkeeping and lineage.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::png_dimensions;
use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidValue(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_index: Option<u32>,
}

impl ManifestEntry {
    pub fn new(id: impl Into<String>, image_path: PathBuf, mask_path: PathBuf) -> Self {
        ManifestEntry {
            id: id.into(),
            image_path,
            mask_path,
            split: None,
            parent_id: None,
            patch_index: None,
        }
    }

    pub fn with_parent(mut self, parent_id: impl Into<String>) -> Self {
        self.parent_id = Some(parent_id.into());
        self
    }

    pub fn with_patch(mut self, parent_id: impl Into<String>, index: u32) -> Self {
        self.parent_id = Some(parent_id.into());
        self.patch_index = Some(index);
        self
    }

    fn check(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidEntry(self.id.clone(), "empty id".into()));
        }
        if self.patch_index.is_some() && self.parent_id.is_none() {
            return Err(Error::InvalidEntry(
                self.id.clone(),
                "patch_index without parent_id".into(),
            ));
        }
        Ok(())
    }
}

/// One step of a dataset's derivation history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub op: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Transform {
    pub fn new(op: impl Into<String>) -> Self {
        Transform {
            op: op.into(),
            params: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        let value = serde_json::to_value(value).expect("transform parameters serialize");
        self.params.insert(key.to_owned(), value);
        self
    }

    pub fn warn(&mut self, warning: impl Into<String>) {
        self.warnings.push(warning.into());
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub unassigned: usize,
}

impl SplitCounts {
    /// Train/val/test sizes for `n` entries: train and test are the
    /// half-up rounded 60 % and 30 % shares, validation takes the rest.
    pub fn planned(n: usize) -> SplitCounts {
        let train = (6 * n + 5) / 10;
        let test = (3 * n + 5) / 10;
        SplitCounts {
            train,
            val: n - train - test,
            test,
            unassigned: 0,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test + self.unassigned
    }

    pub fn scaled(&self, factor: usize) -> SplitCounts {
        SplitCounts {
            train: self.train * factor,
            val: self.val * factor,
            test: self.test * factor,
            unassigned: self.unassigned * factor,
        }
    }

    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.train, self.val, self.test)
    }
}

/// An ordered, named collection of image/mask pairs at a single GSD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub gsd_cm: Rational,
    pub lineage: Vec<Transform>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn split_counts(&self) -> SplitCounts {
        let mut counts = SplitCounts::default();
        for e in &self.entries {
            match e.split {
                Some(Split::Train) => counts.train += 1,
                Some(Split::Val) => counts.val += 1,
                Some(Split::Test) => counts.test += 1,
                None => counts.unassigned += 1,
            }
        }
        counts
    }

    pub fn has_assigned_splits(&self) -> bool {
        self.entries.iter().all(|e| e.split.is_some())
    }

    pub fn require_assigned_splits(&self) -> Result<()> {
        if self.has_assigned_splits() {
            Ok(())
        } else {
            Err(Error::SplitsUnassigned(self.name.clone()))
        }
    }

    /// Checks the structural invariants that hold for every manifest.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            e.check()?;
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(())
    }

    /// Writes the manifest as pretty JSON; entry paths are stored relative
    /// to the manifest's directory.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = absolute_parent(path)?;
        let mut portable = self.clone();
        for e in &mut portable.entries {
            e.image_path = relative_to(&base, &e.image_path)?;
            e.mask_path = relative_to(&base, &e.mask_path)?;
        }
        let mut text = serde_json::to_string_pretty(&portable).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        write_text(path, &text)
    }

    /// Reads a manifest, resolving relative entry paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?;
        let base = absolute_parent(path)?;
        for e in &mut manifest.entries {
            if e.image_path.is_relative() {
                e.image_path = base.join(&e.image_path);
            }
            if e.mask_path.is_relative() {
                e.mask_path = base.join(&e.mask_path);
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Pairs every PNG in `image_dir` with the same-named PNG in `mask_dir`.
///
/// Only PNG headers are read. Entries are ordered by id.
pub fn build_manifest(
    name: &str,
    image_dir: &Path,
    mask_dir: &Path,
    gsd_cm: Rational,
) -> Result<DatasetManifest> {
    let mut images = list_pngs(image_dir)?;
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    images.sort();

    let mut reference: Option<(u32, u32)> = None;
    let mut entries = Vec::with_capacity(images.len());
    for image_path in images {
        let id = image_path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| {
                Error::InvalidEntry(
                    image_path.display().to_string(),
                    "non UTF-8 file name".into(),
                )
            })?
            .to_owned();
        let mask_path = mask_dir.join(format!("{id}.png"));
        if !mask_path.is_file() {
            return Err(Error::MissingMask(id));
        }
        let dims = png_dimensions(&image_path)?;
        let mask_dims = png_dimensions(&mask_path)?;
        if dims != mask_dims {
            return Err(Error::Geometry(format!(
                "{id}: image is {}x{} but mask is {}x{}",
                dims.0, dims.1, mask_dims.0, mask_dims.1
            )));
        }
        match reference {
            None => reference = Some(dims),
            Some(r) if r != dims => {
                return Err(Error::Geometry(format!(
                    "{id}: image is {}x{}, dataset images are {}x{}",
                    dims.0, dims.1, r.0, r.1
                )))
            }
            Some(_) => {}
        }
        entries.push(ManifestEntry::new(id, image_path, mask_path));
    }

    let source = Transform::new("source")
        .param("image_dir", image_dir.display().to_string())
        .param("mask_dir", mask_dir.display().to_string())
        .param("gsd_cm", gsd_cm);
    let manifest = DatasetManifest {
        name: name.to_owned(),
        gsd_cm,
        lineage: vec![source],
        entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Seeded train/val/test assignment.
///
/// The result depends only on the entry ids and the seed: ids are sorted,
/// shuffled with ChaCha8 seeded from `seed`, and the shuffled order is cut
/// into [`SplitCounts::planned`] train, val and test runs.
pub fn assign_splits(mut manifest: DatasetManifest, seed: u64) -> Result<DatasetManifest> {
    let n = manifest.entries.len();
    if n < 3 {
        return Err(Error::TooFewEntries(n));
    }
    if manifest.entries.iter().any(|e| e.split.is_some()) {
        return Err(Error::SplitsAlreadyAssigned(manifest.name.clone()));
    }
    manifest.validate()?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| manifest.entries[a].id.cmp(&manifest.entries[b].id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let counts = SplitCounts::planned(n);
    for (rank, &idx) in order.iter().enumerate() {
        let split = if rank < counts.train {
            Split::Train
        } else if rank < counts.train + counts.val {
            Split::Val
        } else {
            Split::Test
        };
        manifest.entries[idx].split = Some(split);
    }
    manifest
        .lineage
        .push(Transform::new("assign_splits").param("seed", seed));
    Ok(manifest)
}

/// Builds a child manifest from `parent`.
///
/// An entry with a `parent_id` must name an existing parent entry; an entry
/// without one is a one-to-one derivation and must reuse a parent id. Either
/// way the entry takes its parent's split, and a conflicting split is an error.
pub fn derive_manifest(
    parent: &DatasetManifest,
    name: &str,
    gsd_cm: Rational,
    transform: Transform,
    entries: Vec<ManifestEntry>,
) -> Result<DatasetManifest> {
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parents: HashMap<&str, Option<Split>> = parent
        .entries
        .iter()
        .map(|e| (e.id.as_str(), e.split))
        .collect();

    let mut out = Vec::with_capacity(entries.len());
    for mut e in entries {
        let key = e.parent_id.as_deref().unwrap_or(&e.id);
        let inherited = *parents
            .get(key)
            .ok_or_else(|| Error::UnknownParent(e.id.clone()))?;
        match (e.split, inherited) {
            (Some(found), Some(expected)) if found != expected => {
                return Err(Error::SplitLeak {
                    id: e.id,
                    expected: expected.to_string(),
                    found: found.to_string(),
                })
            }
            (Some(_), None) => {
                return Err(Error::InvalidEntry(
                    e.id,
                    "split set while parent is unassigned".into(),
                ))
            }
            _ => e.split = inherited,
        }
        out.push(e);
    }

    let mut lineage = parent.lineage.clone();
    lineage.push(transform);
    let manifest = DatasetManifest {
        name: name.to_owned(),
        gsd_cm,
        lineage,
        entries: out,
    };
    manifest.validate()?;
    Ok(manifest)
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let read = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for item in read {
        let item = item.map_err(|e| Error::io(dir, e))?;
        let path = item.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            out.push(path);
        }
    }
    Ok(out)
}

/// Pretty JSON with a trailing newline, creating parent directories.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn absolute_parent(path: &Path) -> Result<PathBuf> {
    let abs = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
    Ok(abs.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

/// Lexical relative path from directory `base` to `target`.
pub(crate) fn relative_to(base: &Path, target: &Path) -> Result<PathBuf> {
    let target = normalize(&std::path::absolute(target).map_err(|e| Error::io(target, e))?);
    let base = normalize(base);
    let t: Vec<_> = target.components().collect();
    let b: Vec<_> = base.components().collect();
    let common = t.iter().zip(&b).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return Ok(target);
    }
    let mut rel = PathBuf::new();
    for _ in common..b.len() {
        rel.push("..");
    }
    for c in &t[common..] {
        rel.push(c.as_os_str());
    }
    Ok(rel)
}
