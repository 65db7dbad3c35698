//! Corpus directory layout and file IO.
//!
//! ```text
//! root/
//!   parts/<part_id>.json     part graphs
//!   meshes/<part_id>.obj     triangle meshes (path given by the part's
//!                            `mesh` field, relative to the root)
//!   joints/<name>.json       joint sets
//!   splits.json              split manifest (optional)
//! ```

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use super::{Error, SplitManifest};
use crate::brep::{
    parse_joint_set, parse_part_graph, serialize_joint_set, serialize_part_graph, JointSet,
    PartGraph,
};
use crate::geometry::{parse_obj, write_obj, TriMesh};

/// An in-memory dataset: part graphs keyed by id, their meshes, and named
/// joint sets.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub parts: BTreeMap<String, PartGraph>,
    pub meshes: BTreeMap<String, TriMesh>,
    pub sets: Vec<(String, JointSet)>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn part(&self, id: &str) -> Result<&PartGraph, Error> {
        self.parts
            .get(id)
            .ok_or_else(|| Error::UnknownPart(id.to_string()))
    }

    pub fn mesh(&self, id: &str) -> Result<&TriMesh, Error> {
        self.meshes
            .get(id)
            .ok_or_else(|| Error::MissingMesh(id.to_string()))
    }

    pub fn insert_part(&mut self, part: PartGraph, mesh: TriMesh) -> Result<(), Error> {
        let id = part.part_id.clone();
        if self.parts.insert(id.clone(), part).is_some() {
            return Err(Error::DuplicatePart(id));
        }
        self.meshes.insert(id, mesh);
        Ok(())
    }

    pub fn push_set(&mut self, name: impl Into<String>, set: JointSet) {
        self.sets.push((name.into(), set));
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reject absolute or parent-escaping relative paths before joining them
/// under a corpus root.
fn checked_relative(raw: &str) -> Result<&Path, Error> {
    let path = Path::new(raw);
    let escapes = path.is_absolute()
        || path
            .components()
            .any(|c| matches!(c, Component::ParentDir | Component::Prefix(_)));
    if raw.is_empty() || escapes {
        return Err(Error::InvalidConfig(format!(
            "mesh path {raw:?} must be relative and stay inside the corpus root"
        )));
    }
    Ok(path)
}

/// Write via a temporary sibling and rename, so readers never observe a
/// partially written file.
pub fn atomic_write(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn save_corpus(root: &Path, corpus: &Corpus) -> Result<(), Error> {
    for (id, part) in &corpus.parts {
        atomic_write(
            &root.join("parts").join(format!("{id}.json")),
            &serialize_part_graph(part),
        )?;
        if let Some(mesh) = corpus.meshes.get(id) {
            atomic_write(&root.join(checked_relative(&part.mesh)?), &write_obj(mesh))?;
        }
    }
    for (name, set) in &corpus.sets {
        atomic_write(
            &root.join("joints").join(format!("{name}.json")),
            &serialize_joint_set(set),
        )?;
    }
    Ok(())
}

fn sorted_json_files(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Load every part, mesh, and joint set under `root`. Parts whose mesh file
/// is absent load without one; corrupt files are errors.
pub fn load_corpus(root: &Path) -> Result<Corpus, Error> {
    if !root.is_dir() {
        return Err(Error::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "corpus root not found"),
        });
    }
    let mut corpus = Corpus::new();
    for file in sorted_json_files(&root.join("parts"))? {
        let text = std::fs::read_to_string(&file).map_err(io_err(&file))?;
        let part = parse_part_graph(&text)?;
        let id = part.part_id.clone();
        let mesh_path = root.join(checked_relative(&part.mesh)?);
        if corpus.parts.insert(id.clone(), part).is_some() {
            return Err(Error::DuplicatePart(id));
        }
        if mesh_path.is_file() {
            let obj = std::fs::read_to_string(&mesh_path).map_err(io_err(&mesh_path))?;
            corpus.meshes.insert(id, parse_obj(&obj)?);
        }
    }
    for file in sorted_json_files(&root.join("joints"))? {
        let text = std::fs::read_to_string(&file).map_err(io_err(&file))?;
        let name = file
            .file_stem()
            .expect("json files have stems")
            .to_string_lossy()
            .into_owned();
        corpus.push_set(name, parse_joint_set(&text)?);
    }
    Ok(corpus)
}

pub fn save_splits(root: &Path, manifest: &SplitManifest) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    atomic_write(&root.join("splits.json"), &text)
}

pub fn load_splits(root: &Path) -> Result<SplitManifest, Error> {
    let path = root.join("splits.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("splits.json: {e}")))
}
