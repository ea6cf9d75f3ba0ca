//! Slice sources: procedural seeds, polygon JSON, STL meshes and
//! directories of them.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diwsim_core::geom::{polyjson, procedural_slice, slice_mesh, GeomError, Mesh, PlanConfig, ProceduralConfig, SliceSet};

use crate::error::{runtime, CliError};

pub const PROCEDURAL_PREFIX: &str = "procedural:";

pub fn procedural(seed: u64, plan: PlanConfig) -> SliceSet {
    let cfg = ProceduralConfig {
        plan,
        ..ProceduralConfig::default()
    };
    procedural_slice(&mut ChaCha8Rng::seed_from_u64(seed), &cfg)
}

/// Mid-height of the mesh unless `z` is given.
pub fn slice_stl(path: &Path, z: Option<f64>) -> Result<SliceSet, GeomError> {
    let mesh = Mesh::load(path)?;
    mesh.validate()?;
    let (lo, hi) = mesh.z_range();
    slice_mesh(&mesh, z.unwrap_or(0.5 * (lo + hi)))
}

pub fn load_file(path: &Path, z: Option<f64>) -> Result<SliceSet, GeomError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("stl") => slice_stl(path, z),
        _ => polyjson::load(path),
    }
}

/// `procedural:<seed>` or a file path.
pub fn load_slice(spec: &str, plan: PlanConfig, z: Option<f64>) -> Result<SliceSet, CliError> {
    if let Some(seed) = spec.strip_prefix(PROCEDURAL_PREFIX) {
        let seed = seed
            .parse()
            .map_err(|_| CliError::Usage(format!("bad procedural seed in {spec:?}")))?;
        return Ok(procedural(seed, plan));
    }
    load_file(Path::new(spec), z).map_err(|e| runtime("UnknownSlice", format!("{spec}: {e}")))
}

/// `*.json` and `*.stl` files of a directory, sorted by name; the id of an
/// entry is its file stem.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub entries: Vec<(String, PathBuf)>,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let mut entries = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| runtime("Io", format!("{}: {e}", dir.display())))? {
            let path = entry?.path();
            let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
            if path.is_file() && matches!(ext.as_deref(), Some("json" | "stl")) {
                let id = path.file_stem().unwrap().to_string_lossy().into_owned();
                entries.push((id, path));
            }
        }
        entries.sort();
        Ok(Self { entries })
    }

    pub fn path(&self, id: &str) -> Option<&Path> {
        self.entries.iter().find(|(k, _)| k == id).map(|(_, p)| p.as_path())
    }
}

/// Writes `slice_0000.json`, ... drawn from one seeded stream.
pub fn gen_dataset(n: usize, seed: u64, out: &Path, plan: PlanConfig) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out)?;
    let cfg = ProceduralConfig {
        plan,
        ..ProceduralConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut files = Vec::with_capacity(n);
    for k in 0..n {
        let slice = procedural_slice(&mut rng, &cfg);
        let path = out.join(format!("slice_{k:04}.json"));
        std::fs::write(&path, polyjson::to_json(&slice))?;
        files.push(path);
    }
    Ok(files)
}
