//! Synthetic data generators, anomaly injection and CSV ingestion.

mod cad;
mod csv_io;
mod global;
mod perturb;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cad::{gen_cad, CadContextSpec, CadDataset, CadGeneratorSpec, CadMetadata, CovarianceRule, CENTROID_RANGE};
pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to, CsvSchema, LABEL_COLUMN};
pub use global::{gen_global, gen_global_with, GlobalSpec};
pub use perturb::{injection_count, perturb_inject, DONOR_CANDIDATES};

use crate::error::{Error, Result};
use crate::model::{Context, Dataset, ANOMALY};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Synthetic1,
    Synthetic1Small,
    Synthetic2,
    Synthetic2Large,
    Synthetic3,
    Synthetic4,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Synthetic1,
        Preset::Synthetic1Small,
        Preset::Synthetic2,
        Preset::Synthetic2Large,
        Preset::Synthetic3,
        Preset::Synthetic4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Synthetic1 => "synthetic1",
            Preset::Synthetic1Small => "synthetic1-small",
            Preset::Synthetic2 => "synthetic2",
            Preset::Synthetic2Large => "synthetic2-large",
            Preset::Synthetic3 => "synthetic3",
            Preset::Synthetic4 => "synthetic4",
        }
    }

    pub fn spec(&self, seed: u64) -> GeneratorSpec {
        match self {
            Preset::Synthetic1 => GeneratorSpec::Cad(CadGeneratorSpec::synthetic1(seed)),
            Preset::Synthetic1Small => GeneratorSpec::Cad(CadGeneratorSpec::synthetic1_small(seed)),
            Preset::Synthetic2 => GeneratorSpec::Cad(CadGeneratorSpec::synthetic2(seed)),
            Preset::Synthetic2Large => GeneratorSpec::Cad(CadGeneratorSpec::synthetic2_large(seed)),
            Preset::Synthetic3 => GeneratorSpec::Cad(CadGeneratorSpec::synthetic3(seed)),
            Preset::Synthetic4 => GeneratorSpec::Global(GlobalSpec::synthetic4(seed)),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.as_str()).collect();
            Error::Config(format!("unknown preset {s:?} ({})", names.join("|")))
        })
    }
}

/// Generator spec file contents, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Cad(CadGeneratorSpec),
    Global(GlobalSpec),
    Preset {
        name: Preset,
        #[serde(default)]
        seed: u64,
    },
    Perturb {
        source: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
        contextual: Vec<usize>,
        fraction: f64,
        #[serde(default)]
        seed: u64,
    },
}

/// Tagged enums are buffered before the variant is decoded, which drops the
/// position of field errors. Recover it from the quoted field name.
fn locate_field(text: &str, message: &str) -> Option<(usize, usize)> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    let needle = format!("\"{}\"", &message[start..start + len]);
    let at = text.find(&needle)?;
    let before = &text[..at];
    let line = before.matches('\n').count() + 1;
    let column = at - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    Some((line, column))
}

impl GeneratorSpec {
    /// Parses a JSON spec; errors carry the offending line and column.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let (line, column) = match e.line() {
                0 => locate_field(text, &e.to_string()).unwrap_or((1, 1)),
                l => (l, e.column()),
            };
            Error::Config(format!("invalid generator spec at line {line}, column {column}: {e}"))
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn seed(&self) -> u64 {
        match self {
            GeneratorSpec::Cad(s) => s.seed,
            GeneratorSpec::Global(s) => s.seed,
            GeneratorSpec::Preset { seed, .. } | GeneratorSpec::Perturb { seed, .. } => *seed,
        }
    }

    /// Presets expanded to their concrete spec.
    pub fn resolved(&self) -> GeneratorSpec {
        match self {
            GeneratorSpec::Preset { name, seed } => name.spec(*seed),
            other => other.clone(),
        }
    }
}

/// Everything needed to reproduce or audit a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub spec: GeneratorSpec,
    pub n: usize,
    pub d: usize,
    pub feature_names: Vec<String>,
    pub true_context_bitmask: Option<u64>,
    pub anomaly_indices: Vec<usize>,
    /// For generated contextual anomalies, the spec context each one
    /// violates, aligned with `anomaly_indices`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomaly_contexts: Option<Vec<usize>>,
    /// Bitmasks of every context of a multi-context spec.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contexts: Vec<u64>,
}

impl DatasetManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Generated<T> {
    pub dataset: Dataset<T>,
    pub manifest: DatasetManifest,
}

pub fn generate<T: Scalar>(spec: &GeneratorSpec) -> Result<Generated<T>> {
    let resolved = spec.resolved();
    let (dataset, anomaly_contexts, contexts) = match &resolved {
        GeneratorSpec::Cad(s) => {
            let g = gen_cad::<T>(s)?;
            let per_anomaly = g.metadata.anomaly_context.iter().filter_map(|a| *a).collect();
            let masks = g.metadata.contexts.iter().map(Context::bitmask).collect();
            (g.dataset, Some(per_anomaly), masks)
        }
        GeneratorSpec::Global(s) => (gen_global_with::<T>(s)?, None, Vec::new()),
        GeneratorSpec::Perturb {
            source,
            schema,
            contextual,
            fraction,
            seed,
        } => {
            let base = load_csv::<T>(source, schema)?;
            let ctx = Context::new(contextual.iter().copied(), base.d())?;
            (perturb_inject(&base, &ctx, *fraction, *seed)?, None, Vec::new())
        }
        GeneratorSpec::Preset { .. } => unreachable!("resolved above"),
    };
    let anomaly_indices = dataset
        .labels()
        .map(|l| (0..l.len()).filter(|&i| l[i] == ANOMALY).collect())
        .unwrap_or_default();
    let manifest = DatasetManifest {
        seed: spec.seed(),
        spec: spec.clone(),
        n: dataset.n(),
        d: dataset.d(),
        feature_names: dataset.feature_names().to_vec(),
        true_context_bitmask: dataset.true_context().map(Context::bitmask),
        anomaly_indices,
        anomaly_contexts,
        contexts,
    };
    Ok(Generated { dataset, manifest })
}

/// Writes `<stem>.csv` and `<stem>.manifest.json` into `dir`.
pub fn write_generated<T: Scalar>(generated: &Generated<T>, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let manifest_path = dir.join(format!("{stem}.manifest.json"));
    write_csv(&generated.dataset, &csv_path)?;
    generated.manifest.write(&manifest_path)?;
    Ok((csv_path, manifest_path))
}

/// Path of the manifest written next to a generated CSV file.
pub fn manifest_path_for(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    csv.with_file_name(format!("{stem}.manifest.json"))
}

/// Loads a CSV and, if a manifest sits next to it, restores its true context.
pub fn load_with_manifest<T: Scalar>(csv: &Path, schema: &CsvSchema) -> Result<(Dataset<T>, Option<DatasetManifest>)> {
    let data = load_csv::<T>(csv, schema)?;
    let mpath = manifest_path_for(csv);
    if !mpath.exists() {
        return Ok((data, None));
    }
    let manifest = DatasetManifest::read(&mpath)?;
    let data = match manifest.true_context_bitmask {
        Some(mask) => {
            let ctx = Context::from_bitmask(mask, data.d())?;
            data.with_true_context(ctx)?
        }
        None => data,
    };
    Ok((data, Some(manifest)))
}
