//! Experiment persistence: JSON for scenes, datasets, and checkpoints,
//! CSV for results.
//!
//! Everything is human-readable and byte-stable: maps are sorted, struct
//! fields keep declaration order, and floats use the shortest
//! representation that parses back to the identical bit pattern, so
//! save→load→save reproduces the file exactly. That byte stability is what
//! lets the determinism checks compare whole files instead of parsed
//! contents.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecastnet::{Forecaster, ModelConfig};
use crate::mosa::{attach_residuals, inject, AdapterSpec, DEFAULT_INIT_STD};
use crate::synthworld::{Dataset, Sample, SceneGrid};

pub const FILE_VERSION: u32 = 1;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn check_version(path: &Path, found: u32) -> Result<()> {
    if found != FILE_VERSION {
        // Name the file in the surrounding context; the code pair is enough
        // for scripts.
        let _ = path;
        return Err(Error::Version {
            found,
            expected: FILE_VERSION,
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ScenesFile {
    version: u32,
    scenes: Vec<SceneGrid>,
}

/// Writes every scene, sorted by id.
pub fn save_scenes(path: &Path, scenes: &BTreeMap<String, SceneGrid>) -> Result<()> {
    write_json(
        path,
        &ScenesFile {
            version: FILE_VERSION,
            scenes: scenes.values().cloned().collect(),
        },
    )
}

pub fn load_scenes(path: &Path) -> Result<BTreeMap<String, SceneGrid>> {
    let file: ScenesFile = read_json(path)?;
    check_version(path, file.version)?;
    let mut out = BTreeMap::new();
    for s in file.scenes {
        let id = s.id().to_string();
        if out.insert(id.clone(), s).is_some() {
            return Err(Error::InvalidArgument(format!(
                "{}: duplicate scene id `{id}`",
                path.display()
            )));
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    version: u32,
    samples: Vec<Sample>,
}

/// Writes the samples of a dataset; scenes live in their own file.
pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_json(
        path,
        &DatasetFile {
            version: FILE_VERSION,
            samples: data.samples.clone(),
        },
    )
}

/// Loads samples and joins them with the given scenes.
pub fn load_dataset(path: &Path, scenes: &BTreeMap<String, SceneGrid>) -> Result<Dataset> {
    let file: DatasetFile = read_json(path)?;
    check_version(path, file.version)?;
    Dataset::new(file.samples, scenes.clone())
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    shape: Vec<usize>,
    /// Row-major entries.
    values: Vec<f64>,
}

/// Structural record of injected adapters. Initialization details are not
/// kept: stored values supersede them.
#[derive(Serialize, Deserialize)]
struct AdapterSection {
    rank: usize,
    targets: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    model: ModelConfig,
    tensors: BTreeMap<String, TensorRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adapters: Option<AdapterSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    residuals: Option<Vec<String>>,
}

/// Serializes a model, including any adapters or residuals it carries.
pub fn save_checkpoint(path: &Path, model: &Forecaster) -> Result<()> {
    let mut tensors = BTreeMap::new();
    for (_, p) in model.params().iter() {
        tensors.insert(
            p.name.clone(),
            TensorRepr {
                shape: p.value.shape().to_vec(),
                values: p.value.data().to_vec(),
            },
        );
    }
    let adapters = model.adapters().values().next().map(|pair| AdapterSection {
        rank: pair.rank,
        targets: model.adapters().keys().cloned().collect(),
    });
    let residuals = (!model.residuals().is_empty())
        .then(|| model.residuals().keys().cloned().collect());
    write_json(
        path,
        &CheckpointFile {
            version: FILE_VERSION,
            model: model.config.clone(),
            tensors,
            adapters,
            residuals,
        },
    )
}

/// Rebuilds a model from a checkpoint: fresh construction from the stored
/// config, re-attachment of adapters/residuals, then overwriting every
/// parameter by name. The file must cover the parameter set exactly.
pub fn load_checkpoint(path: &Path) -> Result<Forecaster> {
    let file: CheckpointFile = read_json(path)?;
    check_version(path, file.version)?;
    let mut model = Forecaster::new(file.model)?;
    if let Some(ad) = &file.adapters {
        inject(
            &mut model,
            &AdapterSpec {
                rank: ad.rank,
                targets: ad.targets.clone(),
                init_std: DEFAULT_INIT_STD,
                seed: 0,
            },
        )?;
    }
    if let Some(res) = &file.residuals {
        attach_residuals(&mut model, res)?;
    }
    let corrupt = |detail: String| Error::Csv {
        path: path.display().to_string(),
        detail,
    };
    if file.tensors.len() != model.params().len() {
        return Err(corrupt(format!(
            "checkpoint holds {} tensors but the model has {} parameters",
            file.tensors.len(),
            model.params().len()
        )));
    }
    for id in model.params().ids().collect::<Vec<_>>() {
        let name = model.params().get(id).name.clone();
        let repr = file
            .tensors
            .get(&name)
            .ok_or_else(|| corrupt(format!("missing tensor `{name}`")))?;
        if repr.shape != model.params().value(id).shape() {
            return Err(corrupt(format!(
                "tensor `{name}`: stored shape {:?} vs model shape {:?}",
                repr.shape,
                model.params().value(id).shape()
            )));
        }
        let tensor = crate::diffcore::Tensor::new(repr.shape.clone(), repr.values.clone())?;
        model.params_mut().get_mut(id).value = tensor;
    }
    Ok(model)
}

/// One adaptation-cell result; serializes to the results CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    /// Modular mask, or `-` for methods that adapt a fixed set.
    pub mask: String,
    /// Adapter rank, `full` for dense residuals, `-` where not applicable.
    pub rank: String,
    pub n_target: usize,
    pub seed: u64,
    pub ade: f64,
    pub fde: f64,
    pub topk_ade: f64,
    pub topk_fde: f64,
    pub trainable_params: usize,
    pub epochs_run: usize,
}

/// One pretraining epoch in the loss-curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ade: f64,
    pub val_fde: f64,
}

/// Aggregated row emitted by the report command: mean and sample standard
/// deviation over the seeds of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub method: String,
    pub mask: String,
    pub rank: String,
    pub n_target: usize,
    pub n_seeds: usize,
    pub ade_mean: f64,
    pub ade_std: f64,
    pub fde_mean: f64,
    pub fde_std: f64,
    pub topk_ade_mean: f64,
    pub topk_ade_std: f64,
    pub topk_fde_mean: f64,
    pub topk_fde_std: f64,
    pub trainable_params: usize,
    pub epochs_run_mean: f64,
}

/// Single-evaluation row written by the eval command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub checkpoint: String,
    pub dataset: String,
    pub n_samples: usize,
    pub k: usize,
    pub ade: f64,
    pub fde: f64,
    pub topk_ade: f64,
    pub topk_fde: f64,
}

/// Writes rows as CSV with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Csv {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a results CSV. Parse problems are configuration errors: the file
/// is user input to the report command.
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    for record in reader.deserialize() {
        let row: ResultRow = record.map_err(|e| {
            Error::Config(format!("malformed results CSV {}: {e}", path.display()))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecastnet::weight_hash;
    use crate::mosa::{mosa_targets, ModularMask};
    use crate::synthworld::{layout, scenario_preset};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn small_model() -> Forecaster {
        Forecaster::new(ModelConfig {
            grid_h: 16,
            grid_w: 16,
            n_classes: 4,
            t_obs: 4,
            t_pred: 3,
            d_model: 8,
            k_modes: 2,
            seed: 77,
        })
        .unwrap()
    }

    #[test]
    fn scenes_round_trip_byte_stable() {
        let dir = tmp();
        let path = dir.path().join("scenes.json");
        let scenario = scenario_preset("agent_shift").unwrap();
        let scenes = scenario.all_scenes().unwrap();
        save_scenes(&path, &scenes).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = load_scenes(&path).unwrap();
        assert_eq!(loaded, scenes);
        save_scenes(&path, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn dataset_round_trip_preserves_floats_exactly() {
        use crate::synthworld::StyleParams;
        let dir = tmp();
        let path = dir.path().join("data.json");
        let scene = layout("layout1").unwrap();
        let style = StyleParams {
            v_pref_mean: 1.0,
            v_pref_std: 0.2,
            class_costs: [1.0, 2.0, f64::INFINITY, 3.0],
            jitter_sigma: 0.1,
            seed: 5,
        };
        let data =
            crate::synthworld::generate_dataset(&[scene], &style, 12, 4, 4, 99).unwrap();
        save_dataset(&path, &data).unwrap();
        let loaded = load_dataset(&path, &data.scenes).unwrap();
        assert_eq!(loaded.samples, data.samples);
        let first = std::fs::read(&path).unwrap();
        save_dataset(&path, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn checkpoint_round_trip_plain_model() {
        let dir = tmp();
        let path = dir.path().join("ckpt.json");
        let model = small_model();
        save_checkpoint(&path, &model).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(
            weight_hash(&model, |_, _| true),
            weight_hash(&loaded, |_, _| true)
        );
        assert_eq!(loaded.config, model.config);
        let first = std::fs::read(&path).unwrap();
        save_checkpoint(&path, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first, "save-load-save must be byte-stable");
    }

    #[test]
    fn checkpoint_round_trip_with_adapters_and_residuals() {
        let dir = tmp();
        let mut model = small_model();
        let spec = AdapterSpec {
            rank: 2,
            targets: mosa_targets(ModularMask::ALL),
            init_std: 0.02,
            seed: 42,
        };
        inject(&mut model, &spec).unwrap();
        let path = dir.path().join("adapted.json");
        save_checkpoint(&path, &model).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.adapters().len(), model.adapters().len());
        assert_eq!(
            weight_hash(&model, |_, _| true),
            weight_hash(&loaded, |_, _| true)
        );

        let mut pa = small_model();
        attach_residuals(&mut pa, &mosa_targets(ModularMask::ALL)).unwrap();
        let path = dir.path().join("pa.json");
        save_checkpoint(&path, &pa).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.residuals().len(), pa.residuals().len());
        assert_eq!(
            weight_hash(&pa, |_, _| true),
            weight_hash(&loaded, |_, _| true)
        );
    }

    #[test]
    fn checkpoint_rejects_version_and_shape_mismatches() {
        let dir = tmp();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&path, &small_model()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let bumped = text.replacen("\"version\": 1", "\"version\": 9", 1);
        std::fs::write(&path, bumped).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Version { found: 9, .. })
        ));

        let truncated = text.replacen("\"A.lin1.b\"", "\"A.lin1.bogus\"", 1);
        std::fs::write(&path, truncated).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn results_csv_round_trip() {
        let dir = tmp();
        let path = dir.path().join("results.csv");
        let rows = vec![ResultRow {
            scenario: "agent_shift".into(),
            method: "MOSA".into(),
            mask: "A".into(),
            rank: "3".into(),
            n_target: 20,
            seed: 4,
            ade: 1.25,
            fde: 2.5,
            topk_ade: 0.75,
            topk_fde: 1.5,
            trainable_params: 384,
            epochs_run: 17,
        }];
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "scenario,method,mask,rank,n_target,seed,ade,fde,topk_ade,topk_fde,trainable_params,epochs_run"
        ));
        assert_eq!(read_results_csv(&path).unwrap(), rows);

        std::fs::write(&path, "scenario,method\nagent_shift\n").unwrap();
        let err = read_results_csv(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
