//! A trained run on disk: `manifest.txt`, `client.ckpt`, `server.ckpt` and
//! `losses.csv`. Normalization is refitted from the recorded data source and
//! checked against the recorded hashes.

use crate::error::CliError;
use gridsplit::data::{ingest_csv, CsvSchema, MeterSeries, NormStats};
use gridsplit::eval::{synth_series, ExperimentConfig, Trained};
use gridsplit::model::{read_checkpoint, write_checkpoint, ModelParams, ParamSet, DEC, DIS};
use gridsplit::splitlearn::{loss_csv, RunManifest};
use std::fs;
use std::path::{Path, PathBuf};

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let m = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            RunManifest::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => RunManifest::new(),
    };
    ExperimentConfig::from_manifest(&m).map_err(|e| CliError::Usage(format!("config: {e}")))
}

pub fn load_series(data: Option<&Path>, cfg: &ExperimentConfig) -> Result<MeterSeries, CliError> {
    Ok(match data {
        Some(p) => ingest_csv(p, &CsvSchema::default())?,
        None => synth_series(cfg)?,
    })
}

fn write_set(path: &Path, sets: &[&ParamSet<f32>]) -> Result<(), CliError> {
    let mut out = Vec::new();
    write_checkpoint(&mut out, sets).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, out)?;
    Ok(())
}

fn read_set(path: &Path) -> Result<ParamSet<f32>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    read_checkpoint(&mut bytes.as_slice()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn save(dir: &Path, t: &Trained, data: Option<&Path>) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut m = t.manifest.clone();
    m.set("features", t.params.config.features);
    m.set("feature_names", t.norm.channels.join(" "));
    if let Some(p) = data {
        let abs = fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
        m.set("data", abs.display());
    }
    fs::write(dir.join("manifest.txt"), m.render())?;
    write_set(&dir.join("client.ckpt"), &[&t.params.enc])?;
    write_set(&dir.join("server.ckpt"), &[&t.params.dec, &t.params.dis])?;
    fs::write(dir.join("losses.csv"), loss_csv(&t.losses))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Trained, CliError> {
    let mpath = dir.join("manifest.txt");
    let text = fs::read_to_string(&mpath)
        .map_err(|e| CliError::Data(format!("{}: {e} (run `gridsplit train` first)", mpath.display())))?;
    let manifest = RunManifest::parse(&text)?;
    let config = ExperimentConfig::from_manifest(&manifest).map_err(|e| CliError::Data(format!("{}: {e}", mpath.display())))?;
    let data = manifest.get("data").map(PathBuf::from);
    let series = load_series(data.as_deref(), &config)?;
    let (train, test) = series.split(config.train_frac);
    if manifest.get("train_hash") != Some(train.content_hash().as_str()) {
        return Err(CliError::Data("training data no longer matches the run manifest".into()));
    }
    let norm = NormStats::fit(&train)?;
    let mut model = config.model.clone();
    model.features = norm.channels.len();
    model.max_seq = config.train.seq_len;
    let enc = read_set(&dir.join("client.ckpt"))?;
    let server = read_set(&dir.join("server.ckpt"))?;
    let (mut dec, mut dis) = (ParamSet::new(), ParamSet::new());
    for (name, t) in server.iter() {
        if name.starts_with(&format!("{DEC}.")) {
            dec.insert(name, t.clone());
        } else if name.starts_with(&format!("{DIS}.")) {
            dis.insert(name, t.clone());
        } else {
            return Err(CliError::Data(format!("server checkpoint holds foreign tensor {name}")));
        }
    }
    let params = ModelParams {
        config: model,
        enc,
        dec,
        dis,
    };
    params.validate().map_err(|e| CliError::Data(format!("checkpoint: {e}")))?;
    Ok(Trained {
        config,
        params,
        norm,
        train,
        test,
        losses: Vec::new(),
        manifest,
    })
}
