use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use mfmnet::data::{align_face_with, load_dataset, split_train_val, write_pgm, AlignTarget, FaceDataset, GrayImage};
use mfmnet::eval::{read_embeddings, read_pairs, verify as verify_pairs, write_embeddings};
use mfmnet::gradcheck::{run_suite_with, Fault, GradCheckConfig};
use mfmnet::layers::{crop_mirror, CropSpec};
use mfmnet::network::{
    count_params, extract_embedding, load_model, model_precision, save_model, PAPER_REPORTED_PARAMS,
};
use mfmnet::trainer::{train as run_training, HyperParams, TrainOptions};
use mfmnet::{Activation, Element, Error, Mode, ModelParams, NetworkConfig, Tensor};
use rayon::prelude::*;

use crate::{
    AlignArgs, ExtractArgs, Failure, FaultArg, GradcheckArgs, InfoArgs, Precision, Preset, TrainArgs, VerifyArgs,
    EXIT_GRADCHECK, EXIT_MISSING_IMAGE,
};

type CmdResult = Result<(), Failure>;

fn preset_config(preset: Preset, num_classes: usize, activation: Activation) -> NetworkConfig {
    match preset {
        Preset::Paper => NetworkConfig::paper(num_classes, activation),
        Preset::Toy => NetworkConfig::toy(num_classes, activation),
        Preset::Tiny => NetworkConfig::tiny(num_classes, activation),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }
        .into()
    })
}

pub fn align(args: AlignArgs) -> CmdResult {
    let target = AlignTarget {
        size: args.size,
        eye_anchor: (args.anchor_x, args.anchor_y),
        eye_mouth_distance: args.eye_mouth,
    };
    let index = load_dataset(&args.input_dir, Some(&args.landmarks))?;
    create_dir(&args.output_dir)?;
    // Unalignable faces (collapsed or non-finite landmarks) are skipped, not fatal.
    let outcomes = index
        .samples
        .par_iter()
        .map(|s| -> Result<bool, Error> {
            let sample = index.load_sample::<f32>(s)?;
            let lm = sample.landmarks.expect("index was built with landmarks");
            let aligned = match align_face_with(&sample.image, &lm, &target) {
                Ok(t) => t,
                Err(Error::Alignment(msg)) => {
                    log::warn!("skipping {}: {msg}", s.path);
                    return Ok(false);
                }
                Err(e) => return Err(e),
            };
            let out = args.output_dir.join(&s.path);
            if let Some(parent) = out.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::Io {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
            write_pgm(&out, &GrayImage::from_tensor(&aligned)?)?;
            Ok(true)
        })
        .collect::<Result<Vec<bool>, Error>>()?;
    let processed = outcomes.iter().filter(|&&ok| ok).count();
    let skipped = index.skipped + outcomes.len() - processed;
    println!("processed={processed} skipped={skipped}");
    Ok(())
}

fn hyper_params(args: &TrainArgs) -> Result<HyperParams, Error> {
    let mut hp = match &args.hp {
        Some(path) => HyperParams::load(path)?,
        None => HyperParams::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field {
                hp.$field = v;
            }
        )*};
    }
    apply!(
        lr_start,
        lr_end,
        momentum,
        dropout,
        batch_size,
        max_iters,
        eval_interval,
        seed
    );
    if args.checkpoint_interval.is_some() {
        hp.checkpoint_interval = args.checkpoint_interval;
    }
    hp.validate()?;
    Ok(hp)
}

pub fn train(args: TrainArgs) -> CmdResult {
    let hp = hyper_params(&args)?;
    let stored = args.init_model.as_deref().map(model_precision).transpose()?;
    let precision = match (stored, args.precision) {
        (Some(bytes), Some(p)) if (bytes == 8) != (p == Precision::F64) => {
            return Err(Error::InvalidConfig("--precision disagrees with --init-model".into()).into())
        }
        (Some(8), _) | (None, Some(Precision::F64)) => Precision::F64,
        _ => Precision::F32,
    };
    match precision {
        Precision::F64 => train_typed::<f64>(&args, &hp),
        Precision::F32 => train_typed::<f32>(&args, &hp),
    }
}

fn train_typed<T: Element>(args: &TrainArgs, hp: &HyperParams) -> CmdResult {
    let index = split_train_val(&load_dataset(&args.data, None)?, hp.seed);
    if index.is_empty() {
        return Err(Error::InvalidInput(format!("no images under {}", args.data.display())).into());
    }
    let mut model = match &args.init_model {
        Some(path) => {
            let model = load_model::<T>(path)?;
            if let Some(act) = args.activation {
                if model.config().activation() != Some(act.into()) {
                    return Err(Error::InvalidConfig("--activation disagrees with --init-model".into()).into());
                }
            }
            model
        }
        None => {
            let config = match (&args.config, args.preset) {
                (Some(path), _) => NetworkConfig::load(path)?,
                (None, Some(preset)) => preset_config(preset, index.num_identities(), Activation::Mfm),
                (None, None) => {
                    return Err(
                        Error::InvalidConfig("one of --config, --preset or --init-model is required".into()).into(),
                    )
                }
            };
            let config = match args.activation {
                Some(act) => config.with_activation(act.into()),
                None => config,
            };
            ModelParams::<T>::init(config, hp.seed)?
        }
    };
    let data = FaceDataset::<T>::load(&index)?;
    let checkpoint_dir = hp.checkpoint_interval.map(|_| {
        args.checkpoint_dir.clone().unwrap_or_else(|| {
            let mut s = args.out_model.as_os_str().to_owned();
            s.push(".checkpoints");
            PathBuf::from(s)
        })
    });
    let opts = TrainOptions {
        log: args.log.clone(),
        checkpoint_dir,
        stop_at_accuracy: args.stop_at_accuracy,
    };
    let state = run_training(&mut model, &data, hp, &opts)?;
    save_model(&model, &args.out_model)?;
    let loss = state.losses.last().map(|l| format!("{l:.6}")).unwrap_or_default();
    let acc = state.history.last().map(|(_, a)| format!("{a:.4}")).unwrap_or_default();
    println!("iterations={} final_loss={loss} val_accuracy={acc}", state.iteration);
    Ok(())
}

const EXTRACT_BATCH: usize = 32;

fn read_list(path: &Path) -> Result<Vec<String>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn extract(args: ExtractArgs) -> CmdResult {
    match model_precision(&args.model)? {
        8 => extract_typed::<f64>(&args),
        _ => extract_typed::<f32>(&args),
    }
}

fn extract_typed<T: Element>(args: &ExtractArgs) -> CmdResult {
    let model = load_model::<T>(&args.model)?;
    let names = read_list(&args.input_list)?;
    let paths: Vec<PathBuf> = names
        .iter()
        .map(|n| match &args.root {
            Some(root) => root.join(n),
            None => PathBuf::from(n),
        })
        .collect();
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Failure {
            code: EXIT_MISSING_IMAGE,
            message: format!("{} missing image(s):\n{}", missing.len(), missing.join("\n")),
        });
    }
    let config = model.config();
    let spec = CropSpec::new(config.input_size, config.crop_size)?;
    let mut items = Vec::with_capacity(names.len());
    for (names, paths) in names.chunks(EXTRACT_BATCH).zip(paths.chunks(EXTRACT_BATCH)) {
        let crops = paths
            .par_iter()
            .map(|p| -> Result<Tensor<T>, Error> {
                let image: Tensor<T> = mfmnet::data::read_pgm(p)?.to_tensor();
                let (h, w) = (image.dims()[1], image.dims()[2]);
                if (h, w) == spec.input {
                    crop_mirror(&image, &spec, Mode::Eval, 0)
                } else if (h, w) == spec.crop {
                    Ok(image)
                } else {
                    Err(Error::InvalidInput(format!(
                        "{}: {h}x{w} image fits neither the {:?} input nor the {:?} crop",
                        p.display(),
                        spec.input,
                        spec.crop
                    )))
                }
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let batch = Tensor::stack(&crops.iter().collect::<Vec<_>>())?;
        let emb = extract_embedding(&model, &batch)?;
        let dim = emb.dims()[1];
        for (name, row) in names.iter().zip(emb.data().chunks(dim)) {
            items.push((name.clone(), Tensor::from_vec(&[dim], row.to_vec())?));
        }
    }
    write_embeddings(&args.out, &items)?;
    println!("extracted={} dim={}", items.len(), config.embedding_dim().unwrap_or(0));
    Ok(())
}

fn embedding_map<T: Element>(items: Vec<(String, Tensor<T>)>) -> Result<HashMap<String, Tensor<T>>, Error> {
    let mut map: HashMap<String, Tensor<T>> = HashMap::with_capacity(items.len());
    for (name, t) in items {
        if let Some(prev) = map.get(&name) {
            if !prev.bit_eq(&t) {
                return Err(Error::InvalidInput(format!("conflicting embeddings for {name:?}")));
            }
        }
        map.insert(name, t);
    }
    Ok(map)
}

pub fn verify(args: VerifyArgs) -> CmdResult {
    let protocol = read_pairs(&args.pairs)?;
    let report = match read_embeddings::<f32>(&args.embeddings) {
        Err(Error::PrecisionMismatch { .. }) => {
            verify_pairs(&protocol, &embedding_map(read_embeddings::<f64>(&args.embeddings)?)?)?
        }
        other => verify_pairs(&protocol, &embedding_map(other?)?)?,
    };
    report.write(&args.report)?;
    println!("mean_accuracy={:.6}", report.folds.mean);
    println!("eer={:.6}", report.eer);
    println!("one_minus_eer={:.6}", 1.0 - report.eer);
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> CmdResult {
    let network = match &args.config {
        Some(path) => NetworkConfig::load(path)?,
        None => NetworkConfig::tiny(4, Activation::Mfm),
    };
    let fault = args.inject_fault.map(|FaultArg::Mfm| Fault::MfmBackward);
    let reports = if args.precision == Precision::F32 {
        run_suite_with::<f32>(&GradCheckConfig::f32_default(args.seed), fault, &network)?
    } else {
        run_suite_with::<f64>(&GradCheckConfig::f64_default(args.seed), fault, &network)?
    };
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.layer.as_str())
        .collect();
    if failed.is_empty() {
        return Ok(());
    }
    Err(Failure {
        code: EXIT_GRADCHECK,
        message: format!("gradient check failed: {}", failed.join(", ")),
    })
}

pub fn info(args: InfoArgs) -> CmdResult {
    let config = match (&args.model, args.preset) {
        (Some(path), _) => match model_precision(path)? {
            8 => load_model::<f64>(path)?.config().clone(),
            _ => load_model::<f32>(path)?.config().clone(),
        },
        (None, Some(preset)) => preset_config(preset, args.num_classes, args.activation.into()),
        (None, None) => unreachable!("clap requires --model or --preset"),
    };
    let rows = config.shape_trace()?;
    let counts = count_params(&config)?;
    println!(
        "{:<6} {:<10} {:<16} {:<8} {:>14}",
        "", "name", "type", "filter", "output"
    );
    for row in &rows {
        let tag = match row.kind {
            "dropout" => continue,
            _ if row.name == "input" || row.name == "crop" => row.name.as_str(),
            "softmax" => "loss",
            _ => "layer",
        };
        let filter = row
            .filter
            .map(|(k, s)| format!("{k}x{k}/{s}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{tag:<6} {:<10} {:<16} {filter:<8} {:>14}",
            row.name,
            row.kind,
            row.output_label()
        );
    }
    println!();
    for l in &counts.per_layer {
        println!("params {:<10} {:>12}", l.layer, l.count);
    }
    println!("total_params={}", counts.total);
    println!("reported_params={PAPER_REPORTED_PARAMS} (reported figure; not expected to match the derived total)");
    Ok(())
}
