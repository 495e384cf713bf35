//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Run with `cargo test -p mfmnet-cli --test acceptance`. The process exits
//! non-zero if any criterion fails.

mod common;
#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{code, field, mfmnet, p, stderr, stdout, write_toy_dataset};
use mfmnet::data::{read_pgm, write_pgm, GrayImage, Split};
use mfmnet::eval::{
    compare_activations, cosine_similarity, eer, fold_accuracy, fold_accuracy_scores, index_path, read_embeddings,
    roc_curve, write_embeddings, PairSpec, Protocol,
};
use mfmnet::gradcheck::{run_suite, GradCheckConfig};
use mfmnet::layers::{crop_mirror, mfm_backward, mfm_forward, CropSpec};
use mfmnet::network::{
    build_paper_network, count_params, decode_model, encode_model, forward_trace, load_model, save_model, LayerKind,
};
use mfmnet::synthetic::{toy_identities, write_face_fixture, ToySpec};
use mfmnet::tensor::{read_tensor, write_tensor};
use mfmnet::trainer::{train, HyperParams, TrainOptions};
use mfmnet::{Activation, Mode, ModelParams, NetworkConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Output sizes of the reference architecture table as `[C, H, W]` or `[units]`.
const TABLE: &[(&str, &[usize])] = &[
    ("conv1_1", &[48, 120, 120]),
    ("conv1_2", &[48, 120, 120]),
    ("mfm1", &[48, 120, 120]),
    ("pool1", &[48, 60, 60]),
    ("conv2_1", &[96, 56, 56]),
    ("conv2_2", &[96, 56, 56]),
    ("mfm2", &[96, 56, 56]),
    ("pool2", &[96, 28, 28]),
    ("conv3_1", &[128, 24, 24]),
    ("conv3_2", &[128, 24, 24]),
    ("mfm3", &[128, 24, 24]),
    ("pool3", &[128, 12, 12]),
    ("conv4_1", &[192, 9, 9]),
    ("conv4_2", &[192, 9, 9]),
    ("mfm4", &[192, 9, 9]),
    ("pool4", &[192, 5, 5]),
    ("fc1", &[256]),
    ("fc2", &[10575]),
];

fn ac1_shapes() -> Outcome {
    let start = Instant::now();
    let model = build_paper_network::<f32>(10575, Activation::Mfm, 0).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let image = Tensor::<f32>::from_vec(&[1, 144, 144], (0..144 * 144).map(|_| rng.random()).collect()).map_err(err)?;
    let crop = crop_mirror(
        &image,
        &CropSpec::new((144, 144), (128, 128)).map_err(err)?,
        Mode::Eval,
        0,
    )
    .map_err(err)?;
    ensure!(crop.dims() == [1, 128, 128], "crop produced {:?}", crop.dims());
    let batch = crop.reshape(&[1, 1, 128, 128]).map_err(err)?;
    let (logits, trace) = forward_trace(&model, &batch).map_err(err)?;
    for (name, want) in TABLE {
        let got = trace
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d[1..].to_vec())
            .ok_or_else(|| format!("{name} missing from the trace"))?;
        ensure!(got == *want, "{name}: {got:?} != {want:?}");
    }
    ensure!(logits.dims() == [1, 10575], "loss input {:?}", logits.dims());
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1}s");
    Ok(format!(
        "144->128 crop, {} stages match incl. pool4 9->5, loss 10575",
        TABLE.len()
    ))
}

fn ac2_gradients() -> Outcome {
    let start = Instant::now();
    let cfg = GradCheckConfig::f64_default(0);
    ensure!(
        cfg.step == 1e-6 && cfg.layer_tolerance == 1e-5 && cfg.network_tolerance == 1e-4,
        "wrong settings"
    );
    let reports = run_suite::<f64>(&cfg, None).map_err(err)?;
    let required = [
        "conv",
        "mfm",
        "relu",
        "maxpool",
        "fc",
        "softmax-xent",
        "network-mfm",
        "network-relu",
    ];
    for name in required {
        ensure!(reports.iter().any(|r| r.layer == name), "no report for {name}");
    }
    let worst_layer = reports
        .iter()
        .filter(|r| !r.layer.starts_with("network"))
        .map(|r| r.max_rel_error)
        .fold(0.0, f64::max);
    let worst_net = reports
        .iter()
        .filter(|r| r.layer.starts_with("network"))
        .map(|r| r.max_rel_error)
        .fold(0.0, f64::max);
    if let Some(bad) = reports.iter().find(|r| !r.passed()) {
        return Err(format!("{bad}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "suite took {secs:.1}s");
    Ok(format!(
        "layers max {worst_layer:.2e} < 1e-5, network max {worst_net:.2e} < 1e-4"
    ))
}

fn ac3_mfm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dims = [4, 6, 7, 5];
    let n: usize = dims.iter().product();
    let rand_t =
        |rng: &mut ChaCha8Rng| Tensor::<f64>::from_vec(&dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    let (a, b) = (rand_t(&mut rng).map_err(err)?, rand_t(&mut rng).map_err(err)?);
    // Dense upstream gradient: no zero entries.
    let g = Tensor::<f64>::from_vec(
        &dims,
        (0..n)
            .map(|_| rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect(),
    )
    .map_err(err)?;
    let (_, cache) = mfm_forward(&a, &b).map_err(err)?;
    let (ga, gb) = mfm_backward(&g, &cache).map_err(err)?;
    for i in 0..n {
        let (x, y, up) = (ga.data()[i], gb.data()[i], g.data()[i]);
        ensure!(x * y == 0.0, "both candidates receive gradient at {i}");
        ensure!(x + y == up, "gradient not conserved at {i}");
        let ma = f64::from(u8::from(x != 0.0));
        let mb = f64::from(u8::from(y != 0.0));
        ensure!(ma + mb == 1.0 && ma * mb == 0.0, "masks not complementary at {i}");
    }
    let zeros = ga.data().iter().chain(gb.data()).filter(|v| **v == 0.0).count();
    ensure!(zeros == n, "{zeros} zero entries of {}", 2 * n);

    let (_, tie) = mfm_forward(&a, &a.clone()).map_err(err)?;
    let (ta, tb) = mfm_backward(&g, &tie).map_err(err)?;
    ensure!(ta.bit_eq(&g), "ties must route to the first half");
    ensure!(tb.data().iter().all(|v| *v == 0.0), "ties leaked into the second half");
    Ok(format!(
        "complementary masks, {zeros}/{} candidate-gradient entries zero (50%), ties to first half",
        2 * n
    ))
}

fn ac4_params() -> Outcome {
    let config = NetworkConfig::paper(10575, Activation::Mfm);
    let counts = count_params(&config).map_err(err)?;
    // Closed form from the table: each MFM layer holds two convolutions.
    let conv = |k: usize, cin: usize, cout: usize| 2 * (k * k * cin * cout + cout);
    let expected = [
        ("conv1", conv(9, 1, 48)),
        ("conv2", conv(5, 48, 96)),
        ("conv3", conv(5, 96, 128)),
        ("conv4", conv(4, 128, 192)),
        ("fc1", 5 * 5 * 192 * 256 + 256),
        ("fc2", 256 * 10575 + 10575),
    ];
    ensure!(
        counts.per_layer.len() == expected.len(),
        "{} itemized layers",
        counts.per_layer.len()
    );
    for (row, (name, n)) in counts.per_layer.iter().zip(expected) {
        ensure!(
            row.layer == name && row.count == n,
            "{}={} expected {name}={n}",
            row.layer,
            row.count
        );
    }
    let total: usize = expected.iter().map(|e| e.1).sum();
    ensure!(counts.total == total, "total {} != {total}", counts.total);
    let out = mfmnet(&["info", "--preset", "paper"]);
    ensure!(code(&out) == 0, "info failed: {}", stderr(&out));
    let text = stdout(&out);
    ensure!(
        field(&text, "total_params") == Some(total.to_string()),
        "info total missing"
    );
    ensure!(text.contains("4153K"), "reported figure not displayed");
    Ok(format!(
        "derived {total} itemized over 6 layers, displayed beside 4153K (mismatch documented)"
    ))
}

fn toy_hp() -> HyperParams {
    HyperParams {
        eval_interval: 100,
        ..HyperParams::default()
    }
}

fn ac5_toy_training() -> Outcome {
    let data = toy_identities(&ToySpec {
        identities: 10,
        per_identity: 500,
        ..ToySpec::default()
    });
    let config = NetworkConfig::toy(10, Activation::Mfm);
    ensure!(config.crop_size == (32, 32), "toy crops are {:?}", config.crop_size);
    let hp = toy_hp();
    let mut model = ModelParams::<f32>::init(config, hp.seed).map_err(err)?;
    let opts = TrainOptions {
        stop_at_accuracy: Some(0.95),
        ..TrainOptions::default()
    };
    let state = train(&mut model, &data, &hp, &opts).map_err(err)?;
    let best = state.history.iter().map(|h| h.1).fold(0.0, f64::max);
    ensure!(state.iteration <= 20_000, "ran {} iterations", state.iteration);
    ensure!(
        best >= 0.95,
        "best validation accuracy {best} after {} iterations",
        state.iteration
    );
    let e = &state.epoch_losses;
    ensure!(e.len() >= 2, "only {} complete epochs", e.len());
    let violations = e.windows(2).filter(|w| w[1] > w[0]).count();
    let rate = violations as f64 / (e.len() - 1) as f64;
    ensure!(
        rate <= 0.05,
        "{violations} loss increases over {} epoch transitions",
        e.len() - 1
    );
    Ok(format!(
        "val {best:.2} at iteration {}, {violations}/{} epoch-loss increases",
        state.iteration,
        e.len() - 1
    ))
}

fn ac6_mfm_vs_relu() -> Outcome {
    let data = toy_identities(&ToySpec {
        identities: 10,
        per_identity: 500,
        ..ToySpec::default()
    });
    let n_val = data.positions(Split::Val).len() as f64;
    // Opening stretch of the default schedule.
    let hp = HyperParams {
        max_iters: 2500,
        step_size: Some(4000),
        ..toy_hp()
    };
    let mfm = NetworkConfig::toy(10, Activation::Mfm);
    let cmp = compare_activations(&data, &mfm, &mfm.with_activation(Activation::Relu), &hp).map_err(err)?;
    let csv = cmp.to_csv();
    ensure!(csv.lines().count() == cmp.rows.len() + 1, "csv rows");
    ensure!(
        cmp.rows.windows(2).all(|w| w[0].0 < w[1].0),
        "iterations not increasing"
    );
    let chance = 0.1;
    let band = 3.0 * (chance * (1.0 - chance) / n_val).sqrt();
    let (_, m0, r0) = cmp.rows[0];
    ensure!(
        (m0 - chance).abs() <= band && (r0 - chance).abs() <= band,
        "start {m0}/{r0} outside {chance}±{band:.3}"
    );
    let &(last, mf, rf) = cmp.rows.last().unwrap();
    ensure!(mf > 0.9 && rf > 0.9, "end accuracy mfm {mf} relu {rf} at {last}");
    let first = |pick: fn(&(usize, f64, f64)) -> f64| cmp.rows.iter().find(|r| pick(r) > 0.9).map(|r| r.0);
    Ok(format!(
        "start {m0:.2}/{r0:.2} within chance±{band:.2}; end {mf:.2}/{rf:.2}; first >0.9 at mfm {:?}, relu {:?}",
        first(|r| r.1),
        first(|r| r.2)
    ))
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize, quantize: bool) -> Vec<(f64, bool)> {
    let shift = rng.random_range(0.0..1.5);
    let mut s: Vec<(f64, bool)> = (0..n)
        .map(|_| {
            let same = rng.random_bool(0.5);
            let v: f64 = rng.random_range(-1.0..1.0) + if same { shift } else { 0.0 };
            (if quantize { (v * 8.0).round() / 8.0 } else { v }, same)
        })
        .collect();
    s[0].1 = true;
    s[1].1 = false;
    s
}

fn ac7_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for set in 0..100 {
        let n = rng.random_range(2..=1000);
        let scores = random_scores(&mut rng, n, set % 4 == 0);
        let e = eer(&roc_curve(&scores).map_err(err)?).map_err(err)?;
        let b = oracle::brute_eer(&scores);
        ensure!((e - b).abs() <= 1e-12, "eer set {set}: {e} vs {b}");
        worst = worst.max((e - b).abs());

        let k = rng.random_range(2..=10);
        let per = rng.random_range(2..=(1000 / k).max(2));
        let folds: Vec<Vec<(f64, bool)>> = (0..k).map(|_| random_scores(&mut rng, per, set % 4 == 1)).collect();
        let report = fold_accuracy_scores(&folds).map_err(err)?;
        let brute = oracle::brute_fold_accuracy(&folds);
        for (r, b) in report.folds.iter().zip(&brute) {
            ensure!(
                (r.accuracy - b).abs() <= 1e-12,
                "fold accuracy set {set}: {} vs {b}",
                r.accuracy
            );
            worst = worst.max((r.accuracy - b).abs());
        }
    }
    Ok(format!(
        "100 score sets, eer and fold accuracy vs exhaustive search, max |diff| {worst:.1e}"
    ))
}

fn ac8_verification(dir: &Path) -> Outcome {
    let model_path = dir.join("toy.mfmm");
    save_model(
        &ModelParams::<f32>::init(NetworkConfig::toy(10, Activation::Mfm), 8).map_err(err)?,
        &model_path,
    )
    .map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let image = GrayImage::new(36, 36, (0..36 * 36).map(|_| rng.random()).collect()).map_err(err)?;
    write_pgm(dir.join("face.pgm"), &image).map_err(err)?;
    write_pgm(dir.join("copy.pgm"), &image).map_err(err)?;
    let list = dir.join("list.txt");
    fs::write(&list, "face.pgm\ncopy.pgm\nface.pgm\n").map_err(err)?;
    let emb = dir.join("dup.emb");
    let out = mfmnet(&[
        "extract",
        "--model",
        p(&model_path),
        "--input-list",
        p(&list),
        "--root",
        p(dir),
        "--out",
        p(&emb),
    ]);
    ensure!(code(&out) == 0, "extract failed: {}", stderr(&out));
    let items = read_embeddings::<f32>(&emb).map_err(err)?;
    ensure!(items.len() == 3, "{} embeddings", items.len());
    let mut min_cos: f64 = 1.0;
    for j in 1..3 {
        let c = cosine_similarity(&items[0].1, &items[j].1).map_err(err)?;
        ensure!((c - 1.0).abs() <= 1e-6, "duplicate cosine {c}");
        min_cos = min_cos.min(c);
    }

    // Separable fixture: identities are orthogonal directions plus small noise.
    let dim = 16;
    let mut embeddings = Vec::new();
    for id in 0..dim {
        for k in 0..4 {
            let v: Vec<f32> = (0..dim)
                .map(|j| if j == id { 1.0 } else { 0.0 } + rng.random_range(-0.05..0.05))
                .collect();
            embeddings.push((format!("id{id}/{k}"), Tensor::from_vec(&[dim], v).map_err(err)?));
        }
    }
    let mut folds = Vec::new();
    for fold in 0..10 {
        let mut pairs = Vec::new();
        for j in 0..30 {
            let id = (fold * 7 + j) % dim;
            let other = (id + 1 + j % (dim - 1)) % dim;
            let (k1, k2) = (j % 4, (j + 1) % 4);
            pairs.push(PairSpec {
                a: format!("id{id}/{k1}"),
                b: format!("id{id}/{k2}"),
                same: true,
            });
            pairs.push(PairSpec {
                a: format!("id{id}/{k1}"),
                b: format!("id{other}/{k2}"),
                same: false,
            });
        }
        folds.push(pairs);
    }
    let protocol = Protocol { folds };
    let map = embeddings.iter().cloned().collect();
    let report = fold_accuracy(&protocol, &map).map_err(err)?;
    ensure!(
        report.mean == 1.0 && report.folds.iter().all(|f| f.accuracy == 1.0),
        "fold accuracy {}",
        report.mean
    );

    // Same fixture through the command line.
    let sep = dir.join("sep.emb");
    write_embeddings(&sep, &embeddings).map_err(err)?;
    let pairs_file = dir.join("pairs.txt");
    let text: String = protocol
        .folds
        .iter()
        .map(|f| {
            f.iter()
                .map(|q| format!("{} {} {}\n", q.a, q.b, u8::from(q.same)))
                .collect::<String>()
                + "\n"
        })
        .collect();
    fs::write(&pairs_file, text).map_err(err)?;
    let out = mfmnet(&[
        "verify",
        "--embeddings",
        p(&sep),
        "--pairs",
        p(&pairs_file),
        "--report",
        p(&dir.join("rep")),
    ]);
    ensure!(code(&out) == 0, "verify failed: {}", stderr(&out));
    ensure!(
        field(&stdout(&out), "mean_accuracy").as_deref() == Some("1.000000"),
        "cli accuracy {}",
        stdout(&out)
    );
    Ok(format!(
        "duplicate cosine min {min_cos:.7}; separable fixture 10-fold accuracy 1.0 (library and cli)"
    ))
}

/// Full-size layout with narrow convolutions and a 256-unit embedding.
fn fixture_network(num_classes: usize) -> NetworkConfig {
    let mut config = NetworkConfig::paper(num_classes, Activation::Mfm);
    let mut widths = [4, 8, 8, 8].into_iter();
    for layer in &mut config.layers {
        if let LayerKind::ConvPairMfm { channels, .. } = &mut layer.kind {
            *channels = widths.next().expect("four convolution layers");
        }
    }
    config
}

struct PipelineRun {
    model: Vec<u8>,
    embeddings: Vec<u8>,
    folds_csv: String,
    stdout: String,
}

fn pipeline(dir: &Path, raw_root: &Path, landmarks: &Path, config: &Path) -> Result<PipelineRun, String> {
    let run = |args: &[&str]| -> Result<String, String> {
        let out = mfmnet(&[&["--threads", "1"], args].concat());
        ensure!(code(&out) == 0, "{} exited {}: {}", args[0], code(&out), stderr(&out));
        Ok(stdout(&out))
    };
    let aligned = dir.join("aligned");
    let out = run(&[
        "align",
        "--input-dir",
        p(raw_root),
        "--landmarks",
        p(landmarks),
        "--output-dir",
        p(&aligned),
    ])?;
    ensure!(out.trim() == "processed=100 skipped=0", "align: {out}");
    let model = dir.join("model.mfmm");
    let log = dir.join("train.csv");
    run(&[
        "train",
        "--data",
        p(&aligned),
        "--config",
        p(config),
        "--max-iters",
        "20",
        "--batch-size",
        "16",
        "--eval-interval",
        "10",
        "--seed",
        "5",
        "--out-model",
        p(&model),
        "--log",
        p(&log),
    ])?;
    let log_text = fs::read_to_string(&log).map_err(err)?;
    ensure!(
        log_text.lines().count() == 22,
        "log has {} lines",
        log_text.lines().count()
    );

    let mut names: Vec<String> = Vec::new();
    for id in 0..10 {
        for k in 0..10 {
            names.push(format!("id{id:03}/{k:03}.pgm"));
        }
    }
    let list = dir.join("list.txt");
    fs::write(&list, names.join("\n")).map_err(err)?;
    let emb = dir.join("emb.bin");
    let out = run(&[
        "extract",
        "--model",
        p(&model),
        "--input-list",
        p(&list),
        "--root",
        p(&aligned),
        "--out",
        p(&emb),
    ])?;
    ensure!(field(&out, "extracted").as_deref() == Some("100"), "extract: {out}");
    let items = read_embeddings::<f32>(&emb).map_err(err)?;
    ensure!(items.iter().all(|(_, t)| t.dims() == [256]), "embedding shape");
    ensure!(
        items.iter().map(|i| i.0.as_str()).eq(names.iter().map(String::as_str)),
        "index order"
    );

    let mut pairs = String::new();
    for fold in 0..10 {
        for j in 0..5 {
            let id = (fold + j) % 10;
            pairs += &format!("id{id:03}/{:03}.pgm id{id:03}/{:03}.pgm 1\n", j, j + 5);
            pairs += &format!("id{id:03}/{:03}.pgm id{:03}/{:03}.pgm 0\n", j, (id + 3) % 10, j + 1);
        }
        pairs += "\n";
    }
    let pairs_file = dir.join("pairs.txt");
    fs::write(&pairs_file, pairs).map_err(err)?;
    let report = dir.join("report");
    let out = run(&[
        "verify",
        "--embeddings",
        p(&emb),
        "--pairs",
        p(&pairs_file),
        "--report",
        p(&report),
    ])?;
    for key in ["mean_accuracy", "eer", "one_minus_eer"] {
        let v: f64 = field(&out, key).ok_or(format!("no {key}"))?.parse().map_err(err)?;
        ensure!((0.0..=1.0).contains(&v), "{key}={v}");
    }
    let folds_csv = fs::read_to_string(report.join("folds.csv")).map_err(err)?;
    ensure!(
        folds_csv.lines().count() == 12 && folds_csv.starts_with("fold,accuracy,threshold\n"),
        "folds.csv"
    );
    let roc = fs::read_to_string(report.join("roc.csv")).map_err(err)?;
    let pts: Vec<(f64, f64)> = roc
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[1], f[2])
        })
        .collect();
    ensure!(
        pts.first() == Some(&(0.0, 0.0)) && pts.last() == Some(&(1.0, 1.0)),
        "roc endpoints"
    );
    ensure!(
        pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1),
        "roc not monotone"
    );
    Ok(PipelineRun {
        model: fs::read(&model).map_err(err)?,
        embeddings: fs::read(&emb).map_err(err)?,
        folds_csv,
        stdout: out,
    })
}

fn ac9_pipeline(dir: &Path) -> Outcome {
    let fx = write_face_fixture(dir.join("raw"), 10, 10, 180, 9).map_err(err)?;
    let config = dir.join("net.toml");
    fixture_network(10).save(&config).map_err(err)?;
    ensure!(fixture_network(10).embedding_dim() == Some(256), "embedding width");
    let a = pipeline(&dir.join("run1"), &fx.image_root, &fx.landmark_file, &config)?;
    let b = pipeline(&dir.join("run2"), &fx.image_root, &fx.landmark_file, &config)?;
    ensure!(a.model == b.model, "models differ between runs");
    ensure!(a.embeddings == b.embeddings, "embeddings differ between runs");
    ensure!(
        a.folds_csv == b.folds_csv && a.stdout == b.stdout,
        "reports differ between runs"
    );
    let img = read_pgm(dir.join("run1/aligned/id000/000.pgm")).map_err(err)?;
    ensure!((img.width, img.height) == (144, 144), "aligned size");
    Ok(format!(
        "100 images align->train->extract->verify, 256-d embeddings, reports well-formed, repeat run identical; {}",
        a.stdout.split_whitespace().collect::<Vec<_>>().join(" ")
    ))
}

fn ac10_serialization(dir: &Path) -> Outcome {
    for (i, act) in [Activation::Mfm, Activation::Relu].into_iter().enumerate() {
        let m = build_paper_network::<f32>(10575, act, 10).map_err(err)?;
        let path = dir.join(format!("m{i}.mfmm"));
        save_model(&m, &path).map_err(err)?;
        let back = load_model::<f32>(&path).map_err(err)?;
        ensure!(back.bit_eq(&m), "f32 model round trip");
        ensure!(
            encode_model(&back) == fs::read(&path).map_err(err)?,
            "re-encoding differs"
        );
    }
    let m64 = ModelParams::<f64>::init(NetworkConfig::toy(7, Activation::Mfm), 3).map_err(err)?;
    ensure!(
        decode_model::<f64>(&encode_model(&m64)).map_err(err)?.bit_eq(&m64),
        "f64 model round trip"
    );

    let specials = [
        0.0f32,
        -0.0,
        1e-45,
        -1e-45,
        f32::MIN_POSITIVE,
        f32::MAX,
        f32::INFINITY,
        f32::NEG_INFINITY,
        f32::NAN,
        1.0 / 3.0,
    ];
    let t = Tensor::<f32>::from_vec(&[2, 5], specials.to_vec()).map_err(err)?;
    write_tensor(&t, dir.join("t.mfmt")).map_err(err)?;
    let back = read_tensor::<f32>(dir.join("t.mfmt")).map_err(err)?;
    ensure!(back.dims() == t.dims(), "tensor dims");
    ensure!(
        back.data()
            .iter()
            .zip(t.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        "tensor bits"
    );
    let t64 = Tensor::<f64>::from_vec(&[3], vec![-0.0, f64::MIN_POSITIVE / 2.0, std::f64::consts::PI]).map_err(err)?;
    write_tensor(&t64, dir.join("t64.mfmt")).map_err(err)?;
    ensure!(
        read_tensor::<f64>(dir.join("t64.mfmt")).map_err(err)?.bit_eq(&t64),
        "f64 tensor bits"
    );

    let data = dir.join("toy");
    let images = write_toy_dataset(
        &data,
        &ToySpec {
            identities: 5,
            per_identity: 20,
            ..ToySpec::default()
        },
    );
    // Model, log and embedding bytes of one train+extract invocation pair.
    let run = |tag: &str| -> Result<[Vec<u8>; 3], String> {
        let model = dir.join(format!("{tag}.mfmm"));
        let log = dir.join(format!("{tag}.csv"));
        let emb = dir.join(format!("{tag}.emb"));
        let out = mfmnet(&[
            "--threads",
            "1",
            "train",
            "--data",
            p(&data),
            "--preset",
            "toy",
            "--max-iters",
            "40",
            "--batch-size",
            "16",
            "--eval-interval",
            "10",
            "--seed",
            "4",
            "--out-model",
            p(&model),
            "--log",
            p(&log),
        ]);
        ensure!(code(&out) == 0, "train: {}", stderr(&out));
        let list = dir.join("list.txt");
        fs::write(&list, images.join("\n")).map_err(err)?;
        let out = mfmnet(&[
            "--threads",
            "1",
            "extract",
            "--model",
            p(&model),
            "--input-list",
            p(&list),
            "--root",
            p(&data),
            "--out",
            p(&emb),
        ]);
        ensure!(code(&out) == 0, "extract: {}", stderr(&out));
        let mut emb_bytes = fs::read(&emb).map_err(err)?;
        emb_bytes.extend(fs::read(index_path(&emb)).map_err(err)?);
        Ok([fs::read(&model).map_err(err)?, fs::read(&log).map_err(err)?, emb_bytes])
    };
    let first = run("a")?;
    let second = run("b")?;
    ensure!(first[0] == second[0], "models differ across --threads 1 invocations");
    ensure!(first[1] == second[1], "training logs differ");
    ensure!(first[2] == second[2], "embeddings differ");
    Ok("model (f32/f64) and tensor round trips bit-exact incl. NaN/inf/-0/subnormals; --threads 1 train+extract identical twice".into())
}

fn run_criterion(n: usize, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let elapsed = start.elapsed();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("AC{n:<2} {tag} {title}: {detail} [{}]", fmt_secs(elapsed));
    outcome.is_ok()
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let sub = |name: &str| {
        let d = dir.path().join(name);
        fs::create_dir_all(&d).expect("temp subdir");
        d
    };
    let results = [
        run_criterion(1, "shape conformance", ac1_shapes),
        run_criterion(2, "gradient suite", ac2_gradients),
        run_criterion(3, "MFM invariants", ac3_mfm),
        run_criterion(4, "parameter accounting", ac4_params),
        run_criterion(5, "toy training", ac5_toy_training),
        run_criterion(6, "MFM vs ReLU", ac6_mfm_vs_relu),
        run_criterion(7, "EER/ROC oracle", ac7_oracles),
        run_criterion(8, "verification pipeline", || ac8_verification(&sub("ac8"))),
        run_criterion(9, "fixture pipeline", || ac9_pipeline(&sub("ac9"))),
        run_criterion(10, "serialization and determinism", || ac10_serialization(&sub("ac10"))),
    ];
    let passed = results.iter().filter(|ok| **ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
