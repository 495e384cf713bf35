//! Central finite-difference checks for every backward pass.
//!
//! Each check builds random inputs in `[-1, 1]`, reduces the layer output to a
//! scalar with a fixed random projection, and compares the analytic gradients
//! with `(L(x + h) - L(x - h)) / 2h` evaluated through the forward pass only.
//! Inputs for max-type layers are drawn away from ties and kinks by a margin
//! of at least `10 h`.
//!
//! The reported error for a tensor is `|a - n|_2 / max(|a|_2, |n|_2)`; a
//! layer's error is the maximum over all of its checked tensors.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    conv2d, conv2d_backward, dropout_backward, dropout_forward, fc_backward, fc_forward, maxpool_backward,
    maxpool_forward, mfm_backward, mfm_forward, relu_backward, relu_forward, softmax_xent, Mode,
};
use crate::network::{backward_with_input, forward_logits, Activation, ModelParams, NetworkConfig};
use crate::tensor::{rng_from_seed, Element, Tensor};

/// Deliberate corruption of an analytic gradient, used as a negative control.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Route MFM gradients to the losing candidate instead of the winner.
    MfmBackward,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Threshold for single-layer checks.
    pub layer_tolerance: f64,
    /// Threshold for the end-to-end network checks.
    pub network_tolerance: f64,
    pub seed: u64,
}

impl GradCheckConfig {
    /// `h = 1e-6`, layer tolerance `1e-5`, network tolerance `1e-4`.
    pub fn f64_default(seed: u64) -> Self {
        GradCheckConfig {
            step: 1e-6,
            layer_tolerance: 1e-5,
            network_tolerance: 1e-4,
            seed,
        }
    }

    /// Single precision cannot resolve `h = 1e-6`; a larger step and a 1e-2
    /// tolerance apply.
    pub fn f32_default(seed: u64) -> Self {
        GradCheckConfig {
            step: 1e-3,
            layer_tolerance: 1e-2,
            network_tolerance: 1e-2,
            seed,
        }
    }

    pub fn for_precision<T: Element>(seed: u64) -> Self {
        if T::BYTES == 8 {
            Self::f64_default(seed)
        } else {
            Self::f32_default(seed)
        }
    }

    fn margin(&self) -> f64 {
        (10.0 * self.step).max(1e-4)
    }
}

#[derive(Debug, Clone)]
pub struct LayerReport {
    pub layer: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Coordinates skipped because the perturbation crossed a kink.
    pub excluded: usize,
}

impl LayerReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

impl fmt::Display for LayerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<14} max_rel_error={:.3e} tolerance={:.0e} excluded={} {}",
            self.layer,
            self.max_rel_error,
            self.tolerance,
            self.excluded,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

/// `|a - n|_2 / max(|a|_2, |n|_2)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `loss` w.r.t. every element of `x`.
pub fn numeric_gradient<T: Element>(
    x: &Tensor<T>,
    step: f64,
    mut loss: impl FnMut(&Tensor<T>) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = x.data()[i];
        let plus = T::of(orig.as_f64() + step);
        let minus = T::of(orig.as_f64() - step);
        probe.data_mut()[i] = plus;
        let lp = loss(&probe)?;
        probe.data_mut()[i] = minus;
        let lm = loss(&probe)?;
        probe.data_mut()[i] = orig;
        // the representable step may differ from `step` in low precision
        out.push((lp - lm) / (plus - minus).as_f64());
    }
    Ok(out)
}

/// Like [`numeric_gradient`], but `loss` also reports whether the perturbed
/// evaluation took the same max/ReLU branches as the unperturbed one; where
/// either side of the difference switched branches the entry is `None`.
pub fn numeric_gradient_branchwise<T: Element>(
    x: &Tensor<T>,
    step: f64,
    mut loss: impl FnMut(&Tensor<T>) -> Result<(f64, bool)>,
) -> Result<Vec<Option<f64>>> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = x.data()[i];
        let plus = T::of(orig.as_f64() + step);
        let minus = T::of(orig.as_f64() - step);
        probe.data_mut()[i] = plus;
        let (lp, same_p) = loss(&probe)?;
        probe.data_mut()[i] = minus;
        let (lm, same_m) = loss(&probe)?;
        probe.data_mut()[i] = orig;
        out.push((same_p && same_m).then(|| (lp - lm) / (plus - minus).as_f64()));
    }
    Ok(out)
}

fn to_f64<T: Element>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64()).collect()
}

fn uniform<T: Element>(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n: usize = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| T::of(rng.random_range(-1.0..=1.0))).collect()).expect("valid dims")
}

fn project<T: Element>(y: &Tensor<T>, r: &Tensor<T>) -> f64 {
    y.data()
        .iter()
        .zip(r.data())
        .map(|(a, b)| a.as_f64() * b.as_f64())
        .sum()
}

struct Check {
    name: String,
    tolerance: f64,
    worst: f64,
    excluded: usize,
}

impl Check {
    fn new(name: &str, tolerance: f64) -> Self {
        Check {
            name: name.to_string(),
            tolerance,
            worst: 0.0,
            excluded: 0,
        }
    }

    fn compare(&mut self, analytic: &[f64], numeric: &[f64]) {
        let e = relative_error(analytic, numeric);
        self.worst = if e.is_nan() { f64::INFINITY } else { self.worst.max(e) };
    }

    fn compare_branchwise(&mut self, analytic: &[f64], numeric: &[Option<f64>]) {
        let (a, n): (Vec<f64>, Vec<f64>) = analytic
            .iter()
            .zip(numeric)
            .filter_map(|(&a, n)| n.map(|n| (a, n)))
            .unzip();
        self.excluded += analytic.len() - a.len();
        self.compare(&a, &n);
    }

    fn finish(self) -> LayerReport {
        LayerReport {
            layer: self.name,
            max_rel_error: self.worst,
            tolerance: self.tolerance,
            excluded: self.excluded,
        }
    }
}

pub fn check_conv<T: Element>(cfg: &GradCheckConfig) -> Result<LayerReport> {
    let mut rng = rng_from_seed(cfg.seed ^ 0xc0);
    let mut check = Check::new("conv", cfg.layer_tolerance);
    for stride in [1, 2] {
        let x = uniform::<T>(&[2, 2, 5, 5], &mut rng);
        let w = uniform::<T>(&[3, 2, 3, 3], &mut rng);
        let b = uniform::<T>(&[3], &mut rng);
        let (y, cache) = conv2d(&x, &w, &b, stride)?;
        let r = uniform::<T>(y.dims(), &mut rng);
        let g = conv2d_backward(&r, &cache)?;
        let nx = numeric_gradient(&x, cfg.step, |x| Ok(project(&conv2d(x, &w, &b, stride)?.0, &r)))?;
        let nw = numeric_gradient(&w, cfg.step, |w| Ok(project(&conv2d(&x, w, &b, stride)?.0, &r)))?;
        let nb = numeric_gradient(&b, cfg.step, |b| Ok(project(&conv2d(&x, &w, b, stride)?.0, &r)))?;
        check.compare(&to_f64(&g.input), &nx);
        check.compare(&to_f64(&g.weights), &nw);
        check.compare(&to_f64(&g.bias), &nb);
    }
    Ok(check.finish())
}

pub fn check_mfm<T: Element>(cfg: &GradCheckConfig, fault: Option<Fault>) -> Result<LayerReport> {
    let mut rng = rng_from_seed(cfg.seed ^ 0x3f3);
    let a = uniform::<T>(&[2, 3, 4, 4], &mut rng);
    let mut b = uniform::<T>(&[2, 3, 4, 4], &mut rng);
    for (bv, &av) in b.data_mut().iter_mut().zip(a.data()) {
        while (bv.as_f64() - av.as_f64()).abs() < cfg.margin() {
            *bv = T::of(rng.random_range(-1.0..=1.0));
        }
    }
    let (y, cache) = mfm_forward(&a, &b)?;
    let r = uniform::<T>(y.dims(), &mut rng);
    let (mut ga, mut gb) = mfm_backward(&r, &cache)?;
    if fault == Some(Fault::MfmBackward) {
        std::mem::swap(&mut ga, &mut gb);
    }
    let na = numeric_gradient(&a, cfg.step, |a| Ok(project(&mfm_forward(a, &b)?.0, &r)))?;
    let nb = numeric_gradient(&b, cfg.step, |b| Ok(project(&mfm_forward(&a, b)?.0, &r)))?;
    let mut check = Check::new("mfm", cfg.layer_tolerance);
    check.compare(&to_f64(&ga), &na);
    check.compare(&to_f64(&gb), &nb);
    Ok(check.finish())
}

pub fn check_relu<T: Element>(cfg: &GradCheckConfig) -> Result<LayerReport> {
    let mut rng = rng_from_seed(cfg.seed ^ 0x4e1);
    let mut x = uniform::<T>(&[2, 3, 4, 4], &mut rng);
    for v in x.data_mut() {
        while v.as_f64().abs() < cfg.margin() {
            *v = T::of(rng.random_range(-1.0..=1.0));
        }
    }
    let (y, cache) = relu_forward(&x);
    let r = uniform::<T>(y.dims(), &mut rng);
    let g = relu_backward(&r, &cache)?;
    let n = numeric_gradient(&x, cfg.step, |x| Ok(project(&relu_forward(x).0, &r)))?;
    let mut check = Check::new("relu", cfg.layer_tolerance);
    check.compare(&to_f64(&g), &n);
    Ok(check.finish())
}

pub fn check_maxpool<T: Element>(cfg: &GradCheckConfig) -> Result<LayerReport> {
    let mut rng = rng_from_seed(cfg.seed ^ 0x9001);
    // distinct values spaced well beyond the step keep every window maximum unique
    let count = 2 * 7 * 7;
    let mut values: Vec<f64> = (0..count).map(|i| -1.0 + 2.0 * i as f64 / (count - 1) as f64).collect();
    values.shuffle(&mut rng);
    let x = Tensor::from_vec(&[1, 2, 7, 7], values.into_iter().map(T::of).collect())?;
    let (y, cache) = maxpool_forward(&x, 2, 2)?;
    let r = uniform::<T>(y.dims(), &mut rng);
    let g = maxpool_backward(&r, &cache)?;
    let n = numeric_gradient(&x, cfg.step, |x| Ok(project(&maxpool_forward(x, 2, 2)?.0, &r)))?;
    let mut check = Check::new("maxpool", cfg.layer_tolerance);
    check.compare(&to_f64(&g), &n);
    Ok(check.finish())
}

pub fn check_fc<T: Element>(cfg: &GradCheckConfig) -> Result<LayerReport> {
    let mut rng = rng_from_seed(cfg.seed ^ 0xfc);
    let x = uniform::<T>(&[3, 4], &mut rng);
    let w = uniform::<T>(&[5, 4], &mut rng);
    let b = uniform::<T>(&[5], &mut rng);
    let (y, cache) = fc_forward(&x, &w, &b)?;
    let r = uniform::<T>(y.dims(), &mut rng);
    let g = fc_backward(&r, &cache)?;
    let nx = numeric_gradient(&x, cfg.step, |x| Ok(project(&fc_forward(x, &w, &b)?.0, &r)))?;
    let nw = numeric_gradient(&w, cfg.step, |w| Ok(project(&fc_forward(&x, w, &b)?.0, &r)))?;
    let nb = numeric_gradient(&b, cfg.step, |b| Ok(project(&fc_forward(&x, &w, b)?.0, &r)))?;
    let mut check = Check::new("fc", cfg.layer_tolerance);
    check.compare(&to_f64(&g.input), &nx);
    check.compare(&to_f64(&g.weights), &nw);
    check.compare(&to_f64(&g.bias), &nb);
    Ok(check.finish())
}

pub fn check_dropout<T: Element>(cfg: &GradCheckConfig) -> Result<LayerReport> {
    let mut rng = rng_from_seed(cfg.seed ^ 0xd0);
    let x = uniform::<T>(&[4, 6], &mut rng);
    let mask_seed: u64 = rng.random();
    let (y, cache) = dropout_forward(&x, 0.7, Mode::Train, mask_seed)?;
    let r = uniform::<T>(y.dims(), &mut rng);
    let g = dropout_backward(&r, &cache)?;
    let n = numeric_gradient(&x, cfg.step, |x| {
        Ok(project(&dropout_forward(x, 0.7, Mode::Train, mask_seed)?.0, &r))
    })?;
    let mut check = Check::new("dropout", cfg.layer_tolerance);
    check.compare(&to_f64(&g), &n);
    Ok(check.finish())
}

pub fn check_softmax_xent<T: Element>(cfg: &GradCheckConfig) -> Result<LayerReport> {
    let mut rng = rng_from_seed(cfg.seed ^ 0x50f7);
    let logits = uniform::<T>(&[3, 5], &mut rng).map(|v| v * T::of(3.0));
    let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..5)).collect();
    let (_, g) = softmax_xent(&logits, &labels)?;
    let n = numeric_gradient(&logits, cfg.step, |z| Ok(softmax_xent(z, &labels)?.0.as_f64()))?;
    let mut check = Check::new("softmax-xent", cfg.layer_tolerance);
    check.compare(&to_f64(&g), &n);
    Ok(check.finish())
}

/// [`check_network_config`] on the tiny two-block network.
pub fn check_network<T: Element>(cfg: &GradCheckConfig, activation: Activation) -> Result<LayerReport> {
    check_network_config::<T>(cfg, &NetworkConfig::tiny(4, activation))
}

/// Full backprop (train mode, fixed dropout mask) against finite differences
/// of the mean cross-entropy, for every parameter tensor and the input.
/// Coordinates whose perturbation switches any max or ReLU branch are skipped.
pub fn check_network_config<T: Element>(cfg: &GradCheckConfig, config: &NetworkConfig) -> Result<LayerReport> {
    config.validate()?;
    let mut rng = rng_from_seed(cfg.seed ^ 0xe2e);
    let activation = config
        .activation()
        .ok_or_else(|| Error::InvalidConfig("mixed activations".into()))?;
    let (ch, cw) = config.crop_size;
    let classes = config.num_classes;
    let mut model = ModelParams::<T>::init(config.clone(), rng.random())?;
    // non-zero biases so every bias gradient path is exercised
    for p in model.params_mut() {
        if p.name.ends_with(".bias") {
            for v in p.value.data_mut() {
                *v = T::of(rng.random_range(-0.1..=0.1));
            }
        }
    }
    let x = uniform::<T>(&[2, 1, ch, cw], &mut rng);
    let labels: Vec<usize> = (0..2).map(|_| rng.random_range(0..classes)).collect();
    let mask_seed: u64 = rng.random();

    let (logits, cache) = forward_logits(&model, &x, Mode::Train, mask_seed)?;
    let (_, grad_logits) = softmax_xent(&logits, &labels)?;
    let (grads, grad_input) = backward_with_input(&model, &cache, &grad_logits)?;

    let loss_of = |m: &ModelParams<T>, x: &Tensor<T>| -> Result<(f64, bool)> {
        let (logits, probe) = forward_logits(m, x, Mode::Train, mask_seed)?;
        Ok((softmax_xent(&logits, &labels)?.0.as_f64(), probe.same_branches(&cache)))
    };
    let mut check = Check::new(&format!("network-{activation}"), cfg.network_tolerance);
    let nx = numeric_gradient_branchwise(&x, cfg.step, |x| loss_of(&model, x))?;
    check.compare_branchwise(&to_f64(&grad_input), &nx);
    for (k, grad) in grads.iter().enumerate() {
        let value = model.params()[k].value.clone();
        let numeric = numeric_gradient_branchwise(&value, cfg.step, |v| {
            model.params_mut()[k].value = v.clone();
            loss_of(&model, &x)
        })?;
        model.params_mut()[k].value = value;
        check.compare_branchwise(&to_f64(grad), &numeric);
    }
    Ok(check.finish())
}

/// Every layer check followed by the end-to-end checks for both activations.
pub fn run_suite<T: Element>(cfg: &GradCheckConfig, fault: Option<Fault>) -> Result<Vec<LayerReport>> {
    run_suite_with::<T>(cfg, fault, &NetworkConfig::tiny(4, Activation::Mfm))
}

/// [`run_suite`] with `network` (in both activations) as the end-to-end model.
pub fn run_suite_with<T: Element>(
    cfg: &GradCheckConfig,
    fault: Option<Fault>,
    network: &NetworkConfig,
) -> Result<Vec<LayerReport>> {
    Ok(vec![
        check_conv::<T>(cfg)?,
        check_mfm::<T>(cfg, fault)?,
        check_relu::<T>(cfg)?,
        check_maxpool::<T>(cfg)?,
        check_fc::<T>(cfg)?,
        check_dropout::<T>(cfg)?,
        check_softmax_xent::<T>(cfg)?,
        check_network_config::<T>(cfg, &network.with_activation(Activation::Mfm))?,
        check_network_config::<T>(cfg, &network.with_activation(Activation::Relu))?,
    ])
}
