use rand::Rng;

use super::config::LayerKind;
use super::model::ModelParams;
use crate::error::{Error, Result};
use crate::layers::{
    conv2d, conv2d_backward, dropout_backward, dropout_forward, fc_backward, fc_forward, maxpool_backward,
    maxpool_forward, mfm_backward, mfm_forward, relu_backward, relu_forward, ConvCache, DropoutCache, FcCache,
    MfmCache, Mode, PoolCache, ReluCache,
};
use crate::tensor::{rng_from_seed, Element, Tensor};

enum StepCache<T: Element> {
    ConvMfm {
        first: ConvCache<T>,
        second: ConvCache<T>,
        mfm: MfmCache,
        param: usize,
    },
    ConvRelu {
        conv: ConvCache<T>,
        relu: ReluCache,
        param: usize,
    },
    Pool(PoolCache),
    Fc {
        cache: FcCache<T>,
        /// Shape of the 4-D input when the layer flattened it.
        unflatten: Option<Vec<usize>>,
        param: usize,
    },
    Dropout(DropoutCache<T>),
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache<T: Element> {
    steps: Vec<StepCache<T>>,
    param_count: usize,
}

/// Output shape of every named stage of one forward pass.
pub type ForwardTrace = Vec<(String, Vec<usize>)>;

impl<T: Element> ForwardCache<T> {
    /// Whether two passes selected the same MFM winners, ReLU active sets and
    /// pooling positions, i.e. lie on the same linear piece of the network.
    pub fn same_branches(&self, other: &ForwardCache<T>) -> bool {
        self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| match (a, b) {
                (StepCache::ConvMfm { mfm: x, .. }, StepCache::ConvMfm { mfm: y, .. }) => {
                    x.first_wins() == y.first_wins()
                }
                (StepCache::ConvRelu { relu: x, .. }, StepCache::ConvRelu { relu: y, .. }) => x.active() == y.active(),
                (StepCache::Pool(x), StepCache::Pool(y)) => x.argmax() == y.argmax(),
                (StepCache::Fc { .. }, StepCache::Fc { .. }) | (StepCache::Dropout(_), StepCache::Dropout(_)) => true,
                _ => false,
            })
    }
}

struct Run<T: Element> {
    output: Tensor<T>,
    steps: Vec<StepCache<T>>,
}

fn check_batch<T: Element>(model: &ModelParams<T>, batch: &Tensor<T>) -> Result<()> {
    let (_, c, h, w) = batch.shape().nchw()?;
    let (ch, cw) = model.config.crop_size;
    if c != 1 || (h, w) != (ch, cw) {
        return Err(Error::shape(format!(
            "network expects [N, 1, {ch}, {cw}] input, got {}",
            batch.shape()
        )));
    }
    Ok(())
}

/// Runs layers `0..=last` of the stack.
fn run<T: Element>(
    model: &ModelParams<T>,
    batch: &Tensor<T>,
    mode: Mode,
    seed: u64,
    last: usize,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<Run<T>> {
    check_batch(model, batch)?;
    let mut record = |name: String, t: &Tensor<T>| {
        if let Some(tr) = trace.as_deref_mut() {
            tr.push((name, t.dims().to_vec()));
        }
    };
    let p = &model.params;
    let mut rng = rng_from_seed(seed);
    let mut x = batch.clone();
    let mut steps = Vec::with_capacity(last + 1);
    let mut param = 0;
    let mut block = 0;
    for layer in &model.config.layers[..=last] {
        let name = &layer.name;
        match layer.kind {
            LayerKind::ConvPairMfm { stride, .. } => {
                block += 1;
                let (a, first) = conv2d(&x, &p[param].value, &p[param + 1].value, stride)?;
                let (b, second) = conv2d(&x, &p[param + 2].value, &p[param + 3].value, stride)?;
                record(format!("{name}_1"), &a);
                record(format!("{name}_2"), &b);
                let (y, mfm) = mfm_forward(&a, &b)?;
                record(format!("mfm{block}"), &y);
                steps.push(StepCache::ConvMfm {
                    first,
                    second,
                    mfm,
                    param,
                });
                param += 4;
                x = y;
            }
            LayerKind::ReluConv { stride, .. } => {
                block += 1;
                let (a, conv) = conv2d(&x, &p[param].value, &p[param + 1].value, stride)?;
                record(name.clone(), &a);
                let (y, relu) = relu_forward(&a);
                record(format!("relu{block}"), &y);
                steps.push(StepCache::ConvRelu { conv, relu, param });
                param += 2;
                x = y;
            }
            LayerKind::Maxpool { kernel, stride } => {
                let (y, cache) = maxpool_forward(&x, kernel, stride)?;
                record(name.clone(), &y);
                steps.push(StepCache::Pool(cache));
                x = y;
            }
            LayerKind::Fc { .. } => {
                let unflatten = (x.shape().rank() != 2).then(|| x.dims().to_vec());
                let flat = if unflatten.is_some() {
                    let n = x.dims()[0];
                    let d = x.numel() / n;
                    x.reshape(&[n, d])?
                } else {
                    x
                };
                let (y, cache) = fc_forward(&flat, &p[param].value, &p[param + 1].value)?;
                record(name.clone(), &y);
                steps.push(StepCache::Fc {
                    cache,
                    unflatten,
                    param,
                });
                param += 2;
                x = y;
            }
            LayerKind::Dropout { ratio } => {
                let (y, cache) = dropout_forward(&x, ratio, mode, rng.random())?;
                record(name.clone(), &y);
                steps.push(StepCache::Dropout(cache));
                x = y;
            }
        }
    }
    Ok(Run { output: x, steps })
}

/// Class logits `[N, num_classes]` for a batch of `[N, 1, crop_h, crop_w]` inputs.
///
/// `seed` drives the dropout masks in train mode and is ignored in eval mode.
pub fn forward_logits<T: Element>(
    model: &ModelParams<T>,
    batch: &Tensor<T>,
    mode: Mode,
    seed: u64,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    let last = model.config.layers.len() - 1;
    let run = run(model, batch, mode, seed, last, None)?;
    let cache = ForwardCache {
        steps: run.steps,
        param_count: model.params.len(),
    };
    Ok((run.output, cache))
}

/// Eval-mode forward pass recording the output shape of every stage.
pub fn forward_trace<T: Element>(model: &ModelParams<T>, batch: &Tensor<T>) -> Result<(Tensor<T>, ForwardTrace)> {
    let mut trace = ForwardTrace::new();
    let last = model.config.layers.len() - 1;
    let run = run(model, batch, Mode::Eval, 0, last, Some(&mut trace))?;
    Ok((run.output, trace))
}

/// Embedding-layer activations `[N, embedding_dim]`, eval mode.
///
/// Layers after the embedding layer are not evaluated.
pub fn extract_embedding<T: Element>(model: &ModelParams<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
    let last = model
        .config
        .embedding_layer()
        .expect("validated configs always have an embedding layer");
    Ok(run(model, batch, Mode::Eval, 0, last, None)?.output)
}

/// Gradients of the loss w.r.t. every parameter tensor, aligned with
/// [`ModelParams::params`], given the gradient w.r.t. the logits.
pub fn backward<T: Element>(
    model: &ModelParams<T>,
    cache: &ForwardCache<T>,
    grad_logits: &Tensor<T>,
) -> Result<Vec<Tensor<T>>> {
    Ok(backward_with_input(model, cache, grad_logits)?.0)
}

/// Like [`backward`], also returning the gradient w.r.t. the network input.
pub fn backward_with_input<T: Element>(
    model: &ModelParams<T>,
    cache: &ForwardCache<T>,
    grad_logits: &Tensor<T>,
) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
    if cache.param_count != model.params.len() || cache.steps.len() != model.config.layers.len() {
        return Err(Error::shape("forward cache does not belong to this model"));
    }
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; model.params.len()];
    let mut g = grad_logits.clone();
    for step in cache.steps.iter().rev() {
        g = match step {
            StepCache::ConvMfm {
                first,
                second,
                mfm,
                param,
            } => {
                let (ga, gb) = mfm_backward(&g, mfm)?;
                let da = conv2d_backward(&ga, first)?;
                let db = conv2d_backward(&gb, second)?;
                let mut gi = da.input;
                gi.add_assign(&db.input)?;
                grads[*param] = Some(da.weights);
                grads[param + 1] = Some(da.bias);
                grads[param + 2] = Some(db.weights);
                grads[param + 3] = Some(db.bias);
                gi
            }
            StepCache::ConvRelu { conv, relu, param } => {
                let ga = relu_backward(&g, relu)?;
                let d = conv2d_backward(&ga, conv)?;
                grads[*param] = Some(d.weights);
                grads[param + 1] = Some(d.bias);
                d.input
            }
            StepCache::Pool(cache) => maxpool_backward(&g, cache)?,
            StepCache::Fc {
                cache,
                unflatten,
                param,
            } => {
                let d = fc_backward(&g, cache)?;
                grads[*param] = Some(d.weights);
                grads[param + 1] = Some(d.bias);
                match unflatten {
                    Some(dims) => d.input.reshape(dims)?,
                    None => d.input,
                }
            }
            StepCache::Dropout(cache) => dropout_backward(&g, cache)?,
        };
    }
    let grads = grads
        .into_iter()
        .map(|g| g.expect("every parameter receives a gradient"))
        .collect();
    Ok((grads, g))
}
