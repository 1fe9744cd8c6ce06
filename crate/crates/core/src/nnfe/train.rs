use log::debug;
use ndarray::{ArrayView2, Axis};

use super::{
    one_cycle_lr, Activation, Architecture, CodecLayer, CodecSpec, MlpModel, NnError, Standardizer, TrainConfig,
    MIN_ALPHA,
};
use crate::rng::{self, stream_rng};

/// Mini-batch SGD with momentum under the one-cycle schedule.
///
/// With `codec = Some(..)` the HD codec sits between the PACT output and the
/// head during every forward pass (encoder-aware training); otherwise the
/// head reads the features directly. The l2 term is applied as a proximal
/// shrink `w ← w / (1 + 2·lr·l2)` after each momentum step, which keeps
/// very large coefficients stable. Each epoch reshuffles the data and runs
/// exactly `steps_per_epoch` batches, cycling through or subsampling the
/// shuffled order as needed.
pub fn train(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    arch: &Architecture,
    codec: Option<CodecSpec>,
    config: &TrainConfig,
) -> Result<MlpModel, NnError> {
    config.validate()?;
    arch.validate()?;
    if x.nrows() == 0 {
        return Err(NnError::EmptyDataset);
    }
    if x.ncols() != arch.input_dim {
        return Err(NnError::Shape { expected: arch.input_dim, found: x.ncols() });
    }

    let mut model = MlpModel::init(arch, config.rng_seed)?;
    model.config = config.clone();
    model.check_labels(x.nrows(), labels)?;
    if config.standardize {
        model.set_normalizer(Some(Standardizer::fit(x)))?;
    }
    if let Some(spec) = codec {
        model.set_codec(Some(CodecLayer::new(arch.feature_dim(), spec)?))?;
    }

    let n = x.nrows();
    let batch = config.batch_size.min(n);
    let mut velocity = model.parameters();
    velocity.iter_mut().for_each(|v| *v = 0.0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut order_rng = stream_rng(config.rng_seed, rng::stream::BATCH_ORDER);
    let decay_mask = model.decay_mask();

    let mut step = 0;
    for epoch in 0..config.epochs {
        rng::shuffle(&mut order, &mut order_rng);
        let mut epoch_loss = 0.0;
        for s in 0..config.steps_per_epoch {
            let idx: Vec<usize> = (0..batch).map(|i| order[(s * batch + i) % n]).collect();
            let xb = x.select(Axis(0), &idx);
            let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let lr = one_cycle_lr(step, config)?;

            let (data_loss, grad) = model.loss_and_gradient(xb.view(), &yb, 0.0)?;
            let loss = data_loss + model.l2_penalty(config.l2_coeff);
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch, step: s, loss, lr });
            }
            epoch_loss += loss;

            let mut params = model.parameters();
            let shrink = 1.0 / (1.0 + 2.0 * lr * config.l2_coeff);
            for (((p, v), g), &decays) in params.iter_mut().zip(&mut velocity).zip(&grad).zip(&decay_mask) {
                *v = config.momentum * *v + g;
                *p -= lr * *v;
                if decays {
                    *p *= shrink;
                }
            }
            model.set_parameters(&params)?;
            model.clamp_alphas();
            step += 1;
        }
        let mean = epoch_loss / config.steps_per_epoch as f64;
        debug!("epoch {epoch}: loss {mean:.6}");
        model.loss_history.push(mean);
    }
    Ok(model)
}

impl MlpModel {
    /// `true` for parameters under the l2 penalty (weights and PACT bounds).
    fn decay_mask(&self) -> Vec<bool> {
        let mut mask = Vec::new();
        for layer in &self.layers {
            mask.extend(std::iter::repeat_n(true, layer.dense.weights.len()));
            mask.extend(std::iter::repeat_n(false, layer.dense.biases.len()));
            if layer.activation.alpha().is_some() {
                mask.push(true);
            }
        }
        mask.extend(std::iter::repeat_n(true, self.head.weights.len()));
        mask.extend(std::iter::repeat_n(false, self.head.biases.len()));
        mask
    }

    fn clamp_alphas(&mut self) {
        for layer in &mut self.layers {
            if let Activation::Pact { alpha } = &mut layer.activation {
                *alpha = alpha.max(MIN_ALPHA);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnfe::ActivationKind;
    use ndarray::Array2;

    /// Two well-separated Gaussian-ish blobs in 2-D built from a fixed
    /// low-discrepancy pattern.
    fn blobs(n: usize) -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let t = i as f64 * 0.618_033_988_75;
            let (dx, dy) = ((t * std::f64::consts::TAU).sin() * 0.6, (t * 3.7).cos() * 0.6);
            let centre = if class == 0 { -1.5 } else { 1.5 };
            x[[i, 0]] = centre + dx;
            x[[i, 1]] = centre + dy;
            y.push(class + 1);
        }
        (x, y)
    }

    fn small_config(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, batch_size: 32, steps_per_epoch: 5, max_lr: 0.1, rng_seed: 11, ..TrainConfig::default() }
    }

    #[test]
    fn learns_separable_toy_set_with_codec() {
        let (x, y) = blobs(200);
        let arch = Architecture::two_layer(2, 8, 2);
        let model =
            train(x.view(), &y, &arch, Some(CodecSpec { dim: 64, levels: 4, seed: 5 }), &small_config(50)).unwrap();
        let pred = model.predict(x.view()).unwrap();
        let acc = pred.iter().zip(&y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
        assert!(model.is_encoder_aware());
        assert_eq!(model.loss_history().len(), 50);
    }

    #[test]
    fn same_seed_same_history() {
        let (x, y) = blobs(100);
        let arch = Architecture::two_layer(2, 6, 2);
        let codec = Some(CodecSpec { dim: 32, levels: 4, seed: 1 });
        let a = train(x.view(), &y, &arch, codec, &small_config(5)).unwrap();
        let b = train(x.view(), &y, &arch, codec, &small_config(5)).unwrap();
        assert_eq!(a.loss_history(), b.loss_history());
        assert_eq!(a, b);
    }

    #[test]
    fn huge_l2_drives_weights_to_zero() {
        let (x, y) = blobs(100);
        let arch = Architecture::two_layer(2, 6, 2);
        let cfg = TrainConfig { l2_coeff: 1e9, ..small_config(10) };
        let model = train(x.view(), &y, &arch, None, &cfg).unwrap();
        let max_w = model
            .layers()
            .iter()
            .flat_map(|l| l.dense.weights.iter())
            .chain(model.head().weights.iter())
            .fold(0.0f64, |m, w| m.max(w.abs()));
        assert!(max_w < 1e-6, "largest weight {max_w}");
        let last = *model.loss_history().last().unwrap();
        assert!((last - 2f64.ln()).abs() < 1e-2, "loss {last}");
    }

    #[test]
    fn small_step_decreases_loss() {
        let (x, y) = blobs(64);
        let arch = Architecture {
            input_dim: 2,
            hidden: vec![(5, ActivationKind::Relu), (4, ActivationKind::Pact)],
            classes: 2,
        };
        let mut model = MlpModel::init(&arch, 3).unwrap();
        let (before, grad) = model.loss_and_gradient(x.view(), &y, 1e-4).unwrap();
        let params: Vec<f64> = model.parameters().iter().zip(&grad).map(|(p, g)| p - 1e-3 * g).collect();
        model.set_parameters(&params).unwrap();
        let after = model.loss(x.view(), &y, 1e-4).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, y) = blobs(10);
        let arch = Architecture::two_layer(2, 4, 2);
        let bad_labels: Vec<usize> = y.iter().map(|&l| l + 5).collect();
        assert!(matches!(
            train(x.view(), &bad_labels, &arch, None, &small_config(1)),
            Err(NnError::LabelOutOfRange { .. })
        ));
        let cfg = TrainConfig { epochs: 0, ..small_config(1) };
        assert!(matches!(train(x.view(), &y, &arch, None, &cfg), Err(NnError::Config(_))));
        let wide = Architecture::two_layer(3, 4, 2);
        assert!(matches!(train(x.view(), &y, &wide, None, &small_config(1)), Err(NnError::Shape { .. })));
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = blobs(50);
        let arch = Architecture::two_layer(2, 4, 2);
        let cfg = TrainConfig { max_lr: 1e200, ..small_config(3) };
        assert!(matches!(
            train(x.view(), &y, &arch, None, &cfg),
            Err(NnError::Diverged { .. } | NnError::NonFinite { .. })
        ));
    }
}
