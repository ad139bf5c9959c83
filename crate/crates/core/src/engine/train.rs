use super::loss::{bce_loss, DEFAULT_THRESHOLD};
use super::network::Network;
use super::optim::{sgd_momentum_step, OptimizerState, DEFAULT_LEARNING_RATE, DEFAULT_MOMENTUM};
use super::tensor::Tensor;
use super::{shape_err, EngineError, Real};
use crate::raster::{BinaryMask, GrayImage, LabeledImage};
use crate::rng::SplitMix;

/// One training pair. Both tensors are `(1, channels, H, W)`; the target has
/// a single channel of zeros and ones.
#[derive(Debug, Clone)]
pub struct Sample<T: Real> {
    pub image: Tensor<T>,
    pub target: Tensor<T>,
}

impl<T: Real> Sample<T> {
    pub fn new(image: Tensor<T>, target: Tensor<T>) -> Result<Self, EngineError> {
        let [bi, _, hi, wi] = image.shape();
        let [bt, ct, ht, wt] = target.shape();
        if bi != 1 || bt != 1 || ct != 1 || hi != ht || wi != wt {
            return Err(shape_err(format!(
                "sample image {:?} and target {:?} are incompatible",
                image.shape(),
                target.shape()
            )));
        }
        Ok(Self { image, target })
    }

    pub fn from_labeled(img: &LabeledImage) -> Self {
        let [h, w] = [img.height(), img.width()];
        let target = Tensor::from_vec(
            [1, 1, h, w],
            img.mask.values().iter().map(|v| T::from(*v).expect("0 or 1")).collect(),
        )
        .expect("mask fills the canvas");
        Self {
            image: image_tensor(&img.image),
            target,
        }
    }
}

/// Smallest spread used when standardizing, in units of full scale.
const MIN_SPREAD: f64 = 1e-3;

/// `(1, 1, H, W)` network input: intensities shifted and scaled to zero mean
/// and unit population deviation over the image. A flat image maps to zeros.
pub fn image_tensor<T: Real>(img: &GrayImage) -> Tensor<T> {
    let px: Vec<f64> = img.pixels().iter().map(|p| f64::from(*p) / 255.0).collect();
    let n = px.len().max(1) as f64;
    let mean = px.iter().sum::<f64>() / n;
    let var = px.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let spread = var.sqrt().max(MIN_SPREAD);
    Tensor::from_vec(
        [1, 1, img.height(), img.width()],
        px.iter().map(|v| super::real((v - mean) / spread)).collect(),
    )
    .expect("pixels fill the canvas")
}

/// Thresholds the first plane of a probability map into a mask.
pub fn mask_from_probabilities<T: Real>(probs: &Tensor<T>, threshold: f64) -> BinaryMask {
    let t = super::real::<T>(threshold);
    let bits = probs.plane(0, 0).iter().map(|p| *p > t).collect();
    BinaryMask::new(probs.width(), probs.height(), bits).expect("plane matches its shape")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub threshold: f64,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 8,
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            learning_rate: DEFAULT_LEARNING_RATE,
            momentum: DEFAULT_MOMENTUM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.epochs == 0 {
            return Err(EngineError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(EngineError::Config("batch size must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(EngineError::Config("threshold must lie strictly between 0 and 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(EngineError::Config("learning rate must be positive and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
}

impl EpochLog {
    /// `epoch,mean_loss`
    pub fn line(&self) -> String {
        format!("{},{}", self.epoch, self.mean_loss)
    }
}

fn stack<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>, EngineError> {
    let [_, c, h, w] = parts[0].shape();
    let mut data = Vec::with_capacity(parts.len() * c * h * w);
    for p in parts {
        if p.shape() != [1, c, h, w] {
            return Err(shape_err("samples in a batch must share one shape"));
        }
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec([parts.len(), c, h, w], data)
}

/// Minibatch SGD with momentum. The sample order is reshuffled every epoch
/// from a stream seeded by `cfg.seed`; `on_epoch` sees each log entry as it
/// is produced.
pub fn train_with_progress<T: Real>(
    net: &mut Network<T>,
    samples: &[Sample<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, EngineError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(EngineError::Config("no training samples".into()));
    }
    let mut rng = SplitMix::new(cfg.seed);
    let mut state = OptimizerState::new(&net.parameters(), cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let images: Vec<_> = chunk.iter().map(|&i| &samples[i].image).collect();
            let targets: Vec<_> = chunk.iter().map(|&i| &samples[i].target).collect();
            let x = stack(&images)?;
            let t = stack(&targets)?;
            let (y, tape) = net.forward_train(&x, true)?;
            let (loss, grad) = bce_loss(&y, &t)?;
            let grads = net.backward(&tape, &grad)?;
            let g = grads.as_slices();
            sgd_momentum_step(&mut net.parameters_mut(), &g, &mut state)?;
            total += loss.to_f64().unwrap_or(f64::NAN) * chunk.len() as f64;
        }
        let entry = EpochLog {
            epoch,
            mean_loss: total / samples.len() as f64,
        };
        if !entry.mean_loss.is_finite() {
            return Err(EngineError::NonFinite(format!("epoch {epoch} loss")));
        }
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}

pub fn train<T: Real>(
    net: &mut Network<T>,
    samples: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, EngineError> {
    train_with_progress(net, samples, cfg, |_| {})
}

/// Probability map for a `(1, channels, H, W)` image.
pub fn predict<T: Real>(net: &Network<T>, image: &Tensor<T>) -> Result<Tensor<T>, EngineError> {
    net.forward(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_is_standardized() {
        let img = GrayImage::new(4, 2, vec![0, 10, 20, 30, 200, 210, 220, 255]).unwrap();
        let t = image_tensor::<f64>(&img);
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert!(t.at(0, 0, 0, 0) < t.at(0, 0, 0, 1));
    }

    #[test]
    fn flat_input_maps_to_zero() {
        let t = image_tensor::<f32>(&GrayImage::filled(3, 3, 90));
        assert!(t.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn labelled_image_becomes_sample() {
        let mask = BinaryMask::from_fn(3, 2, |x, y| x + y == 2);
        let img = LabeledImage::new(GrayImage::filled(3, 2, 7), mask).unwrap();
        let s = Sample::<f32>::from_labeled(&img);
        assert_eq!(s.image.shape(), [1, 1, 2, 3]);
        assert_eq!(s.target.data(), &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn probabilities_threshold_strictly() {
        let p = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![0.45, 0.4500001, 0.1]).unwrap();
        let m = mask_from_probabilities(&p, 0.45);
        assert_eq!(m.values(), &[0, 1, 0]);
    }

    #[test]
    fn config_rejects_empty_batches() {
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
