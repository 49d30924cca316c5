use alloc::format;
use alloc::vec::Vec;

use super::{Adam, FlowArch, FlowModel};
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for FlowTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 256,
            epochs: 1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl FlowTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean NLL of the untrained model over all rows (nats per vector).
    pub initial_nll: f64,
    /// Mean NLL over each epoch's batches, measured before each update.
    pub epoch_nll: Vec<f64>,
    pub steps: usize,
    pub checksum: u64,
}

/// Maximum-likelihood training with Adam.
///
/// The seed drives, in order, parameter initialization and the per-epoch
/// shuffles. Glow actnorm layers are initialized from the first batch before
/// the first update. The batch size is clipped to the row count.
pub fn train_flow(w: &EmbeddingMatrix, arch: &FlowArch, cfg: &FlowTrainConfig) -> Result<(FlowModel, TrainReport)> {
    cfg.validate()?;
    let n = w.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput("cannot train a flow on zero rows".into()));
    }
    let mut root = SplitMix64::new(cfg.seed);
    let mut init_rng = root.fork();
    let mut shuffle_rng = root.fork();
    let mut model = arch.build(w.dim(), &mut init_rng)?;
    let batch_size = cfg.batch_size.min(n);

    let mut initial = 0.0;
    for start in (0..n).step_by(batch_size) {
        let end = (start + batch_size).min(n);
        initial += model.nll(&w.slice_rows(start, end)?)? * (end - start) as f64;
    }
    let initial_nll = initial / n as f64;

    let mut opt = Adam::new(model.param_count(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut params = model.flat_params();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_nll = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch = w.select_rows(chunk);
            if let FlowModel::Glow(g) = &mut model {
                if !g.actnorm_initialized() {
                    g.initialize_actnorm(batch.values(), batch.n_rows())
                        .map_err(|e| Error::Training { step: steps, reason: format!("{e}") })?;
                    params = model.flat_params();
                }
            }
            let out = model
                .nll_gradient(&batch)
                .map_err(|e| Error::Training { step: steps, reason: format!("{e}") })?;
            if !out.nll.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { step: steps, reason: "non-finite loss or gradient".into() });
            }
            total += out.nll * chunk.len() as f64;
            opt.step(&mut params, &out.grad);
            model.set_flat_params(&params)?;
            steps += 1;
        }
        epoch_nll.push(total / n as f64);
    }
    let checksum = model.checksum();
    Ok((model, TrainReport { initial_nll, epoch_nll, steps, checksum }))
}
