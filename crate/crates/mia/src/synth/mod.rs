//! Built-in synthetic learning stack: Gaussian-mixture population pools,
//! a small softmax classifier, a deterministic SGD trainer, knowledge
//! distillation, and a Metropolis posterior sampler for tiny models.

mod model;
mod pool;
mod posterior;
mod train;

pub use model::{ToyModel, LOSS_CEILING, PROBA_FLOOR};
pub use pool::{gen_population, sample_dataset, PopulationPool, SampleMode};
pub use posterior::{posterior_chain, posterior_sample, PosteriorConfig};
pub use train::{
    batch_gradient, batch_loss, distill, distill_on, soft_label, train, train_traced,
    ModelTrainer, PosteriorTrainer, SgdTrainer, TrainConfig, TrainTrace,
};
