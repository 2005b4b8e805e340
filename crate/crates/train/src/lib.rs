//! Reference vector field network and the three training stages: averaged
//! flow matching, reflow on model couplings and one-step distillation.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod loss;
pub mod model;
pub mod optim;
pub mod sampling;
pub mod timesample;
pub mod trainer;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint, CheckpointMeta,
};
pub use data::{gen_synthetic_dataset, Dataset, MoleculeRecord};
pub use error::{Result, TrainError};
pub use features::{featurize, laplacian_pe, GraphFeatures};
pub use model::{ModelConfig, VectorFieldNet};
pub use optim::{AdamW, Ema, LrSchedule};
pub use config::{Objective, TrainConfig};
pub use loss::{avgflow_loss, distill_loss, reflow_loss, LossOutput, Predictor};
pub use sampling::{euler_sample, midpoint_sample, one_step, sample_with, STEP_SWEEP};
pub use timesample::{sample_t, TimeSampler};
pub use trainer::{
    curve_csv, field_error, field_error_probes, par_map, generate_reflow_pairs, train_distill,
    train_reflow, train_stage1, EpochRecord, ReflowPair, ReflowPairSet, TrainOutcome,
};
pub use eval::{coverage_sweep, mean_straightness, one_step_rmsd, StepReport};
