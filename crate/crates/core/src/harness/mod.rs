//! Training, evaluation, size-generalization sweeps and the variant ablation.

mod ablate;
mod data;
mod eval;
mod report;
mod sweep;
mod train;

pub use ablate::{ablate_gformer, AblateConfig, AblationCell};
pub use data::{load_parts, DataPart, DataSource, Part};
pub use eval::{evaluate, evaluate_against, policy_se, reference_se, EvalOptions, Evaluation, Policy};
pub use report::{to_csv, write_rows, ResultRow, CSV_HEADER};
pub use sweep::{
    supported_axes, sweep_generalize, sweep_spec, test_parts, training_parts, DimDist, SweepConfig, SweepOutcome,
};
pub use train::{
    batch_plan, fit, initial_model, mean_loss, train, EpochRecord, StopReason, TrainConfig, TrainOptions, TrainOutcome,
};
