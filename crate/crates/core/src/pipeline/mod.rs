//! Dataset ingestion, the training loop, checkpointing, and evaluation.

mod checkpoint;
mod dataset;
mod eval;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{
    ingest, severity_stats, split, PairRecord, PairedDataset, SeverityReference, SeverityStats,
    Split, SplitSpec, StatBand,
};
pub use eval::{
    deblur_single_classical, deblur_single_model, evaluate, evaluate_with, EvalAggregates,
    EvalReport, EvalTiming, FullScaleReference, ImageEval,
};
pub use train::{train, EpochRow, TrainConfig, TrainOutcome};
