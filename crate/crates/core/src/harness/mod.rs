//! Synthetic tasks, experiment specs, checkpoints and the seeded
//! experiment runner.

pub mod persist;
pub mod runner;
pub mod spec;
pub mod tasks;
pub mod window_classify;

pub use persist::{checkpoint_load, checkpoint_load_with, checkpoint_save};
pub use runner::{
    default_gamma_grid, default_output_root, gamma_sweep, ilm_suppression_report, run_experiment, IlmRow,
    ResultRow, SweepRow, OUTPUT_ROOT_ENV,
};
pub use spec::{ExperimentSpec, LmCorpus, LmSpec, RelaxSetting, RelaxSite, TaskKind};
pub use tasks::{gen_copy_task, gen_reverse_task, gen_toy_translate, ToyTranslateSpec, ToyTranslateTask};
pub use window_classify::{gen_window_classify, WindowClassifier, WindowModelConfig, WindowTaskSpec};
