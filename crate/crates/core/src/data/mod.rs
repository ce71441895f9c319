//! Synthetic task families and the on-disk formats of every artifact.

mod io;
mod synth;

pub use io::{
    checkpoint_from_bytes, checkpoint_to_bytes, dataset_from_csv, dataset_to_csv, feature_from_csv,
    feature_to_csv, from_json, load_checkpoint, load_costs, load_datasets, load_feature_dumps,
    load_json, load_plan, load_rdm, load_train_config, plan_from_json, plan_to_json, rdm_from_json,
    rdm_to_json, report_loss_csv, save_checkpoint, save_datasets, save_feature_dumps, save_json,
    save_plan, save_rdm, to_json, write_text, DatasetMeta, DumpEntry, FeatureManifest,
    CHECKPOINT_MAGIC, DATASET_META_FILE, FEATURE_MANIFEST_FILE,
};
pub use synth::{generate_synthetic_tasks, SynthSpec, SyntheticTasks, TaskGenerator};
