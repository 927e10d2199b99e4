mod compare;
mod evaluate;
mod synth;
mod train;

pub use compare::{compare, discover_reports, pfl_vs_local, COMPARISON_FILE, SMALL_FARMS_FILE, SMALL_FARM_IAM, STRATA_FILE};
pub use evaluate::{evaluate, RegimeSummary, Summary};
pub use synth::{bucket_label, load_dataset, synth};
pub use train::{build_clients, load_checkpoints, train};
