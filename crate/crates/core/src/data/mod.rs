//! Series containers, file IO, the Gaussian-mixture generator and
//! rolling-window splitting.

mod gmm;
mod io;
mod series;
mod split;

pub use gmm::{generate_gmm, gmm_true_quantile, GmmSpec};
pub use io::{load_dataset, read_csv, read_jsonl, write_csv, write_jsonl, DataFormat, LoadOptions};
pub use series::{format_timestamp, parse_timestamp, Dataset, Domain, Freq, TimeSeries};
pub use split::{split, Split, TestWindow};
