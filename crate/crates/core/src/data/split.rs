use super::series::Dataset;
use crate::error::{Error, Result};

/// One rolling evaluation window: forecast `prediction_length` points
/// after the first `history_len` observations of a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TestWindow {
    pub series_index: usize,
    /// 0 is the earliest window.
    pub window_index: usize,
    pub history_len: usize,
}

impl TestWindow {
    /// Index range of the ground-truth horizon.
    pub fn horizon(&self, prediction_length: usize) -> std::ops::Range<usize> {
        self.history_len..self.history_len + prediction_length
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    /// Each series with its final `windows × prediction_length` points removed.
    pub train: Dataset,
    /// Windows ordered by series, then by time.
    pub test: Vec<TestWindow>,
}

/// Rolling-origin split with `windows` back-to-back evaluation windows.
pub fn split(dataset: &Dataset, windows: usize) -> Result<Split> {
    if windows == 0 {
        return Err(Error::Config("at least one evaluation window is required".into()));
    }
    let held_out = windows * dataset.prediction_length;
    let mut train = Vec::with_capacity(dataset.len());
    let mut test = Vec::with_capacity(dataset.len() * windows);
    for (i, s) in dataset.series().iter().enumerate() {
        if s.len() <= held_out {
            return Err(Error::Data(format!(
                "series `{}` has {} points; {windows} windows of {} need more than {held_out}",
                s.id,
                s.len(),
                dataset.prediction_length
            )));
        }
        let train_len = s.len() - held_out;
        train.push(s.truncated(train_len)?);
        test.extend((0..windows).map(|w| TestWindow {
            series_index: i,
            window_index: w,
            history_len: train_len + w * dataset.prediction_length,
        }));
    }
    Ok(Split {
        train: Dataset::new(
            dataset.name.clone(),
            dataset.freq,
            dataset.domain,
            dataset.prediction_length,
            train,
        )?,
        test,
    })
}
