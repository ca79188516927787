//! Synthetic non-stationary click streams, their file format and drift
//! diagnostics.

mod diagnostics;
mod generator;
mod io;
mod sample;

pub use diagnostics::{drift_probe, kl_item_dist, new_item_fraction, ProbeConfig};
pub use generator::{generate_stream, true_click_prob, true_click_probs, DriftConfig, Generated, WorldState, STREAM_SCHEMA_DIM};
pub use io::{read_stream, read_stream_from, write_stream, write_stream_to, STREAM_MAGIC};
pub use sample::{ClickSample, ContextIds, DayPartition, Stream};
