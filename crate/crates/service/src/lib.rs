//! Network-facing parts of medq: the evaluation runner, a mock
//! chat-completions endpoint and the calibration/review server.

pub mod mock;
pub mod runner;
pub mod server;

pub use mock::{MockMode, MockServer};
pub use runner::{run_benchmark, run_trials, Client, Endpoint, RunConfig, RunError, RunSummary};
pub use server::AppState;
