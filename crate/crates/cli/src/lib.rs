//! Library surface of the `cbvf` command line tool, split out so the
//! command bodies are callable from integration tests.

pub mod commands;
pub mod config;
pub mod expr;

pub use commands::{
    cmd_counterexample, cmd_solve, cmd_synth, cmd_verify, EXIT_CONFIG, EXIT_FAIL,
    EXIT_INCONCLUSIVE, EXIT_PASS, EXIT_RUNTIME,
};

/// Cap the global worker pool from `CBVF_THREADS`. Call once, before any
/// parallel work; later calls are ignored.
pub fn init_threads() {
    if let Ok(v) = std::env::var("CBVF_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
