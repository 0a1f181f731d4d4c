//! Process-level configuration from the environment.

use std::path::PathBuf;

/// Dataset cache directory.
pub const DATA_DIR_ENV: &str = "FASTNN_DATA_DIR";
/// Worker-pool size for data-parallel kernels.
pub const THREADS_ENV: &str = "FASTNN_THREADS";

/// `$FASTNN_DATA_DIR`, else `$HOME/.cache/fastnn`, else `./fastnn-data`.
pub fn data_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".cache").join("fastnn"),
        None => PathBuf::from("fastnn-data"),
    }
}

/// Sizes the global worker pool from `FASTNN_THREADS` (hardware threads
/// when unset). Returns the pool size in effect; has no effect once the
/// pool has been built.
pub fn init_thread_pool() -> usize {
    let requested = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    if let Some(n) = requested {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
