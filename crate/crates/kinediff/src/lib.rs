//! kinediff: disentangled diffusion-based 2D-to-3D human pose lifting.
//!
//! The crate decomposes 3D poses into bone lengths and unit directions,
//! diffuses those quantities under a cosine noise schedule, denoises them
//! with a kinematic-hierarchy-aware spatio-temporal network, and evaluates
//! the result with the standard deterministic and probabilistic pose
//! metrics. Everything is 64-bit and deterministic given (config, seed,
//! data).

pub mod camera;
pub mod config;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod disentangle;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;
pub mod gradcheck;
pub mod pose;
pub mod skeleton;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Rng, Tensor};

use std::sync::OnceLock;

static THREAD_POOL_INIT: OnceLock<usize> = OnceLock::new();

/// Cap internal parallelism from the `KINEDIFF_THREADS` environment
/// variable. Call once at process start; later calls are no-ops.
pub fn init_thread_pool_from_env() -> usize {
    *THREAD_POOL_INIT.get_or_init(|| {
        let n = std::env::var("KINEDIFF_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0);
        if let Some(n) = n {
            // Ignore failure: the global pool may already exist in tests.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            n
        } else {
            rayon::current_num_threads()
        }
    })
}
