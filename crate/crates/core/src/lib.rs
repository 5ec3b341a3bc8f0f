//! Latent-guided visual token reduction for separate-encoder multimodal models.
//!
//! Understanding-encoder tokens are scored against 2x2-pooled VAE latent
//! anchors, a balanced budget of them is kept, removed tokens are merged into
//! their nearest retained neighbour, and the host sequence layout is rebuilt
//! around the shorter visual span. A separate cost model accounts for the
//! prefill FLOPs and KV-cache bytes saved.
//!
//! ```
//! use tokenreduce::grid::{LatentGrid, TokenGrid};
//! use tokenreduce::guidance::SideInputs;
//! use tokenreduce::pipeline::{reduce, ReductionConfig, ReductionInput};
//!
//! let tokens = TokenGrid::new(2, 2, 2, vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0, 0.2, 0.8]).unwrap();
//! let latents = LatentGrid::new(2, 2, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
//! let side = SideInputs::default();
//! let result = reduce(&ReductionInput::new(&tokens, &latents, &side), &ReductionConfig::default()).unwrap();
//! assert_eq!(result.retained.len(), 2);
//! ```

pub mod buffers;
pub mod cli;
pub mod costmodel;
pub mod error;
pub mod grid;
pub mod guidance;
pub mod io;
pub mod layout;
pub mod merging;
pub mod pipeline;
pub mod selection;

pub use error::{Error, Result};
