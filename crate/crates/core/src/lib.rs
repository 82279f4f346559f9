//! Training-free visual token pruning for tiled high-resolution inputs.
//!
//! Three importance signals feed the pruner: how well each sub-image agrees
//! with the global thumbnail (region budgets), how much each patch is
//! attended by its tile's CLS token (bottom-up), and how much the instruction
//! tokens attend to it inside the LLM (top-down). [`fusion::prune`] combines
//! them into a kept token set; [`efficiency`] prices the result.

pub mod baselines;
pub mod bundle;
pub mod efficiency;
pub mod error;
pub mod fusion;
pub mod instruction;
pub mod saliency;
pub mod synth;
pub mod tensor;
pub mod tensor_store;
pub mod tiling;

pub use bundle::AttentionBundle;
pub use efficiency::{EfficiencyReport, LlmProfile, Reduction};
pub use error::{Error, Result};
pub use fusion::{
    prune, prune_scores, prune_traced, BudgetAllocation, FusedScores, PruneConfig, PruneResult,
    PruneTrace, Strategy,
};
pub use instruction::TokenMode;
pub use saliency::{HeadMode, RegionScores};
pub use tensor::Tensor;
pub use tiling::{plan_grid, TileGrid, TokenAddress};
