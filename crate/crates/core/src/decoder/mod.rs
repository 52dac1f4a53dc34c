//! Decoding heads mapping a feature map to `K` multi-label logits.
//!
//! - [`gap_decode`]: spatial average followed by one linear read-out.
//! - [`ml_decode`]: learnable query tokens cross-attend to the flattened
//!   feature map (no self-attention block), then a group read-out lets each
//!   query emit logits for a contiguous block of labels.

mod attention;
mod gap;
mod ml;

pub use attention::{attention, cross_attention};
pub use gap::{gap_decode, GapDecoderParams};
pub use ml::{ml_decode, MlDecoderConfig, MlDecoderLayer, MlDecoderParams};
