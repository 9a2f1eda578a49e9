//! Neural label decoder over a bag-of-embeddings document encoder.
//!
//! Three classifier heads share the encoder: a linear layer, a key-query-value
//! attention layer over label embeddings, and a GRU that emits one label per
//! time step until a stop label. The GRU trains under one of two losses: a
//! bag-of-labels loss on the aggregated step logits (order-invariant) or an
//! iterative per-step loss under teacher forcing. A masking system can
//! restrict each step to labels strictly later in the chosen frequency order.
//!
//! All gradients are hand-derived; every training run verifies them against
//! central finite differences on its first batch.

mod decode;
mod linalg;
mod loss;
mod model;
mod net;
mod train;

pub use decode::{mask_logits, DecoderTrace, TraceStep, MASK_SENTINEL};
pub use loss::{bce_with_logits, loss_boll, loss_ill};
pub use model::{DecoderConfig, DecoderModel, FreqOrder, HeadKind, LossKind};
pub use net::{DecoderExample, DecoderInput, DecoderTask};
pub use train::{gold_sequence, train_decoder, TrainConfig, TrainReport};
