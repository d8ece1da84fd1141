//! Detection and explanation half of the model: mask tokens, token
//! assembly, the decision head, joint training and template explanations.

mod explain;
mod head;
mod mask_enc;
mod model;
mod tokens;
mod train;

pub use explain::{render_explanation, Verdict, AUTHENTIC_RESPONSE, REGION_LEVEL};
pub use head::{classify, Classification, DecisionHead, INSTRUCTION};
pub use mask_enc::{encode_mask_tokens, score_tensor, MaskEncoder};
pub use model::{
    BridgeModel, BridgeSample, BridgeVars, Detection, LossVars, MaskSource, BRIDGE_PREFIXES,
};
pub use tokens::{assemble_graph, assemble_token_sequence, Role, TokenSequence};
pub use train::{fit_bridge, train_bridge, BridgeEpochLog, BridgeReport};
