//! Pixel and image metrics, ROUGE, and the sweep and ablation harnesses
//! with their CSV / JSON tables.

mod bridge_eval;
mod harness;
mod metrics;
mod rouge;
mod tables;

pub use bridge_eval::{
    evaluate_detection, evaluate_explanations, DetectionResult, ExplanationResult, ImageDetection,
    ImageExplanation,
};
pub use harness::{
    ablation_table, embed_size_sweep, embed_size_table, evaluate_expert, robustness_sweep,
    robustness_table, run_ablations, Ablation, EmbedSizeRow, RobustnessRow, VariantRow,
};
pub use metrics::{
    auc_from_pairs, evaluate_localization, image_accuracy, pixel_auc, pixel_f1, Confusion,
    ImageLocalization, LocalizationResult, F1_THRESHOLD,
};
pub use rouge::{lcs_len, mean_rouge, rouge, tokenize, Prf, RougeScores};
pub use tables::{render_table, write_csv, write_json};
