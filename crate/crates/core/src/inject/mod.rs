//! Knowledge injection into self-attention stacks: HYDRA heads pretrained
//! against dependency-of-interest matrices, and TRE injection needles
//! trained on multi-level BIOE annotations.

mod bioe;
mod hydra;
mod model;
mod tre;

pub use bioe::{
    load_bioe, parse_bioe, segments, tag_stats, to_tsv, BioeSample, Part, Segment, Tag,
    ANNOTATION_SAMPLE_TSV, LEVELS,
};
pub use hydra::{
    head_scores, hydra_attach, hydra_detach, hydra_pretrain, load_sdoi, parse_sdoi, HydraConfig,
    HydraHead, SdoiMatrix, SdoiRecord,
};
pub use model::{TokenModel, TokenModelConfig, TOKEN_MODEL_KIND};
pub use tre::{
    bioe_vocab, tre_evaluate, tre_losses, tre_model, tre_needle_loss, tre_predict, tre_train,
    InjectionConfig, Needles, Prf1, TreMetrics, TreOutcome, TreTrainConfig,
};

use crate::error::Result;
use crate::tensorcore::Tensor;

/// Per-layer, per-head attention matrices of `model` on `tokens`.
pub fn attention_weights_report<S: AsRef<str>>(
    model: &TokenModel,
    tokens: &[S],
) -> Result<Vec<Vec<Tensor<f64>>>> {
    model.attention_report(tokens)
}
