"""Weakly supervised few-shot semantic segmentation.

Pseudo pixel-level masks from image-level labels via embedding-weighted
activation-map fusion and saliency gating, a prototypical pixel encoder
meta-trained with hand-derived gradients, and pixel-wise k-NN segmentation
at meta-test time.
"""

from .data import (
    BACKGROUND,
    IGNORE_LABEL,
    Dataset,
    EmbeddingTable,
    Episode,
    SampleRecord,
    SplitSpec,
    load_manifest,
    sample_episode,
)
from .encoder import EncoderParams, encode, encode_batch, init_encoder
from .errors import PixelMetaError
from .evaluate import EvalConfig, IoUAccumulator, RunReport, mean_iou, run_protocol
from .inference import SupportIndex, build_support_index, knn_classify, segment_query
from .metalearn import (
    PixelSampleSet,
    TrainConfig,
    TrainReport,
    compute_prototypes,
    loss_gradient,
    meta_loss,
    meta_train,
    sample_pixels,
    train_episode,
)
from .pseudolabel import (
    ClassWeights,
    PseudoLabelConfig,
    apply_saliency_gate,
    compute_class_weights,
    fuse_heatmaps,
    generate_pseudo_mask,
    heatmaps_to_mask,
)
from .synth import SynthConfig, generate_synthetic_dataset
from .tensorio import load_tensor, save_tensor

__version__ = "0.1.0"
