"""Cross-modal temporal artifact detector for AI-generated video.

Models per-frame visual/textual embedding pairs with a coarse recurrent
branch over the cosine-similarity sequence and a fine self-attention branch
over fused frame features, then classifies clips as real or AI-generated.
"""

from .data import EmbeddingClip, Manifest, read_clip, sample_clip, write_clip
from .metrics import ScoredPrediction, accuracy, auc, average_precision
from .model import Model, Variant
from .synth import SynthConfig, gen_dataset
from .tensor import Tensor, default_dtype, grad_check, set_default_dtype
from .train import TrainConfig, init_params, load_checkpoint, save_checkpoint, train

__all__ = [
    "EmbeddingClip", "Manifest", "Model", "ScoredPrediction", "SynthConfig",
    "Tensor", "TrainConfig", "Variant", "accuracy", "auc", "average_precision",
    "default_dtype", "gen_dataset", "grad_check", "init_params",
    "load_checkpoint", "read_clip", "sample_clip", "save_checkpoint",
    "set_default_dtype", "train", "write_clip",
]
