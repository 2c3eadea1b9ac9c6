"""Template-caption generation model."""

from .decoder import (
    AttentionTrace,
    DecoderState,
    MAX_TEMPLATE_LEN,
    article_attention,
    backward,
    decode_step,
    forward_loss,
    generate,
    image_attention,
    initial_state,
    pseudo_image_features,
)
from .kernels import BACKEND, available_backends
from .params import (
    ModelDims,
    ModelParams,
    TrainingConfig,
    init_params,
    load_checkpoint,
    save_checkpoint,
    zero_grads,
)
from .training import Adam, TrainSample, lr_at_epoch, teacher_forced_accuracy, train

__all__ = [
    "AttentionTrace", "DecoderState", "MAX_TEMPLATE_LEN", "article_attention",
    "backward", "decode_step", "forward_loss", "generate", "image_attention",
    "initial_state", "pseudo_image_features", "BACKEND", "available_backends",
    "ModelDims", "ModelParams", "TrainingConfig", "init_params",
    "load_checkpoint", "save_checkpoint", "zero_grads", "Adam", "TrainSample",
    "lr_at_epoch", "teacher_forced_accuracy", "train",
]
