"""Decoder parameters, training configuration, and checkpoint files."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class ModelDims:
    vocab: int
    d_e: int        # input word embedding size
    d_img: int      # image region feature size
    d_w: int        # article sentence feature size
    hidden: int = 512
    regions: int = 49
    sentences: int = 55
    d_att: int = 64  # image attention projection size

    @property
    def d_in(self) -> int:
        return self.d_e + self.d_img + self.d_w

    def as_tuple(self) -> tuple[int, ...]:
        return (
            self.vocab, self.d_e, self.d_img, self.d_w,
            self.hidden, self.regions, self.sentences, self.d_att,
        )

    @classmethod
    def from_tuple(cls, t) -> "ModelDims":
        return cls(*[int(x) for x in t])


@dataclass
class TrainingConfig:
    lr: float = 0.002
    decay_factor: float = 0.8
    first_decay_epoch: int = 10
    decay_every: int = 8
    dropout: float = 0.2
    batch_size: int = 16
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise DataError(f"learning rate must be positive, got {self.lr}")
        if not (0.0 <= self.dropout < 1.0):
            raise DataError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1 or self.epochs < 0:
            raise DataError("batch_size must be >= 1 and epochs >= 0")


# Serialization order of the parameter tensors.
TENSOR_NAMES = (
    "W_e",     # (V, D_e) input embedding
    "W_x",     # (4H, D_in) LSTM input weights, gate order i, f, g, o
    "W_h",     # (4H, H) LSTM recurrent weights
    "b",       # (4H,) LSTM bias
    "P_img",   # (D_att, D_img) image attention, feature projection
    "P_h",     # (D_att, H) image attention, state projection
    "v_att",   # (D_att,) image attention scoring vector
    "w_art",   # (H + D_w,) article attention linear map
    "W_ie",    # (V, H) output projection
    "b_out",   # (V,) output bias
)


class ModelParams:
    """All trainable tensors, float64 and C-contiguous."""

    def __init__(self, dims: ModelDims, tensors: dict[str, np.ndarray]):
        self.dims = dims
        expected = expected_shapes(dims)
        for name in TENSOR_NAMES:
            if name not in tensors:
                raise DataError(f"missing parameter tensor {name!r}")
            if tensors[name].shape != expected[name]:
                raise DataError(
                    f"tensor {name!r} has shape {tensors[name].shape}, "
                    f"expected {expected[name]}"
                )
            arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
            setattr(self, name, arr)

    def tensor(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def named_tensors(self):
        return [(name, getattr(self, name)) for name in TENSOR_NAMES]

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {n: t.copy() for n, t in self.named_tensors()})


def expected_shapes(dims: ModelDims) -> dict[str, tuple[int, ...]]:
    h = dims.hidden
    return {
        "W_e": (dims.vocab, dims.d_e),
        "W_x": (4 * h, dims.d_in),
        "W_h": (4 * h, h),
        "b": (4 * h,),
        "P_img": (dims.d_att, dims.d_img),
        "P_h": (dims.d_att, h),
        "v_att": (dims.d_att,),
        "w_art": (h + dims.d_w,),
        "W_ie": (dims.vocab, h),
        "b_out": (dims.vocab,),
    }


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    """Uniform [-0.1, 0.1] initialization; the forget-gate bias is then set
    to 1.0 to keep early gradients flowing."""
    rng = np.random.Generator(np.random.PCG64(seed))
    tensors = {
        name: rng.uniform(-0.1, 0.1, size=shape)
        for name, shape in expected_shapes(dims).items()
    }
    h = dims.hidden
    tensors["b"][h : 2 * h] = 1.0
    return ModelParams(dims, tensors)


def zero_grads(dims: ModelDims) -> dict[str, np.ndarray]:
    return {
        name: np.zeros(shape, dtype=np.float64)
        for name, shape in expected_shapes(dims).items()
    }


CHECKPOINT_MAGIC = b"NCAP"
CHECKPOINT_VERSION = 1


def save_checkpoint(
    params: ModelParams,
    path: str | Path,
    config: TrainingConfig | None = None,
    vocab_hash: str = "",
) -> None:
    """Binary checkpoint plus a JSON sidecar (<path>.json) with the training
    configuration and the vocabulary hash."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<8I", *params.dims.as_tuple()))
        fh.write(struct.pack("<I", len(TENSOR_NAMES)))
        for name, tensor in params.named_tensors():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    sidecar = {
        "config": asdict(config) if config is not None else None,
        "vocab_hash": vocab_hash,
        "dims": list(params.dims.as_tuple()),
    }
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    """Returns the parameters and the sidecar dict (empty if the sidecar is
    missing)."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a model checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        dims = ModelDims.from_tuple(struct.unpack("<8I", fh.read(32)))
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(count * 8)
            if len(data) != count * 8:
                raise DataError(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar = {}
    if sidecar_path.exists():
        with open(sidecar_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
    return ModelParams(dims, tensors), sidecar
