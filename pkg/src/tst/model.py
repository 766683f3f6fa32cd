"""The full TST: tokenizer -> transformer stack -> linear classifier.

``TSTConfig`` carries every architecture and training hyperparameter with
the stock defaults (2048-sample windows cut into 256 subsequences of
length 8, dim 128, 6 blocks, 6 heads, d_k 64, MLP width 256, dropout 0.1,
learned 1-d position encoding, 10 classes, Adam at 3e-5 with a x0.8 step
decay every 10 epochs, batch 128, 50 epochs).

The training loss is cross-entropy. The optimizer path computes it from
logits through log-sum-exp; ``cross_entropy`` on probabilities is the
direct textbook form and is kept for checking the two agree.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError
from .tensor import Tensor
from .tokenizer import POS_LEARNED_1D, POS_NONE, TokenizerConfig, TokenizerParams, tokenize
from .transformer import TransformerStack, stack_forward

CHECKPOINT_MAGIC = b"TST1"


@dataclass
class TSTConfig:
    L: int = 2048
    ns: int = 256
    dim: int = 128
    dim_mlp: int = 256
    d_k: int = 64
    heads: int = 6
    depth: int = 6
    p_drop: float = 0.1
    pos_encoding: str = POS_LEARNED_1D
    n_class: int = 10
    lr: float = 3e-5
    lr_step: int = 10
    lr_gamma: float = 0.8
    batch_size: int = 128
    epochs: int = 50

    @property
    def sub_len(self) -> int:
        return self.L // self.ns

    def validate(self):
        positive = ["L", "ns", "dim", "dim_mlp", "d_k", "heads", "depth",
                    "n_class", "lr_step", "batch_size"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.L % self.ns != 0:
            raise ConfigError(f"L={self.L} is not divisible by ns={self.ns}")
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError(f"p_drop must be in [0, 1), got {self.p_drop}")
        if self.pos_encoding not in (POS_LEARNED_1D, POS_NONE):
            raise ConfigError(f"pos_encoding must be '1d' or 'none', got {self.pos_encoding!r}")
        if self.lr <= 0 or self.lr_gamma <= 0:
            raise ConfigError("lr and lr_gamma must be positive")
        return self

    def tokenizer_config(self) -> TokenizerConfig:
        return TokenizerConfig(length=self.L, ns=self.ns, dim=self.dim,
                               pos_encoding=self.pos_encoding)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TSTConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()


class ForwardResult(NamedTuple):
    probs: Tensor          # (B, n_class), rows sum to 1
    logits: Tensor         # (B, n_class)
    class_tokens: list     # per-block (B, dim) class-token slices


class TSTModel:
    """Holds every trainable leaf and runs the forward pass.

    Parameters are enumerable in a fixed declared order (tokenizer, blocks
    in sequence, final norm, head) so checkpoints and optimizer state stay
    aligned across runs.
    """

    def __init__(self, config: TSTConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.tokenizer = TokenizerParams.init(config.tokenizer_config(), rng, dtype)
        self.stack = TransformerStack.init(
            config.depth, config.dim, config.dim_mlp, config.heads,
            config.d_k, config.d_k, rng, dtype,   # d_v = d_k
        )
        # zero head: the untrained classifier is exactly uniform, so the
        # starting loss is log(n_class) and early training is seed-stable
        self.w_head = Tensor(np.zeros((config.dim, config.n_class), dtype=dtype),
                             requires_grad=True)
        self.b_head = Tensor(np.zeros(config.n_class, dtype=dtype), requires_grad=True)

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = [("tokenizer.w_embed", self.tokenizer.w_embed),
               ("tokenizer.class_token", self.tokenizer.class_token)]
        if self.tokenizer.pos_table is not None:
            out.append(("tokenizer.pos_table", self.tokenizer.pos_table))
        for i, blk in enumerate(self.stack.blocks):
            for name in ("ln1_gain", "ln1_bias", "w_q", "w_k", "w_v", "w_o",
                         "ln2_gain", "ln2_bias", "w1", "b1", "w2", "b2"):
                out.append((f"block{i}.{name}", getattr(blk, name)))
        out.append(("final.gain", self.stack.final_gain))
        out.append(("final.bias", self.stack.final_bias))
        out.append(("head.w", self.w_head))
        out.append(("head.b", self.b_head))
        return out

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.parameters())

    def zero_grad(self):
        for _, p in self.parameters():
            p.grad = None

    def forward(self, x, training: bool = False,
                rng: np.random.Generator | None = None) -> ForwardResult:
        x = T.as_tensor(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != self.config.L:
            raise ConfigError(f"input shape {x.shape} does not match (B, {self.config.L})")
        if not np.all(np.isfinite(x.data)):
            raise DataError("non-finite values in model input")
        tokens = tokenize(x, self.tokenizer, training=training,
                          p_drop=self.config.p_drop, rng=rng)
        feature, class_tokens = stack_forward(tokens, self.stack, training=training,
                                              p_drop=self.config.p_drop, rng=rng)
        logits = T.add(T.matmul(feature, self.w_head), self.b_head)
        probs = T.softmax(logits, axis=-1)
        return ForwardResult(probs=probs, logits=logits, class_tokens=class_tokens)

    def predict(self, x) -> np.ndarray:
        """Row-wise argmax class index (ties resolve to the lowest index)."""
        with T.no_grad():
            return np.argmax(self.forward(x, training=False).logits.data, axis=1)


def _check_labels(labels, n_class: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DataError(f"labels must be 1-d, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_class):
        raise DataError(f"labels outside [0, {n_class}): saw {labels.min()}..{labels.max()}")
    return labels.astype(np.int64)


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """-(1/B) sum_i log probs[i, label_i], straight from probabilities."""
    probs = T.as_tensor(probs)
    labels = _check_labels(labels, probs.shape[-1])
    return T.neg(T.mean(T.log(T.gather_rows(probs, labels))))


def cross_entropy_from_logits(logits: Tensor, labels) -> Tensor:
    """Same loss computed from logits via log-sum-exp (the training path)."""
    logits = T.as_tensor(logits)
    labels = _check_labels(labels, logits.shape[-1])
    return T.neg(T.mean(T.gather_rows(T.log_softmax(logits, axis=-1), labels)))


# ---------------------------------------------------------------------------
# checkpointing
#
# Layout (all little-endian): magic "TST1"; config fields in declared order
# (ints as u32, floats as f64, pos_encoding as u8: 1=learned-1d, 0=none);
# u32 parameter count; then per parameter u32 ndim, u32 dims..., float32
# data in enumeration order. Round-trips bit-exactly for float32 models.

_INT_FIELDS = ("L", "ns", "dim", "dim_mlp", "d_k", "heads", "depth",
               "n_class", "lr_step", "batch_size", "epochs")
_FLOAT_FIELDS = ("p_drop", "lr", "lr_gamma")


def save_checkpoint(model: TSTModel, path):
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<" + "I" * len(_INT_FIELDS),
                             *[getattr(cfg, n) for n in _INT_FIELDS]))
        fh.write(struct.pack("<" + "d" * len(_FLOAT_FIELDS),
                             *[getattr(cfg, n) for n in _FLOAT_FIELDS]))
        fh.write(struct.pack("<B", 1 if cfg.pos_encoding == POS_LEARNED_1D else 0))
        params = model.parameters()
        fh.write(struct.pack("<I", len(params)))
        for _, p in params:
            fh.write(struct.pack("<I", p.ndim))
            fh.write(struct.pack("<" + "I" * p.ndim, *p.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path, expected_config: TSTConfig | None = None) -> TSTModel:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != CHECKPOINT_MAGIC:
            raise DataError(f"{path} is not a TST checkpoint")
        ints = struct.unpack("<" + "I" * len(_INT_FIELDS),
                             _read_exact(fh, 4 * len(_INT_FIELDS), "config"))
        floats = struct.unpack("<" + "d" * len(_FLOAT_FIELDS),
                               _read_exact(fh, 8 * len(_FLOAT_FIELDS), "config"))
        pos_flag = struct.unpack("<B", _read_exact(fh, 1, "config"))[0]
        cfg = TSTConfig(**dict(zip(_INT_FIELDS, ints)),
                        **dict(zip(_FLOAT_FIELDS, floats)),
                        pos_encoding=POS_LEARNED_1D if pos_flag else POS_NONE).validate()
        if expected_config is not None and cfg != expected_config:
            raise ConfigError(f"checkpoint config {cfg} does not match expected {expected_config}")

        model = TSTModel(cfg, seed=0)
        params = model.parameters()
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "parameter count"))
        if count != len(params):
            raise ConfigError(f"checkpoint holds {count} tensors, model expects {len(params)}")
        for name, p in params:
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, name))
            shape = struct.unpack("<" + "I" * ndim, _read_exact(fh, 4 * ndim, name))
            if shape != p.shape:
                raise ConfigError(f"checkpoint tensor {name} has shape {shape}, expected {p.shape}")
            raw = _read_exact(fh, 4 * p.size, name)
            p.data = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)
        if fh.read(1):
            raise DataError("trailing bytes after checkpoint payload")
    return model
