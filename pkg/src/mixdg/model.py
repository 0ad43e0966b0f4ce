"""Toy dual-encoder pieces: image encoder, prompts, class table, classifier.

The image side is a small dense network (one or two linear layers, tanh
after the hidden layer) whose output is l2-normalized onto the unit
sphere. The text side is simulated: each class name is rendered through
a prompt template and hashed to seed a deterministic unit-norm embedding,
standing in for a frozen text encoder. Classification is zero-shot via
highest inner product against the class table.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .losses import ClassEmbeddings
from .numeric import SeededRng, as_vector, derive_seed, l2_normalize

__all__ = [
    "DEFAULT_PROMPT_TEMPLATE",
    "EncoderConfig",
    "EncoderGrads",
    "EncoderParams",
    "PromptTemplate",
    "encode",
    "encode_backward",
    "init_encoder",
    "make_class_embeddings",
    "zero_shot_classify",
]

CLASS_PLACEHOLDER = "[CLASS]"
DEFAULT_PROMPT_TEMPLATE = "a photo of a [CLASS]"

# The only nonlinearity used; recorded in checkpoints for validation.
ACTIVATION_ID = "tanh"


@dataclass
class EncoderParams:
    """Dense encoder weights: one layer, or hidden plus output.

    ``weights[k]`` has shape (out_k, in_k) and the shapes must chain.
    Arrays are float64 and may be updated in place during training.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) not in (1, 2) or len(self.biases) != len(self.weights):
            raise ValueError("expected one or two (weight, bias) layer pairs")
        prev_out = None
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} do not agree")
            if prev_out is not None and w.shape[1] != prev_out:
                raise ValueError(f"layer {k}: input dim {w.shape[1]} != previous output {prev_out}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k}: non-finite parameters")
            prev_out = w.shape[0]
            self.weights[k] = w
            self.biases[k] = b

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def embed_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


@dataclass
class EncoderGrads:
    """Parameter-shaped gradient accumulator, parallel to EncoderParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture and seeding choices for one encoder instance."""

    embed_dim: int = 16
    hidden_dim: int | None = 32
    seed: int = 0
    template: str = DEFAULT_PROMPT_TEMPLATE

    def __post_init__(self) -> None:
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be at least 1, got {self.embed_dim}")
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be at least 1 or None, got {self.hidden_dim}")


def init_encoder(
    input_dim: int,
    embed_dim: int,
    hidden_dim: int | None = None,
    seed: int = 0,
) -> EncoderParams:
    """Seeded encoder initialization.

    Weights are normal draws scaled by 1 / sqrt(fan_in); biases start at
    zero. ``hidden_dim=None`` gives a single linear layer.
    """
    if input_dim < 1 or embed_dim < 1:
        raise ValueError(f"dims must be at least 1, got {input_dim} and {embed_dim}")
    if hidden_dim is not None and hidden_dim < 1:
        raise ValueError(f"hidden_dim must be at least 1 or None, got {hidden_dim}")
    rng = SeededRng(seed)
    shapes = (
        [(embed_dim, input_dim)]
        if hidden_dim is None
        else [(hidden_dim, input_dim), (embed_dim, hidden_dim)]
    )
    weights = []
    biases = []
    for out_dim, in_dim in shapes:
        scale = 1.0 / math.sqrt(in_dim)
        weights.append(rng.normals(out_dim * in_dim).reshape(out_dim, in_dim) * scale)
        biases.append(np.zeros(out_dim))
    return EncoderParams(weights, biases)


def _forward(params: EncoderParams, x: np.ndarray) -> list[np.ndarray]:
    """Pre-activation outputs per layer, hidden activation applied between."""
    acts = []
    h = x
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        if k > 0:
            h = np.tanh(h)
        h = w @ h + b
        acts.append(h)
    return acts


def encode(params: EncoderParams, x: Sequence[float] | np.ndarray) -> np.ndarray:
    """Embed an input onto the unit sphere.

    A zero vector before normalization (for example a zero input with
    zero biases) is degenerate and raises.
    """
    v = as_vector(x, name="x")
    if v.shape[0] != params.input_dim:
        raise ValueError(f"input has dim {v.shape[0]}, encoder expects {params.input_dim}")
    z = _forward(params, v)[-1]
    n = float(np.linalg.norm(z))
    if not n > 0.0:
        raise ValueError("encoder produced a zero vector; cannot normalize")
    return z / n


def encode_backward(
    params: EncoderParams,
    x: Sequence[float] | np.ndarray,
    grad_embedding: Sequence[float] | np.ndarray,
) -> EncoderGrads:
    """Backpropagate a gradient in the unit-norm embedding to parameters.

    The normalization u = z / |z| contributes the Jacobian
    (I - u u^T) / |z|, after which the dense layers are standard. The
    forward pass is recomputed here; inputs are tiny so this costs
    little and keeps ``encode`` stateless.
    """
    v = as_vector(x, name="x")
    g = as_vector(grad_embedding, name="grad_embedding")
    if v.shape[0] != params.input_dim:
        raise ValueError(f"input has dim {v.shape[0]}, encoder expects {params.input_dim}")
    if g.shape[0] != params.embed_dim:
        raise ValueError(f"grad has dim {g.shape[0]}, embedding has dim {params.embed_dim}")
    acts = _forward(params, v)
    z = acts[-1]
    n = float(np.linalg.norm(z))
    if not n > 0.0:
        raise ValueError("encoder produced a zero vector; cannot normalize")
    u = z / n
    gz = (g - float(u @ g) * u) / n

    weights_g: list[np.ndarray] = [np.empty(0)] * params.n_layers
    biases_g: list[np.ndarray] = [np.empty(0)] * params.n_layers
    upstream = gz
    for k in range(params.n_layers - 1, -1, -1):
        hidden = np.tanh(acts[k - 1]) if k > 0 else None
        layer_in = hidden if hidden is not None else v
        weights_g[k] = np.outer(upstream, layer_in)
        biases_g[k] = upstream
        if k > 0:
            upstream = (params.weights[k].T @ upstream) * (1.0 - hidden**2)
    return EncoderGrads(weights_g, biases_g)


@dataclass(frozen=True)
class PromptTemplate:
    """Text template with a single class-name placeholder."""

    template: str = DEFAULT_PROMPT_TEMPLATE

    def __post_init__(self) -> None:
        if self.template.count(CLASS_PLACEHOLDER) != 1:
            raise ValueError(
                f"template must contain exactly one {CLASS_PLACEHOLDER!r}, got {self.template!r}"
            )

    def render(self, class_name: str) -> str:
        """Fill the placeholder with a non-empty class name."""
        if not class_name:
            raise ValueError("class name must be non-empty")
        return self.template.replace(CLASS_PLACEHOLDER, class_name)


def _prompt_hash(prompt: str) -> int:
    """Stable 64-bit hash of a prompt string."""
    return int.from_bytes(
        hashlib.blake2b(prompt.encode("utf-8"), digest_size=8).digest(), "big"
    )


def make_class_embeddings(
    class_names: Sequence[str],
    embed_dim: int,
    seed: int = 0,
    template: PromptTemplate | None = None,
) -> ClassEmbeddings:
    """Simulated frozen text encoder output for each class prompt.

    Each class name is rendered through the template, hashed, and the
    hash combined with ``seed`` drives a seeded normal draw that is then
    unit-normalized. Same names, template, seed, and dim always give
    the same table; the table never updates during training.
    """
    names = [str(n) for n in class_names]
    if len(names) < 2:
        raise ValueError("need at least two class names")
    if len(set(names)) != len(names):
        raise ValueError("class names must be distinct")
    if embed_dim < 1:
        raise ValueError(f"embed_dim must be at least 1, got {embed_dim}")
    tpl = template if template is not None else PromptTemplate()
    rows = []
    for name in names:
        rng = SeededRng(derive_seed(seed, _prompt_hash(tpl.render(name))))
        rows.append(l2_normalize(rng.normals(embed_dim)))
    return ClassEmbeddings(np.array(rows), tuple(names))


def zero_shot_classify(img: Sequence[float] | np.ndarray, classes: ClassEmbeddings) -> int:
    """Index of the class row with the highest inner product.

    Ties break toward the lowest index, which is what argmax does.
    """
    v = as_vector(img, name="img")
    if v.shape[0] != classes.dim:
        raise ValueError(f"img has dim {v.shape[0]}, class table has dim {classes.dim}")
    return int(np.argmax(classes.table @ v))
