"""Margin metric softmax losses and embedding-space mixup.

Two variants of the margin metric softmax (MMS) objective are provided.
``mms_loss`` adds the margin to the rival logits, scaled by how far each
rival class embedding is from the true one, and keeps the plain
similarity on top:

    L = -log exp(s_y / tau) / sum_c exp((s_c + m (1 - t_c)) / tau)

``mms_actual_loss`` negates the logits and folds the margin in through
the class-to-class similarity directly:

    L = -log exp(-(s_y - m) / tau) / sum_c exp(-(s_c - m t_c) / tau)

where s_c is the image-to-class similarity, t_c the true-class-to-class
similarity, m the margin, and tau the temperature. Both are implemented
verbatim; ``compare-losses`` in the command line tool quantifies how far
apart they are. Note that minimizing the second variant pushes the
true-class similarity down, not up, because of the negation; with the
negation removed it is algebraically identical to the first variant, so
``training_objective`` descends the first form while ``total_loss``
keeps the verbatim second form for measurement.

Mixup operates on encoded embeddings: a Beta-distributed coefficient
blends each sample with a random partner from the same batch, and an l1
penalty ties the class distribution of the mixed pair to that of the
original. All gradients here are with respect to image embeddings;
``model.encode_backward`` carries them into encoder parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numeric import (
    BetaParams,
    SeededRng,
    as_vector,
    log_sum_exp,
    sample_beta,
    softmax,
)

__all__ = [
    "BatchLoss",
    "ClassEmbeddings",
    "LossConfig",
    "LossWithGrad",
    "MixDraw",
    "MixupLossWithGrad",
    "build_mix",
    "class_distribution",
    "mix_embeddings",
    "mixup_loss",
    "mms_actual_loss",
    "mms_loss",
    "total_loss",
    "training_objective",
]

# Image embeddings must arrive unit-normalized. The tolerance is loose
# enough that finite-difference probes at h = 1e-5 stay valid inputs.
_UNIT_NORM_TOL = 1e-4

# Class tables are built by us, so they are held to a tighter bound.
_CLASS_NORM_TOL = 1e-9


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters shared by every loss in this module.

    tau is the softmax temperature, margin the additive margin, lam the
    weight of the mix consistency term in the total objective, and beta
    the shape of the mixing coefficient distribution.
    """

    tau: float = 0.01
    margin: float = 0.3
    lam: float = 0.1
    beta: BetaParams = field(default_factory=lambda: BetaParams(0.2, 0.2))

    def __post_init__(self) -> None:
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be finite and positive, got {self.tau}")
        if not math.isfinite(self.margin):
            raise ValueError(f"margin must be finite, got {self.margin}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lam must be finite and non-negative, got {self.lam}")


@dataclass(frozen=True)
class ClassEmbeddings:
    """Frozen table of unit-norm class embeddings with their names."""

    table: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.table, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"table must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValueError("need at least two classes")
        if not np.all(np.isfinite(arr)):
            raise ValueError("table contains non-finite values")
        norms = np.linalg.norm(arr, axis=1)
        bad = np.where(np.abs(norms - 1.0) > _CLASS_NORM_TOL)[0]
        if bad.size:
            raise ValueError(f"row {bad[0]} is not unit-norm (|.| = {norms[bad[0]]!r})")
        names = tuple(str(n) for n in self.class_names)
        if len(names) != arr.shape[0]:
            raise ValueError(
                f"{len(names)} names for {arr.shape[0]} rows"
            )
        if len(set(names)) != len(names):
            raise ValueError("class names must be distinct")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "table", arr)
        object.__setattr__(self, "class_names", names)

    @property
    def n_classes(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]


@dataclass(frozen=True)
class MixDraw:
    """One mixing decision: coefficient eta and partner batch index."""

    eta: float
    partner: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.eta <= 1.0):
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.partner < 0:
            raise ValueError(f"partner must be non-negative, got {self.partner}")


@dataclass(frozen=True)
class LossWithGrad:
    """Scalar loss with its gradient in the image embedding."""

    value: float
    grad_img: np.ndarray


@dataclass(frozen=True)
class MixupLossWithGrad:
    """Mix consistency loss with gradients in both embeddings it reads."""

    value: float
    grad_img: np.ndarray
    grad_img_mix: np.ndarray


@dataclass(frozen=True)
class BatchLoss:
    """Per-batch objective decomposition with per-sample embedding grads.

    ``base`` is the mean margin-loss term and ``mix`` the mean mix
    consistency term; ``total`` is exactly ``base + lam * mix`` sample
    by sample before averaging.
    """

    total: float
    base: float
    mix: float
    grads: tuple[np.ndarray, ...]


def _check_image(img: Sequence[float] | np.ndarray, classes: ClassEmbeddings, name: str) -> np.ndarray:
    v = as_vector(img, name=name)
    if v.shape[0] != classes.dim:
        raise ValueError(f"{name} has dim {v.shape[0]}, class table has dim {classes.dim}")
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > _UNIT_NORM_TOL:
        raise ValueError(f"{name} must be unit-norm within {_UNIT_NORM_TOL}, got |.| = {n!r}")
    return v


def _check_label(y: int, classes: ClassEmbeddings) -> int:
    y = int(y)
    if not (0 <= y < classes.n_classes):
        raise ValueError(f"label {y} out of range for {classes.n_classes} classes")
    return y


def mms_loss(
    img: Sequence[float] | np.ndarray,
    y: int,
    classes: ClassEmbeddings,
    cfg: LossConfig,
) -> LossWithGrad:
    """Additive-margin variant of the margin metric softmax loss.

    The loss is evaluated as log-sum-exp of the logits shifted by the
    true-class logit, so a rival row identical to the true one (margin
    term exactly zero) reproduces the no-margin value exactly.
    """
    v = _check_image(img, classes, "img")
    y = _check_label(y, classes)
    s = classes.table @ v
    t = classes.table @ classes.table[y]
    logits = (s + cfg.margin * (1.0 - t)) / cfg.tau
    value = log_sum_exp(logits - s[y] / cfg.tau)
    p = softmax(logits)
    grad = (p @ classes.table - classes.table[y]) / cfg.tau
    return LossWithGrad(float(value), grad)


def mms_actual_loss(
    img: Sequence[float] | np.ndarray,
    y: int,
    classes: ClassEmbeddings,
    cfg: LossConfig,
) -> LossWithGrad:
    """Negated-logit variant of the margin metric softmax loss.

    Logits are -(s_c - m t_c) / tau; the reference logit in the
    numerator is -(s_y - m) / tau since the true class has t_y = 1.
    """
    v = _check_image(img, classes, "img")
    y = _check_label(y, classes)
    s = classes.table @ v
    t = classes.table @ classes.table[y]
    logits = -(s - cfg.margin * t) / cfg.tau
    value = log_sum_exp(logits - (-(s[y] - cfg.margin) / cfg.tau))
    p = softmax(logits)
    grad = (classes.table[y] - p @ classes.table) / cfg.tau
    return LossWithGrad(float(value), grad)


def class_distribution(
    img: Sequence[float] | np.ndarray,
    ty: Sequence[float] | np.ndarray,
    classes: ClassEmbeddings,
    cfg: LossConfig,
) -> np.ndarray:
    """Class probabilities under the negated-logit scoring rule.

    ``ty`` is the text-side embedding of the sample, which after mixing
    is a blend of two class rows and is deliberately not re-normalized,
    so no norm check is applied here.
    """
    v = as_vector(img, name="img")
    t = as_vector(ty, name="ty")
    if v.shape[0] != classes.dim or t.shape[0] != classes.dim:
        raise ValueError(
            f"img dim {v.shape[0]} / ty dim {t.shape[0]} vs class table dim {classes.dim}"
        )
    logits = -(classes.table @ v - cfg.margin * (classes.table @ t)) / cfg.tau
    return softmax(logits)


def build_mix(batch_size: int, rng: SeededRng, beta: BetaParams) -> list[MixDraw]:
    """Draw one mixing decision per batch slot.

    Coefficients are independent Beta draws, one per sample; partners
    come from a uniform random permutation of the batch, so a sample may
    be paired with itself. Coefficients are drawn first, then the
    permutation, which fixes the stream layout.
    """
    if batch_size <= 0:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    etas = [sample_beta(rng, beta) for _ in range(batch_size)]
    partners = rng.permutation(batch_size)
    return [MixDraw(e, p) for e, p in zip(etas, partners)]


def mix_embeddings(
    img: Sequence[float] | np.ndarray,
    img_partner: Sequence[float] | np.ndarray,
    ty: Sequence[float] | np.ndarray,
    ty_partner: Sequence[float] | np.ndarray,
    eta: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Convex blend of an embedding pair on both the image and text side.

    Returns (eta * img + (1 - eta) * img_partner,
             eta * ty  + (1 - eta) * ty_partner).
    The results are not re-normalized; downstream scoring consumes the
    raw blend. eta = 1 returns bit-exact copies of the originals.
    """
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    a = as_vector(img, name="img")
    b = as_vector(img_partner, name="img_partner")
    c = as_vector(ty, name="ty")
    d = as_vector(ty_partner, name="ty_partner")
    if a.shape != b.shape or c.shape != d.shape:
        raise ValueError("mixed pairs must have matching dims")
    return eta * a + (1.0 - eta) * b, eta * c + (1.0 - eta) * d


def mixup_loss(
    img: Sequence[float] | np.ndarray,
    y: int,
    img_mix: Sequence[float] | np.ndarray,
    ty_mix: Sequence[float] | np.ndarray,
    classes: ClassEmbeddings,
    cfg: LossConfig,
) -> MixupLossWithGrad:
    """l1 distance between original and mixed class distributions.

    The value is sum_c |p_c - q_c| with p the distribution of the
    original sample and q that of the mixed one; it lies in [0, 2]. At
    coordinates where p_c equals q_c exactly the subgradient 0 is used,
    which makes an untouched pair (eta = 1, or self-partner) contribute
    exactly zero loss and zero gradient.
    """
    y = _check_label(y, classes)
    p = class_distribution(img, classes.table[y], classes, cfg)
    q = class_distribution(img_mix, ty_mix, classes, cfg)
    diff = p - q
    value = float(np.sum(np.abs(diff)))
    s = np.sign(diff)
    table = classes.table
    grad_img = (float(s @ p) * (p @ table) - (s * p) @ table) / cfg.tau
    grad_img_mix = -(float(s @ q) * (q @ table) - (s * q) @ table) / cfg.tau
    return MixupLossWithGrad(value, grad_img, grad_img_mix)


def _batch_objective(
    embeddings: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    draws: Sequence[MixDraw],
    classes: ClassEmbeddings,
    cfg: LossConfig,
    base_loss,
) -> BatchLoss:
    """Mean of (base margin loss + lam * mix loss) over a batch.

    Per-sample gradients are returned aligned with the batch; each
    includes the sample's own terms plus its share of every mix it
    participates in as a partner. Self-partnered draws and eta = 1
    draws contribute an exact zero mix term.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {emb.shape}")
    batch = emb.shape[0]
    lab = [int(v) for v in labels]
    if len(lab) != batch:
        raise ValueError(f"{len(lab)} labels for batch of {batch}")
    if len(draws) != batch:
        raise ValueError(f"{len(draws)} draws for batch of {batch}")
    for d in draws:
        if d.partner >= batch:
            raise ValueError(f"partner {d.partner} out of range for batch of {batch}")

    grads = [np.zeros(emb.shape[1]) for _ in range(batch)]
    base_sum = 0.0
    mix_sum = 0.0
    total_sum = 0.0
    for i in range(batch):
        a = base_loss(emb[i], lab[i], classes, cfg)
        grads[i] += a.grad_img
        draw = draws[i]
        if draw.partner == i:
            mix_value = 0.0
        else:
            j = draw.partner
            img_mix, ty_mix = mix_embeddings(
                emb[i], emb[j], classes.table[lab[i]], classes.table[lab[j]], draw.eta
            )
            m = mixup_loss(emb[i], lab[i], img_mix, ty_mix, classes, cfg)
            mix_value = m.value
            grads[i] += cfg.lam * (m.grad_img + draw.eta * m.grad_img_mix)
            grads[j] += cfg.lam * ((1.0 - draw.eta) * m.grad_img_mix)
        base_sum += a.value
        mix_sum += mix_value
        total_sum += a.value + cfg.lam * mix_value

    inv = 1.0 / batch
    scaled = tuple(g * inv for g in grads)
    return BatchLoss(total_sum * inv, base_sum * inv, mix_sum * inv, scaled)


def total_loss(
    embeddings: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    draws: Sequence[MixDraw],
    classes: ClassEmbeddings,
    cfg: LossConfig,
) -> BatchLoss:
    """Verbatim combined objective: negated-logit loss plus weighted mix.

    ``embeddings`` is a (B, dim) array of unit-norm image embeddings
    and ``draws`` holds one mixing decision per row. Note the caveat
    on ``mms_actual_loss``: gradient descent on this combination pushes
    true-class similarity down, so it degrades argmax-similarity
    accuracy. It is exposed for measurement and comparison; the
    training loop descends ``training_objective``.
    """
    return _batch_objective(embeddings, labels, draws, classes, cfg, mms_actual_loss)


def training_objective(
    embeddings: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    draws: Sequence[MixDraw],
    classes: ClassEmbeddings,
    cfg: LossConfig,
) -> BatchLoss:
    """Aligning combined objective: additive-margin loss plus weighted mix.

    This is the objective the training loop minimizes. Its first term
    is ``mms_loss``, whose descent raises true-class similarity, which
    is equivalent to cross-entropy over the margin-adjusted logits
    (s_c - margin * t_c) / tau: correcting the stray negation in the
    negated-logit variant recovers exactly this form, up to a constant
    margin / tau that softmax ignores. Accuracy on a held-out domain
    therefore improves under this objective, while ``total_loss``
    retains the verbatim combination for measurement.
    """
    return _batch_objective(embeddings, labels, draws, classes, cfg, mms_loss)
