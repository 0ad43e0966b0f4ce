"""Training loop, evaluation, held-out-domain protocol, checkpoints.

The optimizer is plain minibatch gradient descent with classical
momentum. Each run derives two independent generator streams from the
run seed, one for epoch shuffles and one for mixing decisions, so the
visit order of samples does not depend on how many draws the mixing
side consumed. Given identical inputs and seeds, a run reproduces the
same parameter trajectory bit for bit.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import DomainDataset, leave_one_domain_out
from .losses import (
    BatchLoss,
    ClassEmbeddings,
    LossConfig,
    build_mix,
    mms_actual_loss,
    mms_loss,
    training_objective,
)
from .model import (
    ACTIVATION_ID,
    EncoderConfig,
    EncoderParams,
    PromptTemplate,
    encode,
    encode_backward,
    init_encoder,
    make_class_embeddings,
    zero_shot_classify,
)
from .numeric import SeededRng, derive_seed

__all__ = [
    "CHECKPOINT_VERSION",
    "Checkpoint",
    "CheckpointError",
    "ComparisonReport",
    "EpochRecord",
    "ProtocolResult",
    "RunRecord",
    "TaskResult",
    "TrainConfig",
    "compare_losses",
    "evaluate",
    "fit_encoder",
    "load_checkpoint",
    "render_report",
    "run_protocol",
    "save_checkpoint",
    "train_run",
]

CURVE_HEADER = "epoch,loss_actual,loss_mix,loss_total,target_accuracy"

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one encoder run.

    ``learning_rate`` may be zero, which freezes the parameters while
    still exercising the full loop; that is useful as a control.
    ``eval_every`` thins out held-out evaluations; the final epoch is
    always evaluated.
    """

    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError(f"learning_rate must be finite and non-negative, got {self.learning_rate}")
        if not (0 <= self.momentum < 1):
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be at least 1, got {self.eval_every}")


@dataclass(frozen=True)
class EpochRecord:
    """Mean losses over one epoch, plus held-out accuracy when measured."""

    epoch: int
    loss_actual: float
    loss_mix: float
    loss_total: float
    target_accuracy: float | None


@dataclass(frozen=True)
class RunRecord:
    """Complete loss curve of a run.

    ``final_accuracy`` is the held-out accuracy after the last epoch;
    it is None when the run had no evaluation callback.
    """

    entries: tuple[EpochRecord, ...]
    final_accuracy: float | None

    def to_csv_text(self) -> str:
        """Loss curve as delimiter-separated text, six fractional digits.

        Epochs without a measurement leave the accuracy column empty.
        """
        lines = [CURVE_HEADER]
        for e in self.entries:
            acc = "" if e.target_accuracy is None else f"{e.target_accuracy:.6f}"
            lines.append(
                f"{e.epoch},{e.loss_actual:.6f},{e.loss_mix:.6f},{e.loss_total:.6f},{acc}"
            )
        return "\n".join(lines) + "\n"


def evaluate(
    params: EncoderParams | None,
    classes: ClassEmbeddings,
    dataset: DomainDataset,
) -> float:
    """Zero-shot accuracy (percent) of the encoder on a dataset.

    Pre-encoded datasets skip the encoder entirely, so ``params`` may
    be None for them; raw datasets require it.
    """
    if dataset.encoded:
        correct = sum(
            1 for s in dataset.samples if zero_shot_classify(s.features, classes) == s.label
        )
    else:
        if params is None:
            raise ValueError("raw features need encoder parameters to evaluate")
        correct = sum(
            1
            for s in dataset.samples
            if zero_shot_classify(encode(params, s.features), classes) == s.label
        )
    return 100.0 * correct / len(dataset)


def _zero_grads(params: EncoderParams) -> list[np.ndarray]:
    arrays = []
    for w, b in zip(params.weights, params.biases):
        arrays.append(np.zeros_like(w))
        arrays.append(np.zeros_like(b))
    return arrays


def _param_arrays(params: EncoderParams) -> list[np.ndarray]:
    arrays = []
    for w, b in zip(params.weights, params.biases):
        arrays.append(w)
        arrays.append(b)
    return arrays


def fit_encoder(
    features: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    params: EncoderParams,
    classes: ClassEmbeddings,
    cfg: TrainConfig,
    eval_fn: Callable[[EncoderParams], float] | None = None,
) -> tuple[EncoderParams, RunRecord]:
    """Train an encoder on (features, labels) by descending the margin
    objective with the mix consistency term (``training_objective``).

    The input ``params`` is copied, never mutated. Batches follow a
    seeded shuffle each epoch; the last short batch is kept. Loss means
    recorded per epoch are sample-weighted and decompose the descended
    objective, and ``eval_fn`` (when given) runs every ``eval_every``
    epochs and always on the last one.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {X.shape}")
    n = X.shape[0]
    y = [int(v) for v in labels]
    if len(y) != n:
        raise ValueError(f"{len(y)} labels for {n} samples")
    if n == 0:
        raise ValueError("cannot train on an empty set")
    if X.shape[1] != params.input_dim:
        raise ValueError(f"features have dim {X.shape[1]}, encoder expects {params.input_dim}")
    if params.embed_dim != classes.dim:
        raise ValueError(
            f"encoder embeds into dim {params.embed_dim}, class table has dim {classes.dim}"
        )
    for v in y:
        if not (0 <= v < classes.n_classes):
            raise ValueError(f"label {v} out of range for {classes.n_classes} classes")

    params = params.copy()
    arrays = _param_arrays(params)
    velocity = _zero_grads(params)
    shuffle_rng = SeededRng(derive_seed(cfg.seed, 0))
    mix_rng = SeededRng(derive_seed(cfg.seed, 1))

    entries: list[EpochRecord] = []
    final_accuracy: float | None = None
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        actual_sum = 0.0
        mix_sum = 0.0
        total_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            emb = np.stack([encode(params, X[i]) for i in idx])
            draws = build_mix(len(idx), mix_rng, cfg.loss.beta)
            batch: BatchLoss = training_objective(
                emb, [y[i] for i in idx], draws, classes, cfg.loss
            )

            grad_arrays = _zero_grads(params)
            for row, i in enumerate(idx):
                g = encode_backward(params, X[i], batch.grads[row])
                slot = 0
                for gw, gb in zip(g.weights, g.biases):
                    grad_arrays[slot] += gw
                    grad_arrays[slot + 1] += gb
                    slot += 2
            for vel, grad in zip(velocity, grad_arrays):
                vel *= cfg.momentum
                vel += grad
            for arr, vel in zip(arrays, velocity):
                arr -= cfg.learning_rate * vel

            weight = len(idx)
            actual_sum += batch.base * weight
            mix_sum += batch.mix * weight
            total_sum += batch.total * weight

        accuracy: float | None = None
        if eval_fn is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            accuracy = float(eval_fn(params))
            final_accuracy = accuracy
        entries.append(
            EpochRecord(epoch, actual_sum / n, mix_sum / n, total_sum / n, accuracy)
        )
    return params, RunRecord(tuple(entries), final_accuracy)


def train_run(
    source: DomainDataset,
    target: DomainDataset,
    params: EncoderParams,
    classes: ClassEmbeddings,
    cfg: TrainConfig,
) -> tuple[EncoderParams, RunRecord]:
    """Train on a source dataset while tracking accuracy on a target.

    The target is only ever read by the evaluation callback; mutating
    it cannot change the learned parameters. Pre-encoded sources are
    rejected because there is no encoder left to train.
    """
    if source.encoded:
        raise ValueError("source features are already encoded; nothing to train")
    if source.class_names != target.class_names:
        raise ValueError("source and target disagree on class names")
    if source.class_names != classes.class_names:
        raise ValueError("dataset and class table disagree on class names")
    X = np.stack([s.features for s in source.samples])
    y = [s.label for s in source.samples]
    return fit_encoder(
        X, y, params, classes, cfg, eval_fn=lambda p: evaluate(p, classes, target)
    )


@dataclass(frozen=True)
class TaskResult:
    """Outcome of one held-out-domain task."""

    target_domain: str
    baseline_accuracy: float
    final_accuracy: float
    record: RunRecord
    params: EncoderParams


@dataclass(frozen=True)
class ProtocolResult:
    """All held-out-domain tasks for one dataset, in domain order."""

    tasks: tuple[TaskResult, ...]

    @property
    def baseline_average(self) -> float:
        return sum(t.baseline_accuracy for t in self.tasks) / len(self.tasks)

    @property
    def final_average(self) -> float:
        return sum(t.final_accuracy for t in self.tasks) / len(self.tasks)


def run_protocol(
    dataset: DomainDataset,
    train_cfg: TrainConfig,
    encoder_cfg: EncoderConfig,
) -> ProtocolResult:
    """Hold out each domain in turn: train on the rest, test on it.

    Every task gets a fresh encoder seeded from the encoder seed and
    the task index. The untrained encoder's accuracy on the held-out
    domain is recorded as the zero-shot baseline of the same task.
    """
    template = PromptTemplate(encoder_cfg.template)
    classes = make_class_embeddings(
        dataset.class_names, encoder_cfg.embed_dim, encoder_cfg.seed, template
    )
    tasks = []
    for d in range(dataset.n_domains):
        source, target = leave_one_domain_out(dataset, d)
        params0 = init_encoder(
            dataset.dim,
            encoder_cfg.embed_dim,
            encoder_cfg.hidden_dim,
            seed=derive_seed(encoder_cfg.seed, d),
        )
        baseline = evaluate(params0, classes, target)
        trained, record = train_run(source, target, params0, classes, train_cfg)
        assert record.final_accuracy is not None
        tasks.append(
            TaskResult(
                dataset.domain_names[d], baseline, record.final_accuracy, record, trained
            )
        )
    return ProtocolResult(tuple(tasks))


def render_report(result: ProtocolResult, fmt: str = "text") -> str:
    """Accuracy table: one row per method, one column per held-out domain.

    ``fmt`` is "text" for an aligned table or "csv" for delimiter-
    separated values. Accuracies are percentages with two decimals.
    """
    domains = [t.target_domain for t in result.tasks]
    rows = [
        ("zero-shot", [t.baseline_accuracy for t in result.tasks], result.baseline_average),
        ("finetuned", [t.final_accuracy for t in result.tasks], result.final_average),
    ]
    if fmt == "csv":
        lines = ["method," + ",".join(domains) + ",Avg"]
        for name, values, avg in rows:
            lines.append(name + "," + ",".join(f"{v:.2f}" for v in values) + f",{avg:.2f}")
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    width = max(9, *(len(d) for d in domains))
    header = "method".ljust(10) + "".join(d.rjust(width + 2) for d in domains) + "Avg".rjust(width + 2)
    lines = ["target domain accuracy (%)", "", header]
    for name, values, avg in rows:
        cells = "".join(f"{v:.2f}".rjust(width + 2) for v in values)
        lines.append(name.ljust(10) + cells + f"{avg:.2f}".rjust(width + 2))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ComparisonReport:
    """How far apart the two margin-softmax variants are on a dataset.

    Absolute loss differences are exact floats; gradient agreement is
    summarized by cosine similarity over sample pairs where both
    gradients are nonzero (``skipped_zero_grads`` counts the rest).
    Cosine fields are None when every pair was skipped.
    """

    n_samples: int
    mean_abs_diff: float
    max_abs_diff: float
    identical: bool
    grad_cosine_mean: float | None
    grad_cosine_min: float | None
    grad_cosine_max: float | None
    skipped_zero_grads: int


def compare_losses(
    dataset: DomainDataset,
    classes: ClassEmbeddings,
    loss_cfg: LossConfig,
    params: EncoderParams | None = None,
    seed: int = 0,
) -> ComparisonReport:
    """Evaluate both margin-softmax variants on every sample.

    Raw datasets are embedded with ``params`` first; pre-encoded ones
    are consumed as is. Samples are visited in a seeded shuffled order,
    which aggregate statistics do not depend on.
    """
    if not dataset.encoded and params is None:
        raise ValueError("raw features need encoder parameters to compare losses")
    if dataset.class_names != classes.class_names:
        raise ValueError("dataset and class table disagree on class names")
    order = SeededRng(seed).permutation(len(dataset))
    diff_sum = 0.0
    diff_max = 0.0
    cosines: list[float] = []
    skipped = 0
    for i in order:
        s = dataset.samples[i]
        emb = s.features if dataset.encoded else encode(params, s.features)
        a = mms_loss(emb, s.label, classes, loss_cfg)
        b = mms_actual_loss(emb, s.label, classes, loss_cfg)
        d = abs(a.value - b.value)
        diff_sum += d
        diff_max = max(diff_max, d)
        na = float(np.linalg.norm(a.grad_img))
        nb = float(np.linalg.norm(b.grad_img))
        if na > 0.0 and nb > 0.0:
            cosines.append(float(a.grad_img @ b.grad_img) / (na * nb))
        else:
            skipped += 1
    n = len(dataset)
    return ComparisonReport(
        n_samples=n,
        mean_abs_diff=diff_sum / n,
        max_abs_diff=diff_max,
        identical=diff_max == 0.0,
        grad_cosine_mean=sum(cosines) / len(cosines) if cosines else None,
        grad_cosine_min=min(cosines) if cosines else None,
        grad_cosine_max=max(cosines) if cosines else None,
        skipped_zero_grads=skipped,
    )


class CheckpointError(ValueError):
    """Raised for unreadable, incomplete, or wrong-version checkpoints."""


@dataclass(frozen=True)
class Checkpoint:
    """Everything needed to evaluate a trained model later."""

    params: EncoderParams
    classes: ClassEmbeddings
    template: str
    metadata: dict


def save_checkpoint(
    path: str | os.PathLike[str],
    params: EncoderParams,
    classes: ClassEmbeddings,
    template: str = PromptTemplate().template,
    metadata: dict | None = None,
) -> None:
    """Write a single-document text checkpoint.

    Weights are serialized with shortest round-trip decimals, so a
    load followed by a save reproduces the file byte for byte. The
    ``metadata`` mapping must be JSON-serializable; configuration
    echoes go there.
    """
    if params.embed_dim != classes.dim:
        raise ValueError(
            f"encoder embeds into dim {params.embed_dim}, class table has dim {classes.dim}"
        )
    doc = {
        "version": CHECKPOINT_VERSION,
        "activation": ACTIVATION_ID,
        "template": template,
        "class_names": list(classes.class_names),
        "class_embeddings": classes.table.tolist(),
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "metadata": metadata if metadata is not None else {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str | os.PathLike[str]) -> Checkpoint:
    """Read a checkpoint, validating version and structure."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"invalid checkpoint JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version!r}, expected {CHECKPOINT_VERSION}"
        )
    required = [
        "activation",
        "template",
        "class_names",
        "class_embeddings",
        "weights",
        "biases",
        "metadata",
    ]
    missing = [k for k in required if k not in doc]
    if missing:
        raise CheckpointError(f"checkpoint is missing keys {missing}")
    if doc["activation"] != ACTIVATION_ID:
        raise CheckpointError(f"unsupported activation {doc['activation']!r}")
    try:
        params = EncoderParams(
            [np.array(w, dtype=np.float64) for w in doc["weights"]],
            [np.array(b, dtype=np.float64) for b in doc["biases"]],
        )
        classes = ClassEmbeddings(
            np.array(doc["class_embeddings"], dtype=np.float64),
            tuple(doc["class_names"]),
        )
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"malformed checkpoint contents: {e}") from e
    if params.embed_dim != classes.dim:
        raise CheckpointError(
            f"encoder embeds into dim {params.embed_dim}, class table has dim {classes.dim}"
        )
    metadata = doc["metadata"]
    if not isinstance(metadata, dict):
        raise CheckpointError("checkpoint metadata must be an object")
    return Checkpoint(params, classes, str(doc["template"]), metadata)
