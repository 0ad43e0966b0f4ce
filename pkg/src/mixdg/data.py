"""Synthetic multi-domain classification data.

Classes are Gaussian clusters around shared prototypes; each domain
applies its own rigid transform (a seeded planar rotation plus a
translation, both scaled by ``shift_mag``) to every prototype before
sampling. That gives the covariate-shift structure a domain
generalization harness needs: the same label means a systematically
displaced cluster in every domain.

Datasets round-trip through a line-delimited text format. Each line is
a JSON object; an optional first line carries metadata (class and
domain names, whether features are pre-encoded embeddings, the feature
dimension, and optionally a class embedding table). Remaining lines are
records with ``domain``, ``label``, and ``features`` fields.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .losses import ClassEmbeddings
from .numeric import SeededRng, derive_seed, l2_normalize

__all__ = [
    "DataFormatError",
    "DomainDataset",
    "LabeledSample",
    "SynthConfig",
    "generate",
    "leave_one_domain_out",
    "load_dataset",
    "save_dataset",
]


class DataFormatError(ValueError):
    """Raised for malformed dataset files; messages carry line numbers."""


@dataclass(frozen=True)
class LabeledSample:
    """One observation: feature vector, class index, domain index."""

    features: np.ndarray
    label: int
    domain: int


@dataclass(frozen=True)
class DomainDataset:
    """Immutable collection of samples spanning several domains.

    ``encoded=True`` marks features as already living in embedding
    space (unit-norm outputs of some encoder); such datasets can be
    evaluated and compared but not used to train an encoder.
    """

    samples: tuple[LabeledSample, ...]
    class_names: tuple[str, ...]
    domain_names: tuple[str, ...]
    encoded: bool = False

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("dataset must contain at least one sample")
        if len(self.class_names) < 2:
            raise ValueError("need at least two classes")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be distinct")
        if not self.domain_names:
            raise ValueError("need at least one domain")
        if len(set(self.domain_names)) != len(self.domain_names):
            raise ValueError("domain names must be distinct")
        dim = self.samples[0].features.shape[0]
        for i, s in enumerate(self.samples):
            f = s.features
            if f.ndim != 1 or f.shape[0] != dim:
                raise ValueError(f"sample {i}: feature shape {f.shape}, expected ({dim},)")
            if not np.all(np.isfinite(f)):
                raise ValueError(f"sample {i}: non-finite features")
            if not (0 <= s.label < len(self.class_names)):
                raise ValueError(f"sample {i}: label {s.label} out of range")
            if not (0 <= s.domain < len(self.domain_names)):
                raise ValueError(f"sample {i}: domain {s.domain} out of range")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_domains(self) -> int:
        return len(self.domain_names)

    @property
    def dim(self) -> int:
        return self.samples[0].features.shape[0]

    def cell_counts(self) -> np.ndarray:
        """(n_domains, n_classes) table of sample counts."""
        counts = np.zeros((self.n_domains, self.n_classes), dtype=np.int64)
        for s in self.samples:
            counts[s.domain, s.label] += 1
        return counts

    def domains_present(self) -> list[int]:
        """Domain indices that actually occur, in ascending order."""
        return sorted({s.domain for s in self.samples})


@dataclass(frozen=True)
class SynthConfig:
    """Generation settings for the synthetic multi-domain corpus."""

    n_classes: int = 7
    n_domains: int = 4
    n_per_cell: int = 30
    input_dim: int = 16
    noise_sigma: float = 0.25
    shift_mag: float = 0.5
    seed: int = 7

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be at least 2, got {self.n_classes}")
        if self.n_domains < 1:
            raise ValueError(f"n_domains must be at least 1, got {self.n_domains}")
        if self.n_per_cell < 1:
            raise ValueError(f"n_per_cell must be at least 1, got {self.n_per_cell}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be at least 1, got {self.input_dim}")
        for field_name in ("noise_sigma", "shift_mag"):
            v = getattr(self, field_name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{field_name} must be finite and non-negative, got {v}")


def _random_plane(rng: SeededRng, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal pair spanning a random 2-D plane."""
    u = l2_normalize(rng.normals(dim))
    while True:
        v = rng.normals(dim)
        v = v - float(v @ u) * u
        norm = float(np.linalg.norm(v))
        if norm > 1e-12:
            return u, v / norm


def _domain_transform(rng: SeededRng, dim: int, shift_mag: float):
    """Seeded rigid map: rotation by shift_mag radians in a random plane,
    then a translation of length shift_mag. shift_mag=0 is the identity."""
    translation = l2_normalize(rng.normals(dim)) * shift_mag
    if dim >= 2:
        u, v = _random_plane(rng, dim)
        cos_a = math.cos(shift_mag) - 1.0
        sin_a = math.sin(shift_mag)

        def apply(p: np.ndarray) -> np.ndarray:
            pu = float(p @ u)
            pv = float(p @ v)
            rotated = p + cos_a * (pu * u + pv * v) + sin_a * (pu * v - pv * u)
            return rotated + translation

    else:

        def apply(p: np.ndarray) -> np.ndarray:
            return p + translation

    return apply


def generate(cfg: SynthConfig) -> DomainDataset:
    """Build the synthetic corpus for ``cfg``, byte-stable per seed.

    Every domain-class cell draws from its own generator seeded by a
    documented child-seed rule, so regenerating any one cell does not
    depend on how many samples other cells drew.
    """
    proto_rng = SeededRng(derive_seed(cfg.seed, 0))
    prototypes = [
        l2_normalize(proto_rng.normals(cfg.input_dim)) * 2.0
        for _ in range(cfg.n_classes)
    ]
    transforms = [
        _domain_transform(SeededRng(derive_seed(cfg.seed, 1 + d)), cfg.input_dim, cfg.shift_mag)
        for d in range(cfg.n_domains)
    ]
    samples: list[LabeledSample] = []
    cell_base = 1 + cfg.n_domains
    for d in range(cfg.n_domains):
        for c in range(cfg.n_classes):
            center = transforms[d](prototypes[c])
            cell_rng = SeededRng(derive_seed(cfg.seed, cell_base + d * cfg.n_classes + c))
            for _ in range(cfg.n_per_cell):
                noise = cell_rng.normals(cfg.input_dim) * cfg.noise_sigma
                features = center + noise
                features.flags.writeable = False
                samples.append(LabeledSample(features, c, d))
    return DomainDataset(
        tuple(samples),
        tuple(f"class_{c}" for c in range(cfg.n_classes)),
        tuple(f"domain_{d}" for d in range(cfg.n_domains)),
    )


_META_KEYS = {"class_names", "domain_names", "encoded", "dim", "class_embeddings"}
_RECORD_KEYS = {"domain", "label", "features"}


def save_dataset(
    dataset: DomainDataset,
    path: str | os.PathLike[str],
    class_embeddings: ClassEmbeddings | None = None,
) -> None:
    """Write a dataset as line-delimited JSON.

    The first line is a metadata object; each further line is one
    record. Floats are written with shortest round-trip precision, so
    save followed by load reproduces every value bit-exactly. A class
    embedding table may ride along in the metadata; its names must
    match the dataset's class names.
    """
    if class_embeddings is not None and class_embeddings.class_names != dataset.class_names:
        raise ValueError("class embedding names do not match dataset class names")
    meta: dict = {
        "class_names": list(dataset.class_names),
        "domain_names": list(dataset.domain_names),
        "encoded": dataset.encoded,
        "dim": dataset.dim,
    }
    if class_embeddings is not None:
        meta["class_embeddings"] = class_embeddings.table.tolist()
    lines = [json.dumps(meta, separators=(",", ":"))]
    for s in dataset.samples:
        record = {
            "domain": dataset.domain_names[s.domain],
            "label": dataset.class_names[s.label],
            "features": s.features.tolist(),
        }
        lines.append(json.dumps(record, separators=(",", ":")))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_features(raw: object, line_no: int) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise DataFormatError(f"line {line_no}: 'features' must be a non-empty array")
    values = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise DataFormatError(f"line {line_no}: features must be finite numbers")
        values.append(float(v))
    arr = np.array(values, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def _parse_name_list(raw: object, key: str) -> tuple[str, ...]:
    if (
        not isinstance(raw, list)
        or not raw
        or not all(isinstance(v, str) and v for v in raw)
    ):
        raise DataFormatError(f"line 1: '{key}' must be a non-empty array of names")
    if len(set(raw)) != len(raw):
        raise DataFormatError(f"line 1: '{key}' has duplicates")
    return tuple(raw)


def load_dataset(
    path: str | os.PathLike[str],
) -> tuple[DomainDataset, ClassEmbeddings | None]:
    """Parse a line-delimited dataset file.

    Returns the dataset and, when the metadata carried one, the class
    embedding table. Malformed lines raise DataFormatError naming the
    offending line. Files without a metadata line get names collected
    from the records in sorted order.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()

    parsed: list[tuple[int, dict]] = []
    for line_no, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"line {line_no}: invalid JSON ({e.msg})") from e
        if not isinstance(obj, dict):
            raise DataFormatError(f"line {line_no}: expected an object")
        parsed.append((line_no, obj))

    if not parsed:
        raise DataFormatError("file contains no records")

    meta: dict | None = None
    first_no, first = parsed[0]
    if "features" not in first:
        unknown = sorted(set(first) - _META_KEYS)
        if unknown:
            raise DataFormatError(f"line {first_no}: unknown metadata keys {unknown}")
        meta = first
        records = parsed[1:]
    else:
        records = parsed

    if not records:
        raise DataFormatError("file contains no sample records")

    class_names: tuple[str, ...] | None = None
    domain_names: tuple[str, ...] | None = None
    encoded = False
    declared_dim: int | None = None
    if meta is not None:
        if "class_names" in meta:
            class_names = _parse_name_list(meta["class_names"], "class_names")
        if "domain_names" in meta:
            domain_names = _parse_name_list(meta["domain_names"], "domain_names")
        if "encoded" in meta:
            if not isinstance(meta["encoded"], bool):
                raise DataFormatError("line 1: 'encoded' must be true or false")
            encoded = meta["encoded"]
        if "dim" in meta:
            if not isinstance(meta["dim"], int) or isinstance(meta["dim"], bool) or meta["dim"] < 1:
                raise DataFormatError("line 1: 'dim' must be a positive integer")
            declared_dim = meta["dim"]

    rows: list[tuple[int, str, str, np.ndarray]] = []
    for line_no, obj in records:
        unknown = sorted(set(obj) - _RECORD_KEYS)
        if unknown:
            raise DataFormatError(f"line {line_no}: unknown record keys {unknown}")
        missing = sorted(_RECORD_KEYS - set(obj))
        if missing:
            raise DataFormatError(f"line {line_no}: missing record keys {missing}")
        if not isinstance(obj["domain"], str) or not obj["domain"]:
            raise DataFormatError(f"line {line_no}: 'domain' must be a non-empty name")
        if not isinstance(obj["label"], str) or not obj["label"]:
            raise DataFormatError(f"line {line_no}: 'label' must be a non-empty name")
        features = _parse_features(obj["features"], line_no)
        if declared_dim is not None and features.shape[0] != declared_dim:
            raise DataFormatError(
                f"line {line_no}: {features.shape[0]} features, metadata says {declared_dim}"
            )
        if rows and features.shape[0] != rows[0][3].shape[0]:
            raise DataFormatError(
                f"line {line_no}: {features.shape[0]} features, earlier lines have {rows[0][3].shape[0]}"
            )
        rows.append((line_no, obj["label"], obj["domain"], features))

    if class_names is None:
        class_names = tuple(sorted({label for _, label, _, _ in rows}))
        if len(class_names) < 2:
            raise DataFormatError("records span fewer than two classes")
    if domain_names is None:
        domain_names = tuple(sorted({domain for _, _, domain, _ in rows}))
    class_index = {name: i for i, name in enumerate(class_names)}
    domain_index = {name: i for i, name in enumerate(domain_names)}

    samples = []
    for line_no, label, domain, features in rows:
        if label not in class_index:
            raise DataFormatError(f"line {line_no}: unknown class {label!r}")
        if domain not in domain_index:
            raise DataFormatError(f"line {line_no}: unknown domain {domain!r}")
        samples.append(LabeledSample(features, class_index[label], domain_index[domain]))

    dataset = DomainDataset(tuple(samples), class_names, domain_names, encoded)

    table: ClassEmbeddings | None = None
    if meta is not None and "class_embeddings" in meta:
        raw_table = meta["class_embeddings"]
        if not isinstance(raw_table, list) or len(raw_table) != len(class_names):
            raise DataFormatError(
                "line 1: 'class_embeddings' must have one row per class name"
            )
        try:
            table = ClassEmbeddings(np.array(raw_table, dtype=np.float64), class_names)
        except ValueError as e:
            raise DataFormatError(f"line 1: bad class embeddings ({e})") from e
    return dataset, table


def leave_one_domain_out(
    dataset: DomainDataset, target_domain: int
) -> tuple[DomainDataset, DomainDataset]:
    """Split into (source, target) by held-out domain index.

    Source keeps every sample from the other domains in file order;
    target keeps the held-out domain. Together they partition the
    dataset. Both sides keep the full name tables, so label and domain
    indices stay comparable across the split.
    """
    if dataset.n_domains < 2:
        raise ValueError("need at least two domains to hold one out")
    if not (0 <= target_domain < dataset.n_domains):
        raise ValueError(
            f"target_domain {target_domain} out of range for {dataset.n_domains} domains"
        )
    source = tuple(s for s in dataset.samples if s.domain != target_domain)
    target = tuple(s for s in dataset.samples if s.domain == target_domain)
    name = dataset.domain_names[target_domain]
    if not target:
        raise ValueError(f"domain {name!r} has no samples")
    if not source:
        raise ValueError(f"no samples outside domain {name!r}")
    def make(subset: tuple[LabeledSample, ...]) -> DomainDataset:
        return DomainDataset(subset, dataset.class_names, dataset.domain_names, dataset.encoded)

    return make(source), make(target)
