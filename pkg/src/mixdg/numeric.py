"""Deterministic numeric kernel.

Vector coercion and checks, numerically stable softmax arithmetic, a
fixed cross-platform random number generator, Beta sampling, and a
finite-difference gradient oracle. Everything downstream builds on
these primitives, so their behaviour is pinned down tightly: identical
seeds must give identical results on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "BetaParams",
    "SeededRng",
    "SEED_INCREMENT",
    "as_vector",
    "derive_seed",
    "dot",
    "finite_diff_grad",
    "l2_normalize",
    "log_sum_exp",
    "sample_beta",
    "softmax",
]

_MASK64 = (1 << 64) - 1

# splitmix64 constants. These are part of the public reproducibility
# contract and must never change.
SEED_INCREMENT = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB


def _finalize(z: int) -> int:
    """splitmix64 output mix of a 64-bit state word."""
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def derive_seed(parent_seed: int, index: int) -> int:
    """Derive the seed for child task ``index`` from a parent seed.

    The rule is fixed so that independent generators for parallel tasks
    (data cells, per-run models, named class prompts) are reproducible:

        child = finalize((parent + (index + 1) * SEED_INCREMENT) mod 2**64)

    with ``finalize`` the splitmix64 output mix. ``index`` may be any
    non-negative integer, including 64-bit hashes.
    """
    if index < 0:
        raise ValueError(f"index must be non-negative, got {index}")
    return _finalize((int(parent_seed) + (index + 1) * SEED_INCREMENT) & _MASK64)


class SeededRng:
    """Deterministic generator with a splitmix64 core.

    Each draw advances a 64-bit state by ``SEED_INCREMENT`` and applies
    the splitmix64 finalizer. Floats use the top 53 bits, normals use
    Box-Muller with two uniforms per draw and no caching, and bounded
    integers use rejection sampling. The stream for a given seed is a
    platform-independent contract.
    """

    ALGORITHM_ID = "splitmix64"

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64

    def next_u64(self) -> int:
        """Next raw 64-bit word of the stream."""
        self._state = (self._state + SEED_INCREMENT) & _MASK64
        return _finalize(self._state)

    def uniform(self) -> float:
        """Uniform draw in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def _uniform_pos(self) -> float:
        """Uniform draw in (0, 1], safe as a logarithm argument."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53

    def normal(self) -> float:
        """Standard normal via Box-Muller, consuming exactly two uniforms."""
        u1 = self._uniform_pos()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        """Vector of ``n`` independent standard normals."""
        if n < 0:
            raise ValueError(f"n must be non-negative, got {n}")
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n) by modulo rejection."""
        if n <= 0:
            raise ValueError(f"n must be positive, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n)."""
        out = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            out[i], out[j] = out[j], out[i]
        return out


@dataclass(frozen=True)
class BetaParams:
    """Shape parameters of a Beta distribution, both strictly positive."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        for field_name in ("alpha", "beta"):
            v = getattr(self, field_name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{field_name} must be finite and positive, got {v}")


def sample_beta(rng: SeededRng, params: BetaParams) -> float:
    """Draw from Beta(alpha, beta) with Johnk's accept-reject scheme.

    Candidates U**(1/alpha) and V**(1/beta) are kept in log space so
    shape parameters well below one cannot underflow the acceptance
    test. The returned value always lies in [0, 1].
    """
    inv_a = 1.0 / params.alpha
    inv_b = 1.0 / params.beta
    while True:
        log_x = math.log(rng._uniform_pos()) * inv_a
        log_y = math.log(rng._uniform_pos()) * inv_b
        m = max(log_x, log_y)
        log_sum = m + math.log(math.exp(log_x - m) + math.exp(log_y - m))
        if log_sum <= 0.0:
            return math.exp(log_x - log_sum)


def as_vector(values: Sequence[float] | np.ndarray, *, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def dot(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Inner product of two equal-length finite vectors."""
    va = as_vector(a, name="a")
    vb = as_vector(b, name="b")
    if va.shape != vb.shape:
        raise ValueError(f"length mismatch: {va.shape[0]} vs {vb.shape[0]}")
    return float(va @ vb)


def l2_normalize(a: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale a vector to unit Euclidean norm. Zero vectors are an error."""
    v = as_vector(a, name="vector")
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def log_sum_exp(logits: Sequence[float] | np.ndarray) -> float:
    """log(sum(exp(logits))), shifted by the max for stability."""
    v = as_vector(logits, name="logits")
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(v - m))))


def softmax(logits: Sequence[float] | np.ndarray) -> np.ndarray:
    """Softmax of a finite logit vector; output sums to one."""
    v = as_vector(logits, name="logits")
    e = np.exp(v - np.max(v))
    return e / e.sum()


def finite_diff_grad(
    f: Callable[[np.ndarray], float],
    x: Sequence[float] | np.ndarray,
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient oracle.

    Evaluates (f(x + h e_i) - f(x - h e_i)) / (2 h) per coordinate. This
    shares no code with any analytic gradient, which is what makes it a
    meaningful check of one. Non-finite probe values are an error.
    """
    xv = as_vector(x, name="x")
    if not (math.isfinite(h) and h > 0):
        raise ValueError(f"h must be finite and positive, got {h}")
    grad = np.empty_like(xv)
    for i in range(xv.size):
        xp = xv.copy()
        xp[i] += h
        xm = xv.copy()
        xm[i] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ValueError(f"function evaluated non-finite near coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad
