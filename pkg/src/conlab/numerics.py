"""Small dense numerics shared by every module.

Everything runs in 64-bit floats. The exported kernels are the numerically
delicate pieces (log-sum-exp, softplus, row normalization) plus a seeded,
splittable random number generator. All functions are pure; `Rng` instances
are single-owner.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEGENERATE_NORM = 1e-12


def log_sum_exp(values) -> float:
    """log(sum(exp(v_i))) with the maximum subtracted before exponentiation.

    Exact (returns x itself) for single-element input.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty reduction")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input")
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(v - m))))


def softplus(x):
    """log(1 + exp(x)) without overflow, elementwise.

    Uses the identity softplus(x) = max(x, 0) + log1p(exp(-|x|)), which is
    stable over the whole float64 range and makes softplus(x) - softplus(-x)
    equal to x exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    """Logistic function, computed without overflow on either tail."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Scale every row of a 2-d array to unit L2 norm.

    Raises on rows with norm <= 1e-12; direction is preserved.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2-d array")
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms <= DEGENERATE_NORM):
        raise ValueError("degenerate vector")
    return m / norms[:, None]


def masked_lse_rows(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp restricted to masked entries.

    Rows whose mask is empty return -inf. Exact for rows with a single
    masked entry.
    """
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    masked = np.where(mask, x, -np.inf)
    m = np.max(masked, axis=1)
    any_row = mask.any(axis=1)
    m_safe = np.where(any_row, m, 0.0)
    # shift under the mask *before* exponentiating: masked-out lanes become
    # exp(-inf) = 0 instead of overflowing on large discarded values
    s = np.sum(np.exp(masked - m_safe[:, None]), axis=1)
    return np.where(any_row, m_safe + np.log(np.where(any_row, s, 1.0)), -np.inf)


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Counter-based seeded generator with labeled substream derivation.

    A root seed plus a path of (label, index...) components identifies a
    stream; recreating the same path always yields bitwise-identical draws.
    This makes every consumer positionally re-derivable: stream("aug", step)
    is the same stream on a fresh run and after a resume.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = tuple(int(p) for p in _path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self._path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def stream(self, label: str, *indices: int) -> "Rng":
        """Derive an independent child stream for (label, *indices)."""
        for i in indices:
            if int(i) < 0:
                raise ValueError("stream indices must be non-negative")
        path = self._path + (_label_key(label),) + tuple(int(i) for i in indices)
        return Rng(self.seed, _path=path)

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def unit_rows(self, n: int, dim: int) -> np.ndarray:
        """n random directions, uniform on the unit sphere in `dim`."""
        rows = self._gen.standard_normal((n, dim))
        norms = np.linalg.norm(rows, axis=1)
        while np.any(norms <= DEGENERATE_NORM):  # pragma: no cover
            bad = norms <= DEGENERATE_NORM
            rows[bad] = self._gen.standard_normal((int(bad.sum()), dim))
            norms = np.linalg.norm(rows, axis=1)
        return rows / norms[:, None]
