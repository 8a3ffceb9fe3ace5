"""Self-contained loss verification suite.

Runs the property battery the loss family must satisfy — finite-difference
gradient agreement, single-positive collapse, shift invariance, max bounds,
the triplet relation, and large-logit stability — on freshly sampled inputs,
and reports one row per (loss, property). The stability row also evaluates a
deliberately naive direct-formula implementation to demonstrate *why* the
shipped evaluation path goes through log-sum-exp and softplus: the naive one
overflows on the same inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import LOSS_KINDS, loss_batch, triplet_pair
from .numerics import Rng, l2_normalize_rows


@dataclass(frozen=True)
class CheckResult:
    loss: str
    prop: str
    trials: int
    max_err: float
    tol: float
    passed: bool


def naive_unicon_values(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Direct formula log(1 + Σ_neg exp(s) · Σ_pos exp(−s)); overflows by
    design on large logits. Kept for demonstration, never for training."""
    logits = np.asarray(logits, dtype=np.float64)
    pos = np.asarray(targets, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        sum_neg = np.where(~pos, np.exp(logits), 0.0).sum(axis=1)
        sum_pos = np.where(pos, np.exp(-logits), 0.0).sum(axis=1)
        return np.log1p(sum_neg * sum_pos)


def _random_row(rng: Rng, width: int, kind: str):
    s = 2.0 * rng.normal(size=width)
    mask = np.zeros(width, dtype=bool)
    if kind == "infonce":
        n_pos = 1
    else:
        n_pos = int(rng.integers(1, min(8, width - 1) + 1))
    mask[rng.permutation(width)[:n_pos]] = True
    return s, mask


def _fd_gradient(kind, s, mask, h=1e-5):
    width = s.size
    # evaluate all 2*width perturbations in one batch
    pert = np.repeat(s[None, :], 2 * width, axis=0)
    idx = np.arange(width)
    pert[2 * idx, idx] += h
    pert[2 * idx + 1, idx] -= h
    values, _ = loss_batch(kind, pert, np.repeat(mask[None, :], 2 * width, axis=0))
    return (values[2 * idx] - values[2 * idx + 1]) / (2.0 * h)


def _check_grad(kind, trials, width, rng, tol=1e-6):
    worst = 0.0
    for t in range(trials):
        s, mask = _random_row(rng.stream("row", t), width, kind)
        _, grads = loss_batch(kind, s[None], mask[None])
        fd = _fd_gradient(kind, s, mask)
        err = float(np.max(np.abs(grads[0] - fd)) / max(np.max(np.abs(fd)), 1e-12))
        worst = max(worst, err)
    return CheckResult(kind, "grad_fd", trials, worst, tol, worst <= tol)


def _check_single_pos(kind, trials, width, rng, tol=1e-10):
    worst = 0.0
    for t in range(trials):
        r = rng.stream("row", t)
        s = 3.0 * r.normal(size=width)
        mask = np.zeros(width, dtype=bool)
        mask[int(r.integers(0, width))] = True
        v_kind, _ = loss_batch(kind, s[None], mask[None])
        v_ref, _ = loss_batch("infonce", s[None], mask[None])
        worst = max(worst, float(abs(v_kind[0] - v_ref[0])))
    return CheckResult(kind, "single_pos", trials, worst, tol, worst <= tol)


def _check_shift(kind, trials, width, rng, tol=1e-9):
    worst = 0.0
    for t in range(trials):
        s, mask = _random_row(rng.stream("row", t), width, kind)
        base, _ = loss_batch(kind, s[None], mask[None])
        for c in (-100.0, -1.0, 1.0, 100.0):
            shifted, _ = loss_batch(kind, (s + c)[None], mask[None])
            rel = float(abs(shifted[0] - base[0]) / max(abs(base[0]), 1e-12))
            worst = max(worst, rel)
    return CheckResult(kind, "shift_inv", trials, worst, tol, worst <= tol)


def _check_stability(kind, rng, tol=0.0):
    """Value and gradient must stay finite with logits pushed to ±600."""
    width = 33
    rows = []
    masks = []
    r = rng.stream("rows")
    for t in range(32):
        s = np.where(r.random(size=width) < 0.5, 600.0, -600.0)
        mask = np.zeros(width, dtype=bool)
        n_pos = 1 if kind == "infonce" else int(r.integers(1, 9))
        mask[r.permutation(width)[:n_pos]] = True
        rows.append(s)
        masks.append(mask)
    logits = np.array(rows)
    targets = np.array(masks)
    values, grads = loss_batch(kind, logits, targets)
    finite = bool(np.isfinite(values).all() and np.isfinite(grads).all())
    bad = 0.0 if finite else float("inf")
    return CheckResult(kind, "stability_600", len(rows), bad, tol, finite)


def _check_naive_overflow(rng):
    """PASS means the naive implementation does break on ±600 logits while
    the shipped path stays finite — evidence for the stable formulation."""
    width = 33
    r = rng.stream("rows")
    s = np.where(r.random(size=width) < 0.5, 600.0, -600.0)
    s[0] = -600.0  # positive slot
    s[1] = 600.0  # at least one overflowing negative
    mask = np.zeros(width, dtype=bool)
    mask[0] = True
    naive = naive_unicon_values(s[None], mask[None])
    stable, grads = loss_batch("unicon", s[None], mask[None])
    naive_breaks = not np.isfinite(naive).all()
    stable_holds = bool(np.isfinite(stable).all() and np.isfinite(grads).all())
    ok = naive_breaks and stable_holds
    return CheckResult("unicon", "naive_overflow", 1, 0.0 if ok else float("inf"), 0.0, ok)


def _check_max_bounds(trials, width, rng, tol=1e-12):
    worst = 0.0
    for t in range(trials):
        r = rng.stream("row", t)
        s = 3.0 * r.normal(size=width)
        mask = np.zeros(width, dtype=bool)
        n_pos = int(r.integers(2, min(8, width - 1) + 1))
        mask[r.permutation(width)[:n_pos]] = True
        value = loss_batch("unicon", s[None], mask[None])[0][0]
        max_delta = float(s[~mask].max() - s[mask].min())
        lower = max(0.0, max_delta)
        upper = lower + np.log1p(float(n_pos * (width - n_pos)))
        worst = max(worst, lower - value, value - upper)
    worst = max(worst, 0.0)
    return CheckResult("unicon", "max_bounds", trials, worst, tol, worst <= tol)


def _check_triplet(trials, rng, tol=1e-10):
    worst_env = 0.0  # envelope |2τ·unicon − triplet| − 2τ·log2, should be ≤ 0
    worst_eq = 0.0  # triplet vs squared-distance identity
    for t in range(trials):
        r = rng.stream("row", t)
        q, kp, kn = l2_normalize_rows(r.normal(size=(3, 8)))
        tau = 0.1 + 0.9 * float(r.random())
        s = np.array([[float(q @ kp), float(q @ kn)]]) / tau
        mask = np.array([[True, False]])
        uni = loss_batch("unicon", s, mask)[0][0]
        trip = triplet_pair(q, kp, kn, tau)
        worst_env = max(
            worst_env, abs(2.0 * tau * uni - trip) - 2.0 * tau * np.log(2.0)
        )
        ref = max(0.0, float(np.sum((q - kp) ** 2) - np.sum((q - kn) ** 2)))
        worst_eq = max(worst_eq, abs(trip - ref))
    worst = max(worst_env, worst_eq)
    return CheckResult("unicon", "triplet_pair", trials, worst, tol, worst <= tol)


def run_losscheck(trials: int = 1000, width: int = 33, seed: int = 0):
    """The full battery; returns CheckResult rows, all of which must pass."""
    if width < 3:
        raise ValueError("width must be >= 3")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    root = Rng(seed).stream("losscheck")
    grad_trials = min(trials, 200)  # FD is the expensive check
    results = []
    for kind in LOSS_KINDS:
        results.append(
            _check_grad(kind, grad_trials, width, root.stream("grad", _ki(kind)))
        )
        results.append(
            _check_single_pos(kind, trials, width, root.stream("single", _ki(kind)))
        )
        results.append(
            _check_shift(kind, trials, width, root.stream("shift", _ki(kind)))
        )
        results.append(_check_stability(kind, root.stream("stab", _ki(kind))))
    results.append(_check_max_bounds(trials, width, root.stream("bounds")))
    results.append(_check_triplet(trials, root.stream("triplet")))
    results.append(_check_naive_overflow(root.stream("naive")))
    return results


def _ki(kind: str) -> int:
    return LOSS_KINDS.index(kind)


def format_check_table(results) -> str:
    lines = [
        f"{'loss':<11} {'property':<15} {'trials':>6} {'max_err':>10} "
        f"{'tol':>8} {'status':>6}"
    ]
    for r in results:
        lines.append(
            f"{r.loss:<11} {r.prop:<15} {r.trials:>6} {r.max_err:>10.2e} "
            f"{r.tol:>8.0e} {'PASS' if r.passed else 'FAIL':>6}"
        )
    n_fail = sum(not r.passed for r in results)
    lines.append(
        f"{len(results)} checks, {len(results) - n_fail} passed, {n_fail} failed"
    )
    return "\n".join(lines)


__all__ = [
    "CheckResult",
    "format_check_table",
    "naive_unicon_values",
    "run_losscheck",
]
