"""Dynamic-programming backup operators and feasibility tests.

Four maximizing backups for discounted models — the standard one-step
backup, its Jacobi variant (self-loop probability folded into the
denominator), Gauss-Seidel (in-place sweep in ascending state order), and
the combined Gauss-Seidel-Jacobi sweep — plus the undiscounted one-step
backup for total-reward models.

Every backup is monotone and maps the set of vectors dominating their own
backup into itself, which is what the descending accelerated iterations
rely on.  All backups share one dependency on the model: the per-row
weighted sums ``sum_j p(row, j) * v[j]``.  The simultaneous backups accept
precomputed sums so callers can reuse a single sums pass per iteration;
the sweeps are inherently sequential and compute their own.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import MdpModel, RewardMode

DIAG_GUARD = 1e-12
MEMBERSHIP_TOL_SCALE = 1e-9


class OperatorKind(str, Enum):
    """Backup operator selector; values double as CLI tokens."""

    STANDARD = "standard"
    JACOBI = "jacobi"
    GAUSS_SEIDEL = "gs"
    GAUSS_SEIDEL_JACOBI = "gsj"
    TOTAL_REWARD = "total"


def sup_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def membership_tolerance(v: np.ndarray) -> float:
    """Scale-relative slack used by feasibility tests: 1e-9 * (1 + ||v||)."""
    return MEMBERSHIP_TOL_SCALE * (1.0 + sup_norm(v))


@dataclass
class WeightedSums:
    """Per-row expected next values, tagged with the vector they came from.

    ``values[k] = sum_j p(row k, j) * base[j]``.  The tag lets consumers
    assert they were handed sums for the vector they are about to back up.
    """

    values: np.ndarray
    base: np.ndarray

    def matches(self, v: np.ndarray) -> bool:
        return self.base is v or np.array_equal(self.base, v)


def weighted_sums(m: MdpModel, v: np.ndarray) -> WeightedSums:
    """Compute all per-row weighted sums of ``v`` in one sparse matvec.

    The accumulation order per row is fixed (ascending columns), so
    recomputing sums for the same vector reproduces them bit for bit.
    """
    return WeightedSums(values=m.row_matrix @ v, base=v)


def _require_sums(m: MdpModel, v: np.ndarray, sums: WeightedSums | None) -> WeightedSums:
    if sums is None:
        return weighted_sums(m, v)
    if not sums.matches(v):
        raise ValueError("weighted sums were computed for a different vector")
    return sums


def _linear_rows(m: MdpModel, sums_values: np.ndarray) -> np.ndarray:
    """Row values r + discount * (expected next value)."""
    return m.rewards + m.discount * sums_values


def _jacobi_rows(m: MdpModel, v: np.ndarray, sums_values: np.ndarray) -> np.ndarray:
    """Row values with the self-loop term moved into the denominator."""
    diag = m.self_loop_probs
    denom = 1.0 - m.discount * diag
    if float(np.min(denom)) < DIAG_GUARD:
        raise ArithmeticError(
            "self-loop denominator 1 - discount * p(i,i) below guard; "
            "Jacobi-style backups are not usable on this model"
        )
    numer = m.rewards + m.discount * (sums_values - diag * v[m.row_state])
    return numer / denom


def _state_max(m: MdpModel, row_values: np.ndarray) -> np.ndarray:
    return np.maximum.reduceat(row_values, m.state_ptr[:-1])


def _state_argmax(m: MdpModel, row_values: np.ndarray, maxima: np.ndarray) -> np.ndarray:
    """Per-state index of the first row attaining the state maximum."""
    cand = np.where(
        row_values == maxima[m.row_state],
        np.arange(m.num_rows, dtype=np.int64),
        m.num_rows,
    )
    first = np.minimum.reduceat(cand, m.state_ptr[:-1])
    return (first - m.state_ptr[:-1]).astype(np.int64)


def apply_standard(m, v, sums=None):
    """One simultaneous backup; returns (new vector, greedy action per state)."""
    s = _require_sums(m, v, sums)
    rows = _linear_rows(m, s.values)
    best = _state_max(m, rows)
    return best, _state_argmax(m, rows, best)


def apply_total_reward(m, v, sums=None):
    """Undiscounted simultaneous backup for total-reward models."""
    if m.mode is not RewardMode.TOTAL_REWARD:
        raise ValueError("total-reward backup requires a total-reward model")
    s = _require_sums(m, v, sums)
    rows = m.rewards + s.values
    best = _state_max(m, rows)
    return best, _state_argmax(m, rows, best)


def apply_jacobi(m, v, sums=None):
    """Simultaneous backup with per-row self-loop elimination.

    Shares the standard backup's fixed point but contracts at least as
    fast when self-loops are present.  Only defined for discounted models.
    """
    if m.mode is not RewardMode.DISCOUNTED:
        raise ValueError("Jacobi backup requires a discounted model")
    s = _require_sums(m, v, sums)
    rows = _jacobi_rows(m, v, s.values)
    best = _state_max(m, rows)
    return best, _state_argmax(m, rows, best)


def _sweep(m: MdpModel, v: np.ndarray, divide_diagonal: bool):
    w = v.astype(np.float64, copy=True)
    policy = np.zeros(m.num_states, dtype=np.int64)
    discount = m.discount
    state_ptr, row_ptr = m.state_ptr, m.row_ptr
    rewards, cols, probs = m.rewards, m.cols, m.probs
    diag = m.self_loop_probs if divide_diagonal else None
    for i in range(m.num_states):
        r0, r1 = state_ptr[i], state_ptr[i + 1]
        best = -np.inf
        best_a = 0
        old = w[i]
        for k in range(r0, r1):
            lo, hi = row_ptr[k], row_ptr[k + 1]
            s = float(probs[lo:hi] @ w[cols[lo:hi]])
            if divide_diagonal:
                d = diag[k]
                denom = 1.0 - discount * d
                if denom < DIAG_GUARD:
                    raise ArithmeticError(
                        "self-loop denominator 1 - discount * p(i,i) below guard; "
                        "Jacobi-style backups are not usable on this model"
                    )
                val = (rewards[k] + discount * (s - d * old)) / denom
            else:
                val = rewards[k] + discount * s
            if val > best:
                best = val
                best_a = k - r0
        w[i] = best
        policy[i] = best_a
    return w, policy


def apply_gauss_seidel(m, v):
    """In-place sweep: states backed up in ascending order, each seeing the
    already-updated values of its predecessors."""
    if m.mode is not RewardMode.DISCOUNTED:
        raise ValueError("Gauss-Seidel backup requires a discounted model")
    return _sweep(m, v, divide_diagonal=False)


def apply_gauss_seidel_jacobi(m, v):
    """Gauss-Seidel sweep with the self-loop term divided out per row."""
    if m.mode is not RewardMode.DISCOUNTED:
        raise ValueError("Gauss-Seidel-Jacobi backup requires a discounted model")
    return _sweep(m, v, divide_diagonal=True)


def apply_operator(m, v, kind, sums=None):
    """Dispatch one backup of ``v`` under the selected operator.

    Returns (new vector, greedy policy).  ``sums`` is honored by the
    simultaneous operators and must be None for the sweeps, which cannot
    reuse sums of the unmodified vector.
    """
    kind = OperatorKind(kind)
    if kind is OperatorKind.STANDARD:
        return apply_standard(m, v, sums)
    if kind is OperatorKind.JACOBI:
        return apply_jacobi(m, v, sums)
    if kind is OperatorKind.TOTAL_REWARD:
        return apply_total_reward(m, v, sums)
    if sums is not None:
        raise ValueError("sweep operators recompute sums in place; pass sums=None")
    if kind is OperatorKind.GAUSS_SEIDEL:
        return apply_gauss_seidel(m, v)
    return apply_gauss_seidel_jacobi(m, v)


def sweep_carries_state(kind) -> bool:
    """True for operators whose backup cannot reuse a precomputed sums pass."""
    return OperatorKind(kind) in (OperatorKind.GAUSS_SEIDEL, OperatorKind.GAUSS_SEIDEL_JACOBI)


def is_feasible(m, v, tol=None, sums=None):
    """Test one-step dominance: v >= (backup of v) componentwise.

    Uses the standard backup for discounted models and the undiscounted
    backup for total-reward models — dominance is always measured against
    the one-step operator, whatever backup a solver happens to run.
    """
    if tol is None:
        tol = membership_tolerance(v)
    s = _require_sums(m, v, sums)
    if m.mode is RewardMode.TOTAL_REWARD:
        rows = m.rewards + s.values
    else:
        rows = _linear_rows(m, s.values)
    return bool(np.all(_state_max(m, rows) <= v + tol))


def is_strictly_feasible(m, v, tol=None, sums=None):
    """Strict one-step dominance: v > backup of v in every component."""
    if tol is None:
        tol = membership_tolerance(v)
    s = _require_sums(m, v, sums)
    if m.mode is RewardMode.TOTAL_REWARD:
        rows = m.rewards + s.values
    else:
        rows = _linear_rows(m, s.values)
    return bool(np.all(_state_max(m, rows) < v - tol))


def is_feasible_gs(m, v, tol=None):
    """Dominance against the Gauss-Seidel sweep: v >= sweep(v).

    A strictly weaker requirement than one-step dominance — there are
    vectors that dominate their sweep but not their simultaneous backup.
    """
    if tol is None:
        tol = membership_tolerance(v)
    w, _ = apply_gauss_seidel(m, v)
    return bool(np.all(w <= v + tol))
