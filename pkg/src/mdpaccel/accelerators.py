"""Acceleration operators for descending value iteration.

Both operators take a point that dominates its own one-step backup and
move it as far toward the fixed point as a single closed-form scan over
all (state, action) rows allows:

* the projective operator scales the point: it finds the smallest factor
  ``alpha`` in [0, 1] such that ``alpha * v`` still dominates its backup,
  which requires nonnegative rewards;
* the linear-extension operator extrapolates along the ray from the
  current point through a second dominating point (normally its backup):
  it finds the largest step ``alpha >= 1`` that keeps the extended point
  dominating.

Each scan costs one pass over the rows and no new weighted-sums pass: the
sums of the accelerated point follow from the inputs' sums by linearity
(``sums(alpha * v) = alpha * sums(v)``, and affine combinations likewise).

A damped variant blends the accelerated point back toward its operand
with weight ``beta``; since both accelerated point and operand are scalar
multiples / affine combinations along the same ray, damping folds into an
effective ``alpha`` and keeps the sums bookkeeping exact.

When enabled, membership checks validate the preconditions (inputs
dominate their backups) from the sums already in hand, and validate the
output with one fresh weighted-sums pass; a failed output check falls
back to the safe input point and flags the step instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MdpModel
from .operators import (
    WeightedSums,
    is_feasible,
    membership_tolerance,
    sup_norm,
    weighted_sums,
)

RATIO_GUARD_SCALE = 1e-12
ALPHA_CAP_DEFAULT = 1e12


class FeasibilityError(ValueError):
    """An input point does not dominate its own backup."""


class AlreadyConvergedError(ValueError):
    """The two points of an extension scan coincide to working precision."""


@dataclass(frozen=True)
class AlphaResult:
    """Outcome of one acceleration scan.

    Attributes:
        alpha: the step factor found by the scan.
        binding: (state, action) of the row that pinned ``alpha``, or None
            when no row was binding.
        fallback_used: True when the scan or its output check hit a
            degenerate case and the step was replaced by a safe one.
    """

    alpha: float
    binding: tuple[int, int] | None = None
    fallback_used: bool = False


@dataclass
class AccelStep:
    """An accelerated point with its propagated weighted sums."""

    point: np.ndarray
    sums: WeightedSums
    alpha: AlphaResult
    effective_alpha: float


def _ratio_guard(v: np.ndarray) -> float:
    return RATIO_GUARD_SCALE * (1.0 + sup_norm(v))


def _row_location(m: MdpModel, row: int) -> tuple[int, int]:
    state = int(m.row_state[row])
    return state, int(row - m.state_ptr[state])


def _sums_for(m, v, sums):
    if sums is None:
        return weighted_sums(m, v)
    if not sums.matches(v):
        raise ValueError("weighted sums were computed for a different vector")
    return sums


def projective_alpha(m, v, sums=None, check_membership=True) -> AlphaResult:
    """Smallest scale factor keeping ``alpha * v`` above its own backup.

    For each row the constraint is ``alpha * (v_i - discount * s_i) >=
    reward``; with nonnegative rewards and a dominating ``v`` every row's
    slack ``q = v_i - discount * s_i`` is at least its reward, so the scan
    reduces to ``alpha = max reward / q`` over rows, clamped into [0, 1].

    Rows whose slack is within guard tolerance of zero impose nothing when
    their reward is also negligible; a near-zero slack against a clearly
    positive reward contradicts dominance, and the scan answers with a
    flagged ``alpha = 1`` (keep the point) instead of dividing by noise.

    Raises:
        FeasibilityError: negative rewards, or (with checks enabled) a
            ``v`` that does not dominate its backup.
    """
    if m.num_rows and float(np.min(m.rewards)) < 0.0:
        raise FeasibilityError(
            "projective scaling needs nonnegative rewards; shift rewards first"
        )
    s = _sums_for(m, v, sums)
    if check_membership and not is_feasible(m, v, sums=s):
        raise FeasibilityError("point does not dominate its one-step backup")
    guard = _ratio_guard(v)
    q = v[m.row_state] - m.discount * s.values
    tight = q <= guard
    if bool(np.any(tight & (m.rewards > guard))):
        return AlphaResult(alpha=1.0, binding=None, fallback_used=True)
    valid = ~tight
    if not bool(np.any(valid)):
        return AlphaResult(alpha=0.0, binding=None)
    ratios = np.full(m.num_rows, -np.inf)
    ratios[valid] = m.rewards[valid] / q[valid]
    row = int(np.argmax(ratios))
    alpha = min(1.0, max(0.0, float(ratios[row])))
    return AlphaResult(alpha=alpha, binding=_row_location(m, row))


def linear_extension_alpha(
    m, v, u, sums_v=None, sums_u=None, alpha_cap=ALPHA_CAP_DEFAULT, check_membership=True
) -> AlphaResult:
    """Largest step along ``v + alpha * (u - v)`` that keeps dominance.

    Requires both endpoints to dominate their own backups; any such ``u``
    works as the direction point, not only the exact backup of ``v``.  Per
    row the extended point stays dominating while ``c + alpha * d >= 0``
    with ``c = v_i - reward - discount * s^v_i`` (nonnegative by
    dominance of ``v``) and ``d = (u - v)_i - discount * (s^u_i -
    s^v_i)``.  Only rows with ``d`` clearly negative bound the step; the
    smallest ``c / -d`` over them is the answer, floored at 1 (the point
    ``u`` itself is always admissible).  When no row bounds the step the
    result is ``alpha_cap`` with the fallback flag set.

    Raises:
        AlreadyConvergedError: ``u`` and ``v`` coincide to guard tolerance.
        FeasibilityError: with checks enabled, an endpoint that does not
            dominate its backup.
    """
    guard = _ratio_guard(v)
    if sup_norm(u - v) <= guard:
        raise AlreadyConvergedError("direction point coincides with the current point")
    sv = _sums_for(m, v, sums_v)
    su = _sums_for(m, u, sums_u)
    if check_membership:
        if not is_feasible(m, v, sums=sv):
            raise FeasibilityError("current point does not dominate its one-step backup")
        if not is_feasible(m, u, sums=su):
            raise FeasibilityError("direction point does not dominate its one-step backup")
    c = v[m.row_state] - m.rewards - m.discount * sv.values
    d = (u - v)[m.row_state] - m.discount * (su.values - sv.values)
    binding = d < -guard
    if not bool(np.any(binding)):
        return AlphaResult(alpha=float(alpha_cap), binding=None, fallback_used=True)
    ratios = np.full(m.num_rows, np.inf)
    ratios[binding] = c[binding] / -d[binding]
    row = int(np.argmin(ratios))
    alpha = max(1.0, float(ratios[row]))
    if alpha >= alpha_cap:
        return AlphaResult(alpha=float(alpha_cap), binding=_row_location(m, row), fallback_used=True)
    return AlphaResult(alpha=alpha, binding=_row_location(m, row))


def _checked(m, z, zsums, fallback_point, fallback_sums, alpha, effective, check):
    """Validate an accelerated point; swap in the fallback when it fails."""
    if check:
        fresh = weighted_sums(m, z)
        if not is_feasible(m, z, sums=fresh):
            safe = fallback_point.copy()
            return AccelStep(
                point=safe,
                sums=WeightedSums(values=fallback_sums.values.copy(), base=safe),
                alpha=AlphaResult(alpha.alpha, alpha.binding, fallback_used=True),
                effective_alpha=1.0,
            )
    return AccelStep(point=z, sums=zsums, alpha=alpha, effective_alpha=effective)


def apply_projective(m, v, sums=None, beta=0.0, check_membership=True) -> AccelStep:
    """Scale ``v`` toward the fixed point; returns point, sums, and scan info.

    ``beta`` in [0, 1) damps the step toward ``v``; the damped point is
    still a plain multiple of ``v``, with factor ``(1-beta)*alpha + beta``.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    s = _sums_for(m, v, sums)
    res = projective_alpha(m, v, sums=s, check_membership=check_membership)
    effective = (1.0 - beta) * res.alpha + beta
    z = effective * v
    zsums = WeightedSums(values=effective * s.values, base=z)
    return _checked(m, z, zsums, v, s, res, effective, check_membership)


def apply_beta_variant(m, v, z, beta, check_membership=True) -> np.ndarray:
    """Blend an accelerated point ``z`` back toward its source ``v``.

    Returns ``(1 - beta) * z + beta * v``.  With ``beta = 0`` the blend
    is ``z`` itself.  When checks are enabled and the blend fails the
    dominance test, the unblended ``z`` is returned instead.

    The solver does not call this directly — there the damping folds into
    the step factor so the sums bookkeeping stays exact — but the blend
    is useful on its own for nudging a boundary point toward the interior.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    if beta == 0.0:
        return z
    blended = (1.0 - beta) * z + beta * v
    if check_membership and not is_feasible(m, blended):
        return z
    return blended


def apply_linear_extension(
    m,
    v,
    u,
    sums_v=None,
    sums_u=None,
    beta=0.0,
    alpha_cap=ALPHA_CAP_DEFAULT,
    check_membership=True,
) -> AccelStep:
    """Extend from ``v`` through ``u``; returns point, sums, and scan info.

    The damped step factor is ``(1-beta)*alpha``; with ``alpha >= 1`` and
    small ``beta`` the extended point still moves at least toward ``u``,
    and by convexity of the dominance region it remains admissible.  A
    failed output check falls back to ``u`` (already a valid descent).
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    sv = _sums_for(m, v, sums_v)
    su = _sums_for(m, u, sums_u)
    res = linear_extension_alpha(
        m, v, u, sums_v=sv, sums_u=su, alpha_cap=alpha_cap, check_membership=check_membership
    )
    effective = (1.0 - beta) * res.alpha
    z = v + effective * (u - v)
    zsums = WeightedSums(values=sv.values + effective * (su.values - sv.values), base=z)
    return _checked(m, z, zsums, u, su, res, effective, check_membership)
