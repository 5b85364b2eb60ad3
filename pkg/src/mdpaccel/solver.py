"""Value-iteration driver with optional acceleration.

One iteration of the driver is one backup of the current iterate under
the configured operator, followed (when the run is accelerated and not
yet converged) by one acceleration step.  Iteration counts reported by
the driver are therefore backup counts, directly comparable across plain
and accelerated runs.

The driver keeps the weighted-sums bookkeeping exact: per iteration it
performs exactly one fresh weighted-sums pass — at the new backup — and
derives every other sums vector it needs by linearity (scaling for the
projective step, affine combination for the linear extension).  The
in-place sweep operators compute their per-state sums inside the sweep;
combined with the linear extension they carry the current iterate's sums
from the previous iteration's affine combination, so the one-pass budget
holds for every operator/accelerator pairing.  Membership checks, when
enabled, cost one additional validation pass per accelerated iteration;
disabling them removes that cost without changing the iterate sequence.

Stopping.  Discounted runs stop when the backup residual in the
componentwise maximum norm falls below ``stopping_threshold(epsilon,
discount) / num_states`` — the accuracy bound is split evenly across
components, so the guarantee holds per state rather than only for the
worst one.  Total-reward runs stop when the residual falls below
``epsilon`` itself.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .accelerators import (
    ALPHA_CAP_DEFAULT,
    AlphaResult,
    AlreadyConvergedError,
    apply_linear_extension,
    apply_projective,
)
from .model import (
    MdpModel,
    RewardMode,
    adjust_rewards_nonnegative,
    initial_feasible_point,
    initial_feasible_point_total_reward,
)
from .operators import (
    OperatorKind,
    apply_operator,
    is_feasible,
    sup_norm,
    sweep_carries_state,
    weighted_sums,
)


class AcceleratorKind(str, Enum):
    """Acceleration selector; values double as CLI tokens."""

    NONE = "none"
    PROJECTIVE = "projective"
    LINEAR_EXTENSION = "linear"


class SolverConfigError(ValueError):
    """A solver configuration that cannot run on the given model."""


def stopping_threshold(epsilon: float, discount: float) -> float:
    """Backup-residual bound that makes the final iterate epsilon-accurate.

    For a discounted run, a residual of ``epsilon * (1 - discount) /
    (2 * discount)`` in the maximum norm bounds the distance to the fixed
    point by ``epsilon / 2``.
    """
    if not 0.0 < discount < 1.0:
        raise ValueError("stopping threshold needs a discount strictly between 0 and 1")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    return epsilon * (1.0 - discount) / (2.0 * discount)


@dataclass
class SolverConfig:
    """Everything a solve run needs beyond the model itself.

    Attributes:
        operator: backup operator to iterate.
        accelerator: acceleration applied between backups.
        beta: damping weight in [0, 1) for the accelerated point.
        epsilon: target accuracy driving the stopping rule.
        max_iterations: hard backup budget.
        membership_checks: validate acceleration pre/postconditions at the
            cost of one extra weighted-sums pass per accelerated iteration.
        initial_point: explicit start vector; when None the driver picks
            one (see ``solve``).
        alpha_cap: ceiling for the linear-extension step factor.
        record_iterates: keep a copy of every iterate in the result
            (start vector included); off by default since it turns an
            O(states) run into an O(states * iterations) allocation.
    """

    operator: OperatorKind = OperatorKind.STANDARD
    accelerator: AcceleratorKind = AcceleratorKind.NONE
    beta: float = 0.0
    epsilon: float = 1e-3
    max_iterations: int = 200_000
    membership_checks: bool = True
    initial_point: np.ndarray | None = None
    alpha_cap: float = ALPHA_CAP_DEFAULT
    record_iterates: bool = False

    def __post_init__(self):
        self.operator = OperatorKind(self.operator)
        self.accelerator = AcceleratorKind(self.accelerator)

    def validate_for(self, m: MdpModel) -> None:
        if self.epsilon <= 0.0:
            raise SolverConfigError("epsilon must be positive")
        if self.max_iterations < 1:
            raise SolverConfigError("max_iterations must be at least 1")
        if not 0.0 <= self.beta < 1.0:
            raise SolverConfigError("beta must lie in [0, 1)")
        if m.mode is RewardMode.TOTAL_REWARD:
            if self.operator is not OperatorKind.TOTAL_REWARD:
                raise SolverConfigError(
                    "total-reward models use the total-reward backup; operators that "
                    "discount or divide out self-loops are undefined at discount 1"
                )
        elif self.operator is OperatorKind.TOTAL_REWARD:
            raise SolverConfigError("the total-reward backup requires a total-reward model")
        if self.initial_point is not None:
            p = np.asarray(self.initial_point, dtype=np.float64)
            if p.shape != (m.num_states,):
                raise SolverConfigError(
                    f"initial point has shape {p.shape}, model has {m.num_states} states"
                )
            if not np.all(np.isfinite(p)):
                raise SolverConfigError("initial point must be finite")


@dataclass
class SolveResult:
    """Outcome of one solve run.

    ``iterations`` counts backups; ``residuals[k]`` is the maximum-norm
    backup residual of iteration k; ``alphas[k]`` is the acceleration
    scan outcome of iteration k (None when that iteration ran no
    acceleration).  ``final_value`` is expressed in the input model's
    reward units even when the driver shifted rewards internally (the
    shift's contribution ``reward_offset / (1 - discount)`` is removed).
    ``iterates`` (present when recording was requested) holds the start
    vector followed by every iterate, in those same corrected units.
    """

    iterations: int
    converged: bool
    wall_ms: float
    residuals: np.ndarray
    alphas: list[AlphaResult | None]
    fallback_count: int
    final_value: np.ndarray
    final_policy: np.ndarray
    threshold: float
    reward_offset: float = 0.0
    iterates: list[np.ndarray] | None = None

    @property
    def final_residual(self) -> float:
        return float(self.residuals[-1]) if len(self.residuals) else float("nan")


def extract_policy(m: MdpModel, v: np.ndarray) -> np.ndarray:
    """Greedy policy at ``v`` under the model's one-step backup.

    Ties resolve to the lowest action index.
    """
    kind = (
        OperatorKind.TOTAL_REWARD
        if m.mode is RewardMode.TOTAL_REWARD
        else OperatorKind.STANDARD
    )
    _, policy = apply_operator(m, v, kind)
    return policy


def _resolve_initial(m: MdpModel, config: SolverConfig):
    """Choose the model to iterate on, the start vector, and the reward shift."""
    accelerated = config.accelerator is not AcceleratorKind.NONE
    if config.initial_point is not None:
        w = np.asarray(config.initial_point, dtype=np.float64).copy()
        if accelerated and config.membership_checks and not is_feasible(m, w):
            raise SolverConfigError(
                "accelerated runs need a start that dominates its own backup; "
                "the supplied initial point does not"
            )
        return m, w, 0.0
    if m.mode is RewardMode.TOTAL_REWARD:
        return m, initial_feasible_point_total_reward(m), 0.0
    if not accelerated:
        return m, np.zeros(m.num_states), 0.0
    shifted, offset = adjust_rewards_nonnegative(m)
    return shifted, initial_feasible_point(shifted), offset


@dataclass
class _Step:
    iterate: np.ndarray
    residual: float
    alpha: AlphaResult | None
    converged: bool


class _Loop:
    """Mutable state of one run: current iterate and its carried sums."""

    def __init__(self, solve_model, config, start, threshold):
        self.m = solve_model
        self.config = config
        self.w = start
        self.threshold = threshold
        self.carry_sums = (not sweep_carries_state(config.operator)) or (
            config.accelerator is AcceleratorKind.LINEAR_EXTENSION
        )
        self.sums = weighted_sums(self.m, self.w) if self.carry_sums else None

    def step(self) -> _Step:
        cfg = self.config
        if sweep_carries_state(cfg.operator):
            u, _ = apply_operator(self.m, self.w, cfg.operator)
        else:
            u, _ = apply_operator(self.m, self.w, cfg.operator, sums=self.sums)
        residual = sup_norm(u - self.w)
        if residual <= self.threshold or cfg.accelerator is AcceleratorKind.NONE:
            converged = residual <= self.threshold
            self.w = u
            if self.carry_sums:
                self.sums = None if converged else weighted_sums(self.m, u)
            return _Step(u, residual, None, converged)
        s_u = weighted_sums(self.m, u)
        if cfg.accelerator is AcceleratorKind.PROJECTIVE:
            accel = apply_projective(
                self.m, u, sums=s_u, beta=cfg.beta, check_membership=cfg.membership_checks
            )
        else:
            try:
                accel = apply_linear_extension(
                    self.m,
                    self.w,
                    u,
                    sums_v=self.sums,
                    sums_u=s_u,
                    beta=cfg.beta,
                    alpha_cap=cfg.alpha_cap,
                    check_membership=cfg.membership_checks,
                )
            except AlreadyConvergedError:
                # Residual above the stopping threshold but below the
                # scan's degeneracy guard (possible at high discount on
                # large-magnitude values): take the plain backup step.
                self.w = u
                self.sums = s_u if self.carry_sums else None
                return _Step(u, residual, None, False)
        self.w = accel.point
        self.sums = accel.sums if self.carry_sums else None
        return _Step(self.w, residual, accel.alpha, False)


def solve(m: MdpModel, config: SolverConfig | None = None) -> SolveResult:
    """Run value iteration on ``m`` under ``config``.

    Start vector when none is configured: zeros for plain discounted
    runs; for accelerated discounted runs the rewards are first shifted
    nonnegative and the constant ``max reward / (1 - discount)`` start is
    used (the shift is removed from the reported values); total-reward
    runs start from the dominating vector built by
    ``initial_feasible_point_total_reward``.

    A caution on disabling membership checks with the linear extension:
    near the fixed point the ray scan's numerator and denominator rows
    are dominated by rounding noise, and an occasional huge step factor
    can throw the iterate out of the dominance region and stall
    convergence; the checks exist to catch exactly those points and fall
    back to the plain backup.  Disable them for timing runs with the
    projective accelerator (whose factor is clamped to [0, 1]) or at
    moderate discounts, not for high-discount linear-extension runs.

    Returns a ``SolveResult``; ``converged`` is False when the backup
    budget ran out first.
    """
    if config is None:
        config = SolverConfig()
    config.validate_for(m)
    solve_model, start, offset = _resolve_initial(m, config)
    if m.mode is RewardMode.TOTAL_REWARD:
        threshold = config.epsilon
    else:
        threshold = stopping_threshold(config.epsilon, m.discount) / m.num_states

    correction = offset / (1.0 - m.discount) if offset else 0.0
    loop = _Loop(solve_model, config, start, threshold)
    residuals: list[float] = []
    alphas: list[AlphaResult | None] = []
    iterates = [start - correction] if config.record_iterates else None
    converged = False
    t0 = time.perf_counter()
    for _ in range(config.max_iterations):
        step = loop.step()
        residuals.append(step.residual)
        alphas.append(step.alpha)
        if iterates is not None:
            iterates.append(step.iterate - correction)
        if step.converged:
            converged = True
            break
    wall_ms = (time.perf_counter() - t0) * 1000.0

    value = loop.w.copy()
    if offset:
        value -= correction
    policy = extract_policy(solve_model, loop.w)
    return SolveResult(
        iterations=len(residuals),
        converged=converged,
        wall_ms=wall_ms,
        residuals=np.asarray(residuals),
        alphas=alphas,
        fallback_count=sum(1 for a in alphas if a is not None and a.fallback_used),
        final_value=value,
        final_policy=policy,
        threshold=threshold,
        reward_offset=offset,
        iterates=iterates,
    )


_BASE_LABEL = {
    OperatorKind.STANDARD: "VI",
    OperatorKind.JACOBI: "J",
    OperatorKind.GAUSS_SEIDEL: "GS",
    OperatorKind.GAUSS_SEIDEL_JACOBI: "GSJ",
    OperatorKind.TOTAL_REWARD: "TVI",
}

_ACCEL_PREFIX = {
    AcceleratorKind.NONE: "",
    AcceleratorKind.PROJECTIVE: "PA",
    AcceleratorKind.LINEAR_EXTENSION: "LA",
}


def algorithm_label(operator, accelerator) -> str:
    """Short display name for an operator/accelerator pairing (VI, PAVI, ...)."""
    return _ACCEL_PREFIX[AcceleratorKind(accelerator)] + _BASE_LABEL[OperatorKind(operator)]
