"""Finite Markov decision process models.

A model is stored in a row-compressed sparse layout: every (state, action)
pair owns one transition row, rows are grouped by state in ascending state
order, and each row keeps its nonzero columns strictly increasing.  The
layout serves every density from one nonzero per row up to fully dense,
and it fixes the accumulation order of the weighted-sum kernel (ascending
columns, one accumulator per row) so recomputed sums are bit-stable.

Models are immutable after construction and safe to share across threads.
Derived views used by the numeric kernels (the sparse matrix over rows,
per-row self-loop probabilities) are built lazily and cached.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

ROW_SUM_TOL = 1e-9


class RewardMode(str, Enum):
    DISCOUNTED = "discounted"
    TOTAL_REWARD = "total_reward"


class ModelFormatError(ValueError):
    """A model file could not be parsed into the expected shape."""


class ModelValidationError(ValueError):
    """A structurally parseable model violates a model invariant."""

    def __init__(self, violations):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"invalid model: {shown}{more}")


@dataclass(frozen=True)
class Violation:
    """One broken model invariant, located by rule name and position."""

    rule: str
    state: int | None = None
    action: int | None = None
    detail: str = ""

    def __str__(self):
        where = ""
        if self.state is not None:
            where = f" at state {self.state}"
            if self.action is not None:
                where += f" action {self.action}"
        tail = f": {self.detail}" if self.detail else ""
        return f"{self.rule}{where}{tail}"


@dataclass(eq=False)
class MdpModel:
    """A finite MDP in compressed row layout.

    Attributes:
        num_states: number of states, indexed 0..num_states-1.
        discount: discount factor; strictly below 1 for discounted models
            and exactly 1 for total-reward models.
        mode: reward criterion the model is meant to be solved under.
        state_ptr: int array of length num_states+1; the rows belonging to
            state i are state_ptr[i]:state_ptr[i+1].
        rewards: per-row immediate reward, length num_rows.
        row_ptr: int array of length num_rows+1 delimiting each row's
            nonzeros inside cols/probs.
        cols: nonzero column indices, strictly increasing within a row.
        probs: transition probabilities matching cols.
        metadata: optional origin metadata (generator settings) carried
            through serialization.
    """

    num_states: int
    discount: float
    mode: RewardMode
    state_ptr: np.ndarray
    rewards: np.ndarray
    row_ptr: np.ndarray
    cols: np.ndarray
    probs: np.ndarray
    metadata: dict | None = None
    _row_matrix: sp.csr_matrix | None = field(default=None, repr=False, init=False)
    _row_state: np.ndarray | None = field(default=None, repr=False, init=False)
    _self_loop: np.ndarray | None = field(default=None, repr=False, init=False)

    def __post_init__(self):
        self.state_ptr = np.ascontiguousarray(self.state_ptr, dtype=np.int64)
        self.rewards = np.ascontiguousarray(self.rewards, dtype=np.float64)
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        self.probs = np.ascontiguousarray(self.probs, dtype=np.float64)

    @classmethod
    def from_rows(cls, states, discount, mode=RewardMode.DISCOUNTED, metadata=None):
        """Build a model from nested lists.

        Args:
            states: one entry per state; each entry is a list of
                (reward, transitions) pairs, where transitions is an
                iterable of (column, probability) pairs.
            discount: discount factor.
            mode: reward criterion.
            metadata: optional origin-metadata dict.
        """
        state_ptr = [0]
        rewards: list[float] = []
        row_ptr = [0]
        cols: list[int] = []
        probs: list[float] = []
        for actions in states:
            for reward, transitions in actions:
                rewards.append(float(reward))
                for c, p in transitions:
                    cols.append(int(c))
                    probs.append(float(p))
                row_ptr.append(len(cols))
            state_ptr.append(len(rewards))
        return cls(
            num_states=len(states),
            discount=float(discount),
            mode=RewardMode(mode),
            state_ptr=np.array(state_ptr, dtype=np.int64),
            rewards=np.array(rewards, dtype=np.float64),
            row_ptr=np.array(row_ptr, dtype=np.int64),
            cols=np.array(cols, dtype=np.int64),
            probs=np.array(probs, dtype=np.float64),
            metadata=metadata,
        )

    @property
    def num_rows(self) -> int:
        return len(self.rewards)

    def num_actions(self, state: int) -> int:
        return int(self.state_ptr[state + 1] - self.state_ptr[state])

    def action_reward(self, state: int, action: int) -> float:
        return float(self.rewards[self.state_ptr[state] + action])

    def action_row(self, state: int, action: int):
        """Return (columns, probabilities) for one (state, action) row."""
        k = self.state_ptr[state] + action
        lo, hi = self.row_ptr[k], self.row_ptr[k + 1]
        return self.cols[lo:hi], self.probs[lo:hi]

    @property
    def row_matrix(self) -> sp.csr_matrix:
        """Sparse (num_rows x num_states) matrix of all transition rows."""
        if self._row_matrix is None:
            self._row_matrix = sp.csr_matrix(
                (self.probs, self.cols, self.row_ptr),
                shape=(self.num_rows, self.num_states),
            )
        return self._row_matrix

    @property
    def row_state(self) -> np.ndarray:
        """Owning state index of every row."""
        if self._row_state is None:
            counts = np.diff(self.state_ptr)
            self._row_state = np.repeat(np.arange(self.num_states, dtype=np.int64), counts)
        return self._row_state

    @property
    def self_loop_probs(self) -> np.ndarray:
        """Per-row probability of staying in the owning state (0 when absent)."""
        if self._self_loop is None:
            nnz_per_row = np.diff(self.row_ptr)
            owner = np.repeat(np.arange(self.num_rows, dtype=np.int64), nnz_per_row)
            hit = self.cols == self.row_state[owner]
            out = np.zeros(self.num_rows, dtype=np.float64)
            out[owner[hit]] = self.probs[hit]
            self._self_loop = out
        return self._self_loop


def models_identical(a: MdpModel, b: MdpModel) -> bool:
    """True when every stored field of the two models matches exactly."""
    return (
        a.num_states == b.num_states
        and a.discount == b.discount
        and a.mode == b.mode
        and np.array_equal(a.state_ptr, b.state_ptr)
        and np.array_equal(a.rewards, b.rewards)
        and np.array_equal(a.row_ptr, b.row_ptr)
        and np.array_equal(a.cols, b.cols)
        and np.array_equal(a.probs, b.probs)
        and a.metadata == b.metadata
    )


def validate_model(m: MdpModel) -> list[Violation]:
    """Check every model invariant and return the list of violations.

    An empty list means the model is valid.  Checks cover state/action
    structure, probability ranges, column ordering, row sums (1e-9
    absolute), reward finiteness, and the discount/mode coupling.
    """
    out: list[Violation] = []
    if m.num_states < 1:
        out.append(Violation("num-states", detail=f"got {m.num_states}"))
        return out
    if not math.isfinite(m.discount) or m.discount < 0.0 or m.discount > 1.0:
        out.append(Violation("discount-range", detail=f"got {m.discount!r}"))
    elif m.mode is RewardMode.DISCOUNTED and m.discount >= 1.0:
        out.append(Violation("discount-mode", detail="discounted model needs discount < 1"))
    elif m.mode is RewardMode.TOTAL_REWARD and m.discount != 1.0:
        out.append(Violation("discount-mode", detail="total-reward model needs discount = 1"))

    counts = np.diff(m.state_ptr)
    for i in np.flatnonzero(counts < 1):
        out.append(Violation("no-actions", state=int(i)))
    if np.any(counts < 1):
        return out

    def locate(row: int) -> tuple[int, int]:
        s = int(np.searchsorted(m.state_ptr, row, side="right") - 1)
        return s, int(row - m.state_ptr[s])

    bad_reward = ~np.isfinite(m.rewards)
    for k in np.flatnonzero(bad_reward):
        s, a = locate(int(k))
        out.append(Violation("reward-finite", s, a, f"got {m.rewards[k]!r}"))

    nnz_per_row = np.diff(m.row_ptr)
    for k in np.flatnonzero(nnz_per_row < 1):
        s, a = locate(int(k))
        out.append(Violation("empty-row", s, a))
    if np.any(nnz_per_row < 1):
        return out

    owner = np.repeat(np.arange(m.num_rows, dtype=np.int64), nnz_per_row)
    bad_prob_rows = np.unique(owner[~((m.probs > 0.0) & (m.probs <= 1.0))])
    for k in bad_prob_rows:
        s, a = locate(int(k))
        out.append(Violation("probability-range", s, a))

    bad_col_rows = np.unique(owner[(m.cols < 0) | (m.cols >= m.num_states)])
    for k in bad_col_rows:
        s, a = locate(int(k))
        out.append(Violation("column-range", s, a))
    if len(bad_col_rows) == 0 and m.cols.size:
        increasing = np.ones(m.cols.size, dtype=bool)
        increasing[1:] = np.diff(m.cols) > 0
        increasing[m.row_ptr[:-1][nnz_per_row > 0]] = True
        for k in np.unique(owner[~increasing]):
            s, a = locate(int(k))
            out.append(Violation("column-order", s, a))

    with np.errstate(invalid="ignore"):
        row_sums = np.add.reduceat(m.probs, m.row_ptr[:-1])
    off = np.abs(row_sums - 1.0) > ROW_SUM_TOL
    off |= ~np.isfinite(row_sums)
    for k in np.flatnonzero(off):
        s, a = locate(int(k))
        out.append(Violation("row-sum", s, a, f"sums to {row_sums[k]!r}"))
    return out


def adjust_rewards_nonnegative(m: MdpModel) -> tuple[MdpModel, float]:
    """Shift every reward by max |reward| so all rewards are nonnegative.

    The shift is applied unconditionally, including when rewards are
    already nonnegative.  Transition rows are shared with the input model.
    Returns the shifted model and the offset; the fixed point moves up by
    offset / (1 - discount).

    Raises:
        ValueError: for total-reward models, where a uniform shift changes
            the problem rather than translating its solution.
    """
    if m.mode is not RewardMode.DISCOUNTED:
        raise ValueError("reward adjustment is only defined for discounted models")
    offset = float(np.max(np.abs(m.rewards))) if m.num_rows else 0.0
    shifted = MdpModel(
        num_states=m.num_states,
        discount=m.discount,
        mode=m.mode,
        state_ptr=m.state_ptr,
        rewards=m.rewards + offset,
        row_ptr=m.row_ptr,
        cols=m.cols,
        probs=m.probs,
        metadata=m.metadata,
    )
    return shifted, offset


def initial_feasible_point(m: MdpModel) -> np.ndarray:
    """Constant starting vector that dominates its own backup.

    With nonnegative rewards, the constant max(reward) / (1 - discount)
    satisfies v >= Tv in every component, so accelerated runs can start
    from it.

    Raises:
        ValueError: for total-reward models or when any reward is negative
            (shift rewards first).
    """
    if m.mode is not RewardMode.DISCOUNTED:
        raise ValueError("constant feasible start requires a discounted model")
    if m.num_rows and float(np.min(m.rewards)) < 0.0:
        raise ValueError("feasible start needs nonnegative rewards; adjust rewards first")
    top = float(np.max(m.rewards)) if m.num_rows else 0.0
    alpha = top / (1.0 - m.discount)
    return np.full(m.num_states, alpha, dtype=np.float64)


def absorbing_states(m: MdpModel) -> np.ndarray:
    """Indices of zero-reward absorbing states.

    A state qualifies when every one of its actions is an exact self-loop
    with probability 1 and reward 0.
    """
    out = []
    for i in range(m.num_states):
        ok = True
        for a in range(m.num_actions(i)):
            cols, probs = m.action_row(i, a)
            if not (
                len(cols) == 1
                and int(cols[0]) == i
                and abs(float(probs[0]) - 1.0) <= ROW_SUM_TOL
                and m.action_reward(i, a) == 0.0
            ):
                ok = False
                break
        if ok:
            out.append(i)
    return np.array(out, dtype=np.int64)


def initial_feasible_point_total_reward(m: MdpModel) -> np.ndarray:
    """Starting vector above the fixed point for positive absorbing models.

    Puts 0 on every zero-reward absorbing state and a single constant M on
    the rest, with M = max over transient rows of reward / (probability of
    stepping into the absorbing set).  Such a vector dominates its own
    backup, which is what descending total-reward runs need.

    Raises:
        ValueError: when the model has no absorbing state, or some
            positive-reward row never reaches the absorbing set directly.
    """
    if m.mode is not RewardMode.TOTAL_REWARD:
        raise ValueError("this construction only applies to total-reward models")
    absorbing = absorbing_states(m)
    if absorbing.size == 0:
        raise ValueError("no zero-reward absorbing state found")
    is_absorbing = np.zeros(m.num_states, dtype=bool)
    is_absorbing[absorbing] = True

    nnz_per_row = np.diff(m.row_ptr)
    owner = np.repeat(np.arange(m.num_rows, dtype=np.int64), nnz_per_row)
    into_absorbing = np.zeros(m.num_rows, dtype=np.float64)
    mask = is_absorbing[m.cols]
    np.add.at(into_absorbing, owner[mask], m.probs[mask])

    transient_row = ~is_absorbing[m.row_state]
    stuck = transient_row & (m.rewards > 0.0) & (into_absorbing <= 0.0)
    if np.any(stuck):
        k = int(np.flatnonzero(stuck)[0])
        s = int(m.row_state[k])
        raise ValueError(
            f"state {s} has a positive-reward action with no direct transition "
            "into the absorbing set; no constant dominating start exists"
        )
    usable = transient_row & (into_absorbing > 0.0)
    level = float(np.max(m.rewards[usable] / into_absorbing[usable])) if np.any(usable) else 0.0
    v = np.full(m.num_states, level, dtype=np.float64)
    v[absorbing] = 0.0
    return v


def _reject_constant(name):
    raise ModelFormatError(f"non-finite number {name!r} is not permitted")


def _loaded_number(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFormatError(f"{what} must be a number, got {type(value).__name__}")
    return float(value)


def load_model(path) -> MdpModel:
    """Load and validate a model from a JSON file.

    Raises:
        ModelFormatError: unparseable JSON (with line position) or a
            structurally wrong document (naming the offending field).
        ModelValidationError: parseable document violating model invariants.
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError("top level must be an object")
    for key in ("mode", "discount", "states"):
        if key not in doc:
            raise ModelFormatError(f"missing field {key!r}")
    try:
        mode = RewardMode(doc["mode"])
    except ValueError:
        raise ModelFormatError(f"mode must be one of "
                               f"{[e.value for e in RewardMode]}, got {doc['mode']!r}") from None
    discount = _loaded_number(doc["discount"], "discount")
    states_doc = doc["states"]
    if not isinstance(states_doc, list):
        raise ModelFormatError("states must be an array")

    state_ptr = np.zeros(len(states_doc) + 1, dtype=np.int64)
    rewards: list[float] = []
    row_ptr: list[int] = [0]
    col_chunks: list[np.ndarray] = []
    prob_chunks: list[np.ndarray] = []
    nnz = 0
    for i, sdoc in enumerate(states_doc):
        if not isinstance(sdoc, dict) or "actions" not in sdoc:
            raise ModelFormatError(f"states[{i}] must be an object with an 'actions' field")
        actions = sdoc["actions"]
        if not isinstance(actions, list):
            raise ModelFormatError(f"states[{i}].actions must be an array")
        for a, adoc in enumerate(actions):
            where = f"states[{i}].actions[{a}]"
            if not isinstance(adoc, dict) or "reward" not in adoc or "transitions" not in adoc:
                raise ModelFormatError(f"{where} must be an object with 'reward' and 'transitions'")
            rewards.append(_loaded_number(adoc["reward"], f"{where}.reward"))
            trans = adoc["transitions"]
            if not isinstance(trans, list):
                raise ModelFormatError(f"{where}.transitions must be an array")
            if len(trans) == 0:
                col_chunks.append(np.empty(0, dtype=np.int64))
                prob_chunks.append(np.empty(0, dtype=np.float64))
            else:
                pairs = np.asarray(trans, dtype=np.float64)
                if pairs.ndim != 2 or pairs.shape[1] != 2:
                    raise ModelFormatError(f"{where}.transitions entries must be [column, probability] pairs")
                c = pairs[:, 0]
                if not np.all(c == np.floor(c)):
                    raise ModelFormatError(f"{where}.transitions has a non-integer column index")
                col_chunks.append(c.astype(np.int64))
                prob_chunks.append(pairs[:, 1])
                nnz += pairs.shape[0]
            row_ptr.append(nnz)
        state_ptr[i + 1] = len(rewards)

    m = MdpModel(
        num_states=len(states_doc),
        discount=discount,
        mode=mode,
        state_ptr=state_ptr,
        rewards=np.array(rewards, dtype=np.float64),
        row_ptr=np.array(row_ptr, dtype=np.int64),
        cols=np.concatenate(col_chunks) if col_chunks else np.empty(0, dtype=np.int64),
        probs=np.concatenate(prob_chunks) if prob_chunks else np.empty(0, dtype=np.float64),
        metadata=doc.get("generator"),
    )
    violations = validate_model(m)
    if violations:
        raise ModelValidationError(violations)
    return m


def save_model(m: MdpModel, path) -> None:
    """Write a validated model to a JSON file.

    The writer streams state by state so fully dense models do not build a
    second in-memory copy.  Floats are written with repr precision, so a
    load of the saved file reproduces every stored value exactly.
    """
    violations = validate_model(m)
    if violations:
        raise ModelValidationError(violations)
    with open(path, "w", encoding="utf-8") as f:
        f.write('{"mode": %s, "discount": %r' % (json.dumps(m.mode.value), m.discount))
        if m.metadata is not None:
            f.write(', "generator": %s' % json.dumps(m.metadata, allow_nan=False))
        f.write(', "states": [')
        for i in range(m.num_states):
            f.write("," if i else "")
            f.write('{"actions": [')
            for a in range(m.num_actions(i)):
                cols, probs = m.action_row(i, a)
                body = ",".join(
                    "[%d,%r]" % (c, p) for c, p in zip(cols.tolist(), probs.tolist())
                )
                f.write("," if a else "")
                f.write('{"reward": %r, "transitions": [%s]}' % (m.action_reward(i, a), body))
            f.write("]}")
        f.write("]}\n")
