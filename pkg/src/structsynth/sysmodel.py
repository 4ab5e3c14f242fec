"""System models, gain schedules, and sparsity/tying constraints.

The plant is a finite-horizon discrete-time linear system

    x_1     = D_0 w_0
    x_{t+1} = A_t x_t + B_t u_t + D_t w_t,    t = 1, ..., N-1

driven by disturbances w_0, ..., w_{N-1} and controlled through static
state feedback u_t = K_t x_t.  A horizon of N means N states x_1..x_N,
N disturbances, and N-1 feedback gains.  Every noise matrix D_t must be
square and invertible; that is what makes the disturbance-to-state map
invertible and the synthesis surrogates convex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError

# D_t counts as singular when |det D_t| < DET_RTOL * ||D_t||_F^n.
DET_RTOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _freeze_seq(mats, name: str) -> tuple[np.ndarray, ...]:
    out = []
    for i, m in enumerate(mats):
        a = np.asarray(m, dtype=float)
        if a.ndim != 2:
            raise ValidationError(f"{name}[{i}] must be a 2-D matrix, got ndim={a.ndim}")
        if not np.all(np.isfinite(a)):
            raise ValidationError(f"{name}[{i}] contains non-finite entries")
        out.append(_freeze(a))
    return tuple(out)


@dataclass(frozen=True)
class SystemModel:
    """Immutable time-varying system data (A_t, B_t, D_t).

    Attributes:
        A: state matrices A_1..A_{N-1}, each n x n (A[i] is A_{i+1}).
        B: input matrices B_1..B_{N-1}, each n x n_u.
        D: noise matrices D_0..D_{N-1}, each n x n, all invertible.
    """

    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    D: tuple[np.ndarray, ...]

    def __init__(self, A, B, D):
        object.__setattr__(self, "A", _freeze_seq(A, "A"))
        object.__setattr__(self, "B", _freeze_seq(B, "B"))
        object.__setattr__(self, "D", _freeze_seq(D, "D"))
        self._validate()

    def _validate(self) -> None:
        if len(self.D) < 1:
            raise ValidationError("horizon must be positive: need at least D_0")
        n = self.D[0].shape[0]
        if len(self.A) != len(self.D) - 1 or len(self.B) != len(self.D) - 1:
            raise ValidationError(
                f"expected {len(self.D) - 1} A and B matrices for horizon "
                f"{len(self.D)}, got {len(self.A)} and {len(self.B)}"
            )
        for t, d in enumerate(self.D):
            if d.shape != (n, n):
                raise ValidationError(f"D[{t}] must be {n}x{n}, got {d.shape}")
            det = np.linalg.det(d)
            if abs(det) < DET_RTOL * np.linalg.norm(d, "fro") ** n:
                raise ValidationError(
                    f"noise matrix D[{t}] is numerically singular: "
                    f"|det| = {abs(det):.3e} below threshold"
                )
        n_u = self.B[0].shape[1] if self.B else 0
        for i, (a, b) in enumerate(zip(self.A, self.B)):
            if a.shape != (n, n):
                raise ValidationError(f"A[{i}] must be {n}x{n}, got {a.shape}")
            if b.shape != (n, n_u):
                raise ValidationError(f"B[{i}] must be {n}x{n_u}, got {b.shape}")

    @property
    def state_dim(self) -> int:
        return self.D[0].shape[0]

    @property
    def input_dim(self) -> int:
        return self.B[0].shape[1] if self.B else 0

    @property
    def horizon(self) -> int:
        """Number of states N (equivalently the number of disturbances)."""
        return len(self.D)

    @classmethod
    def constant(cls, A, B, D, horizon: int) -> "SystemModel":
        """Build a time-invariant system by repeating (A, B, D)."""
        if horizon < 1:
            raise ValidationError("horizon must be positive")
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        D = np.asarray(D, dtype=float)
        return cls([A] * (horizon - 1), [B] * (horizon - 1), [D] * horizon)


@dataclass(frozen=True)
class GainSchedule:
    """Feedback gains K_1..K_{N-1}, each n_u x n (gains[i] is K_{i+1})."""

    gains: tuple[np.ndarray, ...]

    def __init__(self, gains):
        object.__setattr__(self, "gains", _freeze_seq(gains, "K"))
        shapes = {k.shape for k in self.gains}
        if len(shapes) > 1:
            raise ValidationError(f"gain matrices must share one shape, got {shapes}")

    def __len__(self) -> int:
        return len(self.gains)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.gains[i]

    def __iter__(self):
        return iter(self.gains)

    @classmethod
    def zeros(cls, sys: SystemModel) -> "GainSchedule":
        k = np.zeros((sys.input_dim, sys.state_dim))
        return cls([k] * (sys.horizon - 1))


@dataclass(frozen=True)
class Trajectory:
    """A state rollout x_1..x_N with the disturbances w_0..w_{N-1} that drove it."""

    states: tuple[np.ndarray, ...]
    disturbances: tuple[np.ndarray, ...]

    @property
    def stacked_states(self) -> np.ndarray:
        return np.concatenate(self.states)

    @property
    def stacked_disturbances(self) -> np.ndarray:
        return np.concatenate(self.disturbances)


def closed_loop(sys: SystemModel, gains: GainSchedule, t: int) -> np.ndarray:
    """Closed-loop state matrix A_t + B_t K_t for a dynamic time 1 <= t <= N-1."""
    if not 1 <= t <= sys.horizon - 1:
        raise ValidationError(f"time index {t} outside 1..{sys.horizon - 1}")
    if len(gains) != sys.horizon - 1:
        raise ValidationError(
            f"expected {sys.horizon - 1} gains, got {len(gains)}"
        )
    return sys.A[t - 1] + sys.B[t - 1] @ gains[t - 1]


class ConstraintSet:
    """Sparsity masks plus optional tying of gains across time.

    masks[i] is a boolean n_u x n array for K_{i+1}; True marks a free
    entry, False pins the entry to zero.  tie_groups, when given, is a
    partition of the gain indices 0..N-2; all gains in a group share one
    matrix.  Tied gains must carry identical masks.
    """

    def __init__(self, masks: Sequence[np.ndarray], tie_groups=None):
        self.masks = tuple(np.ascontiguousarray(m, dtype=bool) for m in masks)
        if not self.masks:
            raise ValidationError("need at least one mask")
        shape = self.masks[0].shape
        for i, m in enumerate(self.masks):
            if m.shape != shape:
                raise ValidationError(f"mask[{i}] shape {m.shape} != {shape}")
        for m in self.masks:
            m.setflags(write=False)
        if tie_groups is None:
            groups = tuple((i,) for i in range(len(self.masks)))
        else:
            groups = tuple(tuple(sorted(int(i) for i in g)) for g in tie_groups)
            seen = [i for g in groups for i in g]
            if sorted(seen) != list(range(len(self.masks))):
                raise ValidationError(
                    "tie_groups must partition the gain indices "
                    f"0..{len(self.masks) - 1}"
                )
            for g in groups:
                for i in g[1:]:
                    if not np.array_equal(self.masks[i], self.masks[g[0]]):
                        raise ValidationError(
                            f"tied gains {g[0]} and {i} have different masks"
                        )
        self.tie_groups = tuple(sorted(groups, key=lambda g: g[0]))

    @classmethod
    def unconstrained(cls, sys: SystemModel, tie_gains: bool = False) -> "ConstraintSet":
        mask = np.ones((sys.input_dim, sys.state_dim), dtype=bool)
        groups = (tuple(range(sys.horizon - 1)),) if tie_gains else None
        return cls([mask] * (sys.horizon - 1), groups)

    @property
    def free_parameter_count(self) -> int:
        return sum(int(self.masks[g[0]].sum()) for g in self.tie_groups)

    def project(self, gains: GainSchedule) -> GainSchedule:
        """Nearest gain schedule satisfying the constraints.

        Averages each tie group and zeroes masked entries, which is the
        Euclidean projection onto the constraint subspace.
        """
        out = [None] * len(self.masks)
        for g in self.tie_groups:
            avg = sum(gains[i] for i in g) / len(g)
            k = np.where(self.masks[g[0]], avg, 0.0)
            for i in g:
                out[i] = k
        return GainSchedule(out)

    def satisfied_by(self, gains: GainSchedule, tol: float = 0.0) -> bool:
        for g in self.tie_groups:
            base = gains[g[0]]
            if np.any(np.abs(base[~self.masks[g[0]]]) > tol):
                return False
            for i in g[1:]:
                if np.max(np.abs(gains[i] - base), initial=0.0) > tol:
                    return False
        return True


def augment_control_cost(
    sys: SystemModel, penalties: Sequence[np.ndarray], gamma: float
) -> SystemModel:
    """Fold a control penalty sum_t ||R_t u_t||^2 into the state cost.

    Appends auxiliary states that accumulate R_t u_t plus a small
    disturbance gamma * w so the enlarged noise matrices stay invertible.
    The stacked-state quadratic cost of the result equals the original
    state cost plus sum_t ||R_t u_t + gamma w_t'||^2 plus gamma^2 ||w_0'||^2,
    where w' is the auxiliary disturbance block; the penalty is recovered
    as gamma -> 0.

    Args:
        penalties: R_1..R_{N-1}, each p x n_u.
        gamma: positive scalar weight on the auxiliary disturbance.
    """
    if gamma <= 0:
        raise ValidationError("gamma must be positive to keep noise matrices invertible")
    R = _freeze_seq(penalties, "R")
    if len(R) != sys.horizon - 1:
        raise ValidationError(f"expected {sys.horizon - 1} penalty matrices, got {len(R)}")
    p = R[0].shape[0]
    for i, r in enumerate(R):
        if r.shape != (p, sys.input_dim):
            raise ValidationError(f"R[{i}] must be {p}x{sys.input_dim}, got {r.shape}")
    n = sys.state_dim
    A_aug, B_aug, D_aug = [], [], []
    for t in range(sys.horizon - 1):
        a = np.zeros((n + p, n + p))
        a[:n, :n] = sys.A[t]
        b = np.vstack([sys.B[t], R[t]])
        A_aug.append(a)
        B_aug.append(b)
    for t in range(sys.horizon):
        d = np.zeros((n + p, n + p))
        d[:n, :n] = sys.D[t]
        d[n:, n:] = gamma * np.eye(p)
        D_aug.append(d)
    return SystemModel(A_aug, B_aug, D_aug)


def augment_output_feedback(
    sys: SystemModel,
    measurements: Sequence[np.ndarray],
    k_lag: int,
    gamma: float,
) -> tuple[SystemModel, Callable[[Sequence[np.ndarray]], GainSchedule]]:
    """Recast feedback on a window of past measurements as state feedback.

    The plant is lifted to the stacked state (x_t, x_{t-1}, ..., x_{t-k+1})
    with k = k_lag; lagged copies are propagated by a block shift whose
    noise matrices get a gamma-weighted identity block to stay invertible.
    Measurements are y_t = C_t x_t.

    Returns the augmented system and a composition map that turns a
    schedule of measurement-feedback gains K_t (n_u x k*m) into full-state
    gains K_t @ blockdiag(C_t, C_{t-1}, ..., C_{t-k+1}) on the stacked
    state.  Lags that reach before the first state use a zero block.  The
    composition is linear in K.
    """
    if k_lag < 1:
        raise ValidationError("k_lag must be at least 1")
    if gamma <= 0:
        raise ValidationError("gamma must be positive to keep noise matrices invertible")
    C = _freeze_seq(measurements, "C")
    if len(C) != sys.horizon - 1:
        raise ValidationError(
            f"expected {sys.horizon - 1} measurement matrices, got {len(C)}"
        )
    n = sys.state_dim
    m = C[0].shape[0]
    for i, c in enumerate(C):
        if c.shape != (m, n):
            raise ValidationError(f"C[{i}] must be {m}x{n}, got {c.shape}")
    k = k_lag
    n_aug = k * n
    A_aug, B_aug, D_aug = [], [], []
    for t in range(sys.horizon - 1):
        a = np.zeros((n_aug, n_aug))
        a[:n, :n] = sys.A[t]
        for j in range(1, k):
            a[j * n:(j + 1) * n, (j - 1) * n:j * n] = np.eye(n)
        b = np.zeros((n_aug, sys.input_dim))
        b[:n, :] = sys.B[t]
        A_aug.append(a)
        B_aug.append(b)
    for t in range(sys.horizon):
        d = gamma * np.eye(n_aug)
        d[:n, :n] = sys.D[t]
        D_aug.append(d)
    aug = SystemModel(A_aug, B_aug, D_aug)

    def compose(window_gains: Sequence[np.ndarray]) -> GainSchedule:
        ks = [np.asarray(kg, dtype=float) for kg in window_gains]
        if len(ks) != sys.horizon - 1:
            raise ValidationError(
                f"expected {sys.horizon - 1} window gains, got {len(ks)}"
            )
        out = []
        for t, kg in enumerate(ks, start=1):
            if kg.shape != (sys.input_dim, k * m):
                raise ValidationError(
                    f"window gain {t} must be {sys.input_dim}x{k * m}, got {kg.shape}"
                )
            sel = np.zeros((k * m, n_aug))
            for j in range(k):
                src = t - j
                if src >= 1:
                    sel[j * m:(j + 1) * m, j * n:(j + 1) * n] = C[src - 1]
            out.append(kg @ sel)
        return GainSchedule(out)

    return aug, compose


def generate_coupled_ensemble(
    seed: int,
    num_subsystems: int = 5,
    subsystem_dim: int = 2,
    coupling_variance: float = 10.0,
    mask_fraction: float = 0.2,
    horizon: int = 10,
    tie_gains: bool = True,
) -> tuple[SystemModel, ConstraintSet]:
    """Random benchmark plant: coupled subsystems with sparsified feedback.

    Draws a time-invariant A whose subsystem and coupling blocks all have
    i.i.d. Gaussian entries (mean 0, variance coupling_variance), sets
    B = D = I, and pins a uniformly random mask_fraction of the
    off-diagonal feedback entries to zero.  Diagonal (self-feedback)
    entries always stay free.  The same seed reproduces the same plant
    and mask; A is drawn before the mask.

    Returns:
        The system and a ConstraintSet whose mask is shared by every time
        step.  With tie_gains (the default) all gains are tied into a
        single time-invariant K.
    """
    if num_subsystems < 1 or subsystem_dim < 1:
        raise ValidationError("num_subsystems and subsystem_dim must be positive")
    if not 0.0 <= mask_fraction <= 1.0:
        raise ValidationError("mask_fraction must lie in [0, 1]")
    if horizon < 2:
        raise ValidationError("horizon must be at least 2 so gains exist")
    n = num_subsystems * subsystem_dim
    rng = np.random.default_rng(seed)
    A = rng.normal(0.0, np.sqrt(coupling_variance), size=(n, n))
    eye = np.eye(n)
    sys = SystemModel.constant(A, eye, eye, horizon)

    off_diag = [(i, j) for i in range(n) for j in range(n) if i != j]
    pin_count = int(round(mask_fraction * len(off_diag)))
    mask = np.ones((n, n), dtype=bool)
    if pin_count:
        chosen = rng.choice(len(off_diag), size=pin_count, replace=False)
        for idx in chosen:
            mask[off_diag[idx]] = False
    groups = (tuple(range(horizon - 1)),) if tie_gains else None
    cons = ConstraintSet([mask] * (horizon - 1), groups)
    return sys, cons
