"""Stacked disturbance-to-state maps for a closed-loop system.

With feedback u_t = K_t x_t the stacked state (x_1, ..., x_N) is a linear
image of the stacked disturbance (w_0, ..., w_{N-1}).  The forward map is
block lower triangular with products of closed-loop matrices below the
diagonal; its inverse is block bidiagonal and, crucially, affine in the
gains, which is what makes singular-value surrogates of it convex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .sysmodel import GainSchedule, SystemModel, Trajectory, closed_loop

# Reject noise matrices whose inversion would be numerically meaningless.
COND_LIMIT = 1e12


@dataclass(frozen=True)
class InverseLiftedMap:
    """Block-bidiagonal inverse map from stacked states to disturbances.

    Block row t (0-based) recovers w_t: the diagonal block is D_t^{-1}
    and, for t >= 1, the subdiagonal block is -D_t^{-1} (A_t + B_t K_t).
    """

    diag_blocks: tuple[np.ndarray, ...]
    sub_blocks: tuple[np.ndarray, ...]

    @property
    def block_dim(self) -> int:
        return self.diag_blocks[0].shape[0]

    @property
    def horizon(self) -> int:
        return len(self.diag_blocks)

    def dense(self) -> np.ndarray:
        n, N = self.block_dim, self.horizon
        out = np.zeros((n * N, n * N))
        for t in range(N):
            out[t * n:(t + 1) * n, t * n:(t + 1) * n] = self.diag_blocks[t]
        for t in range(1, N):
            out[t * n:(t + 1) * n, (t - 1) * n:t * n] = self.sub_blocks[t - 1]
        return out

    def apply(self, stacked_states: np.ndarray) -> np.ndarray:
        """Map a stacked state vector to the disturbances that produced it."""
        x = np.asarray(stacked_states, dtype=float)
        n, N = self.block_dim, self.horizon
        if x.shape != (n * N,):
            raise ValidationError(f"expected stacked vector of length {n * N}")
        w = np.empty_like(x)
        w[:n] = self.diag_blocks[0] @ x[:n]
        for t in range(1, N):
            w[t * n:(t + 1) * n] = (
                self.diag_blocks[t] @ x[t * n:(t + 1) * n]
                + self.sub_blocks[t - 1] @ x[(t - 1) * n:t * n]
            )
        return w


@dataclass(frozen=True)
class LiftedMap:
    """Block lower-triangular map from stacked disturbances to states.

    blocks[r][c] (c <= r) sends w_c to x_{r+1}: it is D_r on the diagonal
    and (A+BK)_r (A+BK)_{r-1} ... (A+BK)_{c+1} D_c below it.
    """

    blocks: tuple[tuple[np.ndarray, ...], ...]

    @property
    def block_dim(self) -> int:
        return self.blocks[0][0].shape[0]

    @property
    def horizon(self) -> int:
        return len(self.blocks)

    def dense(self) -> np.ndarray:
        n, N = self.block_dim, self.horizon
        out = np.zeros((n * N, n * N))
        for r in range(N):
            for c in range(r + 1):
                out[r * n:(r + 1) * n, c * n:(c + 1) * n] = self.blocks[r][c]
        return out

    def apply(self, stacked_disturbances: np.ndarray) -> np.ndarray:
        w = np.asarray(stacked_disturbances, dtype=float)
        n, N = self.block_dim, self.horizon
        if w.shape != (n * N,):
            raise ValidationError(f"expected stacked vector of length {n * N}")
        x = np.zeros(n * N)
        for r in range(N):
            acc = np.zeros(n)
            for c in range(r + 1):
                acc += self.blocks[r][c] @ w[c * n:(c + 1) * n]
            x[r * n:(r + 1) * n] = acc
        return x


def noise_inverses(sys: SystemModel) -> tuple[np.ndarray, ...]:
    """Invert every D_t once, rejecting ill-conditioned noise matrices."""
    out = []
    for t, d in enumerate(sys.D):
        cond = np.linalg.cond(d)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise ValidationError(
                f"noise matrix D[{t}] too ill-conditioned to invert "
                f"(cond = {cond:.3e})"
            )
        out.append(np.linalg.inv(d))
    return tuple(out)


def build_inverse(
    sys: SystemModel,
    gains: GainSchedule,
    d_inverses: Sequence[np.ndarray] | None = None,
) -> InverseLiftedMap:
    """Assemble the inverse lifted map; affine in the gains.

    d_inverses may carry precomputed D_t^{-1} so repeated calls on one
    system (for example inside a solver loop) skip refactorizing.
    """
    inv = tuple(d_inverses) if d_inverses is not None else noise_inverses(sys)
    sub = []
    for t in range(1, sys.horizon):
        sub.append(-inv[t] @ closed_loop(sys, gains, t))
    return InverseLiftedMap(diag_blocks=inv, sub_blocks=tuple(sub))


def build_forward(sys: SystemModel, gains: GainSchedule) -> LiftedMap:
    """Assemble the forward lifted map by accumulating closed-loop products."""
    N = sys.horizon
    loops = [closed_loop(sys, gains, t) for t in range(1, N)]
    cols: list[list[np.ndarray]] = [[] for _ in range(N)]
    for c in range(N):
        prod = sys.D[c]
        cols[c].append(prod)
        for r in range(c + 1, N):
            prod = loops[r - 1] @ prod
            cols[c].append(prod)
    rows = tuple(
        tuple(cols[c][r - c] for c in range(r + 1)) for r in range(N)
    )
    return LiftedMap(blocks=rows)


def determinant_invariant(inverse_map: InverseLiftedMap) -> float:
    """Determinant of the inverse map, computed blockwise.

    Equals the product of det(D_t^{-1}) and does not depend on the gains,
    so it is constant over all feedback policies for one system.
    """
    return float(np.prod([np.linalg.det(b) for b in inverse_map.diag_blocks]))


def simulate(
    sys: SystemModel, gains: GainSchedule, disturbances: Sequence[np.ndarray]
) -> Trajectory:
    """Roll the closed loop forward under given disturbances w_0..w_{N-1}."""
    w = [np.asarray(v, dtype=float).reshape(-1) for v in disturbances]
    if len(w) != sys.horizon:
        raise ValidationError(f"expected {sys.horizon} disturbances, got {len(w)}")
    n = sys.state_dim
    for t, v in enumerate(w):
        if v.shape != (n,):
            raise ValidationError(f"disturbance {t} must have length {n}")
    states = [sys.D[0] @ w[0]]
    for t in range(1, sys.horizon):
        states.append(closed_loop(sys, gains, t) @ states[-1] + sys.D[t] @ w[t])
    return Trajectory(states=tuple(states), disturbances=tuple(w))
