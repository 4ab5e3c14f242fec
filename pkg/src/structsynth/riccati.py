"""Unconstrained optimal baselines via backward Riccati-type recursions.

These give the exact minima of the closed-loop norms over all (time
varying, unstructured) state-feedback policies: dynamic programming for
the H2 norm with unit state cost, and a soft-constrained linear-quadratic
game whose feasibility threshold in the attenuation level is the optimal
Hinf norm, located by bisection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SolverError, ValidationError
from .specfun import h2_norm
from .sysmodel import GainSchedule, SystemModel

# The game's curvature condition must hold with this relative margin.
GAME_MARGIN = 1e-10
GAMMA_CAP = 2.0 ** 60


def _solve_gain(h: np.ndarray, rhs: np.ndarray, stage: int) -> np.ndarray:
    """Solve h @ K = rhs for the stage gain, falling back to a pseudo-inverse."""
    try:
        return np.linalg.solve(h, rhs)
    except np.linalg.LinAlgError:
        warnings.warn(
            f"singular control Hessian at stage {stage}; using pseudo-inverse",
            RuntimeWarning,
            stacklevel=3,
        )
        return np.linalg.pinv(h) @ rhs


def lqr_h2_opt(sys: SystemModel) -> tuple[GainSchedule, float]:
    """Globally optimal gains for the H2 norm, with the achieved value.

    Backward recursion with unit state cost and free controls:
    V_N = I, K_t = -(B' V B)^{-1} B' V A, V_t = I + A' V A + A' V B K_t.
    """
    N, n = sys.horizon, sys.state_dim
    v = np.eye(n)
    gains: list[np.ndarray] = [None] * (N - 1)
    for t in range(N - 1, 0, -1):
        a, b = sys.A[t - 1], sys.B[t - 1]
        k = -_solve_gain(b.T @ v @ b, b.T @ v @ a, t)
        gains[t - 1] = k
        v = np.eye(n) + a.T @ v @ a + a.T @ v @ b @ k
        v = (v + v.T) / 2.0
    schedule = GainSchedule(gains)
    return schedule, h2_norm(sys, schedule)


@dataclass(frozen=True)
class GameCertificate:
    """Outcome of the soft-constrained game at one attenuation level gamma.

    value_mats holds V_1..V_N when feasible (value_mats[i] is V_{i+1});
    when infeasible it holds the suffix computed before the recursion hit
    the failing stage, recorded in failed_stage (a disturbance time in
    0..N-1).  gains is None when infeasible.
    """

    gamma: float
    feasible: bool
    value_mats: tuple[np.ndarray, ...]
    gains: GainSchedule | None
    failed_stage: int | None = None


def lq_game_feasible(sys: SystemModel, gamma: float) -> GameCertificate:
    """Solve the minimax game with cost sum ||x||^2 - gamma^2 sum ||w||^2.

    Runs the backward recursion for the upper value.  Feasibility of the
    level gamma requires gamma^2 I - D_t' V_{t+1} D_t to stay positive
    definite at every disturbance stage t = 0..N-1 (the stage t = 0,
    where no control acts, uses V_1); when that holds the returned gains
    guarantee a closed-loop Hinf norm of at most gamma.
    """
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    N, n = sys.horizon, sys.state_dim
    g2 = gamma * gamma

    def stage_margin(v: np.ndarray, t: int) -> tuple[bool, np.ndarray]:
        cond = g2 * np.eye(n) - sys.D[t].T @ v @ sys.D[t]
        ok = float(np.linalg.eigvalsh(cond)[0]) > GAME_MARGIN * g2
        return ok, cond

    v = np.eye(n)
    value_mats: list[np.ndarray] = [v]
    gains: list[np.ndarray] = [None] * (N - 1)
    for t in range(N - 1, 0, -1):
        ok, cond = stage_margin(v, t)
        if not ok:
            return GameCertificate(
                gamma=gamma,
                feasible=False,
                value_mats=tuple(value_mats[::-1]),
                gains=None,
                failed_stage=t,
            )
        a, b = sys.A[t - 1], sys.B[t - 1]
        # Adversary-adjusted weight: V + V D (g2 I - D' V D)^{-1} D' V.
        w = v + v @ sys.D[t] @ np.linalg.solve(cond, sys.D[t].T @ v)
        w = (w + w.T) / 2.0
        k = -_solve_gain(b.T @ w @ b, b.T @ w @ a, t)
        gains[t - 1] = k
        loop = a + b @ k
        v = np.eye(n) + a.T @ w @ loop
        v = (v + v.T) / 2.0
        value_mats.append(v)
    ok, _ = stage_margin(v, 0)
    if not ok:
        return GameCertificate(
            gamma=gamma,
            feasible=False,
            value_mats=tuple(value_mats[::-1]),
            gains=None,
            failed_stage=0,
        )
    return GameCertificate(
        gamma=gamma,
        feasible=True,
        value_mats=tuple(value_mats[::-1]),
        gains=GainSchedule(gains),
        failed_stage=None,
    )


def hinf_opt(
    sys: SystemModel, bisection_tolerance: float = 1e-6
) -> tuple[GainSchedule, float]:
    """Optimal unconstrained Hinf synthesis by bisection on the game level.

    Doubles gamma from 1 until the game is feasible, bisects the bracket
    to the requested relative tolerance, and returns gains computed at
    (1 + tolerance) times the critical level together with the critical
    level itself.  The returned gains achieve an Hinf norm of at most
    (1 + 2 * tolerance) times the critical level.
    """
    if not 0 < bisection_tolerance < 1:
        raise ValidationError("bisection_tolerance must lie in (0, 1)")
    lo, hi = 0.0, 1.0
    while not lq_game_feasible(sys, hi).feasible:
        lo = hi
        hi *= 2.0
        if hi > GAMMA_CAP:
            raise SolverError("no feasible attenuation level below the search cap")
    while hi - lo > bisection_tolerance * hi:
        mid = (lo + hi) / 2.0
        if lq_game_feasible(sys, mid).feasible:
            hi = mid
        else:
            lo = mid
    critical = hi
    play = (1.0 + bisection_tolerance) * critical
    cert = lq_game_feasible(sys, play)
    for _ in range(4):
        if cert.feasible:
            break
        play *= 1.0 + bisection_tolerance
        cert = lq_game_feasible(sys, play)
    if not cert.feasible:
        raise SolverError("could not recover feasible gains above the critical level")
    return cert.gains, critical
