"""First-order synthesis over masked, optionally tied, gain schedules.

The decision variables are the free gain entries only: masked entries are
pinned to zero and tied time steps share one matrix, so constraints hold
exactly at every iterate by construction.  Minimization is limited-memory
BFGS with Armijo backtracking.  Singular-value objectives are only
piecewise smooth; whenever an evaluation reports a tie (a subgradient
rather than a gradient) the curvature history is restarted, which keeps
the method usable as a local solver for the exact Hinf norm and for
surrogates near spectrum coalescence.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SolverError, ValidationError
from .lifted import noise_inverses
from .specfun import (
    ObjectiveSpec,
    SpectrumReport,
    h2_value_and_gradient,
    hinf_value_and_gradient,
    spectrum_report,
    surrogate_gradient,
    surrogate_value,
)
from .sysmodel import ConstraintSet, GainSchedule, SystemModel

_CURVATURE_SKIP = 1e-10
_DESCENT_SLACK = 1e-12


@dataclass(frozen=True)
class SolveOptions:
    """Knobs for the L-BFGS loop.

    init defaults to all-zero gains (projected onto the constraints).
    projection, when given, is a heuristic hook mapping a GainSchedule to
    a GainSchedule, applied to every trial point; it can break the
    monotone-descent guarantee and is not used by the stock protocols.
    """

    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    memory: int = 10
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    min_step: float = 1e-20
    init: GainSchedule | None = None
    projection: Callable[[GainSchedule], GainSchedule] | None = None
    time_limit_seconds: float | None = None

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValidationError("max_iterations must be nonnegative")
        if self.gradient_tolerance < 0:
            raise ValidationError("gradient_tolerance must be nonnegative")
        if self.memory < 1:
            raise ValidationError("memory must be positive")
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack_factor < 1:
            raise ValidationError("line-search parameters must lie in (0, 1)")


@dataclass(frozen=True)
class SolveReport:
    """Everything a run produced, in the order it produced it."""

    gains: GainSchedule
    objective_value: float
    objective_trace: tuple[float, ...]
    iterations: int
    termination: str
    wall_seconds: float
    nonsmooth_flags: int
    spectrum: SpectrumReport


class _Parameterization:
    """Maps between gain schedules and the vector of free coordinates."""

    def __init__(self, sys: SystemModel, constraints: ConstraintSet | None):
        if constraints is None:
            constraints = ConstraintSet.unconstrained(sys)
        if len(constraints.masks) != sys.horizon - 1:
            raise ValidationError(
                f"expected {sys.horizon - 1} masks, got {len(constraints.masks)}"
            )
        if constraints.masks[0].shape != (sys.input_dim, sys.state_dim):
            raise ValidationError(
                f"masks must be {sys.input_dim}x{sys.state_dim}, "
                f"got {constraints.masks[0].shape}"
            )
        self.constraints = constraints
        self.groups = constraints.tie_groups
        self.shape = (sys.input_dim, sys.state_dim)
        self.size = constraints.free_parameter_count

    def pack(self, gains: GainSchedule) -> np.ndarray:
        parts = []
        for g in self.groups:
            parts.append(gains[g[0]][self.constraints.masks[g[0]]])
        return np.concatenate(parts) if parts else np.zeros(0)

    def unpack(self, x: np.ndarray) -> GainSchedule:
        out = [None] * len(self.constraints.masks)
        at = 0
        for g in self.groups:
            mask = self.constraints.masks[g[0]]
            cnt = int(mask.sum())
            k = np.zeros(self.shape)
            k[mask] = x[at:at + cnt]
            at += cnt
            for i in g:
                out[i] = k
        return GainSchedule(out)

    def reduce_gradients(self, grads) -> np.ndarray:
        parts = []
        for g in self.groups:
            total = grads[g[0]]
            for i in g[1:]:
                total = total + grads[i]
            parts.append(total[self.constraints.masks[g[0]]])
        return np.concatenate(parts) if parts else np.zeros(0)


def _objective_functions(sys, obj, param, d_inv):
    """Build f(x) and f-with-gradient(x) over the free coordinates."""

    def value(x: np.ndarray) -> float:
        gains = param.unpack(x)
        if obj.is_surrogate:
            return surrogate_value(sys, gains, obj, d_inverses=d_inv)
        if obj.kind == "h2":
            base, _ = h2_value_and_gradient(sys, gains)
        else:
            base, _, _ = hinf_value_and_gradient(sys, gains, d_inverses=d_inv)
        reg = sum(float(np.sum(k * k)) for k in gains)
        return obj.scale * base + obj.reg_weight * reg

    def value_and_grad(x: np.ndarray):
        gains = param.unpack(x)
        if obj.is_surrogate:
            val = surrogate_value(sys, gains, obj, d_inverses=d_inv)
            grads, flagged = surrogate_gradient(sys, gains, obj, d_inverses=d_inv)
        else:
            if obj.kind == "h2":
                base, raw = h2_value_and_gradient(sys, gains)
                flagged = False
            else:
                base, raw, flagged = hinf_value_and_gradient(
                    sys, gains, d_inverses=d_inv
                )
            reg = sum(float(np.sum(k * k)) for k in gains)
            val = obj.scale * base + obj.reg_weight * reg
            grads = [
                obj.scale * g + 2.0 * obj.reg_weight * k
                for g, k in zip(raw, gains)
            ]
        return val, param.reduce_gradients(grads), flagged

    return value, value_and_grad


def _two_loop_direction(grad, history):
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = history[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def minimize(
    sys: SystemModel,
    objective: ObjectiveSpec,
    constraints: ConstraintSet | None = None,
    options: SolveOptions | None = None,
) -> SolveReport:
    """Minimize an objective over the free gain coordinates.

    Deterministic: no randomness anywhere, so identical inputs give
    identical reports.  The objective trace holds the initial value and
    every accepted iterate; with the default options it is non-increasing.
    Raises SolverError if the objective or gradient turns non-finite.
    """
    opts = options or SolveOptions()
    param = _Parameterization(sys, constraints)
    d_inv = noise_inverses(sys)
    start = time.perf_counter()
    deadline = None
    if opts.time_limit_seconds is not None:
        deadline = start + opts.time_limit_seconds

    init = opts.init if opts.init is not None else GainSchedule.zeros(sys)
    if len(init) != sys.horizon - 1:
        raise ValidationError(f"init must carry {sys.horizon - 1} gains")
    gains0 = param.constraints.project(init)
    x = param.pack(gains0)

    value, value_and_grad = _objective_functions(sys, objective, param, d_inv)

    def finish(best_x, best_f, trace, iters, term, flags):
        gains = param.unpack(best_x)
        if opts.projection is not None:
            gains = param.constraints.project(opts.projection(gains))
        spec = spectrum_report(sys, gains, best_f, d_inverses=d_inv)
        return SolveReport(
            gains=gains,
            objective_value=best_f,
            objective_trace=tuple(trace),
            iterations=iters,
            termination=term,
            wall_seconds=time.perf_counter() - start,
            nonsmooth_flags=flags,
            spectrum=spec,
        )

    if x.size == 0:
        f0 = value(x)
        return finish(x, f0, [f0], 0, "no_free_parameters", 0)

    f, g, flagged = value_and_grad(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise SolverError(f"non-finite objective or gradient at the initial point (f={f})")
    trace = [f]
    flags = int(flagged)
    best_x, best_f = x.copy(), f
    history: list = []
    iters = 0
    term = "max_iterations"

    while iters < opts.max_iterations:
        if deadline is not None and time.perf_counter() > deadline:
            term = "time_limit"
            break
        if float(np.max(np.abs(g))) <= opts.gradient_tolerance:
            term = "gradient_tolerance"
            break

        if history:
            d = _two_loop_direction(g, history)
            gd = float(g @ d)
            if not np.isfinite(gd) or gd > -_DESCENT_SLACK * float(
                np.linalg.norm(g)
            ) * float(np.linalg.norm(d)):
                history.clear()
                d = -g
                gd = -float(g @ g)
        else:
            d = -g
            gd = -float(g @ g)

        def search(direction, slope):
            step = 1.0 if history else min(
                1.0, 1.0 / max(float(np.abs(direction).sum()), 1e-30)
            )
            # The floor adapts to the initial trial step: on violently
            # scaled problems the first step can start below any absolute
            # cutoff, and it must still get its full backtracking run.
            floor = min(opts.min_step, step * opts.backtrack_factor ** 60)
            while step >= floor:
                x_try = x + step * direction
                if opts.projection is not None:
                    proj = param.constraints.project(
                        opts.projection(param.unpack(x_try))
                    )
                    x_try = param.pack(proj)
                f_try = value(x_try)
                if np.isfinite(f_try) and f_try <= f + opts.armijo_c * step * slope:
                    return x_try, f_try
                step *= opts.backtrack_factor
            return None, None

        x_new, f_new = search(d, gd)
        if x_new is None and history:
            # Curvature model rejected by the line search: drop it and
            # retry once along steepest descent.
            history.clear()
            d = -g
            gd = -float(g @ g)
            x_new, f_new = search(d, gd)
        if x_new is None:
            term = "line_search_failure"
            break

        f_ng, g_new, flagged = value_and_grad(x_new)
        if not np.isfinite(f_ng) or not np.all(np.isfinite(g_new)):
            raise SolverError(
                f"non-finite objective or gradient at iteration {iters + 1}"
            )
        s = x_new - x
        y = g_new - g
        x, f, g = x_new, f_ng, g_new
        iters += 1
        trace.append(f)
        if f < best_f:
            best_f, best_x = f, x.copy()
        if flagged:
            flags += 1
            history.clear()
        else:
            sy = float(s @ y)
            if sy > _CURVATURE_SKIP * float(np.linalg.norm(s)) * float(
                np.linalg.norm(y)
            ):
                history.append((s, y, 1.0 / sy))
                if len(history) > opts.memory:
                    history.pop(0)

    return finish(best_x, best_f, trace, iters, term, flags)


def synthesize_con(
    sys: SystemModel,
    constraints: ConstraintSet | None,
    target: str,
    options: SolveOptions | None = None,
) -> SolveReport:
    """Constrained synthesis through the convex surrogate for a target norm.

    Target "h2" minimizes the top singular value of the inverse map;
    target "hinf" minimizes the Ky Fan sum of its nN-1 largest singular
    values.  Both are scaled by 1/(nN).
    """
    nn = sys.state_dim * sys.horizon
    if target == "h2":
        obj = ObjectiveSpec(kind="spectral", scale=1.0 / nn)
    elif target == "hinf":
        if nn < 2:
            raise ValidationError("hinf surrogate needs a lifted dimension of at least 2")
        obj = ObjectiveSpec(kind="kyfan", order=nn - 1, scale=1.0 / nn)
    else:
        raise ValidationError(f"unknown target norm {target!r}")
    return minimize(sys, obj, constraints, options)


def synthesize_ncon(
    sys: SystemModel,
    constraints: ConstraintSet | None,
    target: str,
    options: SolveOptions | None = None,
) -> SolveReport:
    """Constrained synthesis minimizing the exact (nonconvex) target norm."""
    if target not in ("h2", "hinf"):
        raise ValidationError(f"unknown target norm {target!r}")
    return minimize(sys, ObjectiveSpec(kind=target), constraints, options)
