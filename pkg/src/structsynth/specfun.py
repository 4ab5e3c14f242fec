"""Norms of the lifted map and convex singular-value surrogates.

The exact closed-loop measures are the squared Frobenius norm (H2) and
the top singular value (Hinf) of the forward lifted map.  Both are
nonconvex in the gains.  The surrogates replace them with unitarily
invariant functions of the inverse lifted map, which is affine in the
gains, so each surrogate is convex: the top singular value (spectral),
the sum of all singular values (nuclear), or the sum of the m largest
(Ky Fan of order m).  Minimizing a surrogate pushes the inverse map's
spectrum up and together, which caps the forward map's norms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .lifted import build_forward, build_inverse, noise_inverses
from .sysmodel import GainSchedule, SystemModel

SURROGATE_KINDS = ("spectral", "nuclear", "kyfan")
EXACT_KINDS = ("h2", "hinf")

# Singular values closer than GAP_RTOL * sigma_max count as tied; gradients
# at such points are subgradients and get flagged.
GAP_RTOL = 1e-9


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which function of the closed loop to minimize, with scaling.

    kind is one of "spectral", "nuclear", "kyfan" (surrogates of the
    inverse map) or "h2", "hinf" (exact norms of the forward map).
    order is the Ky Fan order m and is required exactly for kind="kyfan".
    The solved objective is scale * f + reg_weight * sum_t ||K_t||_F^2.
    """

    kind: str
    order: int | None = None
    reg_weight: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS + EXACT_KINDS:
            raise ValidationError(f"unknown objective kind {self.kind!r}")
        if self.kind == "kyfan":
            if self.order is None or self.order < 1:
                raise ValidationError("kyfan objective needs a positive order")
        elif self.order is not None:
            raise ValidationError(f"order only applies to kyfan, not {self.kind!r}")
        if self.reg_weight < 0:
            raise ValidationError("reg_weight must be nonnegative")
        if not self.scale > 0:
            raise ValidationError("scale must be positive")

    @property
    def is_surrogate(self) -> bool:
        return self.kind in SURROGATE_KINDS

    @classmethod
    def parse(cls, text: str, **kwargs) -> "ObjectiveSpec":
        """Parse a selector: spectral | nuclear | kyfan:m | h2 | hinf."""
        sel = text.strip().lower()
        if sel.startswith("kyfan:"):
            try:
                order = int(sel.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad kyfan order in selector {text!r}")
            return cls(kind="kyfan", order=order, **kwargs)
        if sel in SURROGATE_KINDS + EXACT_KINDS:
            if sel == "kyfan":
                raise ValidationError("kyfan selector needs an order, e.g. kyfan:3")
            return cls(kind=sel, **kwargs)
        raise ValidationError(f"unknown objective selector {text!r}")


@dataclass(frozen=True)
class SpectrumReport:
    """Singular value decomposition of the inverse lifted map at some gains."""

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    objective_value: float


def spectrum_report(
    sys: SystemModel,
    gains: GainSchedule,
    objective_value: float = float("nan"),
    d_inverses=None,
) -> SpectrumReport:
    f = build_inverse(sys, gains, d_inverses).dense()
    u, s, vt = np.linalg.svd(f)
    return SpectrumReport(
        singular_values=s,
        left_vectors=u,
        right_vectors=vt.T,
        objective_value=float(objective_value),
    )


def h2_norm(sys: SystemModel, gains: GainSchedule) -> float:
    """Sum of squared singular values of the forward map (squared Frobenius).

    Equals the expected total squared state energy under unit white noise.
    """
    a = build_forward(sys, gains).dense()
    return float(np.sum(a * a))


def hinf_norm(sys: SystemModel, gains: GainSchedule) -> float:
    """Top singular value of the forward map: worst-case energy gain."""
    a = build_forward(sys, gains).dense()
    return float(np.linalg.svd(a, compute_uv=False)[0])


def _regularizer(gains: GainSchedule) -> float:
    return sum(float(np.sum(k * k)) for k in gains)


def _check_order(obj: ObjectiveSpec, dim: int) -> int:
    if obj.kind == "spectral":
        return 1
    if obj.kind == "nuclear":
        return dim
    if obj.order > dim:
        raise ValidationError(
            f"kyfan order {obj.order} exceeds the lifted dimension {dim}"
        )
    return obj.order


def surrogate_value(
    sys: SystemModel,
    gains: GainSchedule,
    obj: ObjectiveSpec,
    d_inverses=None,
) -> float:
    """Evaluate a convex surrogate: scale * KyFan_m(F) + reg * ||K||^2."""
    if not obj.is_surrogate:
        raise ValidationError(f"{obj.kind!r} is not a surrogate objective")
    f = build_inverse(sys, gains, d_inverses).dense()
    s = np.linalg.svd(f, compute_uv=False)
    m = _check_order(obj, s.size)
    return obj.scale * float(s[:m].sum()) + obj.reg_weight * _regularizer(gains)


def _kyfan_matrix_gradient(u, s, vt, m):
    """Gradient (or a subgradient) of the sum of the m largest singular values.

    At a tie across the order-m boundary the tied group shares the
    leftover weight equally, which picks a valid subgradient; the second
    return value flags that case.
    """
    top = s[0]
    if m == s.size:
        return u @ vt, False
    gap = s[m - 1] - s[m]
    if gap > GAP_RTOL * top:
        return u[:, :m] @ vt[:m, :], False
    tied = np.abs(s - s[m - 1]) <= GAP_RTOL * top
    first = int(np.argmax(tied))
    count = int(tied.sum())
    weight = (m - first) / count
    g = u[:, :first] @ vt[:first, :] if first else 0.0
    g = g + weight * (u[:, first:first + count] @ vt[first:first + count, :])
    return g, True


def _gains_from_matrix_gradient(sys, g_matrix, d_inverses):
    """Pull a gradient on the inverse map back to per-gain gradients.

    The inverse map depends on K_t only through its subdiagonal block
    -D_t^{-1} B_t K_t, so the K_t gradient is -B_t' D_t^{-T} times the
    matching block of the matrix gradient.
    """
    n = sys.state_dim
    out = []
    for t in range(1, sys.horizon):
        blk = g_matrix[t * n:(t + 1) * n, (t - 1) * n:t * n]
        out.append(-sys.B[t - 1].T @ d_inverses[t].T @ blk)
    return out


def surrogate_gradient(
    sys: SystemModel,
    gains: GainSchedule,
    obj: ObjectiveSpec,
    d_inverses=None,
) -> tuple[list[np.ndarray], bool]:
    """Analytic gradient of surrogate_value per gain matrix.

    Returns one n_u x n array per K_t plus a flag that is True when the
    point is nonsmooth (tied singular values) and the result is only a
    subgradient.
    """
    if not obj.is_surrogate:
        raise ValidationError(f"{obj.kind!r} is not a surrogate objective")
    inv = tuple(d_inverses) if d_inverses is not None else noise_inverses(sys)
    f = build_inverse(sys, gains, inv).dense()
    u, s, vt = np.linalg.svd(f)
    m = _check_order(obj, s.size)
    g_matrix, flagged = _kyfan_matrix_gradient(u, s, vt, m)
    grads = _gains_from_matrix_gradient(sys, g_matrix, inv)
    out = []
    for t, g in enumerate(grads):
        out.append(obj.scale * g + 2.0 * obj.reg_weight * gains[t])
    return out, flagged


def h2_value_and_gradient(
    sys: SystemModel, gains: GainSchedule
) -> tuple[float, list[np.ndarray]]:
    """H2 norm and its exact gradient via forward/adjoint recursions.

    Propagates state covariances P forward and cost-to-go weights S
    backward; the K_t gradient is 2 B_t' S_{t+1} (A_t + B_t K_t) P_t.
    Matches the dense definition of h2_norm but costs O(N n^3).
    """
    N, n = sys.horizon, sys.state_dim
    loops = [sys.A[t] + sys.B[t] @ gains[t] for t in range(N - 1)]
    P = [sys.D[0] @ sys.D[0].T]
    for t in range(1, N):
        P.append(loops[t - 1] @ P[-1] @ loops[t - 1].T + sys.D[t] @ sys.D[t].T)
    value = float(sum(np.trace(p) for p in P))
    S = [None] * N
    S[N - 1] = np.eye(n)
    for t in range(N - 2, -1, -1):
        S[t] = np.eye(n) + loops[t].T @ S[t + 1] @ loops[t]
    grads = []
    for t in range(N - 1):
        grads.append(2.0 * sys.B[t].T @ S[t + 1] @ loops[t] @ P[t])
    return value, grads


def hinf_value_and_gradient(
    sys: SystemModel,
    gains: GainSchedule,
    d_inverses=None,
) -> tuple[float, list[np.ndarray], bool]:
    """Top singular value of the forward map and its gradient.

    Differentiates through the inverse-map parameterization: with top
    singular pair (u1, v1) and value s1 of the forward map, the gradient
    on the inverse map is -s1^2 v1 u1', pulled back blockwise to the
    gains.  Flags nonsmoothness when the top two singular values tie.
    """
    inv = tuple(d_inverses) if d_inverses is not None else noise_inverses(sys)
    a = build_forward(sys, gains).dense()
    u, s, vt = np.linalg.svd(a)
    value = float(s[0])
    flagged = s.size > 1 and (s[0] - s[1]) <= GAP_RTOL * s[0]
    g_matrix = -(s[0] ** 2) * np.outer(vt[0, :], u[:, 0])
    grads = _gains_from_matrix_gradient(sys, g_matrix, inv)
    return value, grads, flagged


def exact_gradient(
    sys: SystemModel, gains: GainSchedule, target: str
) -> tuple[list[np.ndarray], bool]:
    """Gradient of an exact norm ("h2" or "hinf") per gain matrix."""
    if target == "h2":
        _, grads = h2_value_and_gradient(sys, gains)
        return grads, False
    if target == "hinf":
        _, grads, flagged = hinf_value_and_gradient(sys, gains)
        return grads, flagged
    raise ValidationError(f"unknown exact norm {target!r}")


def holder_defect_bounds(values: Sequence[float]) -> tuple[float, float]:
    """Bracket the geometric mean of a descending positive vector.

    Returns (hi, lo) with hi >= geometric mean >= lo, where
    hi = AM * exp(-Var(a / a_1) / 2) and lo = AM * exp(-Var(a / a_m) / 2);
    the variance uses 1/n normalization.  The bracket is exact for a
    constant vector.
    """
    a = np.asarray(values, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValidationError("need a 1-D vector of values")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValidationError("values must be finite and positive")
    if np.any(np.diff(a) > 1e-12 * a[0]):
        raise ValidationError("values must be sorted in descending order")
    am = float(a.mean())
    hi = am * float(np.exp(-np.var(a / a[0]) / 2.0))
    lo = am * float(np.exp(-np.var(a / a[-1]) / 2.0))
    return hi, lo
