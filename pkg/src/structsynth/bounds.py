"""Upper bounds and suboptimality certificates from inverse-map spectra.

All quantities here are functions of the singular values of the inverse
lifted map F(K), exploiting two facts: the singular values of the forward
map are the reciprocals of those of F, and the product of F's singular
values is a gain-independent constant (the absolute determinant).  The
spread of a spectrum around its mean, through an arithmetic/geometric
mean defect, then yields computable bounds on both norms and on how far
a surrogate minimizer can be from the true optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .lifted import build_inverse
from .sysmodel import GainSchedule, SystemModel


@dataclass(frozen=True)
class SpreadVector:
    """Ratios of singular values entering a suboptimality bound."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 1 or e.size == 0:
            raise ValidationError("spread vector must be a nonempty 1-D array")
        if not np.all(np.isfinite(e)) or np.any(e <= 0):
            raise ValidationError("spread entries must be finite and positive")
        object.__setattr__(self, "entries", e)

    @property
    def variance(self) -> float:
        """Population variance (1/n normalization) of the entries."""
        return float(np.var(self.entries))


def _check_spectrum(sigma, minimum=2) -> np.ndarray:
    s = np.asarray(sigma, dtype=float)
    if s.ndim != 1 or s.size < minimum:
        raise ValidationError(f"need at least {minimum} singular values")
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise ValidationError("singular values must be finite and positive")
    if np.any(np.diff(s) > 1e-9 * s[0]):
        raise ValidationError("singular values must be sorted descending")
    return s


def log_abs_det_product(sys: SystemModel) -> float:
    """log of |det D_0 * ... * det D_{N-1}|, the forward map's determinant size."""
    total = 0.0
    for d in sys.D:
        sign, logdet = np.linalg.slogdet(d)
        if sign == 0:
            raise ValidationError("noise matrix with zero determinant")
        total += logdet
    return float(total)


def _inverse_spectrum(sys: SystemModel, gains: GainSchedule) -> np.ndarray:
    f = build_inverse(sys, gains).dense()
    return np.linalg.svd(f, compute_uv=False)


def log_ub_hinf(sigma_inverse: np.ndarray, log_det: float) -> float:
    """Log-domain form of ub_hinf, safe for long horizons."""
    s = _check_spectrum(sigma_inverse)
    m = s.size - 1
    return log_det + m * float(np.log(s[:m].mean()))


def log_ub_h2(sigma_inverse: np.ndarray, log_det: float) -> float:
    """Log-domain form of ub_h2, safe for long horizons."""
    s = _check_spectrum(sigma_inverse)
    m = s.size - 1
    return float(np.log(s.size)) + 2.0 * log_det + 2.0 * m * float(np.log(s[0]))


def ub_hinf(sys: SystemModel, gains: GainSchedule) -> float:
    """Upper bound on the worst-case gain from the inverse map's spectrum.

    With c = |det(forward map)| and the nN-1 largest singular values of
    F(K), the bound is c * (their arithmetic mean) ** (nN - 1); it always
    dominates hinf_norm and is tight at a flat spectrum.
    """
    s = _inverse_spectrum(sys, gains)
    with np.errstate(over="ignore"):
        return float(np.exp(log_ub_hinf(s, log_abs_det_product(sys))))


def ub_h2(sys: SystemModel, gains: GainSchedule) -> float:
    """Upper bound on the H2 norm: nN * c^2 * sigma_max(F) ** (2 nN - 2)."""
    s = _inverse_spectrum(sys, gains)
    with np.errstate(over="ignore"):
        return float(np.exp(log_ub_h2(s, log_abs_det_product(sys))))


def spread_h2_surrogate(sigma_inverse) -> SpreadVector:
    """Ratios ((sigma_2 / sigma_i) ** 2, i = nN..2) at a surrogate solution."""
    s = _check_spectrum(sigma_inverse)
    return SpreadVector((s[1] / s[:0:-1]) ** 2)


def spread_h2_optimal(sigma_inverse) -> SpreadVector:
    """Ratios ((sigma_nN / sigma_i) ** 2, i = nN..2) at a true optimum."""
    s = _check_spectrum(sigma_inverse)
    return SpreadVector((s[-1] / s[:0:-1]) ** 2)


def spread_hinf_surrogate(sigma_inverse) -> SpreadVector:
    """Ratios (sigma_i / sigma_1, i = nN-1..1) at a surrogate solution."""
    s = _check_spectrum(sigma_inverse)
    return SpreadVector(s[-2::-1] / s[0])


def spread_hinf_optimal(sigma_inverse) -> SpreadVector:
    """Ratios (sigma_i / sigma_{nN-1}, i = nN-1..1) at a true optimum."""
    s = _check_spectrum(sigma_inverse)
    return SpreadVector(s[-2::-1] / s[-2])


def subopt_ratio_h2(sigma_surrogate, sigma_optimal) -> float:
    """Certified cap on H2(surrogate gains) / H2(optimal gains).

    Takes the inverse-map spectra at the spectral-surrogate minimizer and
    at the true H2 minimizer over the same constraint set.
    """
    s_sur = _check_spectrum(sigma_surrogate)
    s_opt = _check_spectrum(sigma_optimal)
    if s_sur.size != s_opt.size:
        raise ValidationError("spectra must have equal length")
    nn = s_sur.size
    v_sur = spread_h2_surrogate(s_sur).variance
    v_opt = spread_h2_optimal(s_opt).variance
    with np.errstate(over="ignore"):
        return nn / (nn - 1.0) * float(np.exp((v_sur - v_opt) / 2.0))


def subopt_ratio_hinf(sigma_surrogate, sigma_optimal) -> float:
    """Certified cap on Hinf(surrogate gains) / Hinf(optimal gains).

    Takes the inverse-map spectra at the Ky Fan (order nN-1) surrogate
    minimizer and at the true Hinf minimizer over the same constraint set.
    """
    s_sur = _check_spectrum(sigma_surrogate)
    s_opt = _check_spectrum(sigma_optimal)
    if s_sur.size != s_opt.size:
        raise ValidationError("spectra must have equal length")
    m = s_sur.size - 1
    v_sur = spread_hinf_surrogate(s_sur).variance
    v_opt = spread_hinf_optimal(s_opt).variance
    with np.errstate(over="ignore"):
        return float(np.exp(m * (v_opt - v_sur) / 2.0))


def aposteriori_bound_h2(sigma_surrogate) -> float:
    """Optimum-free cap on the H2 suboptimality of a surrogate solution.

    Uses only the spectrum at the surrogate solution; equals the
    two-spectra bound with the optimal spread replaced by its worst case
    (zero variance).
    """
    s = _check_spectrum(sigma_surrogate)
    nn = s.size
    v_sur = spread_h2_surrogate(s).variance
    with np.errstate(over="ignore"):
        return nn / (nn - 1.0) * float(np.exp(v_sur / 2.0))
