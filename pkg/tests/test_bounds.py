"""Tests for spectrum-based upper bounds and suboptimality certificates."""

import warnings

import numpy as np
import pytest

from structsynth import (
    GainSchedule,
    SpreadVector,
    SystemModel,
    ValidationError,
    aposteriori_bound_h2,
    build_inverse,
    h2_norm,
    hinf_norm,
    subopt_ratio_h2,
    subopt_ratio_hinf,
    ub_h2,
    ub_hinf,
)
from structsynth.bounds import (
    log_abs_det_product,
    log_ub_h2,
    log_ub_hinf,
    spread_h2_optimal,
    spread_h2_surrogate,
    spread_hinf_optimal,
    spread_hinf_surrogate,
)


def _random_system(rng, n, n_u, horizon):
    A = [rng.standard_normal((n, n)) for _ in range(horizon - 1)]
    B = [rng.standard_normal((n, n_u)) for _ in range(horizon - 1)]
    D = [np.eye(n) + 0.3 * rng.standard_normal((n, n)) for _ in range(horizon)]
    return SystemModel(A, B, D)


def _random_gains(rng, sys):
    return GainSchedule(
        [rng.standard_normal((sys.input_dim, sys.state_dim))
         for _ in range(sys.horizon - 1)]
    )


def _spectrum(sys, gains):
    return np.linalg.svd(build_inverse(sys, gains).dense(), compute_uv=False)


def test_spread_vector_validation():
    with pytest.raises(ValidationError):
        SpreadVector(np.array([1.0, -1.0]))
    with pytest.raises(ValidationError):
        SpreadVector(np.array([[1.0]]))
    assert SpreadVector(np.array([2.0, 2.0])).variance == 0.0


def test_spread_definitions_on_hand_spectrum():
    s = np.array([4.0, 3.0, 2.0, 1.0])
    assert np.allclose(spread_h2_surrogate(s).entries, [9.0, 2.25, 1.0])
    assert np.allclose(spread_h2_optimal(s).entries, [1.0, 0.25, 1.0 / 9.0])
    assert np.allclose(spread_hinf_surrogate(s).entries, [0.5, 0.75, 1.0])
    assert np.allclose(spread_hinf_optimal(s).entries, [1.0, 1.5, 2.0])
    for fn in (spread_h2_surrogate, spread_h2_optimal,
               spread_hinf_surrogate, spread_hinf_optimal):
        assert fn(s).entries.shape == (3,)


def test_log_abs_det_handles_negative_determinants():
    d_neg = np.array([[0.0, 1.0], [1.0, 0.0]])  # determinant -1
    sys = SystemModel([np.eye(2)], [np.eye(2)], [d_neg, 2.0 * np.eye(2)])
    assert log_abs_det_product(sys) == pytest.approx(np.log(4.0), rel=1e-12)


def test_upper_bounds_dominate_norms():
    rng = np.random.default_rng(0)
    for trial in range(40):
        n = int(rng.integers(1, 4))
        horizon = int(rng.integers(2, 5))
        sys = _random_system(rng, n, int(rng.integers(1, 3)), horizon)
        gains = _random_gains(rng, sys)
        assert ub_hinf(sys, gains) >= hinf_norm(sys, gains) * (1 - 1e-9)
        assert ub_h2(sys, gains) >= h2_norm(sys, gains) * (1 - 1e-9)


def test_upper_bounds_exact_at_identity_map():
    # A = 0 with zero gains and unit noise gives a forward map equal to
    # the identity, where both bounds collapse to the norms themselves.
    n, horizon = 2, 3
    sys = SystemModel.constant(np.zeros((n, n)), np.eye(n), np.eye(n), horizon)
    zeros = GainSchedule.zeros(sys)
    assert ub_hinf(sys, zeros) == pytest.approx(1.0, rel=1e-12)
    assert hinf_norm(sys, zeros) == pytest.approx(1.0, rel=1e-12)
    assert ub_h2(sys, zeros) == pytest.approx(float(n * horizon), rel=1e-12)
    assert h2_norm(sys, zeros) == pytest.approx(float(n * horizon), rel=1e-12)


def test_log_domain_forms_match_direct_forms():
    rng = np.random.default_rng(1)
    sys = _random_system(rng, 2, 1, 4)
    gains = _random_gains(rng, sys)
    s = _spectrum(sys, gains)
    ld = log_abs_det_product(sys)
    assert np.exp(log_ub_hinf(s, ld)) == pytest.approx(ub_hinf(sys, gains), rel=1e-9)
    assert np.exp(log_ub_h2(s, ld)) == pytest.approx(ub_h2(sys, gains), rel=1e-9)


def test_subopt_ratio_h2_flat_spectrum_value():
    s = np.ones(6)
    assert subopt_ratio_h2(s, s) == pytest.approx(6.0 / 5.0, rel=1e-12)
    assert subopt_ratio_hinf(s, s) == pytest.approx(1.0, rel=1e-12)


def test_aposteriori_dominates_two_spectra_bound():
    rng = np.random.default_rng(2)
    for _ in range(20):
        s_sur = np.sort(rng.uniform(0.5, 3.0, size=6))[::-1]
        s_opt = np.sort(rng.uniform(0.5, 3.0, size=6))[::-1]
        assert aposteriori_bound_h2(s_sur) >= subopt_ratio_h2(s_sur, s_opt) - 1e-12


def test_certificates_hold_on_scalar_grid_optima():
    # Scalar plants, one tied gain: brute-force the surrogate and true
    # minimizers on a fine grid, then check each certificate's cap
    # against the realized suboptimality ratio.
    rng = np.random.default_rng(3)
    grid = np.linspace(-3.0, 1.5, 2251)
    for trial in range(10):
        a = float(rng.uniform(-1.5, 1.5))
        sys = SystemModel.constant([[a]], [[1.0]], [[1.0]], horizon=4)

        def schedules(k):
            return GainSchedule([[[k]]] * 3)

        spectra = [_spectrum(sys, schedules(k)) for k in grid]
        smax = np.array([s[0] for s in spectra])
        kyfan = np.array([s[:-1].sum() for s in spectra])
        h2s = np.array([h2_norm(sys, schedules(k)) for k in grid])
        hinfs = np.array([hinf_norm(sys, schedules(k)) for k in grid])

        i_sur2, i_opt2 = int(np.argmin(smax)), int(np.argmin(h2s))
        cap2 = subopt_ratio_h2(spectra[i_sur2], spectra[i_opt2])
        assert h2s[i_sur2] / h2s[i_opt2] <= cap2 + 1e-6

        i_suri, i_opti = int(np.argmin(kyfan)), int(np.argmin(hinfs))
        capi = subopt_ratio_hinf(spectra[i_suri], spectra[i_opti])
        assert hinfs[i_suri] / hinfs[i_opti] <= capi + 1e-6


def test_spectrum_validation():
    with pytest.raises(ValidationError):
        subopt_ratio_h2(np.array([1.0, 2.0]), np.array([2.0, 1.0]))
    with pytest.raises(ValidationError):
        subopt_ratio_h2(np.array([2.0, 1.0]), np.array([2.0, 1.0, 0.5]))
    with pytest.raises(ValidationError):
        aposteriori_bound_h2(np.array([1.0]))
    with pytest.raises(ValidationError):
        aposteriori_bound_h2(np.array([2.0, 0.0]))


def test_aposteriori_overflow_is_clean_inf():
    s = np.array([1e8, 1e8, 1.0, 1e-8])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        value = aposteriori_bound_h2(s)
    assert value == np.inf
