import math

import numpy as np
import pytest

from protmeas.analysis import (
    VALIDITY_THRESHOLD,
    compare_to_prediction,
    fit_power_law,
    rank_correlation,
    sweep_over_T,
)
from protmeas.errors import DomainError, PreconditionError
from protmeas.measurement import run_protective
from tests.test_measurement import commuting_config, tilted_config


# ---------------------------------------------------------------------------
# power-law fit


def test_fit_exact_inverse_square():
    x = np.geomspace(1.0, 100.0, 12)
    y = 3.7 / x**2
    fit = fit_power_law(x, y)
    assert abs(fit.slope - (-2.0)) < 1e-10
    assert abs(fit.intercept - math.log(3.7)) < 1e-10
    assert fit.r_squared > 1.0 - 1e-12


def test_fit_constant_has_zero_slope():
    x = np.geomspace(1.0, 50.0, 8)
    fit = fit_power_law(x, np.full_like(x, 2.5))
    assert abs(fit.slope) < 1e-12


def test_fit_noisy_inverse_square():
    rng = np.random.default_rng(99)
    x = np.geomspace(1.0, 1000.0, 50)
    y = 5.0 / x**2 * (1.0 + 0.01 * rng.normal(size=x.size))
    fit = fit_power_law(x, y)
    assert -2.05 <= fit.slope <= -1.95
    assert fit.r_squared > 0.999


def test_fit_window_selects_points():
    x = np.geomspace(1.0, 100.0, 10)
    y = 2.0 / x**2
    y[:3] = 17.0  # corrupt points outside the window
    fit = fit_power_law(x, y, window=(3, 10))
    assert abs(fit.slope - (-2.0)) < 1e-10
    assert fit.window == (3, 10)


def test_fit_domain_errors():
    x = np.geomspace(1.0, 10.0, 6)
    with pytest.raises(DomainError):
        fit_power_law(x, -1.0 / x)
    with pytest.raises(PreconditionError):
        fit_power_law(x, 1.0 / x, window=(0, 3))
    with pytest.raises(DomainError):
        fit_power_law(x, 1.0 / x, window=(4, 2))


# ---------------------------------------------------------------------------
# prediction comparison


def test_compare_commuting_case():
    comp = compare_to_prediction(run_protective(commuting_config()))
    assert abs(comp.centroid_error) < 1e-6


def test_compare_large_vs_small_T():
    large = compare_to_prediction(run_protective(tilted_config(total_time=2000.0)))
    assert large.relative_error < 0.01
    assert large.validity < VALIDITY_THRESHOLD
    small = compare_to_prediction(run_protective(tilted_config(total_time=12.0)))
    assert small.relative_error > large.relative_error
    assert small.validity > VALIDITY_THRESHOLD


# ---------------------------------------------------------------------------
# sweeps


def test_sweep_commuting_fixed_point_skips_fit():
    ts = np.geomspace(20.0, 2000.0, 6)
    sweep = sweep_over_T(commuting_config(), ts)
    assert np.all(sweep.disturbances < 1e-8)
    assert sweep.fit is None


def test_sweep_tilted_decreasing_disturbance():
    ts = np.geomspace(25.0, 2500.0, 10)
    sweep = sweep_over_T(tilted_config(), ts)
    window = sweep.validities < VALIDITY_THRESHOLD
    dist = sweep.disturbances[window]
    assert dist.size >= 4
    assert np.all(np.diff(dist) < 0.0)
    cerr = np.abs(sweep.centroid_errors)
    assert cerr[-1] < cerr[0] / 50.0
    assert sweep.fit is not None
    assert -2.3 <= sweep.fit.slope <= -1.7


def test_sweep_entropy_disturbance_correlated():
    ts = np.geomspace(25.0, 2500.0, 8)
    sweep = sweep_over_T(tilted_config(), ts)
    assert rank_correlation(sweep.disturbances, sweep.entropies) > 0.9


def test_sweep_preconditions():
    with pytest.raises(PreconditionError):
        sweep_over_T(tilted_config(), [10.0, 20.0, 30.0, 40.0])  # too few
    with pytest.raises(PreconditionError):
        sweep_over_T(tilted_config(), [10.0, 12.0, 14.0, 16.0, 18.0])  # narrow


def test_sweep_marks_failed_points(monkeypatch):
    import protmeas.analysis as analysis_mod
    from protmeas.errors import ConvergenceError

    real = analysis_mod.run_protective

    def flaky(config):
        if abs(config.total_time - 100.0) < 1.0:
            raise ConvergenceError("stuck", estimate=1.0, n_steps=16)
        return real(config)

    monkeypatch.setattr(analysis_mod, "run_protective", flaky)
    ts = [25.0, 100.0, 400.0, 1000.0, 2500.0]
    sweep = sweep_over_T(tilted_config(), ts)
    assert sweep.point_errors[1] is not None
    assert "ConvergenceError" in sweep.point_errors[1]
    assert math.isnan(sweep.disturbances[1])
    assert sweep.point_errors[0] is None


def test_sweep_parallel_matches_serial():
    ts = np.geomspace(25.0, 1000.0, 6)
    serial = sweep_over_T(tilted_config(), ts, workers=1)
    parallel = sweep_over_T(tilted_config(), ts, workers=4)
    assert np.array_equal(serial.disturbances, parallel.disturbances)
    assert np.array_equal(serial.centroid_errors, parallel.centroid_errors)


def test_rank_correlation_bounds():
    assert rank_correlation([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
    assert rank_correlation([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0


def test_sweep_shift_correctness_invariant():
    # beyond the validity threshold the centroid error decreases with T and
    # ends below 1% of the measured operator's spectral range (2 for sigma_z)
    ts = np.geomspace(25.0, 2500.0, 12)
    sweep = sweep_over_T(tilted_config(), ts)
    window = sweep.validities < VALIDITY_THRESHOLD
    errs = np.abs(sweep.centroid_errors[window])
    assert errs.size >= 5
    assert np.all(np.diff(errs) < 0.0)
    assert errs[-1] < 0.01 * 2.0
