"""Quantitative post-processing of measurement runs.

Sweeps over the interaction time, log-log power-law fits of the state
disturbance, and per-run comparison against the first-order prediction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, PreconditionError, ProtmeasError
from .measurement import MeasurementConfig, RunResult, run_generalized, run_protective

#: Runs with an adiabaticity figure below this are treated as adiabatic.
VALIDITY_THRESHOLD = 0.05

#: Fit points must exceed this multiple of the propagator error estimate
#: so numerical noise never pollutes the scaling exponent.
NOISE_FLOOR_FACTOR = 100.0

#: Absolute floor used when the propagator estimate is exactly zero.
MIN_NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line on (ln x, ln y); the slope is the exponent."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]

    def __post_init__(self):
        if not -1e-12 <= self.r_squared <= 1.0 + 1e-12:
            raise DomainError(f"r_squared {self.r_squared!r} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class SweepResult:
    """One measurement per interaction time, plus the scaling fit."""

    t_values: np.ndarray
    disturbances: np.ndarray
    entropies: np.ndarray
    centroid_errors: np.ndarray
    validities: np.ndarray
    fit: ScalingFit | None
    point_errors: tuple[str | None, ...]
    results: tuple[RunResult | None, ...]

    def fit_window_mask(self) -> np.ndarray:
        """Adiabatic, noise-clear points eligible for the scaling fit."""
        ok = np.array([e is None for e in self.point_errors])
        floors = np.array([
            max(
                NOISE_FLOOR_FACTOR * (r.report.richardson_error_estimate if r else 0.0),
                MIN_NOISE_FLOOR,
            )
            for r in self.results
        ])
        return ok & (self.validities < VALIDITY_THRESHOLD) & (self.disturbances > floors)


@dataclass(frozen=True)
class PredictionComparison:
    """Measured-vs-predicted pointer shift for one run."""

    centroid_error: float
    relative_error: float
    validity: float


def fit_power_law(x, y, window: tuple[int, int] | None = None) -> ScalingFit:
    """Fit y = c * x^slope by least squares in log-log coordinates.

    `window` is a half-open index range (start, stop) into the arrays;
    all points are used when it is omitted.  Requires at least 4 points
    and strictly positive data inside the window.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("fit_power_law needs matching 1-D arrays")
    lo, hi = window if window is not None else (0, x.size)
    if not 0 <= lo < hi <= x.size:
        raise DomainError(f"invalid window {window!r} for {x.size} points")
    if hi - lo < 4:
        raise PreconditionError("fit window must contain at least 4 points")
    xs, ys = x[lo:hi], y[lo:hi]
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise DomainError("power-law fit requires positive data in the window")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if total == 0.0 else 1.0 - float((resid**2).sum()) / total
    return ScalingFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=min(max(r2, 0.0), 1.0),
        window=(int(lo), int(hi)),
    )


def compare_to_prediction(result: RunResult) -> PredictionComparison:
    """Discrepancy between the measured centroid and the first-order shift."""
    err = result.pointer_centroid - result.pointer_start - result.predicted_shift
    denom = abs(result.predicted_shift)
    rel = abs(err) / denom if denom > 1e-300 else float("inf")
    return PredictionComparison(
        centroid_error=float(err),
        relative_error=float(rel),
        validity=result.validity,
    )


def _run_for_mode(config: MeasurementConfig) -> RunResult:
    if config.mode == "protective":
        return run_protective(config)
    if config.mode == "generalized":
        return run_generalized(config)
    raise PreconditionError(f"sweeps support adiabatic modes, not {config.mode!r}")


def sweep_over_T(base_config: MeasurementConfig, t_values,
                 workers: int = 1) -> SweepResult:
    """One run per interaction time, identical seed policy throughout.

    Requires at least 5 times spanning 1.5 decades.  Points whose runs
    fail to converge are kept as error markers rather than aborting the
    sweep.  The scaling fit is restricted to adiabatic points that sit
    clearly above the propagator noise floor and is skipped when fewer
    than 4 such points remain.
    """
    ts = np.sort(np.asarray(t_values, dtype=float))
    if ts.size < 5:
        raise PreconditionError("sweep needs at least 5 interaction times")
    if ts[0] <= 0.0:
        raise PreconditionError("interaction times must be positive")
    if np.log10(ts[-1] / ts[0]) < 1.5:
        raise PreconditionError("sweep must span at least 1.5 decades")

    configs = [replace(base_config, total_time=float(t)) for t in ts]

    def one(cfg: MeasurementConfig):
        try:
            return _run_for_mode(cfg), None
        except ProtmeasError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, configs))
    else:
        outcomes = [one(cfg) for cfg in configs]

    results = tuple(r for r, _ in outcomes)
    point_errors = tuple(e for _, e in outcomes)
    nan = float("nan")
    sweep = SweepResult(
        t_values=ts,
        disturbances=np.array([r.disturbance if r else nan for r in results]),
        entropies=np.array([r.entanglement_entropy if r else nan for r in results]),
        centroid_errors=np.array(
            [compare_to_prediction(r).centroid_error if r else nan for r in results]
        ),
        validities=np.array([r.validity if r else nan for r in results]),
        fit=None,
        point_errors=point_errors,
        results=results,
    )
    mask = sweep.fit_window_mask()
    fit = None
    if int(mask.sum()) >= 4:
        idx = np.flatnonzero(mask)
        lo, hi = int(idx[0]), int(idx[-1]) + 1
        if hi - lo == idx.size:  # the fit wants one contiguous window
            fit = fit_power_law(ts, sweep.disturbances, window=(lo, hi))
    return replace(sweep, fit=fit)


def rank_correlation(a, b) -> float:
    """Spearman rank correlation of two equal-length sequences."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise DomainError("rank correlation needs two matching 1-D arrays")
    ra = np.argsort(np.argsort(a)).astype(float)
    rb = np.argsort(np.argsort(b)).astype(float)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra**2).sum() * (rb**2).sum())
    return float((ra * rb).sum() / denom) if denom > 0 else 0.0
