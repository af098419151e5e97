"""Figure rendering for the report path.

Each function takes computed results and writes one PNG next to the
delimited output.  Rendering is optional; the CSV/JSON files remain the
primary artifacts.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .analysis import ScalingFit, SweepResult  # noqa: E402
from .measurement import MeasurementConfig, RunResult  # noqa: E402
from .scenarios import ColdAtomOutcome, ColdAtomParams  # noqa: E402

_DPI = 130


def sweep_figure(sweep: SweepResult, path: str) -> str:
    """Log-log disturbance/entropy panel plus centroid error panel."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    t = sweep.t_values
    ax1.loglog(t, sweep.disturbances, "o-", label="disturbance")
    ax1.loglog(t, sweep.entropies, "s--", label="entanglement entropy")
    if sweep.fit is not None:
        lo, hi = sweep.fit.window
        xs = t[lo:hi]
        ax1.loglog(xs, np.exp(sweep.fit.intercept) * xs**sweep.fit.slope,
                   "k:", label=f"fit slope {sweep.fit.slope:.2f}")
    ax1.set_xlabel("interaction time T")
    ax1.set_ylabel("leakage")
    ax1.legend(fontsize=8)

    ax2.loglog(t, np.abs(sweep.centroid_errors), "o-")
    ax2.set_xlabel("interaction time T")
    ax2.set_ylabel("|centroid - predicted shift|")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def pointer_figure(result: RunResult, config: MeasurementConfig, path: str) -> str:
    """Pointer marginal of the final state, when the run kept it."""
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    if result.final_state is not None:
        n = result.final_state.basis_dims[-1]
        marginal = (np.abs(result.final_state.amplitudes.reshape(-1, n)) ** 2).sum(axis=0)
        if config is not None and config.mode in ("strong", "protective"):
            grid = config.pointer.build()
            coords = grid.r_values
            ax.set_xlabel("pointer coordinate r")
        else:
            coords = np.arange(n)
            ax.set_xlabel("pointer index")
        ax.plot(coords, marginal, "-")
        ax.axvline(result.pointer_centroid, color="k", ls=":",
                   label=f"centroid {result.pointer_centroid:.4f}")
        ax.axvline(result.pointer_start + result.predicted_shift, color="r", ls="--",
                   label=f"predicted {result.pointer_start + result.predicted_shift:.4f}")
        ax.legend(fontsize=8)
    else:
        ax.text(0.5, 0.5, "final state not retained", ha="center", va="center")
    ax.set_ylabel("marginal probability")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def fit_figure(x, y, fit: ScalingFit, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax.loglog(x, y, "o", label="data")
    lo, hi = fit.window
    xs = x[lo:hi]
    ax.loglog(xs, np.exp(fit.intercept) * xs**fit.slope, "k-",
              label=f"slope {fit.slope:.3f}, r^2 {fit.r_squared:.4f}")
    ax.set_xlabel("T")
    ax.set_ylabel("disturbance")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def coldatom_figure(outcome: ColdAtomOutcome, params: ColdAtomParams,
                    path: str) -> str:
    """Momentum marginal (when simulated) and the SI summary block."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    res = outcome.result
    if res.final_state is not None:
        n = res.final_state.basis_dims[-1]
        marginal = (np.abs(res.final_state.amplitudes.reshape(-1, n)) ** 2).sum(axis=0)
        coords = -16.0 + (np.arange(n) + 0.5) * (32.0 / n)
        ax1.plot(coords, marginal)
        ax1.axvline(res.pointer_centroid, color="k", ls=":")
        ax1.set_xlabel("momentum (packet widths)")
        ax1.set_ylabel("marginal probability")
    else:
        ax1.text(0.5, 0.5, "analytic level (no grid state)", ha="center", va="center")
    s = outcome.summary
    lines = [
        f"momentum shift   {s.momentum_shift:.4e} kg m/s",
        f"momentum spread  {s.momentum_spread:.4e} kg m/s",
        f"shift / spread   {s.shift_to_spread:.1f}",
        f"final width      {s.final_position_width * 1e3:.4f} mm (RMS)",
        f"drift displ.     {s.drift_displacement * 1e2:.3f} cm",
        f"interaction time {s.interaction_time:.1f} s",
        f"gradient scale   {outcome.gradient_scale:.3e}",
    ]
    ax2.axis("off")
    ax2.text(0.02, 0.95, "\n".join(lines), family="monospace", fontsize=9,
             va="top")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
