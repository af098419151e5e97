"""End-to-end measurement pipelines.

Three modes share one engine:

* strong      -- impulsive entangling interaction plus Born-rule collapse
                 sampling; each coupling eigenbranch drags a pointer packet
                 copy to a distinct position.
* protective  -- weak adiabatic coupling of a protected (non-degenerate)
                 system eigenstate; the pointer moves by the expectation
                 value of the measured operator while the system is left
                 (to first order) unchanged.
* generalized -- protective measurement with apparatus operators that do
                 not commute; the pointer is prepared conjugate to the
                 coupling operator projected on the apparatus energy
                 diagonal.

All pipelines are pure functions of (config, seed); runs never share
mutable state, so sweeps may execute points in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import hilbert
from .dynamics import (
    CompositeHamiltonian,
    CouplingProfile,
    PropagationReport,
    first_order_prediction,
    impulsive_propagator,
    propagate,
)
from .errors import (
    ModeError,
    PreconditionError,
    SetupError,
    SizingError,
    ValidationError,
    WraparoundError,
)
from .hilbert import (
    DensityOperator,
    HermitianOperator,
    PointerGrid,
    StateVector,
    born_weights,
    eigendecompose,
    fidelity_pure,
    gaussian_packet,
    ground_state,
    packet_moments,
    partial_trace,
    tensor_product,
    translation_generator,
    von_neumann_entropy,
)

MODES = ("strong", "protective", "generalized")

#: Apparatus dimension cap for the generalized mode, where pointer
#: preparation requires full diagonalization of the effective coupling.
GENERALIZED_DIM_CAP = 64

#: Fraction of marginal mass within 4 widths of the box edge that trips
#: the wraparound check.
EDGE_MASS_LIMIT = 0.01


@dataclass(frozen=True)
class PointerSettings:
    """Pointer grid parameters for the grid-based modes."""

    n_points: int = 256
    r_min: float = -15.0
    r_max: float = 15.0

    def build(self) -> PointerGrid:
        return PointerGrid(self.n_points, self.r_min, self.r_max)


@dataclass(frozen=True)
class ApparatusSpec:
    """Apparatus operator specification.

    Grid modes take `h_kind` in {"zero", "kinetic", "matrix"} with the
    coupling operator fixed to the grid translation generator.  The
    generalized mode requires explicit `h_matrix` / `q_matrix`.
    """

    h_kind: str = "zero"
    mass: float | None = None
    h_matrix: np.ndarray | None = None
    q_kind: str = "translation"
    q_matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.h_kind not in ("zero", "kinetic", "matrix"):
            raise ValidationError(f"unknown apparatus h_kind {self.h_kind!r}")
        if self.q_kind not in ("translation", "matrix"):
            raise ValidationError(f"unknown apparatus q_kind {self.q_kind!r}")
        if self.h_kind == "kinetic" and (self.mass is None or self.mass <= 0.0):
            raise ValidationError("kinetic apparatus needs a positive mass")
        if self.h_kind == "matrix" and self.h_matrix is None:
            raise ValidationError("matrix apparatus h_kind needs h_matrix")
        if self.q_kind == "matrix" and self.q_matrix is None:
            raise ValidationError("matrix apparatus q_kind needs q_matrix")


@dataclass(frozen=True, eq=False)
class MeasurementConfig:
    """Full description of one measurement run."""

    h_system: np.ndarray
    q_system: np.ndarray
    mode: str = "protective"
    total_time: float = 50.0
    n_steps: int | str = "auto"
    pointer: PointerSettings = PointerSettings()
    packet_center: float = 0.0
    packet_width: float = 0.5
    apparatus: ApparatusSpec = ApparatusSpec()
    eigenstate_index: int = 0
    seed: int = 0
    profile_shape: str = "sine-squared-ramp"
    ramp_fraction: float = 0.1
    tolerance: float = 1e-8
    initial_system_state: np.ndarray | None = None
    applied_defaults: tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if not self.total_time > 0.0:
            raise ValidationError("total_time must be positive")
        if isinstance(self.n_steps, str):
            if self.n_steps != "auto":
                raise ValidationError("n_steps must be an integer or 'auto'")
        elif int(self.n_steps) < 16:
            raise ValidationError("n_steps must be at least 16")
        if self.mode in ("strong", "protective"):
            grid = self.pointer.build()
            if not 4.0 * grid.spacing <= self.packet_width <= grid.span / 8.0:
                raise SizingError(
                    f"packet width {self.packet_width} outside the grid's "
                    f"resolvable band [{4.0 * grid.spacing}, {grid.span / 8.0}]"
                )

    def __eq__(self, other):
        if not isinstance(other, MeasurementConfig):
            return NotImplemented
        def norm(v):
            return v.tolist() if isinstance(v, np.ndarray) else v
        for name in self.__dataclass_fields__:
            if name == "applied_defaults":
                continue
            if norm(getattr(self, name)) != norm(getattr(other, name)):
                return False
        return True

    def profile(self) -> CouplingProfile:
        return CouplingProfile(self.total_time, self.profile_shape, self.ramp_fraction)


@dataclass(frozen=True, eq=False)
class RunResult:
    """Outcome of one protective / generalized / strong run."""

    mode: str
    total_time: float
    pointer_start: float
    pointer_centroid: float
    pointer_width: float
    predicted_shift: float
    reduced_system_state: DensityOperator
    disturbance: float
    entanglement_entropy: float
    validity: float | None  # None where adiabatic first-order theory does not apply
    seed: int
    report: PropagationReport
    outcomes: tuple[tuple[float, float], ...] | None = None
    final_state: StateVector | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not -1e-12 <= self.disturbance <= 1.0 + 1e-12:
            raise ValidationError(f"disturbance {self.disturbance!r} outside [0, 1]")
        cap = math.log(self.reduced_system_state.dim) + 1e-8
        if not -1e-12 <= self.entanglement_entropy <= cap:
            raise ValidationError(
                f"entanglement entropy {self.entanglement_entropy!r} outside [0, ln d]"
            )

    def to_dict(self) -> dict:
        rho = self.reduced_system_state.matrix
        rep = self.report
        out = {
            "mode": self.mode,
            "total_time": self.total_time,
            "pointer_start": self.pointer_start,
            "pointer_centroid": self.pointer_centroid,
            "pointer_width": self.pointer_width,
            "predicted_shift": self.predicted_shift,
            "reduced_system_state": {
                "re": rho.real.tolist(),
                "im": rho.imag.tolist(),
            },
            "disturbance": self.disturbance,
            "entanglement_entropy": self.entanglement_entropy,
            "validity": self.validity,
            "seed": self.seed,
            "report": {
                "n_steps": rep.n_steps,
                "step_size": rep.step_size,
                "richardson_error_estimate": rep.richardson_error_estimate,
                "norm_drift": rep.norm_drift,
                "coupling_renorm": rep.coupling_renorm,
            },
            "outcomes": [list(o) for o in self.outcomes] if self.outcomes else None,
        }
        return out

    @staticmethod
    def from_dict(data: dict) -> "RunResult":
        rho = np.asarray(data["reduced_system_state"]["re"], dtype=float) + 1j * np.asarray(
            data["reduced_system_state"]["im"], dtype=float
        )
        rep = data["report"]
        outcomes = data.get("outcomes")
        return RunResult(
            mode=data["mode"],
            total_time=data["total_time"],
            pointer_start=data["pointer_start"],
            pointer_centroid=data["pointer_centroid"],
            pointer_width=data["pointer_width"],
            predicted_shift=data["predicted_shift"],
            reduced_system_state=DensityOperator(rho),
            disturbance=data["disturbance"],
            entanglement_entropy=data["entanglement_entropy"],
            validity=data["validity"],
            seed=data["seed"],
            report=PropagationReport(
                n_steps=rep["n_steps"],
                step_size=rep["step_size"],
                richardson_error_estimate=rep["richardson_error_estimate"],
                norm_drift=rep["norm_drift"],
                coupling_renorm=rep["coupling_renorm"],
            ),
            outcomes=tuple(tuple(o) for o in outcomes) if outcomes else None,
        )

    def __eq__(self, other):
        if not isinstance(other, RunResult):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class CollapseOutcome:
    """Single sampled outcome of the non-unitary selection step."""

    eigenvalue: float
    post_state: StateVector
    probability: float


# ---------------------------------------------------------------------------
# shared construction helpers


def _system_operators(config: MeasurementConfig):
    return HermitianOperator(config.h_system), HermitianOperator(config.q_system)


def _grid_apparatus(config: MeasurementConfig):
    grid = config.pointer.build()
    if config.apparatus.q_kind != "translation":
        raise ValidationError("grid modes couple through the translation generator")
    q_ap = translation_generator(grid)
    kind = config.apparatus.h_kind
    if kind == "zero":
        h_ap = HermitianOperator(np.zeros((grid.n_points, grid.n_points)))
    elif kind == "kinetic":
        m = q_ap.matrix @ q_ap.matrix / (2.0 * config.apparatus.mass)
        h_ap = HermitianOperator((m + m.conj().T) / 2.0)
    else:
        h_ap = HermitianOperator(config.apparatus.h_matrix)
    return grid, h_ap, q_ap


def _initial_system_state(config: MeasurementConfig, h_s: HermitianOperator,
                          require_protected: bool = True):
    """Initial system state and the protected eigenvector it should track.

    Strong runs accept any initial state and need no protected level; the
    adiabatic modes always reference the selected system eigenstate.
    """
    nu_vec = None
    if require_protected or config.initial_system_state is None:
        nu_vec, _ = ground_state(h_s, config.eigenstate_index)
    if config.initial_system_state is not None:
        start = StateVector(config.initial_system_state, basis_dims=(h_s.dim,))
    else:
        start = StateVector(nu_vec, basis_dims=(h_s.dim,))
    return start, nu_vec


def _propagate_for(config: MeasurementConfig, composite: CompositeHamiltonian,
                   initial: StateVector):
    if config.n_steps == "auto":
        return propagate(composite, initial, n_steps=256, tolerance=config.tolerance)
    return propagate(composite, initial, n_steps=int(config.n_steps))


def _system_leakage(final: StateVector, nu_vec: np.ndarray):
    rho_s = partial_trace(final, keep=0)
    target = StateVector(nu_vec, basis_dims=(rho_s.dim,))
    disturbance = min(max(1.0 - fidelity_pure(rho_s, target), 0.0), 1.0)
    entropy = max(von_neumann_entropy(rho_s), 0.0)
    return rho_s, disturbance, entropy


# ---------------------------------------------------------------------------
# readout


def readout(final: StateVector, grid: PointerGrid) -> tuple[float, float]:
    """Centroid and RMS width of the pointer marginal.

    The marginal is the squared amplitude summed over all non-pointer
    factors (pointer last).  The first moment is used even for spread
    packets: it is translation covariant, a peak finder is not.  Raises
    WraparoundError when more than 1% of the mass sits within 4 widths of
    the box edge.
    """
    dims = final.basis_dims
    if dims[-1] != grid.n_points:
        raise ValidationError(
            f"last factor dimension {dims[-1]} != grid points {grid.n_points}"
        )
    marginal = (np.abs(final.amplitudes.reshape(-1, grid.n_points)) ** 2).sum(axis=0)
    centroid, width = packet_moments(marginal, grid.r_values)
    guard = 4.0 * width
    r = grid.r_values
    edge = (r - grid.r_min < guard) | (grid.r_max - r < guard)
    edge_mass = float(marginal[edge].sum() / marginal.sum())
    if edge_mass > EDGE_MASS_LIMIT:
        raise WraparoundError(
            f"{edge_mass:.3%} of the pointer mass lies within 4 widths of the "
            "box edge; enlarge the grid"
        )
    return centroid, width


# ---------------------------------------------------------------------------
# strong measurement


def run_strong(config: MeasurementConfig):
    """Impulsive entangling step plus the Born weights of the coupling.

    Returns the entangled post-interaction state and the outcome table
    (eigenvalue, probability) of the measured operator in the initial
    system state.
    """
    if config.mode != "strong":
        raise ModeError(f"run_strong requires mode='strong', got {config.mode!r}")
    h_s, q_s = _system_operators(config)
    grid, _, _ = _grid_apparatus(config)
    packet = gaussian_packet(grid, config.packet_center, config.packet_width)
    sys_state, _ = _initial_system_state(config, h_s, require_protected=False)
    initial = tensor_product(sys_state, packet)
    entangled = impulsive_propagator(q_s, grid, initial)
    outcomes = born_weights(sys_state, q_s)
    return entangled, outcomes


def strong_run_result(config: MeasurementConfig) -> RunResult:
    """Strong run folded into the common result record.

    The centroid/width describe the bimodal pointer marginal of the
    entangled state, the predicted shift is the coupling expectation in
    the initial system state (the mixture mean), and disturbance measures
    how far the entangling step pushed the system from where it started.
    """
    entangled, outcomes = run_strong(config)
    h_s, _ = _system_operators(config)
    grid = config.pointer.build()
    centroid, width = readout(entangled, grid)
    sys_state, _ = _initial_system_state(config, h_s, require_protected=False)
    rho_s, disturbance, entropy = _system_leakage(entangled, sys_state.amplitudes)
    predicted = float(
        np.vdot(sys_state.amplitudes, config.q_system @ sys_state.amplitudes).real
    )
    return RunResult(
        mode="strong",
        total_time=config.total_time,
        pointer_start=config.packet_center,
        pointer_centroid=centroid,
        pointer_width=width,
        predicted_shift=predicted,
        reduced_system_state=rho_s,
        disturbance=disturbance,
        entanglement_entropy=entropy,
        validity=None,
        seed=config.seed,
        report=PropagationReport(0, 0.0, 0.0, 0.0),
        outcomes=tuple((float(v), float(p)) for v, p in outcomes),
        final_state=entangled,
    )


def collapse_sample(entangled: StateVector, rng_seed: int,
                    q_system: HermitianOperator) -> CollapseOutcome:
    """Sample one branch of an entangled measurement state.

    Branches are the (degeneracy-merged) eigenspaces of the measured
    system operator; the draw uses a seeded PCG64 generator, so results
    are reproducible.  The post state is the normalized branch.
    """
    d_s = q_system.dim
    if len(entangled.basis_dims) < 2 or entangled.basis_dims[0] != d_s:
        raise ValidationError("entangled state must have the system as first factor")
    d_rest = entangled.dim // d_s
    w, v = eigendecompose(q_system)
    comps = v.conj().T @ entangled.amplitudes.reshape(d_s, d_rest)
    groups = hilbert._merge_degenerate(w)
    probs = np.array([float((np.abs(comps[g]) ** 2).sum()) for g in groups])
    probs = probs / probs.sum()
    rng = np.random.default_rng(rng_seed)
    idx = int(rng.choice(len(groups), p=probs))
    grp = groups[idx]
    branch = (v[:, grp] @ comps[grp]).reshape(-1)
    post = StateVector.normalized(branch, basis_dims=entangled.basis_dims)
    return CollapseOutcome(
        eigenvalue=float(np.average(w[grp])),
        post_state=post,
        probability=float(probs[idx]),
    )


# ---------------------------------------------------------------------------
# protective measurement


def run_protective(config: MeasurementConfig) -> RunResult:
    """Weak adiabatic run on a pointer grid with commuting apparatus."""
    if config.mode != "protective":
        raise ModeError(
            f"run_protective requires mode='protective', got {config.mode!r}"
        )
    h_s, q_s = _system_operators(config)
    grid, h_ap, q_ap = _grid_apparatus(config)
    if hilbert.simultaneous_eigenbasis(q_ap, h_ap) is None:
        raise ModeError(
            "apparatus coupling does not commute with the apparatus Hamiltonian; "
            "use the generalized mode"
        )
    packet = gaussian_packet(grid, config.packet_center, config.packet_width)
    sys_state, nu_vec = _initial_system_state(config, h_s)
    composite = CompositeHamiltonian(h_s, h_ap, q_s, q_ap, config.profile())
    prediction = first_order_prediction(composite, config.eigenstate_index)

    initial = tensor_product(sys_state, packet)
    final, report = _propagate_for(config, composite, initial)
    centroid, width = readout(final, grid)
    rho_s, disturbance, entropy = _system_leakage(final, nu_vec)
    return RunResult(
        mode=config.mode,
        total_time=config.total_time,
        pointer_start=config.packet_center,
        pointer_centroid=centroid,
        pointer_width=width,
        predicted_shift=prediction.shift,
        reduced_system_state=rho_s,
        disturbance=disturbance,
        entanglement_entropy=entropy,
        validity=prediction.validity,
        seed=config.seed,
        report=report,
        final_state=final,
    )


def chain_protective(config: MeasurementConfig,
                     next_q_system: np.ndarray) -> tuple[RunResult, RunResult]:
    """Two protective measurements in sequence on the same system.

    The second run measures `next_q_system` starting from the dominant
    eigenvector of the first run's reduced system state, i.e. the system
    is handed over as the first measurement actually left it.
    """
    first = run_protective(config)
    carried = first.reduced_system_state.dominant_eigenvector()
    second_config = replace(
        config, q_system=np.asarray(next_q_system, dtype=complex),
        initial_system_state=carried,
    )
    return first, run_protective(second_config)


# ---------------------------------------------------------------------------
# generalized protective measurement


def effective_pointer_coupling(q_apparatus: HermitianOperator,
                               h_apparatus: HermitianOperator) -> HermitianOperator:
    """Apparatus coupling projected on the energy diagonal.

    In the apparatus energy eigenbasis the slow dynamics only sees the
    diagonal matrix elements of the coupling operator; the returned
    operator carries exactly those and commutes with the apparatus
    Hamiltonian.  Requires a non-degenerate apparatus spectrum, where the
    eigenbasis is unique up to phases.
    """
    if q_apparatus.dim != h_apparatus.dim:
        raise ValidationError("apparatus operators must share a dimension")
    w, v = eigendecompose(h_apparatus)
    spread = float(w.max() - w.min()) if w.size > 1 else 0.0
    if w.size > 1:
        gaps = np.diff(w)
        if spread == 0.0 or float(gaps.min()) <= 1e-9 * spread:
            raise PreconditionError(
                "apparatus Hamiltonian is degenerate; the energy-diagonal "
                "coupling is not defined"
            )
    diag = np.real(np.einsum("ij,jk,ki->i", v.conj().T, q_apparatus.matrix, v))
    return HermitianOperator((v * diag) @ v.conj().T)


def _conjugate_ring(y_values: np.ndarray):
    """Uniform conjugate coordinate for an ordered coupling spectrum.

    Treats the sorted diagonal values as a ladder with their mean spacing
    and builds the discrete-Fourier conjugate on that index ring.  The
    ladder offset is taken from mid-spectrum so that a real packet in the
    ring coordinate has its ladder weight centered there; packets then
    translate without aliasing across the spectrum edges.  Returns
    (z_values, transform) with transform[m, j] mapping ladder index j to
    ring coordinate m.
    """
    d = y_values.size
    spread = float(y_values.max() - y_values.min())
    scale = max(1.0, float(np.max(np.abs(y_values))))
    if spread <= 1e-9 * scale:
        raise SetupError(
            "coupling spectrum is fully degenerate; no conjugate pointer "
            "coordinate is resolvable"
        )
    spacing = spread / (d - 1)
    dz = 2.0 * math.pi / (d * spacing)
    z = (np.arange(d) - d // 2) * dz
    j_offset = np.arange(d) - (d - 1) / 2.0
    transform = np.exp(1j * np.outer(z, j_offset) * spacing) / math.sqrt(d)
    return z, transform


def run_generalized(config: MeasurementConfig) -> RunResult:
    """Protective run with non-commuting apparatus operators.

    The pointer is prepared as a packet in the coordinate conjugate to
    the energy-diagonal coupling and read out in that same coordinate,
    after removing the known free apparatus phases accumulated over T.
    Reduces to the standard scheme when the apparatus operators commute.
    """
    if config.mode != "generalized":
        raise ModeError(
            f"run_generalized requires mode='generalized', got {config.mode!r}"
        )
    spec = config.apparatus
    if spec.h_kind != "matrix" or spec.q_kind != "matrix":
        raise ValidationError(
            "generalized mode needs explicit apparatus matrices"
        )
    h_ap = HermitianOperator(spec.h_matrix)
    q_ap = HermitianOperator(spec.q_matrix)
    if h_ap.dim > GENERALIZED_DIM_CAP:
        raise SizingError(
            f"generalized apparatus dimension {h_ap.dim} exceeds the cap "
            f"{GENERALIZED_DIM_CAP}"
        )
    h_s, q_s = _system_operators(config)
    sys_state, nu_vec = _initial_system_state(config, h_s)

    effective_pointer_coupling(q_ap, h_ap)  # rejects degenerate apparatus spectra
    # Energy eigenbasis ordered by the diagonal coupling value.
    w_h, v_h = eigendecompose(h_ap)
    y_diag = np.real(np.einsum("ij,jk,ki->i", v_h.conj().T, q_ap.matrix, v_h))
    order = np.argsort(y_diag)
    v_ord = v_h[:, order]
    e_ord = w_h[order]
    z_values, ring = _conjugate_ring(y_diag[order])

    d_a = h_ap.dim
    sigma_z = (z_values[-1] - z_values[0]) / 8.0
    packet_z = np.exp(-(z_values**2) / (4.0 * sigma_z**2)).astype(complex)
    ladder = ring.conj().T @ (packet_z / np.linalg.norm(packet_z))
    apparatus0 = StateVector.normalized(v_ord @ ladder, basis_dims=(d_a,))

    composite = CompositeHamiltonian(h_s, h_ap, q_s, q_ap, config.profile())
    prediction = first_order_prediction(composite, config.eigenstate_index)
    initial = tensor_product(sys_state, apparatus0)
    final, report = _propagate_for(config, composite, initial)

    # Interaction-picture readout: undo the known free apparatus phases,
    # then return to the conjugate ring coordinate.
    amp = final.amplitudes.reshape(h_s.dim, d_a)
    ladder_amp = amp @ v_ord.conj()
    ladder_amp = ladder_amp * np.exp(1j * e_ord * config.total_time)[None, :]
    ring_amp = ladder_amp @ ring.T
    marginal = (np.abs(ring_amp) ** 2).sum(axis=0)
    centroid, width = packet_moments(marginal, z_values)

    rho_s, disturbance, entropy = _system_leakage(final, nu_vec)
    return RunResult(
        mode=config.mode,
        total_time=config.total_time,
        pointer_start=0.0,
        pointer_centroid=centroid,
        pointer_width=width,
        predicted_shift=prediction.shift,
        reduced_system_state=rho_s,
        disturbance=disturbance,
        entanglement_entropy=entropy,
        validity=prediction.validity,
        seed=config.seed,
        report=report,
        final_state=final,
    )
