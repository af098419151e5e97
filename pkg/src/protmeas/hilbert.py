"""Finite-dimensional Hilbert-space primitives.

State vectors over composite bases, Hermitian operators with cached
spectra, density operators, partial traces, and the discretized pointer
coordinate.  Everything works in internal units with hbar = 1.

The pointer coordinate lives on a uniform periodic grid.  Its conjugate
translation generator is defined spectrally through the discrete Fourier
transform, so the canonical commutator holds as a behavioral contract
(exact packet translation, commutator correct on mid-grid packets) rather
than as an exact matrix identity, which is impossible in finite dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, SizingError, ValidationError

#: Largest composite dimension accepted by tensor products (desk scale).
MAX_COMPOSITE_DIM = 2**18

NORM_TOL = 1e-12
HERMITICITY_TOL = 1e-12

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def pauli_vector(axis) -> np.ndarray:
    """sigma . axis for a 3-component axis vector."""
    ax = np.asarray(axis, dtype=float)
    return ax[0] * PAULI_X + ax[1] * PAULI_Y + ax[2] * PAULI_Z


class StateVector:
    """Normalized complex amplitude vector over a composite basis.

    `basis_dims` lists the factor dimensions, e.g. ``[d_system, d_apparatus]``;
    their product must equal the amplitude count.  Instances are immutable
    and normalized to 1 within 1e-12.
    """

    __slots__ = ("amplitudes", "basis_dims", "labels")

    def __init__(self, amplitudes, basis_dims=None, labels=None):
        amps = np.array(amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size == 0:
            raise ValidationError("state vector must have at least one amplitude")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > 64 * NORM_TOL * max(1.0, norm2):
            raise ValidationError(
                f"state vector norm^2 = {norm2!r} differs from 1 beyond tolerance"
            )
        # Remove residual rounding so downstream norm checks stay at 1e-12.
        amps = amps / math.sqrt(norm2)
        dims = tuple(int(d) for d in (basis_dims if basis_dims is not None else (amps.size,)))
        if any(d <= 0 for d in dims):
            raise ValidationError("basis dimensions must be positive")
        if math.prod(dims) != amps.size:
            raise ValidationError(
                f"product of basis_dims {dims} != amplitude count {amps.size}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "basis_dims", dims)
        object.__setattr__(self, "labels", tuple(labels) if labels else None)

    def __setattr__(self, name, value):
        raise AttributeError("StateVector is immutable")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "StateVector") -> complex:
        if other.dim != self.dim:
            raise ValidationError("overlap requires matching dimensions")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    @staticmethod
    def normalized(amplitudes, basis_dims=None, labels=None) -> "StateVector":
        """Build a state from an unnormalized amplitude array."""
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        n = np.linalg.norm(amps)
        if n == 0.0:
            raise ValidationError("cannot normalize the zero vector")
        return StateVector(amps / n, basis_dims=basis_dims, labels=labels)

    def __repr__(self):
        return f"StateVector(dim={self.dim}, basis_dims={self.basis_dims})"


class HermitianOperator:
    """Dense complex Hermitian matrix with a lazily cached eigendecomposition.

    Operators are immutable after construction; propagation relies on the
    cached spectrum being reusable across thousands of steps.
    """

    __slots__ = ("matrix", "_eig")

    def __init__(self, matrix):
        m = np.array(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"operator matrix must be square, got shape {m.shape}")
        scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
        if float(np.max(np.abs(m - m.conj().T))) > HERMITICITY_TOL * scale:
            raise ValidationError("matrix is not Hermitian within tolerance")
        m = (m + m.conj().T) / 2.0
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_eig", None)

    def __setattr__(self, name, value):
        raise AttributeError("HermitianOperator is immutable")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def _decompose(self):
        if self._eig is None:
            w, v = np.linalg.eigh(self.matrix)
            w.flags.writeable = False
            v.flags.writeable = False
            object.__setattr__(self, "_eig", (w, v))
        return self._eig

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._decompose()[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._decompose()[1]

    def expi(self, coefficient: float | complex) -> np.ndarray:
        """exp(1j * coefficient * A) through the cached spectrum."""
        w, v = self._decompose()
        return (v * np.exp(1j * coefficient * w)) @ v.conj().T

    def apply(self, state: StateVector) -> np.ndarray:
        if state.dim != self.dim:
            raise ValidationError("operator/state dimension mismatch")
        return self.matrix @ state.amplitudes

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


class DensityOperator:
    """Hermitian, unit-trace, positive-semidefinite matrix."""

    __slots__ = ("matrix", "basis_dims", "_eigenvalues")

    def __init__(self, matrix, basis_dims=None):
        m = np.array(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"density matrix must be square, got shape {m.shape}")
        scale = max(1.0, float(np.max(np.abs(m))))
        if float(np.max(np.abs(m - m.conj().T))) > HERMITICITY_TOL * scale:
            raise ValidationError("density matrix is not Hermitian within tolerance")
        m = (m + m.conj().T) / 2.0
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > 1e-10:
            raise ValidationError(f"density matrix trace {tr!r} differs from 1")
        w = np.linalg.eigvalsh(m)
        if float(w.min()) < -1e-10:
            raise ValidationError(f"density matrix has negative eigenvalue {w.min()!r}")
        m.flags.writeable = False
        w.flags.writeable = False
        dims = tuple(int(d) for d in basis_dims) if basis_dims is not None else (m.shape[0],)
        if math.prod(dims) != m.shape[0]:
            raise ValidationError("basis_dims inconsistent with matrix dimension")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "basis_dims", dims)
        object.__setattr__(self, "_eigenvalues", w)

    def __setattr__(self, name, value):
        raise AttributeError("DensityOperator is immutable")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eigenvalues

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def dominant_eigenvector(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.matrix)
        return v[:, -1].copy()

    def __repr__(self):
        return f"DensityOperator(dim={self.dim})"


@dataclass(frozen=True)
class PointerGrid:
    """Uniform periodic discretization of the 1-D pointer coordinate.

    The grid spans [r_min, r_max) with `n_points` cells (a power of two so
    the spectral conjugate is well conditioned).  hbar is fixed to 1.
    """

    n_points: int
    r_min: float
    r_max: float
    hbar: float = 1.0

    def __post_init__(self):
        n = self.n_points
        if n < 2 or (n & (n - 1)) != 0:
            raise ValidationError(f"n_points must be a power of two >= 2, got {n}")
        if not self.r_max > self.r_min:
            raise ValidationError("r_max must exceed r_min")
        if self.hbar != 1.0:
            raise ValidationError("internal units fix hbar = 1")

    @property
    def spacing(self) -> float:
        return (self.r_max - self.r_min) / self.n_points

    @property
    def span(self) -> float:
        return self.r_max - self.r_min

    @property
    def r_values(self) -> np.ndarray:
        # Cell midpoints: exactly periodic and symmetric about the box center.
        return self.r_min + self.spacing * (np.arange(self.n_points) + 0.5)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Conjugate (translation-generator) eigenvalues, FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)


# ---------------------------------------------------------------------------
# operations


def tensor_product(a, b, max_dim: int = MAX_COMPOSITE_DIM):
    """Kronecker product of two states or two operators.

    Factor dimensions concatenate; composite dimensions beyond `max_dim`
    are rejected to keep everything at desk scale.
    """
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        if a.dim * b.dim > max_dim:
            raise SizingError(
                f"composite dimension {a.dim * b.dim} exceeds maximum {max_dim}"
            )
        amps = np.kron(a.amplitudes, b.amplitudes)
        return StateVector(amps, basis_dims=a.basis_dims + b.basis_dims)
    if isinstance(a, HermitianOperator) and isinstance(b, HermitianOperator):
        if a.dim * b.dim > max_dim:
            raise SizingError(
                f"composite dimension {a.dim * b.dim} exceeds maximum {max_dim}"
            )
        return HermitianOperator(np.kron(a.matrix, b.matrix))
    raise ValidationError("tensor_product requires two states or two operators")


def eigendecompose(op: HermitianOperator):
    """Eigenvalues (ascending) and orthonormal eigenvector columns."""
    return op.eigenvalues, op.eigenvectors


def expectation(state: StateVector, op: HermitianOperator) -> float:
    """<psi|A|psi> as a real number; the imaginary residual must be tiny."""
    if state.dim != op.dim:
        raise ValidationError(
            f"dimension mismatch: state {state.dim} vs operator {op.dim}"
        )
    val = complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    scale = max(1.0, abs(val))
    if abs(val.imag) > 1e-10 * scale:
        raise ValidationError(f"expectation has non-real residual {val.imag!r}")
    return float(val.real)


def _merge_degenerate(eigenvalues: np.ndarray) -> list[np.ndarray]:
    """Group indices of eigenvalues closer than 1e-9 x spectral range."""
    w = np.asarray(eigenvalues, dtype=float)
    spread = float(w.max() - w.min()) if w.size > 1 else 0.0
    tol = max(1e-9 * spread, 1e-14)
    groups: list[list[int]] = []
    for i in range(w.size):
        if groups and abs(w[i] - w[groups[-1][-1]]) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g, dtype=int) for g in groups]


def born_weights(state: StateVector, op: HermitianOperator) -> list[tuple[float, float]]:
    """Outcome probabilities of measuring `op` in `state`.

    Eigenvalues closer than 1e-9 of the spectral range are merged so that
    numerical splitting never creates spurious outcomes.  Returned
    probabilities sum to 1.
    """
    if state.dim != op.dim:
        raise ValidationError(
            f"dimension mismatch: state {state.dim} vs operator {op.dim}"
        )
    w, v = eigendecompose(op)
    comps = np.abs(v.conj().T @ state.amplitudes) ** 2
    out = []
    for grp in _merge_degenerate(w):
        p = float(comps[grp].sum())
        if p <= 1e-14:
            continue
        val = float(np.average(w[grp]))
        out.append((val, p))
    return out


def partial_trace(state, keep: int, basis_dims=None) -> DensityOperator:
    """Reduced density operator of one factor of a composite state.

    Accepts a StateVector (uses its own basis_dims) or a DensityOperator
    (uses its basis_dims, overridable through the keyword).
    """
    if isinstance(state, StateVector):
        dims = state.basis_dims
        if len(dims) < 2:
            raise ValidationError("partial trace needs at least two factors")
        if not 0 <= keep < len(dims):
            raise ValidationError(f"invalid factor index {keep} for {len(dims)} factors")
        tensor = state.amplitudes.reshape(dims)
        moved = np.moveaxis(tensor, keep, 0).reshape(dims[keep], -1)
        rho = moved @ moved.conj().T
        return DensityOperator(rho, basis_dims=(dims[keep],))
    if isinstance(state, DensityOperator):
        dims = tuple(basis_dims) if basis_dims is not None else state.basis_dims
        if len(dims) < 2:
            raise ValidationError("partial trace needs at least two factors")
        if not 0 <= keep < len(dims):
            raise ValidationError(f"invalid factor index {keep} for {len(dims)} factors")
        n = len(dims)
        t = state.matrix.reshape(dims + dims)
        # Contract every factor except `keep` between bra and ket indices.
        for ax in reversed([i for i in range(n) if i != keep]):
            t = np.trace(t, axis1=ax, axis2=ax + (t.ndim // 2))
        return DensityOperator(t, basis_dims=(dims[keep],))
    raise ValidationError("partial_trace requires a StateVector or DensityOperator")


def von_neumann_entropy(rho: DensityOperator) -> float:
    """Entropy -sum(lambda ln lambda) in nats, with 0 ln 0 := 0."""
    lam = np.clip(rho.eigenvalues, 0.0, 1.0)
    lam = lam[lam > 0.0]
    value = float(-(lam * np.log(lam)).sum()) if lam.size else 0.0
    return value if value > 0.0 else 0.0


def fidelity_pure(rho: DensityOperator, target: StateVector) -> float:
    """<target|rho|target>, the population retained in a pure target."""
    if rho.dim != target.dim:
        raise ValidationError(
            f"dimension mismatch: rho {rho.dim} vs target {target.dim}"
        )
    val = float(np.vdot(target.amplitudes, rho.matrix @ target.amplitudes).real)
    return min(max(val, 0.0), 1.0)


def gaussian_packet(grid: PointerGrid, center: float, width: float) -> StateVector:
    """Normalized Gaussian pointer packet with RMS width `width`.

    The width must be resolvable (>= 4 grid cells) and box-contained
    (<= span/8) so translations and moments behave like their continuum
    counterparts.
    """
    if width < 4.0 * grid.spacing or width > grid.span / 8.0:
        raise SizingError(
            f"packet width {width} outside resolvable band "
            f"[{4.0 * grid.spacing}, {grid.span / 8.0}]"
        )
    r = grid.r_values
    amps = np.exp(-((r - center) ** 2) / (4.0 * width**2)).astype(np.complex128)
    return StateVector.normalized(amps, basis_dims=(grid.n_points,))


def packet_moments(weights: np.ndarray, coords: np.ndarray) -> tuple[float, float]:
    """Centroid and RMS width of a discrete probability distribution."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0.0:
        raise ValidationError("cannot take moments of an empty distribution")
    w = w / total
    mean = float(np.dot(w, coords))
    var = float(np.dot(w, (coords - mean) ** 2))
    return mean, math.sqrt(max(var, 0.0))


def position_operator(grid: PointerGrid) -> HermitianOperator:
    """Pointer coordinate operator, diagonal on the grid."""
    return HermitianOperator(np.diag(grid.r_values.astype(complex)))


def translation_generator(grid: PointerGrid) -> HermitianOperator:
    """Conjugate of the pointer coordinate, built spectrally.

    exp(-1j * s * Q) translates packet centers by +s for box-contained
    packets; together with the diagonal coordinate this realizes the
    canonical pair on the periodic grid.
    """
    n = grid.n_points
    j = np.arange(n)
    fourier = np.exp(-2j * np.pi * np.outer(j, j) / n) / math.sqrt(n)
    q = fourier.conj().T @ (grid.wavenumbers[:, None] * fourier)
    return HermitianOperator((q + q.conj().T) / 2.0)


def translate_packet(grid: PointerGrid, amplitudes: np.ndarray, shift: float) -> np.ndarray:
    """Spectral translation of apparatus amplitudes by +shift."""
    spectrum = np.fft.fft(amplitudes)
    spectrum *= np.exp(-1j * shift * grid.wavenumbers)
    return np.fft.ifft(spectrum)


def simultaneous_eigenbasis(a: HermitianOperator, b: HermitianOperator,
                            tol: float = 1e-10):
    """Common eigenbasis of two commuting Hermitian operators.

    Returns (V, diag_a, diag_b) with V unitary columns, or None when the
    operators do not commute within tolerance.
    """
    if a.dim != b.dim:
        raise ValidationError("operators must share a dimension")
    scale = max(
        1.0,
        float(np.max(np.abs(a.matrix))) * float(np.max(np.abs(b.matrix))),
    )
    comm = a.matrix @ b.matrix - b.matrix @ a.matrix
    if float(np.max(np.abs(comm))) > tol * scale:
        return None
    wa, va = eigendecompose(a)
    v = np.array(va)
    # Rediagonalize b inside each degenerate cluster of a.
    for grp in _merge_degenerate(wa):
        if grp.size > 1:
            block = v[:, grp].conj().T @ b.matrix @ v[:, grp]
            _, u = np.linalg.eigh((block + block.conj().T) / 2.0)
            v[:, grp] = v[:, grp] @ u
    wb = np.real(np.einsum("ij,jk,ki->i", v.conj().T, b.matrix, v))
    off = v.conj().T @ b.matrix @ v - np.diag(wb)
    if float(np.max(np.abs(off))) > 1e-8 * max(1.0, float(np.max(np.abs(wb)))):
        return None
    return v, wa, wb


def ground_state(op: HermitianOperator, index: int = 0,
                 gap_rtol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Eigenvector and eigenvalue at `index` (ascending), non-degenerate.

    Raises PreconditionError when the gap to the nearest level is below
    `gap_rtol` of the spectral range.
    """
    w, v = eigendecompose(op)
    if not 0 <= index < w.size:
        raise PreconditionError(f"eigenstate index {index} out of range")
    spread = float(w.max() - w.min()) if w.size > 1 else 0.0
    gap = min(
        abs(w[index] - w[j]) for j in range(w.size) if j != index
    ) if w.size > 1 else math.inf
    if spread == 0.0 or gap <= gap_rtol * spread:
        raise PreconditionError(
            f"eigenstate {index} is degenerate (gap {gap!r}); a non-degenerate "
            "level is required"
        )
    return v[:, index].copy(), float(w[index])
