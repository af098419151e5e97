import math

import numpy as np
import pytest

from protmeas.dynamics import (
    CompositeHamiltonian,
    CouplingProfile,
    assemble,
    evaluate_profile,
    first_order_prediction,
    impulsive_propagator,
    propagate,
)
from protmeas.errors import (
    ConvergenceError,
    DomainError,
    PreconditionError,
    SizingError,
    ValidationError,
)
from protmeas.hilbert import (
    PAULI_X,
    PAULI_Z,
    HermitianOperator,
    PointerGrid,
    StateVector,
    expectation,
    gaussian_packet,
    packet_moments,
    partial_trace,
    pauli_vector,
    tensor_product,
    translation_generator,
    von_neumann_entropy,
)


def zero_op(d):
    return HermitianOperator(np.zeros((d, d)))


def random_hermitian(d, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return HermitianOperator((m + m.conj().T) / 2.0)


def small_composite(profile, seed=0):
    """2 x 4 composite with commuting apparatus pair."""
    rng = np.random.default_rng(seed)
    h_s = random_hermitian(2, seed + 1)
    q_s = random_hermitian(2, seed + 2)
    e_a = rng.normal(size=4)
    q_a = rng.normal(size=4)
    return CompositeHamiltonian(
        h_s,
        HermitianOperator(np.diag(e_a).astype(complex)),
        q_s,
        HermitianOperator(np.diag(q_a).astype(complex)),
        profile,
    )


# ---------------------------------------------------------------------------
# coupling profile


def test_profile_ramp_endpoints_vanish():
    prof = CouplingProfile(10.0, "sine-squared-ramp", 0.1)
    assert evaluate_profile(prof, 0.0) == 0.0
    assert evaluate_profile(prof, 10.0) == 0.0


def test_profile_plateau_closed_form():
    # normalization of the sin^2 ramp trapezoid: each ramp integrates to
    # h*f*T/2, the plateau to h*(1-2f)*T, so h = 1/(T(1-f)).
    prof = CouplingProfile(10.0, "sine-squared-ramp", 0.1)
    assert abs(evaluate_profile(prof, 5.0) - 1.0 / (10.0 * 0.9)) < 1e-12


def test_profile_rectangular_value():
    prof = CouplingProfile(7.5, "rectangular")
    for t in (0.1, 3.3, 7.4):
        assert evaluate_profile(prof, t) == 1.0 / 7.5


def test_profile_domain_error():
    prof = CouplingProfile(1.0)
    with pytest.raises(DomainError):
        evaluate_profile(prof, -0.001)
    with pytest.raises(DomainError):
        evaluate_profile(prof, 1.001)


def test_profile_continuous_integral_is_one():
    from scipy.integrate import quad

    for f in (0.05, 0.1, 0.3):
        prof = CouplingProfile(4.0, "sine-squared-ramp", f)
        total, err = quad(lambda t: prof.value(t), 0.0, 4.0, limit=200)
        assert abs(total - 1.0) < 1e-10


@pytest.mark.parametrize("n_steps", [16, 64, 4096])
def test_profile_midpoint_samples_normalized(n_steps):
    prof = CouplingProfile(3.0, "sine-squared-ramp", 0.1)
    g, renorm = prof.midpoint_couplings(n_steps)
    assert abs(g.sum() * (3.0 / n_steps) - 1.0) < 1e-12
    assert abs(renorm - 1.0) < 2e-2


def test_profile_plateau_near_inverse_T_for_small_ramps():
    # plateau = 1/(T(1-f)) sits within 10% of 1/T for ramp fractions
    # up to ~0.09; at f = 0.1 the exact value is 11.1% above 1/T.
    for f in (0.02, 0.05, 0.09):
        prof = CouplingProfile(1.0, "sine-squared-ramp", f)
        assert abs(prof.plateau_height - 1.0) <= 0.10


def test_profile_validation():
    with pytest.raises(ValidationError):
        CouplingProfile(-1.0)
    with pytest.raises(ValidationError):
        CouplingProfile(1.0, "triangle")
    with pytest.raises(ValidationError):
        CouplingProfile(1.0, "sine-squared-ramp", 0.6)


# ---------------------------------------------------------------------------
# assembly


def test_assemble_zero_components():
    h = CompositeHamiltonian(zero_op(2), zero_op(3), zero_op(2), zero_op(3),
                             CouplingProfile(1.0, "rectangular"))
    assert np.max(np.abs(assemble(h, 0.5).matrix)) == 0.0


def test_assemble_decoupled_at_ramp_start():
    h = CompositeHamiltonian(
        HermitianOperator(PAULI_Z), zero_op(4),
        HermitianOperator(PAULI_X), HermitianOperator(np.diag([1.0, 2, 3, 4])),
        CouplingProfile(1.0, "sine-squared-ramp", 0.1),
    )
    got = assemble(h, 0.0).matrix  # g(0) = 0
    assert np.max(np.abs(got - np.kron(PAULI_Z, np.eye(4)))) < 1e-12


def test_assemble_matches_kronecker_oracle():
    h = small_composite(CouplingProfile(2.0, "rectangular"), seed=5)
    t = 1.0
    g = 1.0 / 2.0
    # oracle: explicit Kronecker construction, entry by entry
    expected = (np.kron(h.h_system.matrix, np.eye(4))
                + np.kron(np.eye(2), h.h_apparatus.matrix)
                + g * np.kron(h.q_system.matrix, h.q_apparatus.matrix))
    got = assemble(h, t).matrix
    for i in range(8):
        for j in range(8):
            assert abs(got[i, j] - expected[i, j]) < 1e-12


def test_assemble_dim_mismatch():
    with pytest.raises(ValidationError):
        CompositeHamiltonian(zero_op(2), zero_op(3), zero_op(3), zero_op(3),
                             CouplingProfile(1.0))


# ---------------------------------------------------------------------------
# propagation


def test_propagate_eigenstate_phase_evolution():
    grid = PointerGrid(64, -8.0, 8.0)
    pkt = gaussian_packet(grid, 0.0, 1.0)
    plus_z = StateVector([1.0, 0.0])
    init = tensor_product(plus_z, pkt)
    h = CompositeHamiltonian(
        HermitianOperator(PAULI_Z), zero_op(64),
        zero_op(2), translation_generator(grid),
        CouplingProfile(3.7, "rectangular"),
    )
    out, report = propagate(h, init, n_steps=64)
    overlap = complex(np.vdot(init.amplitudes, out.amplitudes))
    assert abs(abs(overlap) - 1.0) < 1e-10          # pure global phase
    assert abs(overlap - np.exp(-1j * 3.7)) < 1e-8  # e^{-i E T}, E = +1
    assert report.norm_drift < 1e-10


@pytest.mark.parametrize("method", ["blocked", "dense"])
def test_propagate_matches_exact_exponential(method):
    t_total = 2.0
    h = small_composite(CouplingProfile(t_total, "rectangular"), seed=9)
    rng = np.random.default_rng(1)
    init = StateVector.normalized(rng.normal(size=8) + 1j * rng.normal(size=8),
                                  basis_dims=(2, 4))
    # oracle: single exact spectral exponential of the full matrix
    full = assemble(h, t_total / 2.0)
    exact = full.expi(-t_total) @ init.amplitudes
    out, _ = propagate(h, init, n_steps=4096, method=method)
    assert np.max(np.abs(out.amplitudes - exact)) < 1e-8


def test_blocked_and_dense_paths_agree_smooth():
    h = small_composite(CouplingProfile(5.0, "sine-squared-ramp", 0.2), seed=13)
    rng = np.random.default_rng(2)
    init = StateVector.normalized(rng.normal(size=8) + 1j * rng.normal(size=8),
                                  basis_dims=(2, 4))
    a, _ = propagate(h, init, n_steps=256, method="blocked")
    b, _ = propagate(h, init, n_steps=256, method="dense")
    assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-12


def test_blocked_method_requires_commuting_pair():
    h = CompositeHamiltonian(
        HermitianOperator(PAULI_Z), HermitianOperator(PAULI_X),
        HermitianOperator(PAULI_X), HermitianOperator(PAULI_Z),
        CouplingProfile(1.0),
    )
    with pytest.raises(ValidationError):
        propagate(h, StateVector([1, 0, 0, 0], basis_dims=(2, 2)), n_steps=16,
                  method="blocked")


def test_richardson_estimate_second_order():
    # halving the step size cuts the estimate by about four
    h = small_composite(CouplingProfile(6.0, "sine-squared-ramp", 0.15), seed=21)
    rng = np.random.default_rng(3)
    init = StateVector.normalized(rng.normal(size=8) + 1j * rng.normal(size=8),
                                  basis_dims=(2, 4))
    estimates = []
    for n in (256, 512, 1024):
        _, report = propagate(h, init, n_steps=n)
        estimates.append(report.richardson_error_estimate)
    for coarse, fine in zip(estimates, estimates[1:]):
        order = math.log2(coarse / fine)
        assert 1.8 <= order <= 2.2


def test_propagate_adaptive_reaches_tolerance():
    h = small_composite(CouplingProfile(4.0, "sine-squared-ramp", 0.1), seed=33)
    rng = np.random.default_rng(4)
    init = StateVector.normalized(rng.normal(size=8) + 1j * rng.normal(size=8),
                                  basis_dims=(2, 4))
    out, report = propagate(h, init, n_steps=32, tolerance=1e-9)
    assert report.richardson_error_estimate <= 1e-9
    assert abs(out.norm() - 1.0) < 1e-12


def test_propagate_convergence_error_carries_estimate():
    h = small_composite(CouplingProfile(4.0, "sine-squared-ramp", 0.1), seed=34)
    rng = np.random.default_rng(5)
    init = StateVector.normalized(rng.normal(size=8) + 1j * rng.normal(size=8),
                                  basis_dims=(2, 4))
    with pytest.raises(ConvergenceError) as info:
        propagate(h, init, n_steps=32, tolerance=1e-16, step_cap=256)
    assert info.value.estimate > 1e-16
    assert info.value.n_steps >= 256


def test_propagate_validates_inputs():
    h = small_composite(CouplingProfile(1.0), seed=2)
    with pytest.raises(ValidationError):
        propagate(h, StateVector([1.0, 0.0]), n_steps=64)
    init = StateVector([1, 0, 0, 0, 0, 0, 0, 0], basis_dims=(2, 4))
    with pytest.raises(ValidationError):
        propagate(h, init, n_steps=8)


# ---------------------------------------------------------------------------
# impulsive closed form


def test_impulsive_eigenstate_single_packet():
    grid = PointerGrid(256, -15.0, 15.0)
    pkt = gaussian_packet(grid, 0.0, 0.5)
    init = tensor_product(StateVector([0.0, 1.0]), pkt)  # sigma_z eigenvalue -1
    out = impulsive_propagator(HermitianOperator(PAULI_Z), grid, init)
    marg = (np.abs(out.amplitudes.reshape(2, -1)) ** 2).sum(axis=0)
    c, _ = packet_moments(marg, grid.r_values)
    assert abs(c - (-1.0)) < 1e-6
    assert von_neumann_entropy(partial_trace(out, 0)) < 1e-10


def test_impulsive_two_branch_entropy_overlap_oracle():
    grid = PointerGrid(256, -15.0, 15.0)
    sigma = 0.5
    pkt = gaussian_packet(grid, 0.0, sigma)
    init = tensor_product(
        StateVector([1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)]), pkt
    )
    out = impulsive_propagator(HermitianOperator(PAULI_Z), grid, init)
    # oracle: two equal-weight branches whose packets overlap by
    # m = exp(-(ds)^2 / (8 sigma^2)); the reduced spectrum is (1 +- m)/2.
    ds = 2.0
    m = math.exp(-(ds**2) / (8.0 * sigma**2))
    lam = np.array([(1.0 + m) / 2.0, (1.0 - m) / 2.0])
    expected = float(-(lam * np.log(lam)).sum())
    got = von_neumann_entropy(partial_trace(out, 0))
    assert abs(got - expected) < 1e-4
    assert got < math.log(2.0)


def test_impulsive_agrees_with_generic_propagator():
    grid = PointerGrid(256, -15.0, 15.0)
    pkt = gaussian_packet(grid, 0.0, 0.5)
    state = StateVector([0.5, math.sqrt(0.75)])
    init = tensor_product(state, pkt)
    q_s = HermitianOperator(PAULI_Z)
    closed = impulsive_propagator(q_s, grid, init)
    h = CompositeHamiltonian(zero_op(2), zero_op(256), q_s,
                             translation_generator(grid),
                             CouplingProfile(1.0, "rectangular"))
    generic, _ = propagate(h, init, n_steps=64)
    assert np.max(np.abs(closed.amplitudes - generic.amplitudes)) < 1e-8


def test_impulsive_rejects_entangled_input():
    grid = PointerGrid(64, -8.0, 8.0)
    a = tensor_product(StateVector([1.0, 0.0]), gaussian_packet(grid, -1.0, 1.0))
    b = tensor_product(StateVector([0.0, 1.0]), gaussian_packet(grid, 1.0, 1.0))
    entangled = StateVector.normalized(a.amplitudes + b.amplitudes,
                                       basis_dims=(2, 64))
    with pytest.raises(ValidationError):
        impulsive_propagator(HermitianOperator(PAULI_Z), grid, entangled)


def test_impulsive_box_margin():
    grid = PointerGrid(256, -15.0, 15.0)
    init = tensor_product(StateVector([1.0, 0.0]), gaussian_packet(grid, 10.0, 0.5))
    with pytest.raises(SizingError):
        impulsive_propagator(HermitianOperator(8.0 * PAULI_Z), grid, init)


# ---------------------------------------------------------------------------
# first-order prediction


def prediction_setup(h_s, q_s, t_total=100.0):
    grid = PointerGrid(64, -8.0, 8.0)
    return CompositeHamiltonian(
        HermitianOperator(h_s), zero_op(64), HermitianOperator(q_s),
        translation_generator(grid), CouplingProfile(t_total, "rectangular"),
    )


def test_prediction_commuting_eigenstate():
    pred = first_order_prediction(prediction_setup(-PAULI_Z, PAULI_Z), 0)
    assert abs(pred.shift - 1.0) < 1e-12
    assert pred.validity == 0.0


def test_prediction_tilted_axis_oracle():
    theta = math.pi / 3.0
    h_s = -pauli_vector((math.sin(theta), 0.0, math.cos(theta)))
    pred = first_order_prediction(prediction_setup(h_s, PAULI_Z), 0)
    # oracle: explicit ground state of the 2x2, (cos(t/2), sin(t/2))
    ground = np.array([math.cos(theta / 2.0), math.sin(theta / 2.0)])
    expected = float(ground @ PAULI_Z.real @ ground)
    assert abs(pred.shift - expected) < 1e-12
    assert abs(pred.shift - math.cos(theta)) < 1e-12
    assert pred.validity > 0.0


def test_prediction_matches_expectation_oracle():
    rng = np.random.default_rng(17)
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q = (m + m.conj().T) / 2.0
    q -= np.trace(q).real / 2.0 * np.eye(2)  # traceless
    pred = first_order_prediction(prediction_setup(-PAULI_Z, q), 0)
    plus_z = StateVector([1.0, 0.0])
    assert abs(pred.shift - expectation(plus_z, HermitianOperator(q))) < 1e-12


def test_prediction_rejects_degenerate_level():
    with pytest.raises(PreconditionError):
        first_order_prediction(prediction_setup(np.zeros((2, 2)), PAULI_Z), 0)


def test_prediction_consistency_commuting_case():
    # with everything commuting the propagated pointer shift matches the
    # first-order prediction at any interaction time
    grid = PointerGrid(128, -10.0, 10.0)
    for t_total in (3.0, 40.0):
        h = CompositeHamiltonian(
            HermitianOperator(-PAULI_Z), zero_op(128), HermitianOperator(PAULI_Z),
            translation_generator(grid), CouplingProfile(t_total, "rectangular"),
        )
        pred = first_order_prediction(h, 0)
        init = tensor_product(StateVector([1.0, 0.0]), gaussian_packet(grid, 0.0, 0.8))
        out, _ = propagate(h, init, n_steps=128)
        marg = (np.abs(out.amplitudes.reshape(2, -1)) ** 2).sum(axis=0)
        c, _ = packet_moments(marg, grid.r_values)
        assert abs(c - pred.shift) < 1e-6
