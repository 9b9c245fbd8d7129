import itertools

import numpy as np
import pytest

from bellcert.devices import DeviceRealization, perturb
from bellcert.engine import (
    DEFAULT_ANCHOR,
    Refusal,
    Refused,
    SelfTestCertificate,
    Tolerances,
    anchor_spread,
    apply_isometries,
    bb84_collapse_check,
    build_inner_isomorphism,
    check_prop1,
    check_prop2,
    check_prop3,
    collapsed_garbage,
    d_lengths,
    extended_not,
    hat_projectors,
    local_pullback_residual,
    measured_vectors,
    qubit_swap,
    self_test,
    span_basis,
    swap_identity_residual,
    swap_isometry,
    swap_operator,
    transfer_residual,
)
from bellcert.errors import DomainError, ValidationError
from bellcert.ideal import ANGLES, MIXED_PAIRS, Angle, Setting, ideal_d_lengths, phi_plus
from bellcert.linalg import dagger, op_norm, reduced_state, support_projector

from conftest import family

M, Z, P = Angle.MINUS, Angle.ZERO, Angle.PLUS
X = np.array([[0, 1], [1, 0]])


@pytest.fixture(scope="module")
def cert42(scrambled42):
    c = self_test(scrambled42)
    assert c.certified
    return c


# -- measured vectors and propositions --------------------------------------------

def test_measured_vectors_ideal(ideal_device):
    vecs = measured_vectors(ideal_device)
    assert len(vecs) == 36
    v = vecs[Setting(Z, 0), Setting(Z, 0)]
    assert np.abs(v - np.array([1, 0, 0, 0]) / np.sqrt(2)).max() <= 1e-15
    assert np.linalg.norm(vecs[Setting(Z, 0), Setting(Z, 1)]) <= 1e-16


@pytest.mark.parametrize("check", [check_prop1, check_prop2, check_prop3])
def test_props_hold_on_ideal_and_scrambled(check, ideal_device, scrambled42):
    for d in (ideal_device, scrambled42):
        r = check(d)
        assert r.passed and r.residual <= 1e-10


def test_prop3_uses_derived_lengths(scrambled42):
    lengths = d_lengths(measured_vectors(scrambled42))
    for beta in ANGLES:
        for z in (0, 1):
            assert lengths[beta, z] == pytest.approx(ideal_d_lengths(beta)[z], abs=1e-12)
    assert lengths[Z, 0] == pytest.approx(0.25, abs=1e-12)
    assert lengths[P, 1] == pytest.approx(0.0732233047033631, abs=1e-12)
    assert transfer_residual(measured_vectors(scrambled42)) <= 1e-12


def test_angle_tilt_breaks_props(ideal_device):
    d = perturb(ideal_device, "angle_tilt", 0.05, seed=1)
    r1, r2, r3 = check_prop1(d), check_prop2(d), check_prop3(d)
    assert not r1.passed and r1.residual > 1e-3
    assert not r2.passed and not r3.passed


def test_prop1_detects_one_sided_mismatch(ideal_device):
    # swapping Bob's outcome labels at one angle breaks the same-setting correlation
    ops = np.array(ideal_device.fam_b.ops)
    ops[P.index] = ops[P.index, ::-1]
    d = DeviceRealization((2, 2), ideal_device.psi, ideal_device.fam_a, type(ideal_device.fam_b)(ops))
    r = check_prop1(d)
    assert not r.passed and r.residual > 0.5


# -- span and isomorphism -----------------------------------------------------------

def test_span_rank_four(ideal_device, scrambled42):
    for d in (ideal_device, scrambled42):
        s = span_basis(d)
        assert s.dim == 4
        assert np.abs(dagger(s.basis) @ s.basis - np.eye(4)).max() <= 1e-13
        assert (s.singular_values[4:] <= 1e-12 * s.singular_values[0]).all()


def test_isomorphism_identity_for_ideal(ideal_device):
    iso = build_inner_isomorphism(ideal_device)
    assert np.abs(iso.u - np.eye(4)).max() <= 1e-12
    assert iso.anchor == DEFAULT_ANCHOR
    assert max(iso.residual_a1, iso.residual_a2, iso.unitarity) <= 1e-12


def test_isomorphism_scrambled(scrambled42):
    iso = build_inner_isomorphism(scrambled42)
    assert max(iso.residual_a1, iso.residual_a2, iso.unitarity) <= 1e-10
    assert np.abs(iso.u @ scrambled42.psi - phi_plus()).max() <= 1e-10
    # u annihilates the orthogonal complement of S
    comp = np.eye(scrambled42.shape.total) - iso.span.basis @ dagger(iso.span.basis)
    assert op_norm(iso.u @ comp) <= 1e-10


def test_isomorphism_anchor_independence(scrambled42):
    assert anchor_spread(scrambled42) <= 1e-10
    for pair in MIXED_PAIRS:
        iso = build_inner_isomorphism(scrambled42, pair)
        assert iso.residual_a1 <= 1e-10


def test_isomorphism_rejects_equal_anchor(ideal_device):
    with pytest.raises(DomainError):
        build_inner_isomorphism(ideal_device, (Z, Z))


def test_isomorphism_refuses_tilted(ideal_device):
    with pytest.raises(Refused) as err:
        build_inner_isomorphism(perturb(ideal_device, "angle_tilt", 0.05, seed=1))
    assert err.value.refusal.stage == "isomorphism"


def test_garbage_of_ideal_is_trivial(ideal_device):
    g = build_inner_isomorphism(ideal_device).garbage
    assert np.abs(g - np.array([1, 0, 0, 0])).max() <= 1e-12


# -- extended gates --------------------------------------------------------------------

@pytest.mark.parametrize("side", ["A", "B"])
def test_extended_not_is_x_on_ideal(ideal_device, side):
    assert np.abs(extended_not(ideal_device, side) - X).max() <= 1e-14


@pytest.mark.parametrize("side", ["A", "B"])
def test_extended_not_squares_to_support(scrambled42, side):
    n = extended_not(scrambled42, side)
    p_sup, hat = hat_projectors(scrambled42, side)
    assert np.abs(n - dagger(n)).max() <= 1e-12
    assert op_norm(n @ n - p_sup) <= 1e-10
    # NOT anticommutes with the computational-basis observable on the support
    zobs = hat[Setting(Z, 0)] - hat[Setting(Z, 1)]
    assert op_norm(n @ zobs + zobs @ n) <= 1e-10
    assert op_norm(n @ hat[Setting(Z, 0)] @ n - hat[Setting(Z, 1)]) <= 1e-10


def test_qubit_swap_examples():
    s = qubit_swap()
    ket = np.eye(2)
    for phi in (np.array([1, 0]), np.array([0, 1]), np.array([0.6, 0.8j])):
        assert np.abs(s @ np.kron(ket[0], phi) - np.kron(phi, ket[0])).max() <= 1e-15
    true_swap = np.eye(4)[[0, 2, 1, 3]]
    assert np.abs(s[:, [0, 1]] - true_swap[:, [0, 1]]).max() <= 1e-15
    assert np.abs(dagger(s) @ s - np.eye(4)).max() <= 1e-14


@pytest.mark.parametrize("side", ["A", "B"])
def test_swap_operator_on_ideal_equals_qubit_swap(ideal_device, side):
    assert np.abs(swap_operator(ideal_device, side) - qubit_swap()).max() <= 1e-14


@pytest.mark.parametrize("side", ["A", "B"])
def test_swap_isometry_is_partial_isometry(scrambled42, side):
    v = swap_isometry(scrambled42, side)
    p_sup, _ = hat_projectors(scrambled42, side)
    assert op_norm(dagger(v) @ v - p_sup) <= 1e-10


@pytest.mark.parametrize("side", ["A", "B"])
def test_swap_identity_and_pullback(scrambled42, side):
    iso = build_inner_isomorphism(scrambled42)
    assert swap_identity_residual(scrambled42, iso, side) <= 1e-10
    v = swap_isometry(scrambled42, side)
    assert local_pullback_residual(scrambled42, iso, side, v) <= 1e-10


# -- full pipeline ------------------------------------------------------------------------

def test_self_test_ideal(ideal_device):
    c = self_test(ideal_device)
    assert isinstance(c, SelfTestCertificate) and c.certified
    assert (c.dim_e_a, c.dim_e_b) == (1, 1)
    assert c.residuals["cond3"] <= 1e-11
    assert max(c.residuals.values()) <= 1e-11
    assert list(c.stages) == ["stats", "span", "propositions", "isomorphism", "extraction", "verification"]


def test_self_test_scrambled42(cert42, scrambled42):
    assert (cert42.dim_e_a, cert42.dim_e_b) == (2, 2)
    assert cert42.shape == scrambled42.shape
    assert max(cert42.residuals.values()) <= 1e-8
    assert np.linalg.norm(cert42.garbage_state) == pytest.approx(1.0, abs=1e-10)


def test_certificate_maps_state_to_phi_plus_times_garbage(cert42, scrambled42):
    out = apply_isometries(cert42.uhat_a, cert42.uhat_b, scrambled42.psi_matrix)
    g = cert42.garbage_state.reshape(scrambled42.shape)
    for a, b in itertools.product(range(2), range(2)):
        expected = g / np.sqrt(2) if a == b else 0 * g
        assert np.abs(out[a, :, b, :] - expected).max() <= 1e-9


def test_garbage_support_inside_state_support(cert42, scrambled42):
    for side in ("A", "B"):
        p_dev = support_projector(reduced_state(scrambled42.psi, scrambled42.shape, side))
        g_red = reduced_state(cert42.garbage_state, scrambled42.shape, side)
        assert op_norm(p_dev @ g_red @ p_dev - g_red) <= 1e-10


def test_family_of_scrambled_devices_certifies():
    for d in family(12):
        c = self_test(d)
        assert c.certified, c.stage
        ga, gb = d.provenance["garbage_dim_a"], d.provenance["garbage_dim_b"]
        assert c.dim_e_a == c.dim_e_b == min(ga, gb)


def test_invalid_device_raises(ideal_device):
    ops = np.array([[np.eye(2) / 2, np.eye(2) / 2]] * 3)
    bad = DeviceRealization((2, 2), ideal_device.psi, type(ideal_device.fam_a)(ops), ideal_device.fam_b)
    with pytest.raises(ValidationError):
        self_test(bad)


@pytest.mark.parametrize("kind", ["angle_tilt", "state_perturb"])
def test_refusal_monotone_in_epsilon(kind, ideal_device):
    devs = []
    for eps in (0.01, 0.05, 0.1):
        r = self_test(perturb(ideal_device, kind, eps, seed=1))
        assert isinstance(r, Refusal) and not r.certified
        assert r.stage == "stats"
        devs.append(r.gate.max_abs_deviation)
    assert devs[0] < devs[1] < devs[2]


def test_loose_gate_lets_small_tilt_reach_later_stage(ideal_device):
    # the gate tier covers stats, propositions and isomorphism; the cert tier still catches the tilt
    d = perturb(ideal_device, "angle_tilt", 1e-3, seed=1)
    r = self_test(d, Tolerances(gate=1e-2))
    assert isinstance(r, Refusal)
    assert r.stage == "extraction"
    assert list(r.stages) == ["stats", "span", "propositions", "isomorphism", "extraction"]
    assert max(r.diagnostics.values()) > 1e-8


def test_refusal_rank_deficient_state(ideal_device):
    # Alice always measures Z on a product state: the 36 vectors span only |0> ⊗ C^2
    z_only = np.array([ideal_device.fam_a.ops[Z.index]] * 3)
    fam_a = type(ideal_device.fam_a)(z_only)
    d = DeviceRealization((2, 2), np.array([1, 0, 0, 0], dtype=complex), fam_a, ideal_device.fam_b)
    assert span_basis(d).dim == 2
    with pytest.raises(Refused) as err:
        build_inner_isomorphism(d)
    assert err.value.refusal.stage == "span"
    r = self_test(d, Tolerances(gate=1.0))
    assert r.stage == "span"


# -- collapse check ----------------------------------------------------------------------------

@pytest.mark.parametrize("alpha,x", list(itertools.product((M, P), (0, 1))))
def test_bb84_collapse(cert42, scrambled42, alpha, x):
    assert bb84_collapse_check(scrambled42, cert42, alpha, x) <= 1e-8
    g = collapsed_garbage(scrambled42, cert42, alpha, x)
    # collapsed garbage is the original garbage: fidelity one
    fid = abs(np.vdot(cert42.garbage_state, g)) ** 2 / np.vdot(g, g).real
    assert fid == pytest.approx(1.0, abs=1e-8)


def test_bb84_rejects_zero_angle(cert42, scrambled42):
    with pytest.raises(DomainError):
        bb84_collapse_check(scrambled42, cert42, Z, 0)


def test_bb84_ideal(ideal_device):
    c = self_test(ideal_device)
    for alpha, x in itertools.product((M, P), (0, 1)):
        assert bb84_collapse_check(ideal_device, c, alpha, x) <= 1e-12
