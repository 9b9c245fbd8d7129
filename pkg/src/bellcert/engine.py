"""Certification pipeline: from exact outcome statistics to extracted local
isometries.

Stages, in order:

1. statistics gate: the 36 joint probabilities must equal the ideal ones;
2. the span S of the 36 post-measurement vectors must be 4-dimensional;
3. structural checks on those vectors (same-basis agreement, orthogonal
   quadruples with the right lengths, d-vector lengths and the ideal
   coordinate changes between quadruples);
4. the map U from S onto the two-qubit space that intertwines every
   measurement and sends psi to Φ+;
5. extended NOT / CNOT / SWAP operators built from the device's own
   support-restricted projectors, giving isometries ``Â -> A ⊗ E_A``;
6. residuals of the three equivalence conditions.

A failed stage stops the run; later stages assume the earlier ones hold.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from . import ideal
from .devices import DeviceRealization, require_valid
from .errors import DomainError
from .ideal import ANGLES, MIXED_PAIRS, OUTCOME_PAIRS, SETTINGS, Angle, Setting
from .linalg import dagger, op_norm, orthonormal_basis, reduced_state, support_basis, support_projector
from .statistics import (
    DeviationReport,
    compare_tables,
    ideal_probability_table,
    post_measurement,
    probability_table,
)

SIDES = ("A", "B")
DEFAULT_ANCHOR = (Angle.ZERO, Angle.PLUS)
STAGES = ("stats", "span", "propositions", "isomorphism", "extraction", "verification")

_KET = (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex))


@dataclass(frozen=True)
class Tolerances:
    """Absolute tolerances for each tier.

    ``construction`` is what exactly-built objects should meet,
    ``gate`` applies to statistics, proposition and isomorphism checks,
    ``cert`` to the extracted isometries. ``support`` and ``span`` are
    relative eigen/singular-value cut-offs.
    """

    construction: float = 1e-12
    gate: float = 1e-9
    cert: float = 1e-8
    support: float = 1e-10
    span: float = 1e-8

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


class CheckResult(NamedTuple):
    residual: float
    passed: bool
    parts: dict[str, float]


def _check(parts: dict[str, float], tol: float) -> CheckResult:
    r = max(parts.values())
    return CheckResult(r, r <= tol, parts)


def _norm(v) -> float:
    return float(np.linalg.norm(v))


def measured_vectors(d: DeviceRealization, validate: bool = True) -> dict[tuple[Setting, Setting], np.ndarray]:
    """``(Π_a ⊗ Π_b) psi`` for all 36 setting pairs, unnormalized."""
    if validate:
        require_valid(d)
    return {(a, b): post_measurement(d, a, b) for a in SETTINGS for b in SETTINGS}


# -- propositions -----------------------------------------------------------

def check_prop1(d: DeviceRealization, tol: float = 1e-9) -> CheckResult:
    """Measuring the same setting on both sides acts like measuring one side."""
    m = d.psi_matrix
    worst = 0.0
    for a in SETTINGS:
        pa, pb = d.fam_a[a], d.fam_b[a]
        cands = (
            (pa @ (m @ pb.T)),  # B first, then A
            ((pa @ m) @ pb.T),  # A first, then B
            pa @ m,
            m @ pb.T,
        )
        for u, v in itertools.combinations(cands, 2):
            worst = max(worst, _norm(u - v))
    return _check({"same_setting": worst}, tol)


def check_prop2(d: DeviceRealization, tol: float = 1e-9, vectors=None) -> CheckResult:
    """Each mixed-angle quadruple is orthogonal with the ideal lengths."""
    vecs = vectors if vectors is not None else measured_vectors(d, validate=False)
    ortho = length = 0.0
    for alpha, beta in MIXED_PAIRS:
        quad = np.column_stack(ideal.quadruple(vecs, (alpha, beta)))
        gram = dagger(quad) @ quad
        off = gram - np.diag(np.diagonal(gram))
        ortho = max(ortho, float(np.abs(off).max()))
        for k, (x, y) in enumerate(OUTCOME_PAIRS):
            p = ideal.ideal_probability(Setting(alpha, x), Setting(beta, y))
            length = max(length, float(abs(gram[k, k].real - p)))
    return _check({"orthogonality": ortho, "length": length}, tol)


def d_lengths(vectors) -> dict[tuple[Angle, int], float]:
    out = {}
    for beta in ANGLES:
        for z in (0, 1):
            v = ideal.d_vector(vectors, beta, z)
            out[beta, z] = float(np.vdot(v, v).real)
    return out


def transfer_residual(vectors) -> float:
    """Largest error in rebuilding one quadruple from another with ideal coefficients."""
    quads = {p: np.column_stack(ideal.quadruple(vectors, p)) for p in MIXED_PAIRS}
    worst = 0.0
    for src, dst in itertools.product(MIXED_PAIRS, MIXED_PAIRS):
        t = ideal.ideal_transfer_matrix(src, dst)
        err = quads[src] - quads[dst] @ t
        worst = max(worst, float(np.linalg.norm(err, axis=0).max()))
    return worst


def check_prop3(d: DeviceRealization, tol: float = 1e-9, vectors=None) -> CheckResult:
    vecs = vectors if vectors is not None else measured_vectors(d, validate=False)
    lengths = d_lengths(vecs)
    d_err = 0.0
    for beta in ANGLES:
        ref = ideal.ideal_d_lengths(beta)
        for z in (0, 1):
            d_err = max(d_err, float(abs(lengths[beta, z] - ref[z])))
    return _check({"d_length": d_err, "transfer": transfer_residual(vecs)}, tol)


# -- span and inner-product isomorphism --------------------------------------

@dataclass(frozen=True)
class SpanBasis:
    basis: np.ndarray  # N x r, orthonormal columns
    coords: np.ndarray  # r x 36, canonical (a, b) order
    singular_values: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def span_basis(d: DeviceRealization, threshold: float = 1e-8, vectors=None) -> SpanBasis:
    vecs = vectors if vectors is not None else measured_vectors(d, validate=False)
    ordered = [vecs[a, b] for a in SETTINGS for b in SETTINGS]
    basis, coords = orthonormal_basis(ordered, threshold)
    sv = np.linalg.svd(np.column_stack(ordered), compute_uv=False)
    return SpanBasis(basis, coords, sv)


@dataclass(frozen=True)
class InnerIsomorphism:
    """``u`` maps the device space (through its projection on S) to ``C^2 ⊗ C^2``.

    ``u @ span.basis`` is the 4 x dim(S) matrix in span coordinates.
    """

    u: np.ndarray
    span: SpanBasis
    anchor: tuple[Angle, Angle]
    residual_a1: float
    residual_a2: float
    unitarity: float

    @property
    def on_span(self) -> np.ndarray:
        return self.u @ self.span.basis

    @property
    def garbage(self) -> np.ndarray:
        """Preimage of ``|0>|0>``: the state left behind once both qubits are swapped out."""
        return dagger(self.u)[:, 0]


class Refused(Exception):
    """Raised inside the pipeline; carries the :class:`Refusal`."""

    def __init__(self, refusal: "Refusal"):
        super().__init__(f"refused at {refusal.stage}")
        self.refusal = refusal


def _ideal_pair_projector(a: Setting, b: Setting) -> np.ndarray:
    return np.kron(ideal.ideal_projector(a), ideal.ideal_projector(b))


def build_inner_isomorphism(
    d: DeviceRealization,
    anchor: tuple[Angle, Angle] = DEFAULT_ANCHOR,
    tol: float = 1e-9,
    span_threshold: float = 1e-8,
    vectors=None,
) -> InnerIsomorphism:
    """Map the normalized anchor quadruple onto its ideal counterpart and
    verify the result intertwines all 36 measurement pairs."""
    if anchor[0] == anchor[1]:
        raise DomainError("anchor angles must differ")
    vecs = vectors if vectors is not None else measured_vectors(d, validate=False)
    span = span_basis(d, span_threshold, vecs)
    if span.dim != 4:
        raise Refused(Refusal("span", {"rank": span.dim, "singular_values": span.singular_values[:8].tolist()}))

    dev = np.column_stack(ideal.quadruple(vecs, anchor))
    ref = np.column_stack(
        [ideal.ideal_vector(Setting(anchor[0], x), Setting(anchor[1], y)) for x, y in OUTCOME_PAIRS]
    )
    u = (ref / np.linalg.norm(ref, axis=0)) @ dagger(dev / np.linalg.norm(dev, axis=0))

    on_span = u @ span.basis
    unitarity = op_norm(dagger(on_span) @ on_span - np.eye(4))

    dim_a, dim_b = d.shape
    basis_t = span.basis.T.reshape(4, dim_a, dim_b)
    a1 = 0.0
    for a, b in itertools.product(SETTINGS, SETTINGS):
        lhs = np.einsum("ij,njk,lk->nil", d.fam_a[a], basis_t, d.fam_b[b]).reshape(4, -1).T
        rhs = dagger(u) @ _ideal_pair_projector(a, b) @ on_span
        a1 = max(a1, float(np.linalg.norm(lhs - rhs, axis=0).max()))
    a2 = _norm(u @ d.psi - ideal.phi_plus())

    iso = InnerIsomorphism(u, span, tuple(anchor), a1, a2, unitarity)
    if max(a1, a2, unitarity) > tol:
        raise Refused(Refusal("isomorphism", {"residual_a1": a1, "residual_a2": a2, "unitarity": unitarity}))
    return iso


def anchor_spread(d: DeviceRealization, tol: float = 1e-9, span_threshold: float = 1e-8) -> float:
    """Largest disagreement, over the six mixed anchors, of the images of the 36 vectors."""
    vecs = measured_vectors(d, validate=False)
    isos = [build_inner_isomorphism(d, p, tol, span_threshold, vecs) for p in MIXED_PAIRS]
    ordered = np.column_stack([vecs[a, b] for a in SETTINGS for b in SETTINGS])
    ref = isos[0].u @ ordered
    return max(float(np.abs(i.u @ ordered - ref).max()) for i in isos[1:])


# -- extended NOT / CNOT / SWAP ---------------------------------------------

def hat_projectors(d: DeviceRealization, side: str, threshold: float = 1e-10):
    """Support projector of ``side`` and the measurement projectors compressed to it."""
    p_sup = support_projector(reduced_state(d.psi, d.shape, side), threshold)
    fam = d.family(side)
    return p_sup, {s: p_sup @ fam[s] @ p_sup for s in SETTINGS}


def _not_from(proj) -> np.ndarray:
    return math.sqrt(2) * (proj[Setting(Angle.PLUS, 0)] - proj[Setting(Angle.MINUS, 0)])


def extended_not(d: DeviceRealization, side: str, threshold: float = 1e-10) -> np.ndarray:
    """``sqrt(2) (P̂_(pi/8,0) - P̂_(-pi/8,0))`` on the full side space; zero off the support."""
    _, hat = hat_projectors(d, side, threshold)
    return _not_from(hat)


def _qubit_projectors() -> dict[Setting, np.ndarray]:
    return {s: ideal.ideal_projector(s) for s in SETTINGS}


def _swap_from(proj, not_op) -> np.ndarray:
    """``N→ N←`` with the ancilla as the slow factor.

    ``proj``/``not_op`` describe the target system; the ancilla uses the
    ideal qubit projectors, whose NOT is the bit flip.
    """
    q = _qubit_projectors()
    eye = np.eye(not_op.shape[0])
    forward = np.kron(q[Setting(Angle.ZERO, 0)], eye) + np.kron(q[Setting(Angle.ZERO, 1)], not_op)
    backward = np.kron(np.eye(2), proj[Setting(Angle.ZERO, 0)]) + np.kron(_not_from(q), proj[Setting(Angle.ZERO, 1)])
    return forward @ backward


def swap_operator(d: DeviceRealization, side: str, threshold: float = 1e-10) -> np.ndarray:
    """Extended SWAP on ``C^2 ⊗ (side space)``; ancilla slow, device fast."""
    _, hat = hat_projectors(d, side, threshold)
    return _swap_from(hat, _not_from(hat))


def qubit_swap() -> np.ndarray:
    """``N→ N←`` on two ideal qubits; swaps whenever the first starts in |0>."""
    q = _qubit_projectors()
    return _swap_from(q, _not_from(q))


def swap_isometry(d: DeviceRealization, side: str, threshold: float = 1e-10) -> np.ndarray:
    """The extended SWAP with its ancilla fixed to |0>, as a map from the
    side space (restricted to the support) into ``C^2 ⊗ (side space)``."""
    dim = d.shape.dim_a if side == "A" else d.shape.dim_b
    p_sup, _ = hat_projectors(d, side, threshold)
    return swap_operator(d, side, threshold)[:, :dim] @ p_sup


def swap_identity_residual(d: DeviceRealization, iso: InnerIsomorphism, side: str,
                           threshold: float = 1e-10) -> float:
    """Compare the extended SWAP on ``|a> ⊗ φ`` with the qubit SWAP pulled back
    through ``iso``, for every basis vector φ of S and a in {0, 1}."""
    dim_a, dim_b = d.shape
    big = swap_operator(d, side, threshold)
    small = qubit_swap().reshape(2, 2, 2, 2)
    u, udag = iso.u, dagger(iso.u)
    worst = 0.0
    for ket in _KET:
        for phi in iso.span.basis.T:
            t = phi.reshape(dim_a, dim_b)
            img = (u @ phi).reshape(2, 2)  # (A', B')
            if side == "A":
                op = big.reshape(2, dim_a, 2, dim_a)
                lhs = np.einsum("piqj,q,jk->pik", op, ket, t)
                mid = np.einsum("pxqy,q,yz->pxz", small, ket, img)
            else:
                op = big.reshape(2, dim_b, 2, dim_b)
                lhs = np.einsum("pkql,q,il->pik", op, ket, t)
                mid = np.einsum("pxqy,q,zy->pzx", small, ket, img)
            rhs = np.einsum("nm,pm->pn", udag, mid.reshape(2, 4)).reshape(2, dim_a, dim_b)
            worst = max(worst, _norm(lhs - rhs))
    return worst


def local_pullback_residual(d: DeviceRealization, iso: InnerIsomorphism, side: str,
                            v: np.ndarray, threshold: float = 1e-10) -> float:
    """``max_a max_φ ||(P̂_a - V† (P_a ⊗ I) V) φ||`` over basis vectors φ of S,
    with ``V`` the extracted isometry of ``side``."""
    _, hat = hat_projectors(d, side, threshold)
    dim = v.shape[1]
    q = _qubit_projectors()
    worst = 0.0
    basis_t = iso.span.basis.T.reshape(-1, d.shape.dim_a, d.shape.dim_b)
    for s in SETTINGS:
        diff = hat[s] - dagger(v) @ np.kron(q[s], np.eye(dim)) @ v
        if side == "A":
            out = np.einsum("ij,njk->nik", diff, basis_t)
        else:
            out = np.einsum("kl,nil->nik", diff, basis_t)
        worst = max(worst, float(np.linalg.norm(out.reshape(len(basis_t), -1), axis=1).max()))
    return worst


# -- certificate ------------------------------------------------------------

@dataclass(frozen=True)
class Refusal:
    stage: str
    diagnostics: dict[str, Any]
    gate: DeviationReport | None = None
    stages: dict[str, dict[str, Any]] = field(default_factory=dict)

    certified = False


@dataclass(frozen=True)
class SelfTestCertificate:
    """Extracted isometries and the residuals of the three conditions.

    ``uhat_a`` maps side A (restricted to the state's support) into
    ``C^2 ⊗ (side A space)``, qubit slow; its image is ``A ⊗ E_A`` with
    ``E_A`` a subspace of the side space. ``garbage_state`` is a vector on
    the full device space whose reduced supports are ``E_A`` and ``E_B``.
    """

    uhat_a: np.ndarray
    uhat_b: np.ndarray
    garbage_state: np.ndarray
    dim_e_a: int
    dim_e_b: int
    residuals: dict[str, float]
    gate: DeviationReport
    isomorphism: InnerIsomorphism
    stages: dict[str, dict[str, Any]] = field(default_factory=dict)

    certified = True

    @property
    def shape(self):
        return (self.uhat_a.shape[1], self.uhat_b.shape[1])


def _image_projector(v: np.ndarray) -> np.ndarray:
    u, s, _ = np.linalg.svd(v, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((v.shape[0],) * 2, dtype=complex)
    cols = u[:, s > 1e-8 * s[0]]
    return cols @ dagger(cols)


def apply_isometries(uhat_a: np.ndarray, uhat_b: np.ndarray, psi_matrix: np.ndarray) -> np.ndarray:
    """``(Û_A ⊗ Û_B)`` on a state given as a (dimA, dimB) matrix.

    Returns a tensor indexed ``[qubitA, sideA, qubitB, sideB]``.
    """
    dim_a, dim_b = psi_matrix.shape
    ua = uhat_a.reshape(2, dim_a, dim_a)
    ub = uhat_b.reshape(2, dim_b, dim_b)
    return np.einsum("aij,bkl,jl->aibk", ua, ub, psi_matrix)


def condition_residuals(d: DeviceRealization, uhat_a, uhat_b, garbage, threshold: float = 1e-10):
    q = _qubit_projectors()
    res = {}
    for name, side, v in (("cond1", "A", uhat_a), ("cond2", "B", uhat_b)):
        _, hat = hat_projectors(d, side, threshold)
        img = _image_projector(v)
        dim = v.shape[1]
        res[name] = max(
            op_norm(v @ hat[s] @ dagger(v) - img @ np.kron(q[s], np.eye(dim)) @ img) for s in SETTINGS
        )
    out = apply_isometries(uhat_a, uhat_b, d.psi_matrix)
    target = np.einsum("ab,ik->aibk", ideal.phi_plus().reshape(2, 2), garbage.reshape(d.shape))
    res["cond3"] = _norm(out - target)
    return res


def extract_certificate(d: DeviceRealization, iso: InnerIsomorphism, gate: DeviationReport,
                        tol: Tolerances = Tolerances(), stages=None) -> SelfTestCertificate:
    stages = {} if stages is None else stages
    thr = tol.support
    uhat = {s: swap_isometry(d, s, thr) for s in SIDES}
    extraction = {}
    for s in SIDES:
        p_sup, _ = hat_projectors(d, s, thr)
        v = uhat[s]
        extraction[f"isometry_{s}"] = op_norm(dagger(v) @ v - p_sup)
        extraction[f"swap_identity_{s}"] = swap_identity_residual(d, iso, s, thr)
        extraction[f"pullback_{s}"] = local_pullback_residual(d, iso, s, v, thr)
    stages["extraction"] = extraction
    if max(extraction.values()) > tol.cert:
        raise Refused(Refusal("extraction", extraction, gate, stages))

    garbage = iso.garbage
    dims = {s: support_basis(reduced_state(garbage, d.shape, s), thr).shape[1] for s in SIDES}
    res = condition_residuals(d, uhat["A"], uhat["B"], garbage, thr)
    stages["verification"] = dict(res, dim_e_a=dims["A"], dim_e_b=dims["B"])
    if max(res.values()) > tol.cert:
        bad = [k for k, r in res.items() if r > tol.cert]
        raise Refused(Refusal("verification", dict(res, failed=bad), gate, stages))
    return SelfTestCertificate(uhat["A"], uhat["B"], garbage, dims["A"], dims["B"], res, gate, iso, stages)


def self_test(d: DeviceRealization, tol: Tolerances = Tolerances(),
              anchor: tuple[Angle, Angle] = DEFAULT_ANCHOR) -> SelfTestCertificate | Refusal:
    """Run every stage; return the certificate or the first refusal.

    Raises :class:`~bellcert.errors.ValidationError` when the input is not
    a well-formed device at all.
    """
    require_valid(d)
    stages: dict[str, dict[str, Any]] = {}
    gate = compare_tables(probability_table(d, validate=False), ideal_probability_table(), tol.gate)
    stages["stats"] = {"max_abs_deviation": gate.max_abs_deviation,
                       "worst_entry": [gate.worst_entry[0].label(), gate.worst_entry[1].label()]}
    if not gate.passed:
        return Refusal("stats", stages["stats"], gate, stages)

    vecs = measured_vectors(d, validate=False)
    try:
        span = span_basis(d, tol.span, vecs)
        stages["span"] = {"rank": span.dim}
        if span.dim != 4:
            raise Refused(Refusal("span", {"rank": span.dim,
                                           "singular_values": span.singular_values[:8].tolist()}, gate, stages))
        props = {
            "prop1": check_prop1(d, tol.gate),
            "prop2": check_prop2(d, tol.gate, vecs),
            "prop3": check_prop3(d, tol.gate, vecs),
        }
        stages["propositions"] = {f"{k}_{p}": v for k, r in props.items() for p, v in r.parts.items()}
        if not all(r.passed for r in props.values()):
            raise Refused(Refusal("propositions", stages["propositions"], gate, stages))
        try:
            iso = build_inner_isomorphism(d, anchor, tol.gate, tol.span, vecs)
        except Refused as e:
            raise Refused(Refusal(e.refusal.stage, e.refusal.diagnostics, gate, stages)) from None
        stages["isomorphism"] = {"residual_a1": iso.residual_a1, "residual_a2": iso.residual_a2,
                                 "unitarity": iso.unitarity}
        return extract_certificate(d, iso, gate, tol, stages)
    except Refused as e:
        r = e.refusal
        if r.stage not in stages:
            stages[r.stage] = r.diagnostics
        return Refusal(r.stage, r.diagnostics, gate, stages)


# -- collapse check -----------------------------------------------------------

def _collapsed_image(d: DeviceRealization, cert: SelfTestCertificate, alpha: Angle, x: int):
    if alpha not in (Angle.MINUS, Angle.PLUS):
        raise DomainError("the collapse check uses the two key-generation bases only")
    post = post_measurement(d, Setting(alpha, x), None)
    n = _norm(post)
    if n ** 2 < 1e-12:
        raise DomainError(f"outcome {x} at angle {alpha.tag} has probability zero")
    return apply_isometries(cert.uhat_a, cert.uhat_b, (post / n).reshape(d.shape))


def bb84_collapse_check(d: DeviceRealization, cert: SelfTestCertificate, alpha: Angle, x: int) -> float:
    """Infidelity between the mapped post-measurement state and
    ``|θ>_A ⊗ |θ>_B ⊗ Ψ_E`` with ``θ = alpha + x pi/2``."""
    img = _collapsed_image(d, cert, alpha, x)
    ket = ideal.basis_state(Setting(alpha, x).theta)
    target = np.einsum("a,b,ik->aibk", ket, ket, cert.garbage_state.reshape(d.shape))
    ov = np.vdot(target, img) / (_norm(target) * _norm(img))
    return float(max(0.0, 1.0 - abs(ov) ** 2))


def collapsed_garbage(d: DeviceRealization, cert: SelfTestCertificate, alpha: Angle, x: int) -> np.ndarray:
    """Garbage read off the collapsed state: project both qubits on ``|θ>``."""
    img = _collapsed_image(d, cert, alpha, x)
    ket = ideal.basis_state(Setting(alpha, x).theta)
    return np.einsum("a,b,aibk->ik", ket.conj(), ket.conj(), img).reshape(-1)
