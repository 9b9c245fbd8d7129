"""Devices under test and generators for them.

A device is a pure bipartite state plus, on each side, a two-outcome
projective measurement for every one of the three angles. Generators build
the ideal device, devices that are equivalent to it under hidden local
isometries (with junk behaviour off the state's support), and perturbed
devices that should be rejected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import ideal
from .errors import SizeError, ValidationError
from .ideal import ANGLES, Angle, Setting
from .linalg import BipartiteShape, dagger, op_norm

TOL = 1e-10
STATE_NORM_TOL = 1e-12
MAX_SIDE_DIM = 64


@dataclass(frozen=True)
class ProjectorFamily:
    """Projectors indexed ``[angle.index, outcome]``, shape (3, 2, d, d)."""

    ops: np.ndarray

    def __post_init__(self):
        ops = np.array(self.ops, dtype=complex)
        if ops.ndim != 4 or ops.shape[:2] != (3, 2) or ops.shape[2] != ops.shape[3]:
            raise ValidationError(f"projector family must have shape (3, 2, d, d), got {ops.shape}")
        ops.setflags(write=False)
        object.__setattr__(self, "ops", ops)

    @property
    def dim(self) -> int:
        return self.ops.shape[2]

    def __getitem__(self, s: Setting) -> np.ndarray:
        return self.ops[s.angle.index, s.outcome]

    @classmethod
    def from_mapping(cls, m: Mapping[Angle, tuple]) -> "ProjectorFamily":
        return cls(np.array([[m[a][0], m[a][1]] for a in ANGLES]))

    def violations(self, name: str, tol: float = TOL) -> list["Violation"]:
        out = []
        eye = np.eye(self.dim)
        for a in ANGLES:
            p0, p1 = self.ops[a.index]
            for x, p in enumerate((p0, p1)):
                h = op_norm(p - dagger(p))
                if h > tol:
                    out.append(Violation(name, a, f"P{x} not Hermitian", h))
                i = op_norm(p @ p - p)
                if i > tol:
                    out.append(Violation(name, a, f"P{x} not idempotent", i))
            c = op_norm(p0 + p1 - eye)
            if c > tol:
                out.append(Violation(name, a, "P0 + P1 != I", c))
        return out


@dataclass(frozen=True)
class Violation:
    family: str
    angle: Angle | None
    problem: str
    norm: float

    def __str__(self):
        where = self.family if self.angle is None else f"{self.family}[{self.angle.tag}]"
        return f"{where}: {self.problem} (norm {self.norm:.3e})"


@dataclass(frozen=True)
class DeviceRealization:
    shape: BipartiteShape
    psi: np.ndarray
    fam_a: ProjectorFamily
    fam_b: ProjectorFamily
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        shape = BipartiteShape(*self.shape)
        psi = np.array(self.psi, dtype=complex).reshape(-1)
        psi.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "psi", psi)

    @property
    def psi_matrix(self) -> np.ndarray:
        """psi reshaped to (dimA, dimB), so that (X ⊗ Y) psi == X @ M @ Y.T."""
        return self.psi.reshape(self.shape)

    def family(self, side: str) -> ProjectorFamily:
        return {"A": self.fam_a, "B": self.fam_b}[side]


def validate_device(d: DeviceRealization) -> list[Violation]:
    out = []
    if d.psi.size != d.shape.total:
        out.append(Violation("psi", None, f"length {d.psi.size} != {d.shape.dim_a}*{d.shape.dim_b}", 0.0))
        return out
    if not np.all(np.isfinite(d.psi)):
        out.append(Violation("psi", None, "non-finite amplitudes", math.inf))
    else:
        dev = abs(np.linalg.norm(d.psi) - 1.0)
        if dev > STATE_NORM_TOL:
            out.append(Violation("psi", None, "state not normalized", dev))
    for name, fam, dim in (("famA", d.fam_a, d.shape.dim_a), ("famB", d.fam_b, d.shape.dim_b)):
        if fam.dim != dim:
            out.append(Violation(name, None, f"acts on dimension {fam.dim}, expected {dim}", 0.0))
            continue
        if not np.all(np.isfinite(fam.ops)):
            out.append(Violation(name, None, "non-finite entries", math.inf))
            continue
        out.extend(fam.violations(name))
    return out


def require_valid(d: DeviceRealization) -> None:
    problems = validate_device(d)
    if problems:
        raise ValidationError(
            "invalid device: " + "; ".join(str(p) for p in problems), problems
        )


def ideal_family() -> ProjectorFamily:
    return ProjectorFamily(
        np.array([[ideal.ideal_projector(Setting(a, x)) for x in (0, 1)] for a in ANGLES])
    )


def embed_ideal() -> DeviceRealization:
    return DeviceRealization(
        BipartiteShape(2, 2), ideal.phi_plus(), ideal_family(), ideal_family(),
        {"generator": "ideal"},
    )


# -- random building blocks -------------------------------------------------

def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary: QR of a complex Ginibre matrix with the R-phase fix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return random_unitary(rows, rng)[:, :cols]


def _junk_split(complement: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split the projector onto span(complement) into two random orthogonal projectors."""
    k = complement.shape[1]
    if k == 0:
        z = np.zeros((complement.shape[0],) * 2, dtype=complex)
        return z, z.copy()
    rank = int(rng.integers(0, k + 1))
    basis = complement @ random_unitary(k, rng)
    q0 = basis[:, :rank] @ dagger(basis[:, :rank])
    q1 = basis[:, rank:] @ dagger(basis[:, rank:])
    return q0, q1


def _hidden_family(w: np.ndarray, complement: np.ndarray, garbage_dim: int,
                   rng: np.random.Generator, junk: bool = True) -> ProjectorFamily:
    eye_g = np.eye(garbage_dim)
    ops = np.empty((3, 2) + (w.shape[0],) * 2, dtype=complex)
    for a in ANGLES:
        # the junk split is redrawn for every angle
        q0, q1 = _junk_split(complement, rng)
        for x, q in ((0, q0), (1, q1)):
            core = w @ np.kron(ideal.ideal_projector(Setting(a, x)), eye_g) @ dagger(w)
            ops[a.index, x] = core + (q if junk else 0)
    return ProjectorFamily(ops)


def scramble(garbage_dim_a: int = 1, garbage_dim_b: int = 1, pad_a: int = 0, pad_b: int = 0,
             seed: int = 0, max_dim: int = MAX_SIDE_DIM, junk: bool = True) -> DeviceRealization:
    """A device statistically identical to the ideal one but with the qubits
    hidden inside larger spaces.

    Side A is ``W_A (C^2 ⊗ C^gA) ⊕ C^padA`` with a Haar-random isometry
    ``W_A``; the state is ``(W_A ⊗ W_B)(Φ+ ⊗ Ψ_E)`` with ``Ψ_E`` a random
    pure state on ``C^gA ⊗ C^gB``. Outside the range of ``W_A`` each
    measurement gets an arbitrary split of the complement (``junk=False``
    drops it, which breaks completeness but not the statistics).
    """
    if min(garbage_dim_a, garbage_dim_b) < 1 or min(pad_a, pad_b) < 0:
        raise ValueError("garbage dimensions must be >= 1 and pads >= 0")
    dim_a = 2 * garbage_dim_a + pad_a
    dim_b = 2 * garbage_dim_b + pad_b
    if max(dim_a, dim_b) > max_dim:
        raise SizeError(f"side dimensions {dim_a}x{dim_b} exceed cap {max_dim}")
    rng = np.random.default_rng(seed)
    ga, gb = garbage_dim_a, garbage_dim_b
    psi_e = random_state(ga * gb, rng)
    va = random_unitary(dim_a, rng)
    vb = random_unitary(dim_b, rng)
    wa, ca = va[:, : 2 * ga], va[:, 2 * ga :]
    wb, cb = vb[:, : 2 * gb], vb[:, 2 * gb :]

    # Φ+ ⊗ Ψ_E lives on factors (A, B, E_A, E_B); regroup as ((A, E_A), (B, E_B)).
    # Flat index a*2*ga*gb + b*ga*gb + ea*gb + eb  ->  (a*ga + ea)*(2*gb) + b*gb + eb.
    joint = np.kron(ideal.phi_plus(), psi_e).reshape(2, 2, ga, gb)
    hidden = joint.transpose(0, 2, 1, 3).reshape(2 * ga, 2 * gb)
    psi = (wa @ hidden @ wb.T).reshape(-1)

    fam_a = _hidden_family(wa, ca, ga, rng, junk)
    fam_b = _hidden_family(wb, cb, gb, rng, junk)
    prov = {"generator": "scrambled", "seed": int(seed), "garbage_dim_a": ga,
            "garbage_dim_b": gb, "pad_a": pad_a, "pad_b": pad_b}
    if not junk:
        prov["junk"] = False
    return DeviceRealization(BipartiteShape(dim_a, dim_b), psi, fam_a, fam_b, prov)


# -- perturbations -----------------------------------------------------------

_TILT_SCALE = math.cos(math.pi / 8) * math.sin(math.pi / 8)


def tilt_generator(fam: ProjectorFamily) -> np.ndarray:
    """Hermitian generator of rotations in the measured plane.

    ``-i [P_(0,0), P_(pi/8,0)]`` divided by ``cos(pi/8) sin(pi/8)`` equals
    the Pauli Y on an ideal qubit, so ``exp(-i t G)`` rotates every basis
    state by exactly ``t``; on a hidden qubit it does the same inside the
    hidden copy.
    """
    p = fam[Setting(Angle.ZERO, 0)]
    q = fam[Setting(Angle.PLUS, 0)]
    return -1j * (p @ q - q @ p) / _TILT_SCALE


def _hermitian_exp(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i t h)`` for Hermitian ``h``."""
    w, v = np.linalg.eigh((h + dagger(h)) / 2)
    return (v * np.exp(-1j * t * w)) @ dagger(v)


def perturb(d: DeviceRealization, kind: str, epsilon: float, seed: int = 0) -> DeviceRealization:
    """Perturbed copy of ``d`` that stays pure and projective.

    ``angle_tilt`` rotates each of side A's three bases by ``±epsilon``
    (seeded signs); ``state_perturb`` adds a random vector of norm
    ``epsilon`` to psi and renormalizes.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    rng = np.random.default_rng(seed)
    prov = dict(d.provenance)
    prov["perturbation"] = {"kind": kind, "epsilon": float(epsilon), "seed": int(seed)}
    if kind == "angle_tilt":
        g = tilt_generator(d.fam_a)
        signs = rng.choice((-1.0, 1.0), size=3)
        ops = np.array(d.fam_a.ops)
        for a in ANGLES:
            r = _hermitian_exp(g, signs[a.index] * epsilon)
            for x in (0, 1):
                ops[a.index, x] = r @ ops[a.index, x] @ dagger(r)
        return DeviceRealization(d.shape, d.psi, ProjectorFamily(ops), d.fam_b, prov)
    if kind == "state_perturb":
        g = rng.standard_normal(d.psi.size) + 1j * rng.standard_normal(d.psi.size)
        psi = d.psi + epsilon * g / np.linalg.norm(g)
        return DeviceRealization(d.shape, psi / np.linalg.norm(psi), d.fam_a, d.fam_b, prov)
    raise ValueError(f"unknown perturbation kind {kind!r}")


# -- POVMs and their dilation ------------------------------------------------

@dataclass(frozen=True)
class PovmFamily:
    """Two-outcome effects indexed ``[angle.index, outcome]``, shape (3, 2, d, d)."""

    effects: np.ndarray

    def __post_init__(self):
        e = np.array(self.effects, dtype=complex)
        if e.ndim != 4 or e.shape[:2] != (3, 2) or e.shape[2] != e.shape[3]:
            raise ValidationError(f"POVM family must have shape (3, 2, d, d), got {e.shape}")
        e.setflags(write=False)
        object.__setattr__(self, "effects", e)

    @property
    def dim(self) -> int:
        return self.effects.shape[2]

    def __getitem__(self, s: Setting) -> np.ndarray:
        return self.effects[s.angle.index, s.outcome]

    def violations(self, tol: float = TOL) -> list[Violation]:
        out = []
        eye = np.eye(self.dim)
        for a in ANGLES:
            e0, e1 = self.effects[a.index]
            for x, e in enumerate((e0, e1)):
                h = op_norm(e - dagger(e))
                if h > tol:
                    out.append(Violation("povm", a, f"E{x} not Hermitian", h))
                    continue
                w = np.linalg.eigvalsh((e + dagger(e)) / 2)
                if w.min() < -tol:
                    out.append(Violation("povm", a, f"E{x} not positive", -w.min()))
                if w.max() > 1 + tol:
                    out.append(Violation("povm", a, f"E{x} exceeds identity", w.max() - 1))
            c = op_norm(e0 + e1 - eye)
            if c > tol:
                out.append(Violation("povm", a, "E0 + E1 != I", c))
        return out


def random_qubit_povm(rng: np.random.Generator, dim: int = 2) -> PovmFamily:
    """Random effects ``E0 = U diag(l) U†`` with eigenvalues in [0, 1]; ``E1 = I - E0``."""
    effects = []
    for _ in ANGLES:
        u = random_unitary(dim, rng)
        e0 = (u * rng.uniform(0, 1, dim)) @ dagger(u)
        effects.append([e0, np.eye(dim) - e0])
    return PovmFamily(np.array(effects))


def _psd_sqrt(e: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((e + dagger(e)) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ dagger(v)


def naimark_dilate(f: PovmFamily) -> ProjectorFamily:
    """Projective family on ``H ⊗ C^2`` reproducing ``f`` with the ancilla in |0>.

    The ancilla is the fast factor. For each angle the unitary
    ``V = [[sqrt E0, -sqrt E1], [sqrt E1, sqrt E0]]`` (ancilla-major blocks)
    sends ``|0> ⊗ h`` to ``|0> ⊗ sqrt(E0) h + |1> ⊗ sqrt(E1) h``;
    the dilated projectors are ``V† (|x><x| ⊗ I) V`` moved to ancilla-fast order.
    """
    problems = f.violations()
    if problems:
        raise ValidationError("invalid POVM family: " + "; ".join(map(str, problems)), problems)
    n = f.dim
    # (ancilla, system) -> (system, ancilla)
    perm = np.arange(2 * n).reshape(2, n).T.reshape(-1)
    ops = np.empty((3, 2, 2 * n, 2 * n), dtype=complex)
    for a in ANGLES:
        s0 = _psd_sqrt(f.effects[a.index, 0])
        s1 = _psd_sqrt(f.effects[a.index, 1])
        v = np.block([[s0, -s1], [s1, s0]])
        for x in (0, 1):
            sel = np.zeros((2, 2))
            sel[x, x] = 1
            p = dagger(v) @ np.kron(sel, np.eye(n)) @ v
            ops[a.index, x] = p[np.ix_(perm, perm)]
    return ProjectorFamily(ops)
