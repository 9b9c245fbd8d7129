"""The reference configuration: Bell state, three-angle qubit bases, and
the exact correlations, coordinate changes and d-vector lengths they imply.

All ideal quantities happen to be real, but arrays stay complex so they can
be compared directly with device data.
"""
from __future__ import annotations

import enum
import itertools
import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import DomainError


class Angle(enum.Enum):
    MINUS = -1
    ZERO = 0
    PLUS = 1

    @property
    def radians(self) -> float:
        return self.value * math.pi / 8

    @property
    def index(self) -> int:
        return self.value + 1

    @property
    def tag(self) -> str:
        return self.name.lower()

    @classmethod
    def from_tag(cls, tag: str) -> "Angle":
        return cls[tag.upper()]


ANGLES = (Angle.MINUS, Angle.ZERO, Angle.PLUS)


class Setting(NamedTuple):
    angle: Angle
    outcome: int

    @property
    def theta(self) -> float:
        """Direction of the measured state in the real plane."""
        return self.angle.radians + self.outcome * math.pi / 2

    def label(self) -> str:
        return f"({self.angle.tag},{self.outcome})"


SETTINGS = tuple(Setting(a, x) for a in ANGLES for x in (0, 1))
OUTCOME_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))

# (angle on A, angle on B) with distinct angles; these index the quadruples
# of post-measurement vectors that form orthogonal bases of the span.
MIXED_PAIRS = tuple((a, b) for a in ANGLES for b in ANGLES if a != b)

# (alpha, gamma, beta): the cyclic orderings of (MINUS, ZERO, PLUS), keyed by beta
CYCLIC = {
    Angle.PLUS: (Angle.MINUS, Angle.ZERO),
    Angle.MINUS: (Angle.ZERO, Angle.PLUS),
    Angle.ZERO: (Angle.PLUS, Angle.MINUS),
}


def basis_state(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)], dtype=complex)


def ideal_projector(s: Setting) -> np.ndarray:
    v = basis_state(s.theta)
    return np.outer(v, v.conj())


def phi_plus() -> np.ndarray:
    return np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


def ideal_vector(a: Setting, b: Setting) -> np.ndarray:
    """``(P_a ⊗ P_b) Φ+``, unnormalized."""
    return np.kron(ideal_projector(a), ideal_projector(b)) @ phi_plus()


def ideal_probability(a: Setting, b: Setting) -> float:
    v = ideal_vector(a, b)
    return float(np.vdot(v, v).real)


def closed_form_probability(a: Setting, b: Setting) -> float:
    return 0.5 * math.cos(a.theta - b.theta) ** 2


def quadruple(vectors, pair) -> list:
    """The four vectors of the basis indexed by ``pair`` in (x, y) order."""
    alpha, beta = pair
    return [vectors[Setting(alpha, x), Setting(beta, y)] for x, y in OUTCOME_PAIRS]


def _ideal_quadruple(pair) -> np.ndarray:
    alpha, beta = pair
    return np.column_stack(
        [ideal_vector(Setting(alpha, x), Setting(beta, y)) for x, y in OUTCOME_PAIRS]
    )


@lru_cache(maxsize=None)
def _transfer(src: tuple, dst: tuple) -> np.ndarray:
    v = _ideal_quadruple(src)
    w = _ideal_quadruple(dst)
    # target vectors are mutually orthogonal, so each coefficient is a projection
    t = (w.conj().T @ v) / np.sum(np.abs(w) ** 2, axis=0)[:, None]
    t.setflags(write=False)
    return t


def ideal_transfer_matrix(src: tuple[Angle, Angle], dst: tuple[Angle, Angle]) -> np.ndarray:
    """Coefficients ``T`` with ``v_src[:, j] = sum_i T[i, j] * w_dst[:, i]``.

    Rows index the target outcome pair, columns the source outcome pair,
    both in ``OUTCOME_PAIRS`` order. With this layout chaining is plain
    matrix multiplication: ``T(s->u) = T(t->u) @ T(s->t)``.
    """
    src, dst = tuple(src), tuple(dst)
    for pair in (src, dst):
        if pair[0] == pair[1]:
            raise DomainError(
                f"equal-angle pair {pair[0].tag}/{pair[1].tag} does not give a basis of the span"
            )
    return _transfer(src, dst).copy()


def d_vector(vectors, beta: Angle, z: int) -> np.ndarray:
    """``(P_(alpha,0) - P_(gamma,0)) P_(beta,z) psi`` from measured vectors.

    ``vectors`` maps (a, b) setting pairs to post-measurement vectors; the
    A side carries alpha/gamma and the B side carries beta.
    """
    alpha, gamma = CYCLIC[beta]
    b = Setting(beta, z)
    return vectors[Setting(alpha, 0), b] - vectors[Setting(gamma, 0), b]


def ideal_d_lengths(beta: Angle) -> tuple[float, float]:
    vecs = {(a, b): ideal_vector(a, b) for a in SETTINGS for b in SETTINGS}
    out = []
    for z in (0, 1):
        d = d_vector(vecs, beta, z)
        out.append(float(np.vdot(d, d).real))
    return out[0], out[1]


def ideal_table() -> np.ndarray:
    """Ideal probabilities indexed ``[angleA, angleB, x, y]``."""
    t = np.empty((3, 3, 2, 2))
    for a, b in itertools.product(SETTINGS, SETTINGS):
        t[a.angle.index, b.angle.index, a.outcome, b.outcome] = ideal_probability(a, b)
    return t
