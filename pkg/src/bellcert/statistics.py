"""Joint outcome probabilities and their comparison with the ideal table."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import ideal
from .devices import DeviceRealization, require_valid
from .ideal import SETTINGS, Setting

GATE_TOL = 1e-9


def post_measurement(d: DeviceRealization, a: Setting | None, b: Setting | None) -> np.ndarray:
    """``(Π_a ⊗ Π_b) psi``; pass ``None`` for a side that is not measured."""
    m = d.psi_matrix
    if a is not None:
        m = d.fam_a[a] @ m
    if b is not None:
        m = m @ d.fam_b[b].T
    return m.reshape(-1)


def joint_probability(d: DeviceRealization, a: Setting, b: Setting, validate: bool = True) -> float:
    if validate:
        require_valid(d)
    v = post_measurement(d, a, b)
    return float(np.vdot(v, v).real)


@dataclass(frozen=True)
class ProbabilityTable:
    """Probabilities indexed ``[angleA.index, angleB.index, x, y]``."""

    entries: np.ndarray
    provenance: str = "device"

    def __getitem__(self, ab: tuple[Setting, Setting]) -> float:
        a, b = ab
        return float(self.entries[a.angle.index, b.angle.index, a.outcome, b.outcome])

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=(2, 3))


def ideal_probability_table() -> ProbabilityTable:
    return ProbabilityTable(ideal.ideal_table(), "ideal")


def probability_table(d: DeviceRealization, validate: bool = True) -> ProbabilityTable:
    if validate:
        require_valid(d)
    t = np.empty((3, 3, 2, 2))
    for a, b in itertools.product(SETTINGS, SETTINGS):
        t[a.angle.index, b.angle.index, a.outcome, b.outcome] = joint_probability(d, a, b, validate=False)
    name = d.provenance.get("generator", "device")
    return ProbabilityTable(t, f"device({name})")


@dataclass(frozen=True)
class DeviationReport:
    max_abs_deviation: float
    worst_entry: tuple[Setting, Setting]
    per_entry: np.ndarray
    tol: float
    passed: bool

    def entries(self):
        """Yield ``(a, b, deviation)`` in canonical setting order."""
        for a, b in itertools.product(SETTINGS, SETTINGS):
            yield a, b, float(self.per_entry[a.angle.index, b.angle.index, a.outcome, b.outcome])


def compare_tables(real: ProbabilityTable, reference: ProbabilityTable, tol: float = GATE_TOL) -> DeviationReport:
    dev = np.abs(real.entries - reference.entries)
    worst = max(
        itertools.product(SETTINGS, SETTINGS),
        key=lambda ab: dev[ab[0].angle.index, ab[1].angle.index, ab[0].outcome, ab[1].outcome],
    )
    m = float(dev.max())
    return DeviationReport(m, worst, dev, tol, m <= tol)


def no_signalling_check(t: ProbabilityTable, tol: float = 1e-10) -> tuple[bool, float]:
    """Each side's marginals must not depend on the other side's angle."""
    marg_a = t.entries.sum(axis=3)  # [angleA, angleB, x]
    marg_b = t.entries.sum(axis=2)  # [angleA, angleB, y]
    viol_a = np.ptp(marg_a, axis=1).max()
    viol_b = np.ptp(marg_b, axis=0).max()
    v = float(max(viol_a, viol_b))
    return v <= tol, v
