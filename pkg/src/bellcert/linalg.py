"""Dense complex linear algebra on small bipartite Hilbert spaces.

Factor-order convention, used everywhere in the package: in a composite
space ``A ⊗ B`` the A index is the slow one, so a basis state ``|iA, iB>``
sits at flat position ``iA * dimB + iB``. This is exactly the layout
produced by ``np.kron`` and by C-order reshapes to ``(dimA, dimB)``.

Matrices are plain ``numpy`` arrays of complex dtype; states are 1-d arrays.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, SizeError, ValidationError

DEFAULT_THRESHOLD = 1e-10
MAX_KRON_DIM = 4096


class BipartiteShape(NamedTuple):
    dim_a: int
    dim_b: int

    @property
    def total(self) -> int:
        return self.dim_a * self.dim_b

    def check(self, dim: int) -> None:
        if self.dim_a < 1 or self.dim_b < 1:
            raise DimensionError(f"factor dimensions must be >= 1, got {tuple(self)}")
        if dim != self.total:
            raise DimensionError(
                f"joint dimension {dim} does not match {self.dim_a}x{self.dim_b}"
            )


def as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix has non-finite entries")
    return m


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("vector has non-finite entries")
    return v


def op_norm(m: np.ndarray) -> float:
    """Spectral norm (largest singular value); 0 for empty matrices."""
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def projector(v) -> np.ndarray:
    v = as_vector(v)
    return np.outer(v, v.conj())


def kron(m1, m2, max_dim: int | None = None) -> np.ndarray:
    m1, m2 = as_matrix(m1), as_matrix(m2)
    cap = MAX_KRON_DIM if max_dim is None else max_dim
    rows, cols = m1.shape[0] * m2.shape[0], m1.shape[1] * m2.shape[1]
    if max(rows, cols) > cap:
        raise SizeError(f"kron result {rows}x{cols} exceeds cap {cap}")
    return np.kron(m1, m2)


def kron_all(*ms) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = kron(out, m)
    return out


def partial_trace(m, shape: BipartiteShape, trace_out: str) -> np.ndarray:
    """Trace out factor ``trace_out`` ("A" or "B") and return the other."""
    m = as_matrix(m)
    shape = BipartiteShape(*shape)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("partial trace needs a square matrix")
    shape.check(m.shape[0])
    t = m.reshape(shape.dim_a, shape.dim_b, shape.dim_a, shape.dim_b)
    if trace_out == "B":
        return np.einsum("ikjk->ij", t)
    if trace_out == "A":
        return np.einsum("kikj->ij", t)
    raise ValueError(f"trace_out must be 'A' or 'B', not {trace_out!r}")


def reduced_state(psi, shape: BipartiteShape, keep: str) -> np.ndarray:
    """Reduced density matrix of a pure state on the ``keep`` side.

    Cheaper than forming |psi><psi| and tracing.
    """
    psi = as_vector(psi)
    shape = BipartiteShape(*shape)
    shape.check(psi.size)
    t = psi.reshape(shape)
    if keep == "A":
        return t @ t.conj().T
    if keep == "B":
        return t.T @ t.conj()
    raise ValueError(f"keep must be 'A' or 'B', not {keep!r}")


class SchmidtTerm(NamedTuple):
    coefficient: float
    left: np.ndarray
    right: np.ndarray


def schmidt_decompose(
    v, shape: BipartiteShape, threshold: float = DEFAULT_THRESHOLD
) -> list[SchmidtTerm]:
    """Schmidt decomposition ``v = sum_i c_i |l_i> ⊗ |r_i>`` via the SVD.

    Coefficients come back in descending order; terms below
    ``threshold * c_max`` are dropped.
    """
    v = as_vector(v)
    shape = BipartiteShape(*shape)
    shape.check(v.size)
    u, s, vh = np.linalg.svd(v.reshape(shape), full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return []
    keep = s > threshold * s[0]
    return [SchmidtTerm(float(s[i]), u[:, i], vh[i, :]) for i in np.flatnonzero(keep)]


def check_hermitian(m: np.ndarray, tol: float = 1e-10) -> float:
    dev = op_norm(m - dagger(m))
    if dev > tol:
        raise ValidationError(f"matrix is not Hermitian (deviation {dev:.3e})")
    return dev


def support_projector(rho, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Orthogonal projector onto the eigenspaces of ``rho`` with eigenvalue
    above ``threshold`` times the largest one."""
    rho = as_matrix(rho)
    check_hermitian(rho)
    w, vecs = np.linalg.eigh((rho + dagger(rho)) / 2)
    if w.size == 0:
        return np.zeros_like(rho)
    if w.min() < -1e-10 * max(1.0, abs(w.max())):
        raise ValidationError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    top = w.max()
    if top <= 0:
        return np.zeros_like(rho)
    cols = vecs[:, w > threshold * top]
    return cols @ dagger(cols)


def support_basis(rho, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Orthonormal columns spanning the support of a PSD matrix."""
    rho = as_matrix(rho)
    w, vecs = np.linalg.eigh((rho + dagger(rho)) / 2)
    if w.size == 0 or w.max() <= 0:
        return np.zeros((rho.shape[0], 0), dtype=complex)
    return vecs[:, w > threshold * w.max()]


def orthonormal_basis(
    vectors: Sequence, threshold: float = DEFAULT_THRESHOLD
) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis of ``span(vectors)`` and the coordinates of each input.

    Returns ``(basis, coords)`` where ``basis`` has the basis vectors as
    columns (n x r) and ``coords`` is r x len(vectors), so that
    ``basis @ coords`` reproduces the stacked inputs. Rank is the number
    of singular values above ``threshold * s_max``.
    """
    if len(vectors) == 0:
        return np.zeros((0, 0), dtype=complex), np.zeros((0, 0), dtype=complex)
    cols = np.column_stack([as_vector(v) for v in vectors])
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    if s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(s > threshold * s[0]))
    basis = u[:, :rank]
    return basis, dagger(basis) @ cols


def apply_local(op, vec, dims: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """Apply ``op`` to the listed tensor factors of ``vec``.

    ``dims`` are the factor dimensions of ``vec`` (slow to fast). ``op``
    maps the product of the target factors (in the order given) to a new
    space; the output keeps the factor in place, so the result lives on
    ``dims`` with the targets replaced by the op's output factor. When the
    op's output dimension differs from its input, it replaces the first
    target and the remaining targets are dropped.
    """
    op = as_matrix(op)
    vec = as_vector(vec)
    dims = list(dims)
    targets = list(targets)
    in_dim = int(np.prod([dims[t] for t in targets]))
    if op.shape[1] != in_dim or int(np.prod(dims)) != vec.size:
        raise DimensionError(
            f"operator {op.shape} incompatible with factors {dims} at {targets}"
        )
    rest = [i for i in range(len(dims)) if i not in targets]
    t = vec.reshape(dims).transpose(targets + rest).reshape(in_dim, -1)
    out = op @ t
    first = targets[0]
    new_dims = [dims[i] for i in rest]
    # output factor sits where the first target was among the survivors
    insert_at = sum(1 for i in rest if i < first)
    out = out.reshape([op.shape[0]] + new_dims)
    order = list(range(1, insert_at + 1)) + [0] + list(range(insert_at + 1, len(new_dims) + 1))
    return out.transpose(order).reshape(-1)


def permute_factors(vec, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder the tensor factors of ``vec``: output factor k is input factor ``order[k]``."""
    vec = as_vector(vec)
    if sorted(order) != list(range(len(dims))):
        raise DimensionError(f"{order} is not a permutation of {len(dims)} factors")
    return vec.reshape(list(dims)).transpose(list(order)).reshape(-1)


def lift(op, shape: BipartiteShape, side: str) -> np.ndarray:
    """``op ⊗ I`` (side A) or ``I ⊗ op`` (side B) on the joint space."""
    shape = BipartiteShape(*shape)
    if side == "A":
        return np.kron(op, np.eye(shape.dim_b))
    if side == "B":
        return np.kron(np.eye(shape.dim_a), op)
    raise ValueError(f"side must be 'A' or 'B', not {side!r}")


def equal_on_support(
    op1, op2, psi, shape: BipartiteShape, side: str, tol: float = 1e-8,
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[bool, float]:
    """Decide whether two local operators agree on the support of ``psi``.

    The residual is ``||(op1 - op2) P||_op`` with ``P`` the support projector
    of psi's reduced state on ``side``. Only the domain is restricted: the
    operators may map into any space with the same output dimension. For a
    pure state this is equivalent to ``(op1 ⊗ I) psi == (op2 ⊗ I) psi``.
    """
    op1, op2 = as_matrix(op1), as_matrix(op2)
    shape = BipartiteShape(*shape)
    psi = as_vector(psi)
    shape.check(psi.size)
    dim = shape.dim_a if side == "A" else shape.dim_b
    if op1.shape != op2.shape or op1.shape[1] != dim:
        raise DimensionError(f"operators {op1.shape}, {op2.shape} do not act on side {side} (dim {dim})")
    p = support_projector(reduced_state(psi, shape, side), threshold)
    residual = op_norm((op1 - op2) @ p)
    return residual <= tol, residual
