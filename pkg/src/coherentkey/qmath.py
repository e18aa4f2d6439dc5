"""Dense linear algebra for multi-register quantum systems.

States and operators carry their subsystem dimensions and register labels so
that reductions can be requested by name. Everything here is immutable and
side-effect free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence, Union

import numpy as np

ATOL = 1e-10
EIG_CLAMP = 1e-12


class DimensionError(ValueError):
    """Raised when operand dimensions or register structures do not match."""


def _as_tuple(values) -> tuple:
    return tuple(int(v) for v in values)


def _default_labels(count: int) -> tuple[str, ...]:
    return tuple(f"R{i}" for i in range(count))


@dataclass(frozen=True)
class ComplexOperator:
    """Matrix with explicit row and column subsystem structure."""

    matrix: np.ndarray
    row_dims: tuple[int, ...]
    col_dims: tuple[int, ...]

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "row_dims", _as_tuple(self.row_dims))
        object.__setattr__(self, "col_dims", _as_tuple(self.col_dims))
        if mat.ndim != 2:
            raise DimensionError("operator must be a matrix")
        if int(np.prod(self.row_dims)) != mat.shape[0]:
            raise DimensionError(f"row dims {self.row_dims} do not match {mat.shape[0]} rows")
        if int(np.prod(self.col_dims)) != mat.shape[1]:
            raise DimensionError(f"col dims {self.col_dims} do not match {mat.shape[1]} columns")

    @classmethod
    def square(cls, matrix, dims: Sequence[int] | None = None) -> "ComplexOperator":
        matrix = np.asarray(matrix, dtype=complex)
        dims = (matrix.shape[0],) if dims is None else dims
        return cls(matrix, dims, dims)

    @property
    def shape(self):
        return self.matrix.shape

    def dag(self) -> "ComplexOperator":
        return ComplexOperator(self.matrix.conj().T, self.col_dims, self.row_dims)

    def is_unitary(self, atol: float = 1e-9) -> bool:
        m = self.matrix
        return m.shape[0] == m.shape[1] and np.allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=atol)


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state on a labelled tensor product of registers."""

    amplitudes: np.ndarray
    dims: tuple[int, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", _as_tuple(self.dims))
        labels = tuple(self.labels) or _default_labels(len(self.dims))
        object.__setattr__(self, "labels", labels)
        if len(labels) != len(self.dims):
            raise DimensionError("one label per register required")
        if len(set(labels)) != len(labels):
            raise DimensionError(f"duplicate register labels {labels}")
        if int(np.prod(self.dims)) != amps.size:
            raise DimensionError(f"dims {self.dims} do not match vector length {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > ATOL:
            raise ValueError(f"state vector not normalized (norm {norm:.3e})")

    @classmethod
    def basis(cls, dim: int, index: int, label: str = "R0") -> "StateVector":
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps, (dim,), (label,))

    @classmethod
    def normalized(cls, amplitudes, dims, labels=()) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm, dims, labels)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped with one axis per register."""
        return self.amplitudes.reshape(self.dims)

    def dm(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()), self.dims, self.labels)

    def relabel(self, labels: Sequence[str]) -> "StateVector":
        return StateVector(self.amplitudes, self.dims, tuple(labels))


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, positive semidefinite, unit-trace operator on labelled registers."""

    matrix: np.ndarray
    dims: tuple[int, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "dims", _as_tuple(self.dims))
        labels = tuple(self.labels) or _default_labels(len(self.dims))
        object.__setattr__(self, "labels", labels)
        if len(labels) != len(self.dims):
            raise DimensionError("one label per register required")
        if len(set(labels)) != len(labels):
            raise DimensionError(f"duplicate register labels {labels}")
        d = int(np.prod(self.dims))
        if mat.shape != (d, d):
            raise DimensionError(f"dims {self.dims} do not match matrix shape {mat.shape}")
        if not np.allclose(mat, mat.conj().T, atol=ATOL):
            raise ValueError("density operator not Hermitian")
        if abs(np.trace(mat).real - 1.0) > ATOL:
            raise ValueError(f"density operator trace {np.trace(mat).real:.12f} != 1")
        if np.linalg.eigvalsh(mat).min() < -ATOL:
            raise ValueError("density operator not positive semidefinite")

    @classmethod
    def maximally_mixed(cls, dim: int, label: str = "R0") -> "DensityOperator":
        return cls(np.eye(dim, dtype=complex) / dim, (dim,), (label,))

    @classmethod
    def diagonal(cls, probs, label: str = "R0") -> "DensityOperator":
        probs = np.asarray(probs, dtype=float)
        return cls(np.diag(probs).astype(complex), (probs.size,), (label,))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def relabel(self, labels: Sequence[str]) -> "DensityOperator":
        return DensityOperator(self.matrix, self.dims, tuple(labels))


Quantum = Union[StateVector, DensityOperator, ComplexOperator]


def _merged_labels(a_labels, b_labels):
    labels = tuple(a_labels) + tuple(b_labels)
    if len(set(labels)) != len(labels):
        # Clashing default names are renumbered; explicit clashes are an error.
        if all(l.startswith("R") and l[1:].isdigit() for l in labels):
            return _default_labels(len(labels))
        raise DimensionError(f"register labels clash: {labels}")
    return labels


def tensor(a: Quantum, b: Quantum) -> Quantum:
    """Kronecker product with dims (and labels) concatenated in argument order."""
    if type(a) is not type(b):
        raise TypeError("tensor operands must be of the same kind")
    if isinstance(a, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes), a.dims + b.dims,
                           _merged_labels(a.labels, b.labels))
    if isinstance(a, DensityOperator):
        return DensityOperator(np.kron(a.matrix, b.matrix), a.dims + b.dims,
                               _merged_labels(a.labels, b.labels))
    return ComplexOperator(np.kron(a.matrix, b.matrix), a.row_dims + b.row_dims, a.col_dims + b.col_dims)


def tensor_power(a: Quantum, n: int) -> Quantum:
    if n < 1:
        raise ValueError("tensor power requires n >= 1")
    if isinstance(a, ComplexOperator):
        return reduce(tensor, [a] * n)
    out = a.relabel([f"{l}_1" for l in a.labels])
    for i in range(2, n + 1):
        out = tensor(out, a.relabel([f"{l}_{i}" for l in a.labels]))
    return out


def reduce_matrix(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace of a dense matrix, keeping the axes in ``keep`` (in that order)."""
    dims = list(dims)
    k = len(dims)
    keep = list(keep)
    drop = [i for i in range(k) if i not in keep]
    t = rho.reshape(dims + dims)
    perm = keep + drop + [k + i for i in keep] + [k + i for i in drop]
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    t = t.transpose(perm).reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def reduce_vector(psi: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix of a pure state without forming the full projector."""
    dims = list(dims)
    keep = list(keep)
    drop = [i for i in range(len(dims)) if i not in keep]
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    t = psi.reshape(dims).transpose(keep + drop).reshape(dk, -1)
    return t @ t.conj().T


def _register_indices(labels: Sequence[str], keep: Sequence[str] | str) -> list[int]:
    if isinstance(keep, str):
        keep = [keep]
    if not keep:
        raise ValueError("keep must name at least one register")
    idx = []
    for name in keep:
        if name not in labels:
            raise KeyError(f"unknown register {name!r}; have {list(labels)}")
        idx.append(list(labels).index(name))
    return idx


def partial_trace(rho: DensityOperator | StateVector, keep: Sequence[str] | str) -> DensityOperator:
    """Reduced state on the named registers, in the order given by ``keep``."""
    idx = _register_indices(rho.labels, keep)
    if isinstance(rho, StateVector):
        mat = reduce_vector(rho.amplitudes, rho.dims, idx)
    else:
        mat = reduce_matrix(rho.matrix, rho.dims, idx)
    mat = (mat + mat.conj().T) / 2
    return DensityOperator(mat, [rho.dims[i] for i in idx], [rho.labels[i] for i in idx])


def eig_hermitian(h: ComplexOperator | np.ndarray, atol: float = ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching unitary of eigenvectors."""
    mat = h.matrix if isinstance(h, (ComplexOperator, DensityOperator)) else np.asarray(h, dtype=complex)
    if mat.shape[0] != mat.shape[1] or not np.allclose(mat, mat.conj().T, atol=atol):
        raise ValueError("eig_hermitian requires a Hermitian matrix")
    w, v = np.linalg.eigh((mat + mat.conj().T) / 2)
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def spectrum(rho: DensityOperator | np.ndarray) -> np.ndarray:
    """Clamped eigenvalues of a density matrix, descending."""
    mat = rho.matrix if isinstance(rho, DensityOperator) else rho
    w = np.linalg.eigvalsh((mat + mat.conj().T) / 2)[::-1]
    return np.where(w < EIG_CLAMP, 0.0, w)


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _check_same_dim(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch {a.shape} vs {b.shape}")


def _matrix_of(x) -> np.ndarray:
    if isinstance(x, StateVector):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    if isinstance(x, (DensityOperator, ComplexOperator)):
        return x.matrix
    return np.asarray(x, dtype=complex)


def trace_norm_hermitian(mat: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh((mat + mat.conj().T) / 2)).sum())


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of the difference."""
    a, b = _matrix_of(rho), _matrix_of(sigma)
    _check_same_dim(a, b)
    # both orderings summed so the result is exactly symmetric in floating point
    return float(min(1.0, 0.25 * (trace_norm_hermitian(a - b) + trace_norm_hermitian(b - a))))


def fidelity(rho, sigma) -> float:
    """Squared Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    if isinstance(sigma, StateVector) or isinstance(rho, StateVector):
        if isinstance(rho, StateVector):
            rho, sigma = sigma, rho
        vec = sigma.amplitudes
        mat = _matrix_of(rho)
        _check_same_dim(mat, np.empty((vec.size, vec.size)))
        return float(np.clip(np.real(vec.conj() @ mat @ vec), 0.0, 1.0))
    a, b = _matrix_of(rho), _matrix_of(sigma)
    _check_same_dim(a, b)
    sa = psd_sqrt(a)
    inner = sa @ b @ sa
    w = np.clip(np.linalg.eigvalsh((inner + inner.conj().T) / 2), 0.0, None)
    return float(np.clip(np.sqrt(w).sum() ** 2, 0.0, 1.0))


def canonical_purification(mat: np.ndarray, ref_dim: int | None = None) -> np.ndarray:
    """Matrix Y (reference x system) with Y^T conj(Y) = mat.

    Row k of Y is sqrt(lambda_k) times the k-th eigenvector. When ``ref_dim`` is
    smaller than the rank, the smallest eigenvalues are dropped and the rest
    renormalized.
    """
    w, v = eig_hermitian(mat, atol=1e-8)
    w = np.where(w < EIG_CLAMP, 0.0, w)
    rank = max(1, int(np.count_nonzero(w)))
    ref = rank if ref_dim is None else ref_dim
    y = np.zeros((ref, mat.shape[0]), dtype=complex)
    keep = min(rank, ref)
    y[:keep] = (np.sqrt(w[:keep])[:, None] * v[:, :keep].T)
    norm = np.linalg.norm(y)
    return y / norm


def purify(rho: DensityOperator, ref_label: str = "ref") -> StateVector:
    """Pure state on rho's registers followed by a reference of dimension rank(rho)."""
    y = canonical_purification(rho.matrix)
    # y is ref x sys; reorder to sys x ref.
    amps = y.T.reshape(-1)
    return StateVector.normalized(amps, rho.dims + (y.shape[0],), rho.labels + (ref_label,))


def _split_matrix(vec: StateVector, act_on: Sequence[str] | str) -> np.ndarray:
    idx = _register_indices(vec.labels, act_on)
    rest = [i for i in range(len(vec.dims)) if i not in idx]
    dp = int(np.prod([vec.dims[i] for i in idx]))
    return vec.tensor().transpose(idx + rest).reshape(dp, -1), idx, rest


def uhlmann_from_matrices(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unitary V on the row space maximizing |<b|(V x 1)|a>|, for a, b as P x Q matrices.

    Cross operator M_ij = sum_q conj(b_iq) a_jq with SVD M = U S W^dagger; the
    maximizer is conj(U W^dagger) in this index convention. Null directions of
    M are completed by the SVD's own orthonormal bases, which is deterministic.
    """
    cross = b.conj() @ a.T
    u, _, wh = np.linalg.svd(cross)
    return (u @ wh).conj()


def uhlmann_unitary(a: StateVector, b: StateVector, act_on: Sequence[str] | str) -> ComplexOperator:
    """Unitary on the ``act_on`` registers relating two purifications of (nearly) the same state."""
    if a.dims != b.dims or a.labels != b.labels:
        raise DimensionError("uhlmann_unitary needs identical register structure")
    am, idx, _ = _split_matrix(a, act_on)
    bm, _, _ = _split_matrix(b, act_on)
    v = uhlmann_from_matrices(am, bm)
    pdims = [a.dims[i] for i in idx]
    return ComplexOperator(v, pdims, pdims)


class LowRankUnitary:
    """Unitary acting as ``V_small`` on span(Q) and as identity on its complement.

    Used when the purifying register is large but the relevant states span a
    small subspace, so the full Uhlmann unitary never has to be stored.
    """

    def __init__(self, basis: np.ndarray, small: np.ndarray):
        self.basis = basis
        self.small = small

    @classmethod
    def uhlmann(cls, a: np.ndarray, b: np.ndarray) -> "LowRankUnitary":
        """Same maximizer as :func:`uhlmann_from_matrices`, restricted to span of a and b columns."""
        q, _ = np.linalg.qr(np.concatenate([a, b], axis=1))
        small = uhlmann_from_matrices(q.conj().T @ a, q.conj().T @ b)
        return cls(q, small)

    def apply(self, x: np.ndarray) -> np.ndarray:
        proj = self.basis.conj().T @ x
        return x + self.basis @ ((self.small - np.eye(self.small.shape[0])) @ proj)

    def apply_dag(self, x: np.ndarray) -> np.ndarray:
        proj = self.basis.conj().T @ x
        return x + self.basis @ ((self.small.conj().T - np.eye(self.small.shape[0])) @ proj)

    def dense(self) -> np.ndarray:
        d = self.basis.shape[0]
        return self.apply(np.eye(d, dtype=complex))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_state(dims: Sequence[int], rng: np.random.Generator, labels=()) -> StateVector:
    d = int(np.prod(dims))
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return StateVector.normalized(z, dims, labels)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return DensityOperator(rho / np.trace(rho).real, (dim,))
