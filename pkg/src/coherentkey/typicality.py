"""Entropy-typical sequences and the typical / conditionally typical subspaces.

Typicality here is weak (entropy) typicality: a sequence is typical when its
per-letter surprisal is within ``delta`` of the entropy. Subspaces are built
from n-fold products of eigenvectors whose eigenvalue sequence is typical.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .channels import CqqSource
from .entropy import conditional_entropy_given_x, entropy_of_spectrum
from .qmath import EIG_CLAMP, DimensionError, eig_hermitian

MAX_ENUMERATION = 2 ** 24
MAX_PROJECTOR_DIM = 2048
TIE_TOL = 1e-10
BOUNDARY_TOL = 1e-12


class EnumerationTooLarge(DimensionError):
    pass


def _surprisal_table(log_tables: Sequence[np.ndarray]) -> np.ndarray:
    """Flattened -log2 probability of every index sequence, last position fastest."""
    return reduce(lambda acc, t: np.add.outer(acc, t).reshape(-1), log_tables[1:], log_tables[0].copy())


def _neg_log2(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(p > 0, -np.log2(np.where(p > 0, p, 1.0)), np.inf)


@dataclass(frozen=True)
class TypicalSet:
    """Entropy-typical sequences of length n for the distribution ``probs``."""

    sequences: np.ndarray  # (count, n) letter indices, lexicographic order
    seq_probs: np.ndarray
    n: int
    delta: float
    probs: np.ndarray
    entropy: float

    @property
    def cardinality(self) -> int:
        return int(self.sequences.shape[0])

    @property
    def mass(self) -> float:
        return float(self.seq_probs.sum())

    @property
    def upper_bound(self) -> float:
        return 2.0 ** (self.n * (self.entropy + self.delta))

    @property
    def lower_bound(self) -> float:
        return 2.0 ** (self.n * (self.entropy - self.delta))

    @property
    def upper_bound_holds(self) -> bool:
        return self.cardinality <= self.upper_bound * (1 + 1e-12)

    @property
    def lower_bound_asserted(self) -> bool:
        """Whether the asymptotic lower bound is claimed at this n (mass above one half)."""
        return self.mass > 0.5

    @property
    def lower_bound_holds(self) -> bool:
        return self.cardinality >= self.lower_bound * (1 - 1e-12)

    @property
    def mass_weighted_lower_bound_holds(self) -> bool:
        """|T| >= mass * 2^{n(H-delta)}, which holds at every n."""
        return self.cardinality >= self.mass * self.lower_bound * (1 - 1e-12)

    def index_of(self) -> dict:
        return {tuple(int(v) for v in s): i for i, s in enumerate(self.sequences)}


def typical_indices(log_tables: Sequence[np.ndarray], target: float, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of typical sequences and their total surprisal, given per-position -log2 tables."""
    n = len(log_tables)
    sizes = [len(t) for t in log_tables]
    if int(np.prod(sizes, dtype=float)) > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"{np.prod(sizes, dtype=float):.0f} sequences exceed the enumeration cap")
    surprisal = _surprisal_table(log_tables)
    with np.errstate(invalid="ignore"):
        ok = np.abs(surprisal / n - target) <= delta + BOUNDARY_TOL
    idx = np.flatnonzero(ok)
    return idx, surprisal[idx]


def typical_set(probs: Sequence[float], n: int, delta: float) -> TypicalSet:
    """Enumerate all |X|^n sequences and keep the entropy-typical ones."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-9:
        raise ValueError("not a probability distribution")
    if n < 1 or delta < 0:
        raise ValueError("need n >= 1 and delta >= 0")
    h = entropy_of_spectrum(probs)
    table = _neg_log2(probs)
    idx, surprisal = typical_indices([table] * n, h, delta)
    seqs = np.stack(np.unravel_index(idx, (len(probs),) * n), axis=1) if idx.size else np.zeros((0, n), int)
    return TypicalSet(seqs.astype(np.int64), np.exp2(-surprisal), n, delta, probs, h)


def sequence_probability(probs: Sequence[float], xn: Sequence[int]) -> float:
    return float(np.prod(np.asarray(probs)[np.asarray(xn)]))


def _grouped_eigh(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition with near-equal eigenvalues snapped to their group mean."""
    w, v = eig_hermitian(mat, atol=1e-8)
    w = np.where(w < EIG_CLAMP, 0.0, w)
    snapped = w.copy()
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or abs(w[i] - w[start]) > TIE_TOL:
            snapped[start:i] = w[start:i].mean()
            start = i
    return snapped, v


@dataclass(frozen=True)
class SubspaceProjector:
    """Projector onto span{ |v_{k_1}> (x) ... (x) |v_{k_n}> : k typical }.

    ``bases[i]`` holds the eigenvectors used at position i as columns. The
    dense matrix is only built on request and only below the size cap.
    """

    bases: tuple
    index_sequences: np.ndarray
    kind: str
    entropy: float
    delta: float
    mass: float
    xn: tuple | None = None

    @property
    def n(self) -> int:
        return len(self.bases)

    @property
    def rank(self) -> int:
        return int(self.index_sequences.shape[0])

    @property
    def dim(self) -> int:
        return int(np.prod([b.shape[0] for b in self.bases]))

    @property
    def lower_bound(self) -> float:
        return 2.0 ** (self.n * (self.entropy - self.delta))

    @property
    def upper_bound(self) -> float:
        return 2.0 ** (self.n * (self.entropy + self.delta))

    @property
    def rank_within_bounds(self) -> bool:
        return self.lower_bound * (1 - 1e-12) <= self.rank <= self.upper_bound * (1 + 1e-12)

    @property
    def sandwich_distance(self) -> float:
        """Trace distance between Pi rho Pi and rho (Pi commutes with the product state)."""
        return 0.5 * (1.0 - self.mass)

    def isometry(self) -> np.ndarray:
        """Columns spanning the subspace, shape (dim, rank)."""
        if self.dim > MAX_PROJECTOR_DIM:
            raise DimensionError(f"projector dimension {self.dim} exceeds cap {MAX_PROJECTOR_DIM}")
        cols = np.ones((1, self.rank), dtype=complex)
        for i, basis in enumerate(self.bases):
            picked = basis[:, self.index_sequences[:, i]]  # (d_i, rank)
            cols = (cols[:, None, :] * picked[None, :, :]).reshape(cols.shape[0] * basis.shape[0], self.rank)
        return cols

    def matrix(self) -> np.ndarray:
        iso = self.isometry()
        return iso @ iso.conj().T


def _projector(bases, eig_lists, target, delta, kind, xn=None) -> SubspaceProjector:
    tables = [_neg_log2(w) for w in eig_lists]
    idx, surprisal = typical_indices(tables, target, delta)
    dims = tuple(len(w) for w in eig_lists)
    seqs = np.stack(np.unravel_index(idx, dims), axis=1) if idx.size else np.zeros((0, len(dims)), int)
    mass = float(np.exp2(-surprisal).sum())
    return SubspaceProjector(tuple(bases), seqs.astype(np.int64), kind, target, delta, mass, xn)


def typical_projector(rho, n: int, delta: float) -> SubspaceProjector:
    """Typical subspace of rho^{(x)n}; its rank is the typical-set size of rho's spectrum."""
    mat = getattr(rho, "matrix", rho)
    w, v = _grouped_eigh(np.asarray(mat, dtype=complex))
    h = entropy_of_spectrum(w)
    return _projector([v] * n, [w] * n, h, delta, "typical")


def conditional_typical_projector(source: CqqSource, side: str, xn: Sequence[int], delta: float) -> SubspaceProjector:
    """Conditionally typical subspace for the product of phi_{x_i}^side.

    Position i uses the eigenbasis of phi_{x_i}^side; the target entropy is
    H(side|X). Membership of ``xn`` in the typical set is the caller's concern.
    """
    xn = tuple(int(x) for x in xn)
    decomps = {x: _grouped_eigh(source.reduced(x, side)) for x in set(xn)}
    target = conditional_entropy_given_x(source, side)
    return _projector([decomps[x][1] for x in xn], [decomps[x][0] for x in xn], target, delta,
                      "conditional", xn)


def product_state(mats: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats)


@dataclass(frozen=True)
class ContainmentReport:
    n: int
    sandwiched_weight: float  # Tr(Pi Pi_c Pi phi_xn)
    conditional_weight: float  # Tr(Pi_c phi_xn)

    @property
    def gap(self) -> float:
        return self.conditional_weight - self.sandwiched_weight


def containment_check(source: CqqSource, side: str, xn: Sequence[int], delta: float) -> ContainmentReport:
    """How much of the conditional subspace's weight survives sandwiching by the typical projector."""
    n = len(xn)
    pi = typical_projector(source.average(side), n, delta).matrix()
    pic = conditional_typical_projector(source, side, xn, delta).matrix()
    phi = product_state([source.reduced(int(x), side) for x in xn])
    sandwiched = float(np.real(np.trace(pi @ pic @ pi @ phi)))
    direct = float(np.real(np.trace(pic @ phi)))
    return ContainmentReport(n, sandwiched, direct)
