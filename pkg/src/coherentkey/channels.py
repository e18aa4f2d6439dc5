"""Channels with their Stinespring dilations, cqq sources, tripartite states and targets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .qmath import DensityOperator, DimensionError, StateVector, canonical_purification, eig_hermitian

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class QuantumChannel:
    """CPTP map given by Kraus operators; Eve holds the Stinespring environment."""

    kraus_ops: tuple
    name: str = "channel"

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.kraus_ops)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        shapes = {k.shape for k in ops}
        if len(shapes) != 1:
            raise DimensionError("Kraus operators must share one shape")
        object.__setattr__(self, "kraus_ops", ops)
        comp = sum(k.conj().T @ k for k in ops)
        if not np.allclose(comp, np.eye(self.d_in), atol=1e-9):
            raise ValueError("Kraus operators are not trace preserving")

    @property
    def d_in(self) -> int:
        return self.kraus_ops[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.kraus_ops[0].shape[0]

    @property
    def d_env(self) -> int:
        return len(self.kraus_ops)

    @property
    def stinespring(self) -> np.ndarray:
        """Isometry A' -> B (x) E, rows ordered with B major and E minor."""
        v = np.stack(self.kraus_ops, axis=1)  # (d_out, d_env, d_in)
        return v.reshape(self.d_out * self.d_env, self.d_in)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus_ops)

    def complementary(self, rho: np.ndarray) -> np.ndarray:
        v = self.stinespring
        out = (v @ rho @ v.conj().T).reshape(self.d_out, self.d_env, self.d_out, self.d_env)
        return np.einsum("bibj->ij", out)

    def conjugated(self, unitary: np.ndarray) -> "QuantumChannel":
        """Channel rho -> N(U rho U^dagger)."""
        return QuantumChannel(tuple(k @ unitary for k in self.kraus_ops), f"{self.name}*U")


def _drop_zero(ops):
    kept = [k for k in ops if np.abs(k).max() > 0]
    return tuple(kept)


def standard_channel(name: str, p: float = 0.0) -> QuantumChannel:
    """Qubit-input channel from the standard library.

    Exactly-zero Kraus operators are dropped, so ``depolarizing`` at p=0 is the
    identity channel with a one-dimensional environment.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"channel parameter {p} outside [0, 1]")
    if name == "identity":
        ops = (I2,)
    elif name == "depolarizing":
        ops = (np.sqrt(1 - 3 * p / 4) * I2, np.sqrt(p / 4) * X, np.sqrt(p / 4) * Y, np.sqrt(p / 4) * Z)
    elif name == "dephasing":
        ops = (np.sqrt(1 - p) * I2, np.sqrt(p) * Z)
    elif name == "amplitude_damping":
        ops = (np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex),
               np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex))
    elif name == "erasure":
        keep = np.zeros((3, 2), dtype=complex)
        keep[0, 0] = keep[1, 1] = np.sqrt(1 - p)
        e0 = np.zeros((3, 2), dtype=complex)
        e0[2, 0] = np.sqrt(p)
        e1 = np.zeros((3, 2), dtype=complex)
        e1[2, 1] = np.sqrt(p)
        ops = (keep, e0, e1)
    else:
        raise ValueError(f"unknown channel {name!r}")
    return QuantumChannel(_drop_zero(ops), name)


@dataclass(frozen=True)
class CqqSource:
    """Ensemble {P(x), |phi_x>^{BE}} obtained by measuring A in the computational basis.

    ``states`` holds each |phi_x> as a d_B x d_E amplitude matrix.
    """

    probs: np.ndarray
    states: np.ndarray
    d_b: int
    d_e: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        states = np.asarray(self.states, dtype=complex).reshape(len(probs), self.d_b, self.d_e)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "states", states)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError("source probabilities must form a distribution")
        norms = np.linalg.norm(states.reshape(len(probs), -1), axis=1)
        if not np.allclose(norms, 1.0, atol=1e-10):
            raise ValueError("source states must be normalized")

    @property
    def alphabet_size(self) -> int:
        return len(self.probs)

    def state_vector(self, x: int) -> StateVector:
        return StateVector(self.states[x].reshape(-1), (self.d_b, self.d_e), ("B", "E"))

    def reduced(self, x: int, side: str) -> np.ndarray:
        phi = self.states[x]
        if side == "B":
            return phi @ phi.conj().T
        if side == "E":
            return phi.T @ phi.conj()
        raise ValueError(f"side must be 'B' or 'E', got {side!r}")

    def reduced_all(self, side: str) -> np.ndarray:
        return np.stack([self.reduced(x, side) for x in range(self.alphabet_size)])

    def average(self, side: str) -> np.ndarray:
        """omega (side B) or sigma (side E)."""
        return np.einsum("x,xij->ij", self.probs, self.reduced_all(side))

    def side_dim(self, side: str) -> int:
        return self.d_b if side == "B" else self.d_e

    @property
    def schmidt_isometry(self) -> np.ndarray:
        """W = sum_x |phi_x><x| as a (d_B d_E) x |X| matrix."""
        return self.states.reshape(self.alphabet_size, -1).T

    def cqq_matrix(self) -> np.ndarray:
        """Dense sum_x P(x) |x><x| (x) phi_x^{BE}."""
        blocks = [p * np.outer(s.reshape(-1), s.reshape(-1).conj()) for p, s in zip(self.probs, self.states)]
        d = self.d_b * self.d_e
        out = np.zeros((self.alphabet_size * d,) * 2, dtype=complex)
        for x, blk in enumerate(blocks):
            out[x * d:(x + 1) * d, x * d:(x + 1) * d] = blk
        return out

    def swapped(self) -> "CqqSource":
        """Same source with Bob's and Eve's roles exchanged."""
        return CqqSource(self.probs, self.states.transpose(0, 2, 1), self.d_e, self.d_b)


@dataclass(frozen=True)
class TripartiteState:
    """|psi>^{ABE} = sum_x sqrt(P(x)) |x>^A |phi_x>^{BE}."""

    source: CqqSource
    vector: StateVector = field(init=False)

    def __post_init__(self):
        s = self.source
        amps = np.sqrt(s.probs)[:, None, None] * s.states
        object.__setattr__(self, "vector", StateVector(amps.reshape(-1), (s.alphabet_size, s.d_b, s.d_e), ("A", "B", "E")))

    def dephased(self) -> np.ndarray:
        """Density matrix of psi after measuring A in the computational basis."""
        psi = self.vector.amplitudes.reshape(self.source.alphabet_size, -1)
        d = psi.shape[1]
        out = np.zeros((psi.size, psi.size), dtype=complex)
        for x in range(psi.shape[0]):
            out[x * d:(x + 1) * d, x * d:(x + 1) * d] = np.outer(psi[x], psi[x].conj())
        return out


@dataclass(frozen=True)
class TargetResource:
    """``count`` secret-key bits or ebits shared between registers A and B."""

    kind: str
    count: int

    def __post_init__(self):
        if self.kind not in ("secret_key", "ebit"):
            raise ValueError(f"unknown resource kind {self.kind!r}")
        if self.count < 0:
            raise ValueError("resource count must be non-negative")

    def reference(self) -> DensityOperator:
        d = 2 ** self.count
        mat = np.zeros((d * d, d * d), dtype=complex)
        idx = np.arange(d) * (d + 1)
        # entries written as 1/d directly so the marginals are exactly I/d
        if self.kind == "ebit":
            mat[np.ix_(idx, idx)] = 1 / d
        else:
            mat[idx, idx] = 1 / d
        return DensityOperator(mat, (d, d), ("A", "B"))


@dataclass(frozen=True)
class ProtocolParams:
    """Block length, typicality slack, tolerance, rate back-off and seed.

    ``m_bits``/``s_bits`` override the derived code sizes when set. A
    ``rate_backoff`` of None means the typicality slack ``delta`` is used.
    """

    n: int
    delta: float = 0.1
    epsilon: float = 0.1
    rate_backoff: Optional[float] = None
    seed: int = 0
    m_bits: Optional[int] = None
    s_bits: Optional[int] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("block length n must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def backoff(self) -> float:
        return self.delta if self.rate_backoff is None else self.rate_backoff


def source_from_pure(psi: np.ndarray, d_a: int, d_b: int, d_e: int) -> CqqSource:
    """Decompose a pure ABE vector along the computational basis of A.

    Letters with zero weight keep a placeholder state so that the alphabet
    indexing stays aligned with A's basis.
    """
    blocks = np.asarray(psi, dtype=complex).reshape(d_a, d_b, d_e)
    weights = np.einsum("xbe,xbe->x", blocks, blocks.conj()).real
    states = np.zeros_like(blocks)
    for x in range(d_a):
        if weights[x] > 1e-15:
            states[x] = blocks[x] / np.sqrt(weights[x])
        else:
            states[x, 0, 0] = 1.0
            weights[x] = 0.0
    return CqqSource(weights / weights.sum(), states, d_b, d_e)


def channel_to_tripartite(channel: QuantumChannel, input_state: StateVector) -> TripartiteState:
    """Send the A' half of |psi'>^{AA'} through the Stinespring isometry of ``channel``."""
    if len(input_state.dims) != 2:
        raise DimensionError("input must be a bipartite A x A' state")
    d_a, d_ap = input_state.dims
    if d_ap != channel.d_in:
        raise DimensionError(f"input A' dimension {d_ap} != channel input {channel.d_in}")
    psi = input_state.amplitudes.reshape(d_a, d_ap)
    out = psi @ channel.stinespring.T  # (d_a, d_B d_E)
    return TripartiteState(source_from_pure(out, d_a, channel.d_out, channel.d_env))


def ensemble_input(probs: Sequence[float], states: np.ndarray) -> StateVector:
    """sum_x sqrt(P(x)) |x>^A |phi'_x>^{A'} for an input ensemble."""
    probs = np.asarray(probs, dtype=float)
    states = np.asarray(states, dtype=complex)
    amps = np.sqrt(probs)[:, None] * states
    return StateVector.normalized(amps.reshape(-1), (len(probs), states.shape[1]), ("A", "Ap"))


def maximally_entangled_input(d: int = 2) -> StateVector:
    return ensemble_input(np.full(d, 1 / d), np.eye(d))


def channel_source(channel: QuantumChannel, input_state: StateVector | None = None) -> CqqSource:
    input_state = maximally_entangled_input(channel.d_in) if input_state is None else input_state
    return channel_to_tripartite(channel, input_state).source


def state_to_source(psi: TripartiteState) -> CqqSource:
    """Decohere A: read off {P(x), |phi_x>} from the stored vector."""
    s = psi.source
    return source_from_pure(psi.vector.amplitudes, s.alphabet_size, s.d_b, s.d_e)


BELL = np.array([
    [1, 0, 0, 1],
    [1, 0, 0, -1],
    [0, 1, 1, 0],
    [0, 1, -1, 0],
], dtype=complex) / np.sqrt(2)


def bell_diagonal_state(p: Sequence[float]) -> DensityOperator:
    """sum_i p_i |Bell_i><Bell_i| with order Phi+, Phi-, Psi+, Psi-."""
    p = np.asarray(p, dtype=float)
    if p.shape != (4,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-10:
        raise ValueError("Bell-diagonal weights must be a distribution over 4 outcomes")
    mat = np.einsum("i,ia,ib->ab", p, BELL, BELL.conj())
    return DensityOperator(mat, (2, 2), ("A", "B"))


def tripartite_from_density(rho: DensityOperator) -> TripartiteState:
    """Purify a bipartite rho^{AB} with Eve holding the reference.

    A is rotated into the eigenbasis of rho^A first, so that the computational
    basis of A is a Schmidt basis for the A|BE cut.
    """
    if len(rho.dims) != 2:
        raise DimensionError("expected a bipartite state")
    d_a, d_b = rho.dims
    y = canonical_purification(rho.matrix)  # ref x AB
    psi = y.T.reshape(d_a, d_b, y.shape[0])
    rho_a = np.einsum("xbe,ybe->xy", psi, psi.conj())
    _, v = eig_hermitian(rho_a, atol=1e-8)
    psi = np.einsum("xa,xbe->abe", v.conj(), psi)
    return TripartiteState(source_from_pure(psi.reshape(-1), d_a, d_b, y.shape[0]))


def overlap_source(b_overlap: float, e_overlap: float, probs: Sequence[float] = (0.5, 0.5)) -> CqqSource:
    """Two-letter source with real pure conditionals |b_x>|e_x> of the given overlaps.

    Overlap 0 gives orthogonal states, overlap 1 identical states.
    """
    def pair(c):
        theta = np.arccos(np.clip(c, -1.0, 1.0)) / 2
        return np.array([[np.cos(theta), np.sin(theta)], [np.cos(theta), -np.sin(theta)]])

    b, e = pair(b_overlap), pair(e_overlap)
    states = np.stack([np.outer(b[x], e[x]) for x in range(2)])
    return CqqSource(np.asarray(probs, dtype=float), states, 2, 2)


def random_source(rng: np.random.Generator, k: int, d_b: int, d_e: int) -> CqqSource:
    """Dirichlet weights and Haar-ish random pure conditionals on B (x) E."""
    probs = rng.dirichlet(np.ones(k))
    states = rng.normal(size=(k, d_b, d_e)) + 1j * rng.normal(size=(k, d_b, d_e))
    states /= np.linalg.norm(states.reshape(k, -1), axis=1)[:, None, None]
    return CqqSource(probs, states, d_b, d_e)
