"""Random code constructions over typical sequences.

Covers HSW codes decoded with the pretty-good measurement, privacy
amplification sets, key generation codes (HSW codes split into PA rows),
coverings of the typical set by key generation codes, the superposition
quantum code built from a key generation code, and Alice's instrument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channels import CqqSource, ProtocolParams
from .entropy import holevo_information
from .qmath import DimensionError, trace_norm_hermitian
from .typicality import (TypicalSet, conditional_typical_projector, product_state, typical_projector,
                         typical_set)

MAX_SIDE_DIM = 1024
POVM_TOL = 1e-9
DRAW_FACTOR = 100
RE_ROW_CAP = 50


class CodeConstructionError(RuntimeError):
    pass


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream...) so trials never share state."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(s) for s in stream]]))


def _ceil_bits(x: float) -> int:
    return int(math.ceil(x - 1e-9))


def _floor_bits(x: float) -> int:
    return int(math.floor(x + 1e-9))


# ---------------------------------------------------------------------------
# product states of sequences


def kron_sequences(letter_mats: np.ndarray, seqs: np.ndarray) -> np.ndarray:
    """Batch of kron(letter_mats[x_1], ..., letter_mats[x_n]) for each row of ``seqs``."""
    seqs = np.atleast_2d(np.asarray(seqs, dtype=np.int64))
    out = letter_mats[seqs[:, 0]]
    for i in range(1, seqs.shape[1]):
        nxt = letter_mats[seqs[:, i]]
        k, a, b = out.shape
        _, c, d = nxt.shape
        out = np.einsum("kab,kcd->kacbd", out, nxt).reshape(k, a * c, b * d)
    return out


def sequence_side_states(source: CqqSource, seqs: np.ndarray, side: str) -> np.ndarray:
    """phi^side_{x^n} for each sequence, shape (k, d^n, d^n)."""
    dim = source.side_dim(side) ** np.atleast_2d(seqs).shape[1]
    if dim > MAX_SIDE_DIM:
        raise DimensionError(f"{side}-side dimension {dim} exceeds cap {MAX_SIDE_DIM}")
    return kron_sequences(source.reduced_all(side), seqs)


def sequence_amplitudes(source: CqqSource, seqs: np.ndarray) -> np.ndarray:
    """|phi_{x^n}>^{B^n E^n} as (k, d_B^n, d_E^n) amplitude matrices."""
    return kron_sequences(source.states, seqs)


def sigma_power(source: CqqSource, side: str, n: int) -> np.ndarray:
    return product_state([source.average(side)] * n)


# ---------------------------------------------------------------------------
# pretty-good measurement


@dataclass(frozen=True)
class Povm:
    """Elements E_c for each hypothesis plus the completion 1 - sum_c E_c."""

    elements: np.ndarray  # (k, d, d)
    completion: np.ndarray

    def __post_init__(self):
        total = self.elements.sum(axis=0) + self.completion
        if not np.allclose(total, np.eye(total.shape[0]), atol=POVM_TOL):
            raise ValueError("POVM elements do not sum to the identity")
        for e in list(self.elements) + [self.completion]:
            if np.linalg.eigvalsh((e + e.conj().T) / 2).min() < -POVM_TOL:
                raise ValueError("POVM element not positive semidefinite")

    @property
    def size(self) -> int:
        return self.elements.shape[0]

    def all_elements(self) -> np.ndarray:
        return np.concatenate([self.elements, self.completion[None]], axis=0)

    def probabilities(self, states: np.ndarray) -> np.ndarray:
        """Matrix Pr(outcome c | state j), shape (k + 1, len(states))."""
        return np.real(np.einsum("cab,jba->cj", self.all_elements(), states))


def _inv_sqrt_on_support(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.conj().T) / 2)
    cut = max(w.max(), 0.0) * 1e-10
    inv = np.where(w > cut, 1.0 / np.sqrt(np.where(w > cut, w, 1.0)), 0.0)
    return (v * inv) @ v.conj().T


def pgm(states: np.ndarray, weights: Optional[Sequence[float]] = None) -> Povm:
    """Pretty-good measurement for the ensemble {w_c, states[c]}."""
    states = np.asarray(states, dtype=complex)
    k = states.shape[0]
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
    weighted = w[:, None, None] * states
    root = _inv_sqrt_on_support(weighted.sum(axis=0))
    elements = np.matmul(np.matmul(root[None], weighted), root[None])
    elements = (elements + elements.conj().transpose(0, 2, 1)) / 2
    completion = np.eye(states.shape[1]) - elements.sum(axis=0)
    cw, cv = np.linalg.eigh((completion + completion.conj().T) / 2)
    completion = (cv * np.clip(cw, 0.0, None)) @ cv.conj().T
    return Povm(elements, completion)


def success_probabilities(povm: Povm, states: np.ndarray) -> np.ndarray:
    """Tr(E_c phi_c) for each hypothesis c."""
    return np.real(np.einsum("kab,kba->k", povm.elements, states))


# ---------------------------------------------------------------------------
# code sizes and sampling


@dataclass(frozen=True)
class CodeSizes:
    m_bits: int
    s_bits: int
    hsw_bits: int
    typical_count: int
    clamped: bool

    @property
    def M(self) -> int:
        return 2 ** self.m_bits

    @property
    def S(self) -> int:
        return 2 ** self.s_bits


def code_sizes(source: CqqSource, params: ProtocolParams, tset: TypicalSet | None = None) -> CodeSizes:
    """M = 2^{m_bits} key values and S = 2^{s_bits} randomization columns.

    s_bits = ceil(n (I(X;E) + b)), hsw_bits = floor(n (I(X;B) - b)) and
    m_bits = hsw_bits - s_bits (at least 0), with b the rate back-off. Sizes
    are then clamped so that M S fits inside the typical set.
    """
    tset = typical_set(source.probs, params.n, params.delta) if tset is None else tset
    b = params.backoff
    n = params.n
    hsw_bits = _floor_bits(n * (holevo_information(source, "B") - b))
    s_bits = params.s_bits if params.s_bits is not None else max(0, _ceil_bits(n * (holevo_information(source, "E") + b)))
    m_bits = params.m_bits if params.m_bits is not None else max(0, hsw_bits - s_bits)
    cap = int(math.floor(math.log2(tset.cardinality))) if tset.cardinality else 0
    clamped = False
    if m_bits > cap:
        m_bits, clamped = cap, True
    if m_bits + s_bits > cap:
        s_bits, clamped = cap - m_bits, True
    return CodeSizes(m_bits, s_bits, hsw_bits, tset.cardinality, clamped)


def draw_typical(tset: TypicalSet, count: int, rng: np.random.Generator, distinct: bool) -> np.ndarray:
    """Indices into ``tset`` drawn from P^n conditioned on typicality.

    With ``distinct`` repeated draws are discarded until ``count`` distinct
    sequences are found or DRAW_FACTOR * count draws have been spent.
    """
    if tset.cardinality == 0:
        raise CodeConstructionError("typical set is empty")
    p = tset.seq_probs / tset.seq_probs.sum()
    if not distinct:
        return rng.choice(tset.cardinality, size=count, p=p)
    if count > tset.cardinality:
        raise CodeConstructionError(f"requested {count} distinct codewords from {tset.cardinality} typical sequences")
    chosen: list[int] = []
    seen = set()
    budget = DRAW_FACTOR * count
    while len(chosen) < count and budget > 0:
        batch = rng.choice(tset.cardinality, size=min(budget, 4 * count), p=p)
        budget -= batch.size
        for i in batch:
            if i not in seen:
                seen.add(int(i))
                chosen.append(int(i))
                if len(chosen) == count:
                    break
    if len(chosen) < count:
        raise CodeConstructionError(f"only {len(chosen)} of {count} distinct codewords after {DRAW_FACTOR * count} draws")
    return np.asarray(chosen, dtype=np.int64)


# ---------------------------------------------------------------------------
# HSW codes


@dataclass(frozen=True)
class HswCode:
    codewords: np.ndarray  # (k, n)
    povm: Povm
    success: np.ndarray  # per-codeword Tr(E_c phi_c)

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def avg_success(self) -> float:
        return float(self.success.mean())


def hsw_code_from_codewords(source: CqqSource, codewords: np.ndarray, sandwich: bool = False,
                            delta: float = 0.1) -> HswCode:
    """Decode ``codewords`` with the PGM on Bob's exact output states.

    With ``sandwich`` the PGM is built from Pi Pi_c phi_c Pi_c Pi instead, Pi
    the typical and Pi_c the conditionally typical projector.
    """
    codewords = np.atleast_2d(np.asarray(codewords, dtype=np.int64))
    states = sequence_side_states(source, codewords, "B")
    meas_states = states
    if sandwich:
        n = codewords.shape[1]
        pi = typical_projector(source.average("B"), n, delta).matrix()
        sand = []
        for cw, st in zip(codewords, states):
            pic = conditional_typical_projector(source, "B", cw, delta).matrix()
            op = pi @ pic
            sand.append(op @ st @ op.conj().T)
        meas_states = np.stack(sand)
    povm = pgm(meas_states)
    return HswCode(codewords, povm, success_probabilities(povm, states))


def sample_hsw_code(source: CqqSource, params: ProtocolParams, size: int, rng_seed: int,
                    sandwich: bool = False, tset: TypicalSet | None = None) -> HswCode:
    """Random HSW code: distinct typical codewords and PGM decoding."""
    tset = typical_set(source.probs, params.n, params.delta) if tset is None else tset
    idx = draw_typical(tset, size, make_rng(rng_seed, 1), distinct=True)
    return hsw_code_from_codewords(source, tset.sequences[idx], sandwich, params.delta)


# ---------------------------------------------------------------------------
# privacy amplification sets


@dataclass(frozen=True)
class PaSet:
    members: np.ndarray  # (S, n), may repeat when drawn i.i.d.
    leakage: float

    @property
    def size(self) -> int:
        return self.members.shape[0]


def pa_leakage(source: CqqSource, members: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    """Trace distance between the (weighted) average of phi^E over members and sigma^{(x)n}."""
    members = np.atleast_2d(members)
    states = sequence_side_states(source, members, "E")
    w = np.full(len(members), 1.0 / len(members)) if weights is None else weights / weights.sum()
    avg = np.einsum("k,kab->ab", w, states)
    return 0.5 * trace_norm_hermitian(avg - sigma_power(source, "E", members.shape[1]))


def pa_set_from_members(source: CqqSource, members: np.ndarray) -> PaSet:
    members = np.atleast_2d(np.asarray(members, dtype=np.int64))
    return PaSet(members, pa_leakage(source, members))


def sample_pa_set(source: CqqSource, params: ProtocolParams, size: int, rng_seed: int,
                  tset: TypicalSet | None = None) -> PaSet:
    """PA set of ``size`` members drawn i.i.d. (with repetition) from the typical set."""
    tset = typical_set(source.probs, params.n, params.delta) if tset is None else tset
    idx = draw_typical(tset, size, make_rng(rng_seed, 2), distinct=False)
    return pa_set_from_members(source, tset.sequences[idx])


# ---------------------------------------------------------------------------
# key generation codes


@dataclass(frozen=True)
class KeyGenCode:
    """Table u^{ms} of M rows (key values) by S columns; rows are PA sets."""

    table: np.ndarray  # (M, S, n)
    hsw: HswCode  # codewords in row-major (m, s) order
    row_leakages: np.ndarray
    within_budget: bool = True
    budget: float = float("inf")
    attempts: int = 1

    @property
    def M(self) -> int:
        return self.table.shape[0]

    @property
    def S(self) -> int:
        return self.table.shape[1]

    @property
    def n(self) -> int:
        return self.table.shape[2]

    @property
    def max_leakage(self) -> float:
        return float(self.row_leakages.max())

    @property
    def avg_success(self) -> float:
        return self.hsw.avg_success

    def flat(self) -> np.ndarray:
        return self.table.reshape(self.M * self.S, self.n)

    def key_povm(self) -> np.ndarray:
        """Elements grouped by key value m, plus the completion as a last entry."""
        d = self.hsw.povm.completion.shape[0]
        grouped = self.hsw.povm.elements.reshape(self.M, self.S, d, d).sum(axis=1)
        return np.concatenate([grouped, self.hsw.povm.completion[None]], axis=0)


def keygen_code_from_table(source: CqqSource, table: np.ndarray, sandwich: bool = False,
                           delta: float = 0.1) -> KeyGenCode:
    table = np.asarray(table, dtype=np.int64)
    m, s, n = table.shape
    hsw = hsw_code_from_codewords(source, table.reshape(m * s, n), sandwich, delta)
    leaks = np.array([pa_leakage(source, row) for row in table])
    return KeyGenCode(table, hsw, leaks)


def build_keygen_code(source: CqqSource, params: ProtocolParams, M: int, S: int, rng_seed: int,
                      tset: TypicalSet | None = None) -> KeyGenCode:
    """Partitioned HSW code: sample M*S distinct codewords, then choose a row split.

    The leakage budget is twice the mean row leakage of the first random split.
    Splits are redrawn up to RE_ROW_CAP times; the split with the smallest
    worst-row leakage is kept and ``within_budget`` records whether it met
    the budget.
    """
    tset = typical_set(source.probs, params.n, params.delta) if tset is None else tset
    hsw = sample_hsw_code(source, params, M * S, rng_seed, tset=tset)
    cw = hsw.codewords
    rng = make_rng(rng_seed, 3)
    best = None
    budget = None
    attempts = 0
    for attempts in range(1, RE_ROW_CAP + 1):
        order = np.arange(M * S) if attempts == 1 else rng.permutation(M * S)
        leaks = np.array([pa_leakage(source, cw[order[r * S:(r + 1) * S]]) for r in range(M)])
        if budget is None:
            budget = 2.0 * float(leaks.mean())
        if best is None or leaks.max() < best[1].max() - 1e-15:
            best = (order, leaks)
        if leaks.max() <= budget or M == 1:
            break
    order, leaks = best
    table = cw[order].reshape(M, S, params.n)
    # Reorder the decoder to match the table's row-major layout.
    povm = Povm(hsw.povm.elements[order], hsw.povm.completion)
    code = HswCode(table.reshape(M * S, params.n), povm, hsw.success[order])
    return KeyGenCode(table, code, leaks, bool(leaks.max() <= budget + 1e-15), budget, attempts)


# ---------------------------------------------------------------------------
# coverings of the typical set


@dataclass
class CodeCovering:
    """Partition of (most of) the typical set into key generation codes.

    ``assignment`` maps a sequence tuple to its (l, m, s) position. Typical
    sequences beyond the last full block stay unassigned.
    """

    source: CqqSource = field(repr=False)
    codes: list
    tset: TypicalSet
    sizes: CodeSizes
    assignment: dict = field(repr=False)
    uncovered: np.ndarray  # indices into tset.sequences
    tables: np.ndarray  # (L, M, S, n)

    @property
    def L(self) -> int:
        return len(self.tables)

    @property
    def M(self) -> int:
        return self.sizes.M

    @property
    def S(self) -> int:
        return self.sizes.S

    @property
    def uncovered_mass(self) -> float:
        return float(self.tset.seq_probs[self.uncovered].sum())

    @property
    def atypical_mass(self) -> float:
        return 1.0 - self.tset.mass

    @property
    def abort_mass(self) -> float:
        return self.atypical_mass + self.uncovered_mass

    def code(self, l: int) -> KeyGenCode:
        if self.codes[l] is None:
            self.codes[l] = keygen_code_from_table(self.source, self.tables[l], delta=self.tset.delta)
        return self.codes[l]

    def block_mass(self, l: int) -> float:
        return float(sum(np.prod(self.tset.probs[s]) for s in self.tables[l].reshape(-1, self.tset.n)))


def build_covering(source: CqqSource, params: ProtocolParams, rng_seed: int,
                   sizes: CodeSizes | None = None) -> CodeCovering:
    """Shuffle the typical set and slice it into consecutive blocks of M*S sequences.

    Key generation codes (decoders and leakages) are built lazily per block.
    """
    tset = typical_set(source.probs, params.n, params.delta)
    sizes = code_sizes(source, params, tset) if sizes is None else sizes
    block = sizes.M * sizes.S
    perm = make_rng(rng_seed, 4).permutation(tset.cardinality)
    L = tset.cardinality // block if block else 0
    used = perm[: L * block]
    tables = tset.sequences[used].reshape(L, sizes.M, sizes.S, params.n)
    assignment = {}
    for pos, i in enumerate(used):
        l, rem = divmod(pos, block)
        m, s = divmod(rem, sizes.S)
        assignment[tuple(int(v) for v in tset.sequences[i])] = (l, m, s)
    return CodeCovering(source, [None] * L, tset, sizes, assignment, np.sort(perm[L * block:]), tables)


# ---------------------------------------------------------------------------
# quantum codes


def sequence_vectors(letter_vectors: np.ndarray, seqs: np.ndarray) -> np.ndarray:
    """|v_{x_1}> (x) ... (x) |v_{x_n}> for each sequence, shape (k, d^n)."""
    lv = np.asarray(letter_vectors, dtype=complex)
    return kron_sequences(lv[:, :, None], seqs)[:, :, 0]


@dataclass(frozen=True)
class QuantumCode:
    vectors: np.ndarray  # (M, D) normalized
    norms: np.ndarray  # norms before renormalization

    @property
    def M(self) -> int:
        return self.vectors.shape[0]

    def gram(self) -> np.ndarray:
        return self.vectors.conj() @ self.vectors.T


def _row_superpositions(table: np.ndarray, letter_vectors: np.ndarray, phases: np.ndarray) -> np.ndarray:
    M, S, n = table.shape
    vecs = sequence_vectors(letter_vectors, table.reshape(M * S, n)).reshape(M, S, -1)
    return np.einsum("s,msd->md", phases, vecs) / np.sqrt(S)


def quantum_code_from(keygen: KeyGenCode | np.ndarray, input_states: np.ndarray) -> QuantumCode:
    """|phi_m> proportional to sum_s |phi'_{u^{ms}}>, renormalized; raw norms recorded."""
    table = keygen.table if isinstance(keygen, KeyGenCode) else np.asarray(keygen)
    raw = _row_superpositions(table, input_states, np.ones(table.shape[1]))
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("quantum code superposition cancels to zero")
    return QuantumCode(raw / norms[:, None], norms)


def fourier_code_basis(keygen: KeyGenCode | np.ndarray, t: int, letter_vectors: np.ndarray) -> np.ndarray:
    """(1/sqrt S) sum_s e^{2 pi i s t / S} |phi_{u^{ms}}> for each m, with s, t in 1..S."""
    table = keygen.table if isinstance(keygen, KeyGenCode) else np.asarray(keygen)
    S = table.shape[1]
    if not 1 <= t <= S:
        raise ValueError(f"t must lie in 1..{S}")
    s = np.arange(1, S + 1)
    return _row_superpositions(table, letter_vectors, np.exp(2j * np.pi * s * t / S))


# ---------------------------------------------------------------------------
# Alice's instrument


@dataclass(frozen=True)
class AliceInstrument:
    """Operators Lambda_l = sum_{ms} |ms><u^{lms}| and a failure projector.

    ``rows[l]`` lists the computational-basis index of u^{lms} in (m, s)
    row-major order; ``failure`` lists the basis indices of unassigned
    sequences.
    """

    rows: np.ndarray  # (L, M*S)
    failure: np.ndarray
    d: int
    n: int

    @property
    def L(self) -> int:
        return self.rows.shape[0]

    def kraus(self, l: int) -> np.ndarray:
        out = np.zeros((self.rows.shape[1], self.d ** self.n), dtype=complex)
        out[np.arange(self.rows.shape[1]), self.rows[l]] = 1.0
        return out

    def failure_operator(self) -> np.ndarray:
        out = np.zeros((self.d ** self.n,) * 2, dtype=complex)
        out[self.failure, self.failure] = 1.0
        return out

    def completeness_defect(self) -> float:
        total = sum(k.conj().T @ k for k in (self.kraus(l) for l in range(self.L)))
        total = total + self.failure_operator() if self.L else self.failure_operator()
        return float(np.abs(total - np.eye(self.d ** self.n)).max())

    def outcome_probabilities(self, probs: Sequence[float]) -> tuple[np.ndarray, float]:
        """Pr(l) and Pr(failure) when applied to A^n of psi^{(x)n}."""
        seq_p = product_state([np.asarray(probs, dtype=float)] * self.n).reshape(-1)
        return seq_p[self.rows].sum(axis=1), float(seq_p[self.failure].sum())


def alice_instrument(covering: CodeCovering) -> AliceInstrument:
    d, n = len(covering.tset.probs), covering.tset.n
    weights = d ** np.arange(n - 1, -1, -1)
    flat = covering.tables.reshape(covering.L, -1, n)
    rows = (flat * weights).sum(axis=2)
    if len(np.unique(rows)) != rows.size:
        raise ValueError("covering is not a partition")
    failure = np.setdiff1d(np.arange(d ** n), rows.reshape(-1))
    return AliceInstrument(rows.astype(np.int64), failure, d, n)
