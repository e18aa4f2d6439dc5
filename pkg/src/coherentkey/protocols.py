"""Engines for the four resource-conversion scenarios and entanglement transmission.

Key generation and key distillation work with classical-quantum output
blocks; the two entanglement protocols propagate the full global pure state
through Bob's coherent measurement and the Uhlmann decoupling step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channels import (CqqSource, ProtocolParams, QuantumChannel, TargetResource, channel_to_tripartite,
                       maximally_entangled_input)
from .codes import (CodeCovering, KeyGenCode, Povm, build_covering, build_keygen_code, code_sizes, make_rng,
                    quantum_code_from, sequence_amplitudes, sequence_side_states)
from .qmath import (DimensionError, LowRankUnitary, StateVector, canonical_purification, psd_sqrt,
                    trace_norm_hermitian)
from .typicality import typical_set

MAX_AMPLITUDES = 2 ** 21
EXACT_BRANCH_BUDGET = 4096
GRAM_COND_CAP = 1e6


class InfeasibleError(DimensionError):
    """The requested run exceeds the dense-simulation caps."""


@dataclass
class ProtocolOutcome:
    scenario: str
    target: TargetResource
    distance_to_target: float
    eve_decoupling: float
    classical_bits_sent: int
    params: ProtocolParams
    M: int = 1
    S: int = 1
    L: int = 0
    fidelity: Optional[float] = None
    fidelity_without_decoupling: Optional[float] = None
    ebit_fidelity: Optional[float] = None
    agreement: Optional[float] = None
    agreement_exact: Optional[float] = None
    avg_success: Optional[float] = None
    leakage: Optional[float] = None
    abort_mass: float = 0.0
    mode: str = "exact"
    backward_bits: int = 0
    messages: list = field(default_factory=list)
    final_state: Optional[StateVector] = None
    extras: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.params.seed

    @property
    def key_bits(self) -> int:
        return self.target.count

    def rate(self) -> float:
        return self.target.count / self.params.n


def _forward(name: str, bits: int) -> tuple:
    return ("A->B", name, int(bits))


def _log2_ceil(k: int) -> int:
    return int(math.ceil(math.log2(k))) if k > 1 else 0


def input_letters(input_state: StateVector) -> tuple[np.ndarray, np.ndarray]:
    """P(x) and normalized |phi'_x> rows from sum_x sqrt(P(x)) |x>|phi'_x>."""
    d_a, d_in = input_state.dims
    rows = input_state.amplitudes.reshape(d_a, d_in)
    weights = np.einsum("xi,xi->x", rows, rows.conj()).real
    letters = np.zeros_like(rows)
    for x in range(d_a):
        if weights[x] > 1e-15:
            letters[x] = rows[x] / np.sqrt(weights[x])
        else:
            letters[x, 0] = 1.0
    return weights / weights.sum(), letters


def apply_channel_power(vectors: np.ndarray, channel: QuantumChannel, n: int) -> np.ndarray:
    """Apply the n-fold Stinespring isometry to vectors on A'^n; returns (k, d_B^n, d_E^n)."""
    k = vectors.shape[0]
    d_in, d_b, d_e = channel.d_in, channel.d_out, channel.d_env
    v = channel.stinespring.reshape(d_b, d_e, d_in)
    t = vectors.reshape((k,) + (d_in,) * n)
    for _ in range(n):
        # contract the leading input axis, append (b, e) at the end
        t = np.tensordot(t, v, axes=([1], [2]))
    # axes now: k, b1, e1, b2, e2, ...
    perm = [0] + [1 + 2 * i for i in range(n)] + [2 + 2 * i for i in range(n)]
    return t.transpose(perm).reshape(k, d_b ** n, d_e ** n)


def coherent_measurement(povm: Povm) -> np.ndarray:
    """Isometry |psi> -> sum_c |c> (x) sqrt(E_c)|psi>, as a ((k+1) d) x d matrix.

    The outcome register is the leading tensor factor; the completion is the
    last outcome.
    """
    roots = np.stack([psd_sqrt(e) for e in povm.all_elements()])
    return roots.reshape(-1, roots.shape[-1])


def _sqrt_elements(povm: Povm) -> np.ndarray:
    return np.stack([psd_sqrt(e) for e in povm.all_elements()])


def _check_size(*dims):
    total = int(np.prod([float(d) for d in dims]))
    if total > MAX_AMPLITUDES:
        raise InfeasibleError(f"state with {total} amplitudes exceeds cap {MAX_AMPLITUDES}")


def _measure(roots: np.ndarray, amps: np.ndarray) -> np.ndarray:
    """Bob's coherent measurement on amplitudes (..., d_B, d_E) -> (..., c, d_B, d_E)."""
    return np.einsum("cbk,...ke->...cbe", roots, amps)


def _relabel(t: np.ndarray, M: int, S: int) -> np.ndarray:
    """Split outcome (m, s) into Bob's key register and the s part of B'.

    The completion outcome goes to key value 0 with the extra s level S.
    """
    lead = t.shape[:-3]
    d_b, d_e = t.shape[-2:]
    out = np.zeros(lead + (M, S + 1, d_b, d_e), dtype=complex)
    out[..., :S, :, :] = t[..., : M * S, :, :].reshape(lead + (M, S, d_b, d_e))
    out[..., 0, S, :, :] = t[..., M * S, :, :]
    return out


@dataclass
class Decoupling:
    """Result of the controlled-Uhlmann step on a relabelled global state."""

    final: np.ndarray  # (M_A, M_B, S+1, d_B, d_E)
    purification: np.ndarray  # phi_theta as (S+1) d_B x d_E
    unitaries: list
    theta: np.ndarray
    fidelity: float
    fidelity_without: float
    ebit_fidelity: float
    eve_decoupling: float
    theta_truncated: bool


def _eve_state(x: np.ndarray) -> np.ndarray:
    return x.T @ x.conj()


def decouple(t2: np.ndarray, unitaries: Optional[list] = None, purification: Optional[np.ndarray] = None,
             apply_v: bool = True) -> Decoupling:
    """theta^E from the diagonal blocks, Uhlmann unitaries V_m, and controlled V^dagger on B'.

    ``t2`` has axes (m_A, m_B, s, b, e). If ``unitaries``/``purification`` are
    given they are used instead of being derived from ``t2``.
    """
    M = t2.shape[0]
    d_e = t2.shape[-1]
    p_dim = t2.shape[2] * t2.shape[3]
    diag = [t2[m, m].reshape(p_dim, d_e) for m in range(M)]
    weights = np.array([np.vdot(x, x).real for x in diag])
    tilde = [x / np.sqrt(w) if w > 1e-300 else x for x, w in zip(diag, weights)]
    eve = [_eve_state(x) for x in tilde]
    theta = sum(eve) / M
    truncated = False
    if purification is None:
        rank = int(np.count_nonzero(np.linalg.eigvalsh(theta) > 1e-12))
        truncated = rank > p_dim
        y = canonical_purification(theta, ref_dim=min(max(rank, 1), p_dim))
        purification = np.zeros((p_dim, d_e), dtype=complex)
        purification[: y.shape[0]] = y
    if unitaries is None:
        unitaries = [LowRankUnitary.uhlmann(purification, x) for x in tilde]
    final = t2.copy()
    if apply_v:
        for mb in range(M):
            block = t2[:, mb].reshape(M, p_dim, d_e)
            for ma in range(M):
                final[ma, mb] = unitaries[mb].apply_dag(block[ma]).reshape(t2.shape[2:])
    y = purification

    def overlap(state):
        amp = sum(np.vdot(y, state[m, m].reshape(p_dim, d_e)) for m in range(M)) / np.sqrt(M)
        return float(abs(amp) ** 2)

    ebit_vec = sum(final[m, m] for m in range(M)) / np.sqrt(M)
    return Decoupling(
        final=final, purification=y, unitaries=unitaries, theta=theta,
        fidelity=min(1.0, overlap(final)),
        fidelity_without=min(1.0, overlap(t2)),
        ebit_fidelity=min(1.0, float(np.vdot(ebit_vec, ebit_vec).real)),
        eve_decoupling=max(0.5 * trace_norm_hermitian(e - theta) for e in eve),
        theta_truncated=truncated,
    )


def _final_vector(final: np.ndarray) -> Optional[StateVector]:
    if final.size > MAX_AMPLITUDES:
        return None
    m, _, s1, d_b, d_e = final.shape
    vec = final.reshape(-1)
    norm = np.linalg.norm(vec)
    return StateVector(vec / norm, (m, m, s1, d_b, d_e), ("A", "B", "B1", "B2", "E"))


# ---------------------------------------------------------------------------
# secret key generation and distillation


def _ccq_blocks(amps: np.ndarray, weights: np.ndarray, grouped: np.ndarray) -> np.ndarray:
    """Unnormalized Eve blocks theta[m, mhat] = sum_s w_ms Tr_B[(G_mhat x 1) phi_ms].

    ``amps`` is (M, S, d_B, d_E), ``weights`` (M, S), ``grouped`` (M+1, d_B, d_B).
    """
    M, S = weights.shape
    out = np.zeros((M, grouped.shape[0], amps.shape[-1], amps.shape[-1]), dtype=complex)
    for g, op in enumerate(grouped):
        y = np.matmul(op[None, None], amps)
        out[:, g] = np.einsum("ms,msce,mscf->mef", weights, y, amps.conj())
    return out


def _ccq_metrics(blocks: np.ndarray, mass: float) -> dict:
    """Distance of the ccq blocks (total weight ``mass``) to mass * uniform key (x) theta."""
    M = blocks.shape[0]
    eve_given_m = blocks.sum(axis=1)
    theta = eve_given_m.sum(axis=0) / mass
    dist = 0.0
    for m in range(M):
        for g in range(blocks.shape[1]):
            target = theta * mass / M if g == m else 0.0
            dist += 0.5 * trace_norm_hermitian(blocks[m, g] - target)
    leak = []
    for m in range(M):
        w = np.trace(eve_given_m[m]).real
        if w > 0:
            leak.append(0.5 * trace_norm_hermitian(eve_given_m[m] / w - theta))
    agreement = float(sum(np.trace(blocks[m, m]).real for m in range(M)))
    return {"distance": dist, "eve": max(leak) if leak else 0.0, "agreement": agreement, "theta": theta}


def run_key_generation(channel: QuantumChannel, input_state: Optional[StateVector], params: ProtocolParams,
                       keygen: Optional[KeyGenCode] = None) -> ProtocolOutcome:
    """Alice sends a random column of row m of the key generation code; Bob decodes m."""
    input_state = maximally_entangled_input(channel.d_in) if input_state is None else input_state
    source = channel_to_tripartite(channel, input_state).source
    return _key_generation_from_source(source, params, keygen)


def _key_generation_from_source(source: CqqSource, params: ProtocolParams,
                                keygen: Optional[KeyGenCode] = None) -> ProtocolOutcome:
    tset = typical_set(source.probs, params.n, params.delta)
    sizes = code_sizes(source, params, tset)
    if keygen is None:
        keygen = build_keygen_code(source, params, sizes.M, sizes.S, params.seed, tset=tset)
    M, S = keygen.M, keygen.S
    _check_size(M * S, source.d_b ** params.n, source.d_e ** params.n)
    amps = sequence_amplitudes(source, keygen.flat()).reshape(M, S, source.d_b ** params.n, source.d_e ** params.n)
    blocks = _ccq_blocks(amps, np.full((M, S), 1.0 / (M * S)), keygen.key_povm())
    met = _ccq_metrics(blocks, 1.0)
    m_bits = int(round(math.log2(M)))
    return ProtocolOutcome(
        scenario="keygen", target=TargetResource("secret_key", m_bits),
        distance_to_target=min(1.0, met["distance"]), eve_decoupling=met["eve"], classical_bits_sent=0,
        params=params, M=M, S=S, agreement=met["agreement"], agreement_exact=met["agreement"],
        avg_success=keygen.avg_success, leakage=keygen.max_leakage,
        extras={"blocks": blocks, "theta": met["theta"], "keygen": keygen, "within_budget": keygen.within_budget},
    )


def run_key_distillation(source: CqqSource, params: ProtocolParams, trials: int = 200,
                         covering: Optional[CodeCovering] = None) -> ProtocolOutcome:
    """Alice measures x^n, announces which key generation code contains it, Bob decodes m.

    Exact ccq metrics are computed over every covering block; ``agreement``
    is the Monte-Carlo estimate from ``trials`` sampled runs, with atypical or
    uncovered outcomes counted as aborts.
    """
    covering = build_covering(source, params, params.seed) if covering is None else covering
    M, S, L, n = covering.M, covering.S, covering.L, params.n
    d_b, d_e = source.d_b ** n, source.d_e ** n
    _check_size(M * S, d_b, d_e)
    dist = covering.abort_mass
    agreement_exact = 0.0
    eve = 0.0
    success_tables = []
    for l in range(L):
        code = covering.code(l)
        probs = np.prod(covering.tset.probs[code.table], axis=2)  # (M, S)
        amps = sequence_amplitudes(source, code.flat()).reshape(M, S, d_b, d_e)
        blocks = _ccq_blocks(amps, probs, code.key_povm())
        met = _ccq_metrics(blocks, probs.sum())
        dist += met["distance"]
        agreement_exact += met["agreement"]
        eve = max(eve, met["eve"])
        states_b = sequence_side_states(source, code.flat(), "B")
        success_tables.append(np.real(np.einsum("gab,kba->kg", code.key_povm(), states_b)))

    rng = make_rng(params.seed, 10)
    letters = rng.choice(len(source.probs), size=(trials, n), p=source.probs)
    agree = 0
    aborts = 0
    for xn in letters:
        pos = covering.assignment.get(tuple(int(v) for v in xn))
        if pos is None:
            aborts += 1
            continue
        l, m, s = pos
        p_out = np.clip(success_tables[l][m * S + s], 0.0, None)
        guess = rng.choice(len(p_out), p=p_out / p_out.sum())
        agree += int(guess == m)
    bits = _log2_ceil(L)
    avg_success = float(np.mean([covering.code(l).avg_success for l in range(L)])) if L else None
    return ProtocolOutcome(
        scenario="keydist", target=TargetResource("secret_key", int(round(math.log2(M)))),
        distance_to_target=min(1.0, dist), eve_decoupling=eve, classical_bits_sent=bits,
        params=params, M=M, S=S, L=L,
        agreement=agree / trials, agreement_exact=agreement_exact, avg_success=avg_success,
        leakage=max((covering.code(l).max_leakage for l in range(L)), default=None),
        abort_mass=covering.abort_mass, mode="monte_carlo",
        messages=[_forward("which code l", bits)],
        extras={"trials": trials, "mc_aborts": aborts, "covering": covering},
    )


# ---------------------------------------------------------------------------
# entanglement generation and transmission


@dataclass
class GenerationDecoder:
    """Bob's decoder: coherent PGM measurement, relabelling, then controlled V_m^dagger."""

    roots: np.ndarray
    M: int
    S: int
    unitaries: list
    purification: np.ndarray

    def decode(self, amps: np.ndarray, apply_v: bool = True) -> Decoupling:
        """Decode amplitudes (R, d_B^n, d_E^n) of a global state with leading reference index."""
        t2 = _relabel(_measure(self.roots, amps), self.M, self.S)
        if t2.shape[0] != self.M:
            raise ValueError("reference register must have dimension M for decoupling")
        return decouple(t2, self.unitaries, self.purification, apply_v)


def _code_images(source: CqqSource, keygen: KeyGenCode) -> tuple[np.ndarray, np.ndarray]:
    """Channel images of the quantum code vectors, (M, d_B^n, d_E^n), and raw norms."""
    n = keygen.n
    amps = sequence_amplitudes(source, keygen.flat()).reshape(keygen.M, keygen.S, source.d_b ** n, source.d_e ** n)
    raw = amps.sum(axis=1) / np.sqrt(keygen.S)
    norms = np.sqrt(np.einsum("mbe,mbe->m", raw, raw.conj()).real)
    if np.any(norms < 1e-12):
        raise ValueError("quantum code superposition cancels to zero")
    return raw / norms[:, None, None], norms


def _generation_core(images: np.ndarray, keygen: KeyGenCode, apply_v: bool = True):
    M, S = keygen.M, keygen.S
    _check_size(M, M, S + 1, images.shape[1], images.shape[2])
    roots = _sqrt_elements(keygen.hsw.povm)
    psi = images / np.sqrt(M)
    t2 = _relabel(_measure(roots, psi), M, S)
    dec = decouple(t2, apply_v=apply_v)
    return dec, GenerationDecoder(roots, M, S, dec.unitaries, dec.purification)


def run_entanglement_generation(channel: QuantumChannel, input_state: Optional[StateVector], params: ProtocolParams,
                                keygen: Optional[KeyGenCode] = None, apply_v: bool = True) -> ProtocolOutcome:
    """Send half of sum_m |m>|phi_m> through the channel and decode coherently.

    Reports the fidelity with Phi_M (x) phi_theta (``fidelity``), the same
    quantity with the controlled unitary omitted, and the fidelity of the AB
    part with Phi_M (``ebit_fidelity``).
    """
    input_state = maximally_entangled_input(channel.d_in) if input_state is None else input_state
    source = channel_to_tripartite(channel, input_state).source
    tset = typical_set(source.probs, params.n, params.delta)
    sizes = code_sizes(source, params, tset)
    if keygen is None:
        keygen = build_keygen_code(source, params, sizes.M, sizes.S, params.seed, tset=tset)
    images, norms = _code_images(source, keygen)
    dec, decoder = _generation_core(images, keygen, apply_v)
    m_bits = int(round(math.log2(keygen.M)))
    return ProtocolOutcome(
        scenario="entgen", target=TargetResource("ebit", m_bits),
        distance_to_target=float(np.sqrt(max(0.0, 1.0 - dec.fidelity))), eve_decoupling=dec.eve_decoupling,
        classical_bits_sent=0, params=params, M=keygen.M, S=keygen.S,
        fidelity=dec.fidelity, fidelity_without_decoupling=dec.fidelity_without, ebit_fidelity=dec.ebit_fidelity,
        avg_success=keygen.avg_success, leakage=keygen.max_leakage,
        final_state=_final_vector(dec.final),
        extras={"keygen": keygen, "decoder": decoder, "code_norms": norms, "theta": dec.theta,
                "theta_truncated": dec.theta_truncated},
    )


def _orthonormalize(vectors: np.ndarray) -> np.ndarray:
    """Rows v_m -> sum_k (G^{-1/2})_{km} v_k, G the Gram matrix."""
    gram = vectors.conj() @ vectors.T
    if np.allclose(gram, np.eye(len(gram)), atol=1e-10):
        return vectors
    if np.linalg.cond(gram) > GRAM_COND_CAP:
        raise ValueError("quantum code Gram matrix too ill-conditioned to orthonormalize")
    w, v = np.linalg.eigh(gram)
    inv_root = (v / np.sqrt(w)) @ v.conj().T
    return (vectors.T @ inv_root).T


def run_entanglement_transmission(channel: QuantumChannel, code_vectors: Optional[np.ndarray],
                                  message: StateVector, params: ProtocolParams,
                                  input_state: Optional[StateVector] = None,
                                  keygen: Optional[KeyGenCode] = None) -> ProtocolOutcome:
    """Encode ``message`` (a pure state on R (x) msg) with sum_m |phi_m><m| and decode.

    ``code_vectors`` are the quantum code rows on A'^n; when None they are
    built from the key generation code of the same seed. The decoder is the
    one entanglement generation derives for that code.
    """
    input_state = maximally_entangled_input(channel.d_in) if input_state is None else input_state
    source = channel_to_tripartite(channel, input_state).source
    tset = typical_set(source.probs, params.n, params.delta)
    sizes = code_sizes(source, params, tset)
    if keygen is None:
        keygen = build_keygen_code(source, params, sizes.M, sizes.S, params.seed, tset=tset)
    _, letters = input_letters(input_state)
    if code_vectors is None:
        code_vectors = quantum_code_from(keygen, letters).vectors
    M = keygen.M
    if len(message.dims) != 2 or message.dims[1] != M:
        raise DimensionError(f"message must live on R (x) msg with msg dimension {M}")
    enc = _orthonormalize(np.asarray(code_vectors, dtype=complex))
    images = apply_channel_power(enc, channel, params.n)
    _, decoder = _generation_core(images, keygen)
    omega = message.amplitudes.reshape(message.dims)
    global_amps = np.einsum("rk,kbe->rbe", omega, images)
    t2 = _relabel(_measure(decoder.roots, global_amps), M, keygen.S)
    p_dim = t2.shape[2] * t2.shape[3]
    final = np.empty_like(t2)
    for mb in range(M):
        for r in range(t2.shape[0]):
            final[r, mb] = decoder.unitaries[mb].apply_dag(t2[r, mb].reshape(p_dim, -1)).reshape(t2.shape[2:])
    residual = np.einsum("rk,rkabe->abe", omega.conj(), final)
    ent_fid = float(np.vdot(residual, residual).real)
    m_bits = int(round(math.log2(M)))
    return ProtocolOutcome(
        scenario="enttrans", target=TargetResource("ebit", m_bits),
        distance_to_target=float(np.sqrt(max(0.0, 1.0 - ent_fid))), eve_decoupling=0.0,
        classical_bits_sent=0, params=params, M=M, S=keygen.S,
        fidelity=ent_fid, ebit_fidelity=ent_fid, avg_success=keygen.avg_success, leakage=keygen.max_leakage,
        extras={"keygen": keygen},
    )


# ---------------------------------------------------------------------------
# entanglement distillation


def _fourier_dispose(t: np.ndarray, t_index: int, M: int, S: int) -> np.ndarray:
    """Alice projects her s register onto |t^> and Bob applies the matching phase.

    ``t`` has axes (m_A, s_A, c, b, e); returns the unnormalized (m_A, c, b, e)
    branch. Indices s, t run over 0..S-1 here.
    """
    s = np.arange(S)
    bra = np.exp(-2j * np.pi * s * t_index / S) / np.sqrt(S)
    branch = np.einsum("s,mscbe->mcbe", bra, t)
    c = np.arange(t.shape[2])
    s_of_c = np.where(c < M * S, c % S, S)
    phase = np.exp(2j * np.pi * s_of_c * t_index / S)
    return branch * phase[None, :, None, None]


def _distill_branch(source: CqqSource, covering: CodeCovering, l: int):
    """Global state after Alice's outcome l and Bob's coherent measurement, axes (m, s, c, b, e)."""
    code = covering.code(l)
    n = covering.tset.n
    M, S = code.M, code.S
    probs = np.prod(covering.tset.probs[code.table], axis=2)
    p_l = probs.sum()
    amp = np.sqrt(probs / p_l)
    phis = sequence_amplitudes(source, code.flat()).reshape(M, S, source.d_b ** n, source.d_e ** n)
    roots = _sqrt_elements(code.hsw.povm)
    t = np.einsum("ms,cbk,mske->mscbe", amp, roots, phis)
    return t, p_l, amp, phis, roots


def run_entanglement_distillation(source: CqqSource, params: ProtocolParams,
                                  covering: Optional[CodeCovering] = None, trials: int = 64) -> ProtocolOutcome:
    """Coherent key distillation: instrument {Lambda_l}, coherent decoding, Fourier disposal of s.

    Branches (l, t) are simulated exactly. When there are more than
    EXACT_BRANCH_BUDGET of them, ``trials`` values of l are sampled instead.
    Failure outcomes of the instrument count fully toward the distance.
    """
    covering = build_covering(source, params, params.seed) if covering is None else covering
    M, S, L, n = covering.M, covering.S, covering.L, params.n
    _check_size(M * S, M * S + 1, source.d_b ** n, source.d_e ** n)
    p_ls = np.array([covering.block_mass(l) for l in range(L)])
    if L * S <= EXACT_BRANCH_BUDGET:
        mode, branches = "exact", [(l, p_ls[l]) for l in range(L)]
    else:
        mode = "monte_carlo"
        rng = make_rng(params.seed, 11)
        picks = rng.choice(L, size=trials, p=p_ls / p_ls.sum())
        branches = [(int(l), p_ls.sum() / trials) for l in picks]
    fid = fid_without = ebit = dist = 0.0
    eve = 0.0
    truncated = False
    for l, weight in branches:
        t, _, _, _, _ = _distill_branch(source, covering, l)
        for ti in range(S):
            branch = _fourier_dispose(t, ti, M, S)
            p_t = float(np.vdot(branch, branch).real)
            if p_t < 1e-15:
                continue
            dec = decouple(_relabel(branch / np.sqrt(p_t), M, S))
            w = weight * p_t
            fid += w * dec.fidelity
            fid_without += w * dec.fidelity_without
            ebit += w * dec.ebit_fidelity
            dist += w * np.sqrt(max(0.0, 1.0 - dec.fidelity))
            eve = max(eve, dec.eve_decoupling)
            truncated |= dec.theta_truncated
    l_bits = _log2_ceil(L)
    t_bits = _log2_ceil(S)
    abort = covering.abort_mass
    return ProtocolOutcome(
        scenario="entdist", target=TargetResource("ebit", int(round(math.log2(M)))),
        distance_to_target=min(1.0, dist + abort), eve_decoupling=eve,
        classical_bits_sent=l_bits + t_bits, params=params, M=M, S=S, L=L,
        fidelity=fid, fidelity_without_decoupling=fid_without, ebit_fidelity=ebit,
        avg_success=float(np.mean([covering.code(l).avg_success for l in range(L)])) if L else None,
        abort_mass=abort, mode=mode,
        messages=[_forward("which code l", l_bits), _forward("Fourier outcome t", t_bits)],
        extras={"covering": covering, "theta_truncated": truncated},
    )


def fourier_identity_residuals(source: CqqSource, covering: CodeCovering, l: int = 0) -> dict:
    """Compare the engine's Fourier disposal with directly built target states, for every t.

    ``decoded``: the correctly decoded part of Bob's coherent measurement
    output, after Alice's |t^> projection and Bob's phase, against
    (1/sqrt S) sum_ms a_ms |m>|ms> sqrt(E_ms)|phi_ms>.
    ``ideal``: the same for a perfect decoder, where Bob's register holds ms
    exactly.
    """
    t, _, amp, phis, roots = _distill_branch(source, covering, l)
    M, S = amp.shape
    c_dim = roots.shape[0]
    correct = np.zeros_like(t)
    for m in range(M):
        for s in range(S):
            correct[m, s, m * S + s] = t[m, s, m * S + s]
    ideal = np.zeros_like(t)
    for m in range(M):
        for s in range(S):
            ideal[m, s, m * S + s] = amp[m, s] * phis[m, s]
    out = {"decoded": [], "ideal": []}
    for ti in range(S):
        expect_dec = np.zeros((M, c_dim) + phis.shape[2:], dtype=complex)
        expect_ideal = np.zeros_like(expect_dec)
        for m in range(M):
            for s in range(S):
                c = m * S + s
                expect_dec[m, c] = amp[m, s] * (roots[c] @ phis[m, s]) / np.sqrt(S)
                expect_ideal[m, c] = amp[m, s] * phis[m, s] / np.sqrt(S)
        out["decoded"].append(float(np.abs(_fourier_dispose(correct, ti, M, S) - expect_dec).max()))
        out["ideal"].append(float(np.abs(_fourier_dispose(ideal, ti, M, S) - expect_ideal).max()))
    return out
