"""Entropic functionals in bits and the rate formulas built from them."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .channels import CqqSource, TripartiteState, tripartite_from_density
from .qmath import EIG_CLAMP, DensityOperator, partial_trace, reduce_vector, spectrum


def entropy_of_spectrum(eigs) -> float:
    eigs = np.asarray(eigs, dtype=float)
    eigs = eigs[eigs > EIG_CLAMP]
    return float(-(eigs * np.log2(eigs)).sum()) if eigs.size else 0.0


def matrix_entropy(mat: np.ndarray) -> float:
    return entropy_of_spectrum(spectrum(mat))


def von_neumann_entropy(rho: DensityOperator | np.ndarray) -> float:
    """-Tr rho log2 rho with eigenvalues below 1e-12 treated as zero."""
    return max(0.0, matrix_entropy(rho.matrix if isinstance(rho, DensityOperator) else rho))


def shannon_entropy(p: Sequence[float]) -> float:
    p = np.asarray(p, dtype=float)
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("not a probability distribution")
    return max(0.0, entropy_of_spectrum(np.where(p < EIG_CLAMP, 0.0, p)))


def binary_entropy(p: float) -> float:
    return shannon_entropy([p, 1 - p])


def _two_registers(rho: DensityOperator):
    if len(rho.dims) != 2:
        raise ValueError(f"expected two registers, got {rho.labels}")
    return rho.labels


def conditional_entropy(rho: DensityOperator, condition_on: str) -> float:
    """H(AB) - H(B) where B is ``condition_on``; negative for entangled states."""
    labels = _two_registers(rho)
    if condition_on not in labels:
        raise KeyError(f"unknown register {condition_on!r}")
    return von_neumann_entropy(rho) - von_neumann_entropy(partial_trace(rho, condition_on))


def mutual_information(rho: DensityOperator) -> float:
    a, b = _two_registers(rho)
    return (von_neumann_entropy(partial_trace(rho, a)) + von_neumann_entropy(partial_trace(rho, b))
            - von_neumann_entropy(rho))


def holevo_information(source: CqqSource, side: str) -> float:
    """I(X;side) = H(average) - sum_x P(x) H(phi_x^side)."""
    avg = matrix_entropy(source.average(side))
    cond = sum(p * matrix_entropy(source.reduced(x, side)) for x, p in enumerate(source.probs) if p > 0)
    return avg - cond


def conditional_entropy_given_x(source: CqqSource, side: str) -> float:
    """H(side|X) = sum_x P(x) H(phi_x^side)."""
    return float(sum(p * matrix_entropy(source.reduced(x, side)) for x, p in enumerate(source.probs) if p > 0))


@dataclass(frozen=True)
class EntropyReport:
    H_A: float
    H_B: float
    H_E: float
    H_AB: float
    H_X: float
    I_AB: float
    holevo_XB: float
    holevo_XE: float
    coherent_info: float
    private_info: float

    def as_dict(self) -> dict:
        return asdict(self)


def entropy_report(psi: TripartiteState) -> EntropyReport:
    """All entropic quantities of psi^{ABE} and its decohered version in one pass."""
    src = psi.source
    vec, dims = psi.vector.amplitudes, psi.vector.dims
    h_a = matrix_entropy(reduce_vector(vec, dims, [0]))
    h_b = matrix_entropy(reduce_vector(vec, dims, [1]))
    h_e = matrix_entropy(reduce_vector(vec, dims, [2]))
    h_ab = matrix_entropy(reduce_vector(vec, dims, [0, 1]))
    h_x = shannon_entropy(src.probs)
    xb = holevo_information(src, "B")
    xe = holevo_information(src, "E")
    return EntropyReport(
        H_A=h_a, H_B=h_b, H_E=h_e, H_AB=h_ab, H_X=h_x,
        I_AB=h_a + h_b - h_ab,
        holevo_XB=xb, holevo_XE=xe,
        coherent_info=h_b - h_ab,
        private_info=xb - xe,
    )


def coherent_information(state: TripartiteState | DensityOperator) -> float:
    """I_c(A>B) = -H(A|B); a bipartite density operator is purified first."""
    if isinstance(state, DensityOperator):
        if len(state.dims) != 2:
            raise ValueError("coherent information needs a bipartite state")
        return -conditional_entropy(state, state.labels[1])
    return entropy_report(state).coherent_info


def coherent_information_checked(state: TripartiteState | DensityOperator, atol: float = 1e-9) -> tuple[float, EntropyReport]:
    """Coherent information together with the report used to cross-check it.

    Raises if H(B)-H(E) or I(X;B)-I(X;E) disagree with -H(A|B) beyond ``atol``.
    """
    psi = tripartite_from_density(state) if isinstance(state, DensityOperator) else state
    rep = entropy_report(psi)
    for name, value in (("H(B)-H(E)", rep.H_B - rep.H_E), ("I(X;B)-I(X;E)", rep.private_info)):
        if abs(value - rep.coherent_info) > atol:
            raise ArithmeticError(f"{name} = {value} disagrees with I_c = {rep.coherent_info}")
    return rep.coherent_info, rep
