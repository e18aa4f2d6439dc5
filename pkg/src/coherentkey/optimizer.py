"""Single-letter coherent-information maximization over channel inputs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .channels import QuantumChannel, channel_to_tripartite, ensemble_input
from .codes import make_rng
from .entropy import coherent_information_checked
from .qmath import StateVector

KINDS = ("pure_qubit_angles", "diagonal_ensemble", "full_pure_state")


@dataclass(frozen=True)
class InputParameterization:
    """Map from an unconstrained real vector to a valid input state on A (x) A'.

    pure_qubit_angles: (alpha, theta, phi) give cos(alpha)|0>|v0> + sin(alpha)|1>|v1>
    with {v0, v1} the qubit basis at Bloch angles (theta, phi).
    diagonal_ensemble: softmax of d logits over the computational basis.
    full_pure_state: 2 d^2 reals forming an (unnormalized) complex d x d state.
    """

    kind: str
    d: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown parameterization {self.kind!r}")
        if self.kind == "pure_qubit_angles" and self.d != 2:
            raise ValueError("pure_qubit_angles needs a qubit input")

    @property
    def size(self) -> int:
        return {"pure_qubit_angles": 3, "diagonal_ensemble": self.d, "full_pure_state": 2 * self.d ** 2}[self.kind]

    @property
    def bounds(self) -> list:
        if self.kind == "pure_qubit_angles":
            return [(0.0, np.pi / 2), (0.0, np.pi), (0.0, 2 * np.pi)]
        if self.kind == "diagonal_ensemble":
            return [(-10.0, 10.0)] * self.d
        return [(-1.0, 1.0)] * self.size

    def canonical(self) -> np.ndarray:
        """Point decoding to the maximally entangled input."""
        if self.kind == "pure_qubit_angles":
            return np.array([np.pi / 4, 0.0, 0.0])
        if self.kind == "diagonal_ensemble":
            return np.zeros(self.d)
        return np.concatenate([np.eye(self.d).reshape(-1), np.zeros(self.d ** 2)]) / np.sqrt(self.d)

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = np.array(self.bounds).T
        return rng.uniform(lo, hi)

    def decode(self, x) -> StateVector:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {x.shape}")
        if self.kind == "pure_qubit_angles":
            alpha, theta, phi = x
            v0 = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
            v1 = np.array([-np.exp(-1j * phi) * np.sin(theta / 2), np.cos(theta / 2)])
            return ensemble_input([np.cos(alpha) ** 2, np.sin(alpha) ** 2], np.stack([v0, v1]))
        if self.kind == "diagonal_ensemble":
            z = np.exp(x - x.max())
            return ensemble_input(z / z.sum(), np.eye(self.d))
        amps = x[: self.d ** 2] + 1j * x[self.d ** 2:]
        if np.linalg.norm(amps) < 1e-12:
            raise ValueError("parameter vector decodes to the zero state")
        return StateVector.normalized(amps, (self.d, self.d), ("A", "Ap"))


def evaluate_rate(channel: QuantumChannel, parameterization: InputParameterization, x) -> float:
    """I_c(A>B) of the state obtained by sending the decoded input through ``channel``.

    The identity chain -H(A|B) = H(B) - H(E) = I(X;B) - I(X;E) is checked on
    every evaluation.
    """
    psi = channel_to_tripartite(channel, parameterization.decode(x))
    value, _ = coherent_information_checked(psi)
    return value


@dataclass
class OptimizationReport:
    best_params: np.ndarray
    best_value: float
    evaluations: int
    trace: list = field(default_factory=list)
    best_restart: int = 0


def maximize_rate(channel: QuantumChannel, parameterization: InputParameterization, budget: int = 400,
                  rng_seed: int = 0, restarts: int = 8) -> OptimizationReport:
    """Nelder-Mead from the canonical point plus ``restarts - 1`` random starts.

    ``budget`` caps function evaluations per restart. Ties between restarts
    go to the lowest restart index.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    best_x, best_v, best_r = None, -np.inf, 0
    trace: list[float] = []
    evals = 0
    for r in range(max(1, restarts)):
        x0 = parameterization.canonical() if r == 0 else parameterization.random_point(make_rng(rng_seed, 20, r))
        local = {"x": None, "v": -np.inf}

        def objective(x):
            nonlocal evals
            v = evaluate_rate(channel, parameterization, x)
            evals += 1
            if v > local["v"]:
                local["x"], local["v"] = np.array(x, dtype=float), v
            trace.append(max(v, trace[-1]) if trace else v)
            return -v

        objective(x0)
        if budget > 1:
            minimize(objective, x0, method="Nelder-Mead",
                     options={"maxfev": budget - 1, "xatol": 1e-9, "fatol": 1e-12, "adaptive": False})
        if local["v"] > best_v:
            best_x, best_v, best_r = local["x"], local["v"], r
    return OptimizationReport(best_x, float(best_v), evals, trace, best_r)
