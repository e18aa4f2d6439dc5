import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coherentkey.channels import (CqqSource, TripartiteState, bell_diagonal_state, channel_to_tripartite,
                                  maximally_entangled_input, overlap_source, random_source, standard_channel)
from coherentkey.entropy import (binary_entropy, coherent_information, coherent_information_checked,
                                 conditional_entropy, entropy_report, holevo_information, mutual_information,
                                 shannon_entropy, von_neumann_entropy)
from coherentkey.qmath import DensityOperator, StateVector, random_density, tensor


def h2(p):
    # scalar oracle, independent of the library
    return -p * np.log2(p) - (1 - p) * np.log2(1 - p)


PHI_PLUS = StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2), (2, 2), ("A", "B")).dm()


def test_von_neumann_examples():
    assert von_neumann_entropy(StateVector.basis(3, 1).dm()) == pytest.approx(0, abs=1e-12)
    assert von_neumann_entropy(DensityOperator.maximally_mixed(2)) == pytest.approx(1)
    assert von_neumann_entropy(DensityOperator.diagonal([0.9, 0.1])) == pytest.approx(0.468996, abs=1e-6)
    assert von_neumann_entropy(DensityOperator.diagonal([0.9, 0.1])) == pytest.approx(h2(0.9), abs=1e-12)


def test_shannon_examples():
    assert shannon_entropy([1, 0]) == 0
    assert shannon_entropy([0.25] * 4) == pytest.approx(2)
    assert shannon_entropy([0.7, 0.3]) == pytest.approx(0.881291, abs=1e-6)


def test_shannon_invalid():
    with pytest.raises(ValueError):
        shannon_entropy([0.7, 0.7])
    with pytest.raises(ValueError):
        shannon_entropy([1.2, -0.2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6).filter(lambda v: sum(v) > 1e-3))
def test_shannon_equals_von_neumann_of_diagonal(weights):
    p = np.array(weights) / sum(weights)
    h = shannon_entropy(p)
    assert abs(h - von_neumann_entropy(np.diag(p))) < 1e-12
    assert -1e-12 <= h <= np.log2(len(p)) + 1e-12


def test_binary_entropy():
    assert binary_entropy(0.2) == pytest.approx(h2(0.2))
    assert binary_entropy(0.0) == 0


def test_conditional_entropy_examples():
    assert conditional_entropy(PHI_PLUS, "B") == pytest.approx(-1)
    rng = np.random.default_rng(0)
    ra, rb = random_density(2, rng).relabel(["A"]), random_density(3, rng).relabel(["B"])
    assert conditional_entropy(tensor(ra, rb), "B") == pytest.approx(von_neumann_entropy(ra))
    u = 0.1 / 3
    rho = bell_diagonal_state([0.9, u, u, u])
    expected = -(0.9 * np.log2(0.9) + 3 * u * np.log2(u)) - 1
    assert conditional_entropy(rho, "B") == pytest.approx(expected, abs=1e-12)
    assert conditional_entropy(rho, "B") == pytest.approx(-0.372506, abs=1e-5)


def test_conditional_entropy_register_mismatch():
    with pytest.raises(KeyError):
        conditional_entropy(PHI_PLUS, "E")


def test_mutual_information_examples():
    rng = np.random.default_rng(1)
    prod = tensor(random_density(2, rng).relabel(["A"]), random_density(2, rng).relabel(["B"]))
    assert mutual_information(prod) == pytest.approx(0, abs=1e-10)
    assert mutual_information(PHI_PLUS) == pytest.approx(2)
    phibar = DensityOperator(np.diag([0.5, 0, 0, 0.5]), (2, 2), ("A", "B"))
    assert mutual_information(phibar) == pytest.approx(1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_mutual_information_nonnegative(seed):
    rho = DensityOperator(random_density(6, np.random.default_rng(seed)).matrix, (2, 3), ("A", "B"))
    assert mutual_information(rho) >= -1e-9


def test_holevo_examples():
    assert holevo_information(overlap_source(0.0, 1.0), "B") == pytest.approx(1)
    assert holevo_information(overlap_source(1.0, 1.0), "B") == pytest.approx(0, abs=1e-12)
    # equal-weight pure pair with overlap c has average spectrum (1 +- c)/2
    assert holevo_information(overlap_source(0.6, 1.0), "B") == pytest.approx(h2(0.8), abs=1e-12)


def _cq_mutual_information(src: CqqSource, side: str) -> float:
    k, d = src.alphabet_size, src.side_dim(side)
    mat = np.zeros((k * d, k * d), dtype=complex)
    for x in range(k):
        mat[x * d:(x + 1) * d, x * d:(x + 1) * d] = src.probs[x] * src.reduced(x, side)
    return mutual_information(DensityOperator(mat, (k, d), ("X", side)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
def test_holevo_matches_cq_mutual_information_and_bounds(seed, k, db, de):
    src = random_source(np.random.default_rng(seed), k, db, de)
    for side in "BE":
        chi = holevo_information(src, side)
        assert abs(chi - _cq_mutual_information(src, side)) < 1e-9
        assert -1e-9 <= chi <= shannon_entropy(src.probs) + 1e-9


def test_coherent_information_examples():
    ident = channel_to_tripartite(standard_channel("identity"), maximally_entangled_input(2))
    assert coherent_information(ident) == pytest.approx(1)
    rng = np.random.default_rng(2)
    psi = StateVector.normalized(rng.normal(size=6) + 1j * rng.normal(size=6), (2, 3), ("A", "B"))
    assert coherent_information(psi.dm()) == pytest.approx(von_neumann_entropy(psi.dm().matrix.reshape(2, 3, 2, 3)
                                                                                .trace(axis1=0, axis2=2)))


def test_hashing_value():
    u = 0.1 / 3
    rho = bell_diagonal_state([0.9, u, u, u])
    spectrum_oracle = 1 + 0.9 * np.log2(0.9) + 3 * u * np.log2(u)
    value, _ = coherent_information_checked(rho)
    assert value == pytest.approx(spectrum_oracle, abs=1e-12)
    assert value == pytest.approx(0.372506, abs=1e-5)
    assert coherent_information(rho) == pytest.approx(value, abs=1e-12)


def test_dephasing_rate():
    psi = channel_to_tripartite(standard_channel("dephasing", 0.2), maximally_entangled_input(2))
    value, rep = coherent_information_checked(psi)
    assert value == pytest.approx(1 - h2(0.2), abs=1e-12)
    assert rep.holevo_XB == pytest.approx(1)
    assert rep.holevo_XE == pytest.approx(h2(0.8))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
def test_identity_chain(seed, k, db, de):
    psi = TripartiteState(random_source(np.random.default_rng(seed), k, db, de))
    rep = entropy_report(psi)
    assert abs(rep.coherent_info - (rep.H_B - rep.H_E)) < 1e-9
    assert abs(rep.coherent_info - (rep.holevo_XB - rep.holevo_XE)) < 1e-9
    assert abs(rep.private_info - (rep.holevo_XB - rep.holevo_XE)) < 1e-12


def _product(a: CqqSource, b: CqqSource) -> CqqSource:
    probs = np.kron(a.probs, b.probs)
    states = np.einsum("xij,ykl->xyikjl", a.states, b.states).reshape(
        len(probs), a.d_b * b.d_b, a.d_e * b.d_e)
    return CqqSource(probs, states, a.d_b * b.d_b, a.d_e * b.d_e)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_additivity_on_product_sources(seed):
    rng = np.random.default_rng(seed)
    a, b = random_source(rng, 2, 2, 2), random_source(rng, 3, 2, 1)
    ra, rb = entropy_report(TripartiteState(a)), entropy_report(TripartiteState(b))
    rab = entropy_report(TripartiteState(_product(a, b)))
    for name in ("H_A", "H_B", "H_E", "H_AB", "H_X", "I_AB", "holevo_XB", "holevo_XE", "coherent_info"):
        assert abs(getattr(rab, name) - getattr(ra, name) - getattr(rb, name)) < 1e-8, name


def test_checked_raises_on_inconsistent_report(monkeypatch):
    import coherentkey.entropy as ent
    psi = TripartiteState(overlap_source(0.3, 0.4))
    real = ent.entropy_report

    def broken(p):
        rep = real(p)
        return ent.EntropyReport(**{**rep.as_dict(), "H_E": rep.H_E + 1e-6})

    monkeypatch.setattr(ent, "entropy_report", broken)
    with pytest.raises(ArithmeticError):
        ent.coherent_information_checked(psi)
