import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coherentkey.channels import CqqSource, overlap_source, random_source
from coherentkey.qmath import DimensionError
from coherentkey.typicality import (EnumerationTooLarge, containment_check, conditional_typical_projector,
                                    product_state, typical_projector, typical_set)

P = (0.7, 0.3)
H = -(0.7 * np.log2(0.7) + 0.3 * np.log2(0.3))


def brute_force(probs, n, delta):
    """Plain loop over all sequences, sharing no code with the library."""
    h = -sum(p * np.log2(p) for p in probs if p > 0)
    count, mass = 0, 0.0
    for seq in itertools.product(range(len(probs)), repeat=n):
        pr = float(np.prod([probs[i] for i in seq]))
        if pr > 0 and abs(-np.log2(pr) / n - h) <= delta + 1e-12:
            count += 1
            mass += pr
    return count, mass


def test_uniform_keeps_everything():
    t = typical_set([0.5, 0.5], 4, 0.01)
    assert t.cardinality == 16
    assert t.mass == pytest.approx(1)


def test_deterministic_keeps_constant_sequence():
    t = typical_set([1.0, 0.0], 5, 0.1)
    assert t.cardinality == 1
    assert t.sequences.tolist() == [[0] * 5]


@pytest.mark.parametrize("n", [1, 3, 6, 10])
def test_against_exhaustive_oracle(n):
    t = typical_set(P, n, 0.1)
    count, mass = brute_force(P, n, 0.1)
    assert t.cardinality == count
    assert t.mass == pytest.approx(mass, abs=1e-12)


def test_sequences_are_lexicographic_and_typical():
    t = typical_set(P, 8, 0.1)
    assert [tuple(s) for s in t.sequences] == sorted(tuple(s) for s in t.sequences)
    surprisal = -np.log2(np.prod(np.array(P)[t.sequences], axis=1)) / 8
    assert np.all(np.abs(surprisal - H) <= 0.1 + 1e-12)
    assert t.index_of()[tuple(t.sequences[3])] == 3


@pytest.mark.parametrize("n", range(1, 15))
def test_upper_bound_always_holds(n):
    assert typical_set(P, n, 0.1).upper_bound_holds


@pytest.mark.parametrize("n", range(1, 15))
def test_mass_weighted_lower_bound(n):
    # sum over T of 2^{-n(H-delta)} >= mass, so |T| >= mass * 2^{n(H-delta)} at every n
    assert typical_set(P, n, 0.1).mass_weighted_lower_bound_holds


@pytest.mark.xfail(strict=True, reason="at n=9 the mass exceeds 1/2 while |T| = 120 < 2^{n(H-delta)} = 130.8")
def test_plain_lower_bound_once_mass_exceeds_half():
    for n in range(4, 15):
        t = typical_set(P, n, 0.1)
        if t.lower_bound_asserted:
            assert t.lower_bound_holds, n


@pytest.mark.xfail(strict=True, reason="weak-typical mass oscillates at small n (0.41, 0.32, 0.55, 0.27, 0.47)")
def test_mass_non_decreasing_in_n():
    masses = [typical_set(P, n, 0.1).mass for n in (4, 6, 8, 10, 12)]
    assert all(b >= a for a, b in zip(masses, masses[1:]))


def test_mass_tends_to_one_for_large_n():
    assert typical_set(P, 20, 0.1).mass > typical_set(P, 4, 0.1).mass


def test_enumeration_cap():
    with pytest.raises(EnumerationTooLarge):
        typical_set(P, 25, 0.1)


def test_invalid_distribution():
    with pytest.raises(ValueError):
        typical_set([0.5, 0.6], 3, 0.1)


def test_projector_pure_state():
    proj = typical_projector(np.diag([1.0, 0.0]), 5, 0.1)
    assert proj.rank == 1


def test_projector_maximally_mixed():
    proj = typical_projector(np.eye(2) / 2, 6, 0.0)
    assert proj.rank == 64
    assert np.allclose(proj.matrix(), np.eye(64))


def test_projector_rank_matches_spectrum_typical_set():
    proj = typical_projector(np.diag([0.9, 0.1]), 8, 0.15)
    assert proj.rank == typical_set([0.9, 0.1], 8, 0.15).cardinality
    assert proj.rank == brute_force([0.9, 0.1], 8, 0.15)[0]


def test_projector_rotated_state_and_degenerate_spectrum():
    rng = np.random.default_rng(0)
    u = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))[0]
    rho = u @ np.diag([0.5, 0.25, 0.25]) @ u.conj().T
    proj = typical_projector(rho, 4, 0.05)
    assert proj.rank == brute_force([0.5, 0.25, 0.25], 4, 0.05)[0]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 6))
def test_projector_is_hermitian_idempotent_and_commutes(seed, n):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    proj = typical_projector(rho, n, 0.2)
    pm = proj.matrix()
    big = product_state([rho] * n)
    assert np.abs(pm - pm.conj().T).max() < 1e-9
    assert np.abs(pm @ pm - pm).max() < 1e-9
    assert np.abs(pm @ big - big @ pm).max() < 1e-9
    # captured weight equals the reported mass, and the sandwich distance is as reported
    assert np.trace(pm @ big).real == pytest.approx(proj.mass, abs=1e-9)
    diff = pm @ big @ pm - big
    assert 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum() == pytest.approx(proj.sandwich_distance, abs=1e-9)
    if proj.rank:
        assert np.log2(proj.rank) / n <= proj.entropy + 0.2 + 1e-12


def test_projector_dimension_cap():
    proj = typical_projector(np.diag([0.7, 0.3]), 12, 0.1)
    assert proj.rank == typical_set(P, 12, 0.1).cardinality  # rank available without the matrix
    with pytest.raises(DimensionError):
        proj.matrix()


def test_conditional_projector_pure_conditionals():
    src = overlap_source(0.6, 0.6)
    xn = (0, 1, 1, 0)
    proj = conditional_typical_projector(src, "B", xn, 0.1)
    assert proj.rank == 1
    phi = product_state([src.reduced(x, "B") for x in xn])
    assert np.allclose(proj.matrix(), phi, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=8), st.sampled_from("BE"))
def test_conditional_projector_rank_one_for_product_conditionals(xn, side):
    # |phi_x> = |b_x>|e_x> leaves every conditional marginal pure
    proj = conditional_typical_projector(overlap_source(0.3, 0.8), side, xn, 0.1)
    assert proj.rank == 1


def test_conditional_projector_equal_states_matches_unconditional():
    rng = np.random.default_rng(2)
    base = random_source(rng, 1, 2, 2).states[0]
    src = CqqSource(np.array([0.4, 0.6]), np.stack([base, base]), 2, 2)
    xn = (0, 1, 1, 0, 1)
    cond = conditional_typical_projector(src, "B", xn, 0.1)
    plain = typical_projector(src.average("B"), 5, 0.1)
    assert np.allclose(cond.matrix(), plain.matrix(), atol=1e-9)


def _mixed_source():
    rng = np.random.default_rng(3)
    return random_source(rng, 2, 2, 2)


def test_conditional_projector_rank_exhaustive():
    src = _mixed_source()
    xn = (0, 1, 0, 0, 1, 1)
    proj = conditional_typical_projector(src, "B", xn, 0.1)
    spectra = [np.linalg.eigvalsh(src.reduced(x, "B")) for x in range(2)]
    target = sum(p * -sum(w * np.log2(w) for w in spectra[x] if w > 1e-12) for x, p in enumerate(src.probs))
    count = 0
    for ks in itertools.product(range(2), repeat=6):
        pr = np.prod([spectra[x][k] for x, k in zip(xn, ks)])
        if pr > 0 and abs(-np.log2(pr) / 6 - target) <= 0.1 + 1e-12:
            count += 1
    assert proj.rank == count


def test_containment_equal_states_has_no_gap():
    rng = np.random.default_rng(4)
    base = random_source(rng, 1, 2, 2).states[0]
    src = CqqSource(np.array([0.5, 0.5]), np.stack([base, base]), 2, 2)
    rep = containment_check(src, "B", (0, 1, 0, 1), 0.1)
    assert abs(rep.gap) < 1e-9


def test_containment_pure_conditionals():
    src = overlap_source(0.6, 0.6)
    t = typical_set(src.probs, 8, 0.2)
    rep = containment_check(src, "B", tuple(t.sequences[5]), 0.2)
    assert rep.conditional_weight == pytest.approx(1)
    # recorded epsilon for this desk-scale point (direct evaluation gives 0.3958)
    assert rep.sandwiched_weight >= 1 - 0.61
    assert rep.sandwiched_weight <= rep.conditional_weight + 1e-12


def test_containment_n_one():
    rep = containment_check(_mixed_source(), "E", (1,), 0.1)
    assert rep.n == 1
    assert 0 <= rep.sandwiched_weight <= 1 + 1e-12
