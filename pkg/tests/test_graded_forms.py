
import numpy as np
import pytest
from hypothesis import given, strategies as st

from mqeuler.graded_forms import (
    GeneratorSet,
    GradedElement,
    clifford,
    degree_project,
    exp_truncated,
    exterior_op,
    interior_op,
    parity_signs,
    supertrace,
    wedge,
)

G1 = GeneratorSet.standard(1)
seeds = st.integers(0, 2**32 - 1)


def gen(name, dim=None):
    return GradedElement.generator(G1, name, dim)


def rand_elem(rng, dim=None, degrees=None, gens=G1):
    shape = (gens.size,) + ((dim, dim) if dim else ())
    c = rng.integers(-3, 4, size=shape).astype(float)
    if degrees is not None:
        deg = np.array([bin(s).count("1") for s in range(gens.size)])
        keep = np.isin(deg, degrees)
        c = c * (keep[:, None, None] if dim else keep)
    return GradedElement(gens, c, dim)


def rand_homogeneous_matrix(rng, form_deg, mat_parity, dim=4):
    """Form degree ``form_deg`` with coefficients of one matrix parity."""
    a = rand_elem(rng, dim, [form_deg])
    p = parity_signs(dim)
    mask = (np.outer(p, p) < 0) == bool(mat_parity)
    return GradedElement(G1, a.coeffs * mask, dim)


def test_generator_set_basics():
    assert G1.names == ("dx1", "dx2", "dy1", "dy2")
    assert G1.cap == 4 and G1.size == 16
    with pytest.raises(ValueError):
        GeneratorSet(("a",), ("a",))
    assert G1.mask(("dx1", "dx1")) == (0, 0)
    assert G1.mask(("dy1", "dx1")) == (0b101, -1)


def test_repeated_generator_vanishes():
    assert np.all(wedge(gen("dx1"), gen("dx1")).coeffs == 0)


def test_odd_odd_anticommute():
    a = wedge(gen("dx1"), gen("dy1"))
    b = wedge(gen("dy1"), gen("dx1"))
    np.testing.assert_array_equal(a.coeffs, -b.coeffs)


def test_even_product_expands():
    w1 = GradedElement.monomial(G1, ("dx1", "dy1"))
    w2 = GradedElement.monomial(G1, ("dx2", "dy2"))
    got = wedge(1 + w1, 1 + w2)
    want = 1 + w1 + w2 + GradedElement.monomial(G1, ("dx1", "dy1", "dx2", "dy2"))
    np.testing.assert_array_equal(got.coeffs, want.coeffs)


def test_exp_of_zero_is_one():
    e = exp_truncated(GradedElement.zero(G1))
    np.testing.assert_array_equal(e.coeffs, GradedElement.scalar(G1).coeffs)


def test_exp_top_coefficient():
    a = GradedElement.monomial(G1, ("dx1", "dy1")) + GradedElement.monomial(G1, ("dx2", "dy2"))
    e = exp_truncated(a)
    assert e.coefficient(("dx1", "dy1", "dx2", "dy2")) == pytest.approx(1.0)


@given(seeds)
def test_exp_of_commuting_sum_factorizes(seed):
    rng = np.random.default_rng(seed)
    # scalar even elements commute
    a = rand_elem(rng, None, [0, 2, 4]) * 0.3
    b = rand_elem(rng, None, [0, 2, 4]) * 0.3
    lhs = exp_truncated(a + b)
    rhs = wedge(exp_truncated(a), exp_truncated(b))
    np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, rtol=1e-12, atol=1e-12)


def test_exp_general_degree_zero_block_matches_series():
    rng = np.random.default_rng(3)
    a = rand_homogeneous_matrix(rng, 0, 0) * 0.2 + rand_homogeneous_matrix(rng, 2, 0) * 0.2
    e = exp_truncated(a)
    # brute-force series with many terms
    one = GradedElement.scalar(G1, 1.0, 4)
    ref, term = one, one
    for k in range(1, 40):
        term = wedge(term, a) / k
        ref = ref + term
    np.testing.assert_allclose(e.coeffs, ref.coeffs, atol=1e-12)


def test_exp_rejects_odd_input():
    with pytest.raises(ValueError):
        exp_truncated(gen("dx1"))


def test_supertrace_identity_vanishes():
    assert supertrace(GradedElement.scalar(G1, 1.0, 4)).coeffs[0] == 0.0


def test_supertrace_rejects_scalar_kind():
    with pytest.raises(TypeError):
        supertrace(GradedElement.scalar(G1, 1.0))


@given(seeds)
def test_supertrace_of_supercommutator_vanishes(seed):
    rng = np.random.default_rng(seed)
    da, db, pa, pb = rng.integers(0, 5), rng.integers(0, 5), rng.integers(0, 2), rng.integers(0, 2)
    a = rand_homogeneous_matrix(rng, da, pa)
    b = rand_homogeneous_matrix(rng, db, pb)
    sign = (-1) ** (((da + pa) % 2) * ((db + pb) % 2))
    comm = wedge(a, b) - wedge(b, a) * sign
    np.testing.assert_allclose(supertrace(comm).coeffs, 0.0, atol=1e-9)


def _enumerated_supertrace(M):
    """Trace over even basis vectors minus trace over odd ones, one by one."""
    total = 0.0
    for s in range(M.shape[0]):
        e = np.zeros(M.shape[0])
        e[s] = 1.0
        total += (-1) ** bin(s).count("1") * (e @ M @ e)
    return total


def test_supertrace_of_clifford_words_against_enumeration():
    c1 = clifford(np.array([1.0, 0.0])).matrix
    c2 = clifford(np.array([0.0, 1.0])).matrix
    for word in ([c1, c2], [c1, c2, c1, c2]):
        M = np.linalg.multi_dot(word)
        el = GradedElement(G1, np.r_[[M], np.zeros((15, 4, 4))], 4)
        assert supertrace(el).coeffs[0] == pytest.approx(_enumerated_supertrace(M), abs=1e-15)


def test_supertrace_nonzero_example():
    # e^1 i_1 - i_1 e^1 is +1 on forms with e^1 and -1 otherwise
    M = exterior_op(0, 2) @ interior_op(0, 2) - interior_op(0, 2) @ exterior_op(0, 2)
    M = M @ exterior_op(1, 2) @ interior_op(1, 2)
    el = GradedElement(G1, np.r_[[M], np.zeros((15, 4, 4))], 4)
    value = supertrace(el).coeffs[0]
    assert value == pytest.approx(_enumerated_supertrace(M))
    assert value != 0.0


def test_clifford_examples():
    c = clifford(np.array([1.0, 0.0])).matrix
    np.testing.assert_array_equal(c @ c, -np.eye(4))
    assert np.all(clifford(np.zeros(2)).matrix == 0)


@given(seeds, st.sampled_from([2, 4]))
def test_clifford_squares_to_minus_norm(seed, m):
    Z = np.random.default_rng(seed).normal(size=m)
    c = clifford(Z).matrix
    np.testing.assert_allclose(c @ c, -(Z @ Z) * np.eye(1 << m), atol=1e-12 * max(1, Z @ Z))


def test_clifford_operator_is_ext_minus_int():
    Z = np.array([0.3, -1.2])
    want = 0.3 * exterior_op(0, 2) - 1.2 * exterior_op(1, 2) - (0.3 * interior_op(0, 2) - 1.2 * interior_op(1, 2))
    np.testing.assert_array_equal(clifford(Z).matrix, want)


def test_degree_project_examples():
    w = GradedElement.monomial(G1, ("dx1", "dy1"))
    np.testing.assert_array_equal(degree_project(1 + w, 2).coeffs, w.coeffs)
    a = GradedElement.monomial(G1, ("dx1", "dy1")) + GradedElement.monomial(G1, ("dx2", "dy2"))
    top = degree_project(exp_truncated(a), 4)
    np.testing.assert_allclose(top.coeffs, GradedElement.monomial(G1, ("dx1", "dy1", "dx2", "dy2")).coeffs)


@given(seeds)
def test_degree_decomposition(seed):
    a = rand_elem(np.random.default_rng(seed), 4, [0, 2, 4])
    total = sum(degree_project(a, k) for k in range(5))
    np.testing.assert_array_equal(total.coeffs, a.coeffs)


@given(seeds, st.sampled_from([None, 4]))
def test_associativity_and_bilinearity(seed, dim):
    rng = np.random.default_rng(seed)
    a, b, c = (rand_elem(rng, dim) for _ in range(3))
    # integer coefficients keep everything exact
    np.testing.assert_array_equal(wedge(wedge(a, b), c).coeffs, wedge(a, wedge(b, c)).coeffs)
    np.testing.assert_array_equal(wedge(a + b, c).coeffs, (wedge(a, c) + wedge(b, c)).coeffs)
    np.testing.assert_array_equal(wedge(a * 3.0, c).coeffs, (wedge(a, c) * 3.0).coeffs)


@given(seeds, st.integers(0, 4), st.integers(0, 4))
def test_graded_commutativity(seed, p, q):
    rng = np.random.default_rng(seed)
    a = rand_elem(rng, None, [p])
    b = rand_elem(rng, None, [q])
    np.testing.assert_array_equal(wedge(a, b).coeffs, ((-1) ** (p * q)) * wedge(b, a).coeffs)


def test_nilpotency_beyond_cap():
    legs = [gen(n) for n in G1.names]
    prod = legs[0]
    for leg in legs[1:] + [legs[2]]:
        prod = wedge(prod, leg)
    assert np.all(prod.coeffs == 0)
    # any five degree-1 elements multiply to zero
    rng = np.random.default_rng(0)
    out = rand_elem(rng, None, [1])
    for _ in range(4):
        out = wedge(out, rand_elem(rng, None, [1]))
    assert np.all(out.coeffs == 0)


def test_batched_operations_match_loop():
    rng = np.random.default_rng(1)
    A = GradedElement(G1, rng.normal(size=(3, 16, 4, 4)), 4)
    B = GradedElement(G1, rng.normal(size=(3, 16, 4, 4)), 4)
    P = wedge(A, B)
    for i in range(3):
        single = wedge(GradedElement(G1, A.coeffs[i], 4), GradedElement(G1, B.coeffs[i], 4))
        np.testing.assert_allclose(P.coeffs[i], single.coeffs)


def test_terms_lists_nonzero_monomials():
    w = GradedElement.monomial(G1, ("dy1", "dx1"), 2.0)
    assert w.terms() == {("dx1", "dy1"): -2.0}


def test_parity_signs_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        parity_signs(3)
