"""Tests for the monomial basis, generator matrix and moment recursions."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from conftest import cir_spec, vasicek_spec
from hypothesis import given, settings
from hypothesis import strategies as st

from affine_gmm.errors import InvalidArgument, NumericalFailure
from affine_gmm.polyproc import (
    DiffusionSpec,
    build_generator,
    conditional_moments,
    enumerate_basis,
    lift_state,
    matrix_exponential,
    stationary_moments,
    stationary_state_moments,
)

# ---------------------------------------------------------------------------
# Symbolic oracle: apply the generator to each monomial with sympy
# ---------------------------------------------------------------------------


def symbolic_generator(spec: DiffusionSpec, basis) -> sp.Matrix:
    """Generator matrix obtained by differentiating every basis monomial."""
    d = basis.d
    xs = sp.symbols(f"x1:{d + 1}")
    R = lambda v: sp.Rational(v.numerator, v.denominator) if isinstance(v, Fraction) else sp.nsimplify(v)
    b = [R(v) for v in spec.b]
    beta = [[R(v) for v in row] for row in spec.beta]
    sig = [R(v) for v in spec.sigma]
    B0 = [R(v) for v in spec.B0]
    Bx = [[R(v) for v in row] for row in spec.Bx]
    monos = [sp.Mul(*[x**k for x, k in zip(xs, e)]) for e in basis.exponents]
    A = sp.zeros(basis.N, basis.N)
    for r, f in enumerate(monos):
        g = 0
        for i in range(d):
            drift = b[i] + sum(beta[i][j] * xs[j] for j in range(d))
            var = B0[i] + sum(Bx[j][i] * xs[j] for j in range(d))
            g += drift * sp.diff(f, xs[i]) + sp.Rational(1, 2) * sig[i] ** 2 * var * sp.diff(f, xs[i], 2)
        poly = sp.Poly(sp.expand(g), *xs)
        for mono, coeff in poly.terms():
            A[r, basis.index[tuple(mono)]] = coeff
    return A


def rational_a13_spec(rng: np.random.Generator) -> DiffusionSpec:
    """Random admissible A1(3) drift and diffusion with rational entries."""
    F = lambda lo, hi: Fraction(int(rng.integers(lo, hi)), 20)
    beta = [
        [F(-40, -2), Fraction(0), Fraction(0)],
        [F(0, 10), F(-40, -2), F(-10, 10)],
        [F(0, 10), F(-10, 10), F(-40, -2)],
    ]
    theta = F(1, 60)
    b = [-beta[0][0] * theta, -beta[1][0] * theta, -beta[2][0] * theta]
    sigma = [F(2, 40), F(2, 40), F(2, 40)]
    Bx = [[Fraction(1), F(0, 10), F(0, 10)], [Fraction(0)] * 3, [Fraction(0)] * 3]
    return DiffusionSpec(b, beta, sigma, [Fraction(0), Fraction(1), Fraction(1)], Bx)


# ---------------------------------------------------------------------------
# Basis
# ---------------------------------------------------------------------------


def test_degree_two_block_order_for_three_factors():
    basis = enumerate_basis(3, 2)
    block = basis.degree_block(2)
    labels = [basis.label(k) for k in range(block.start, block.stop)]
    assert labels == ["x1^2", "x1*x2", "x1*x3", "x2^2", "x2*x3", "x3^2"]


def test_univariate_basis_is_powers():
    basis = enumerate_basis(1, 2)
    assert basis.N == 3
    assert basis.exponents == ((0,), (1,), (2,))


def test_a13_basis_has_35_monomials():
    basis = enumerate_basis(3, 4)
    assert basis.N == 35
    blk = basis.degree_block(4)
    assert blk.stop - blk.start == 15


@pytest.mark.parametrize("d,p", [(0, 2), (4, 2), (3, 5), (3, 0)])
def test_basis_rejects_out_of_range(d, p):
    with pytest.raises(InvalidArgument):
        enumerate_basis(d, p)


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


def test_vasicek_generator_matches_display():
    b, beta, s = 0.6, -0.5, 0.3
    A = build_generator(vasicek_spec(b, beta, s), enumerate_basis(1, 4)).A
    expected = np.zeros((5, 5))
    for k in range(1, 5):
        expected[k, k] = k * beta
        expected[k, k - 1] = k * b
        if k >= 2:
            expected[k, k - 2] = k * (k - 1) / 2 * s**2
    np.testing.assert_array_equal(A, expected)
    np.testing.assert_allclose(A[2, :3], [s**2, 2 * b, 2 * beta])


def test_cir_generator_matches_display():
    b, beta, s = 0.8, -0.6, 0.5
    A = build_generator(cir_spec(b, beta, s), enumerate_basis(1, 4)).A
    expected = np.zeros((5, 5))
    for k in range(1, 5):
        expected[k, k] = k * beta
        expected[k, k - 1] = k * b + k * (k - 1) / 2 * s**2
    np.testing.assert_allclose(A, expected, rtol=0, atol=1e-15)
    np.testing.assert_allclose(A[2, :3], [0.0, 2 * b + s**2, 2 * beta])


def test_a13_generator_matches_symbolic_oracle_exactly():
    rng = np.random.default_rng(3)
    basis = enumerate_basis(3, 4)
    for _ in range(2):
        spec = rational_a13_spec(rng)
        A = build_generator(spec, basis, exact=True).A
        oracle = symbolic_generator(spec, basis)
        for r in range(basis.N):
            for c in range(basis.N):
                v = A[r, c]
                got = sp.Rational(v.numerator, v.denominator) if isinstance(v, Fraction) else sp.Integer(v)
                assert got == oracle[r, c], (basis.label(r), basis.label(c))


def test_generator_rejects_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        build_generator(vasicek_spec(), enumerate_basis(2, 2))


# ---------------------------------------------------------------------------
# Matrix exponential and conditional moments
# ---------------------------------------------------------------------------


def test_exponential_at_zero_is_identity():
    M = np.random.default_rng(0).normal(size=(4, 4))
    np.testing.assert_array_equal(matrix_exponential(M, 0.0), np.eye(4))


def test_exponential_of_diagonal():
    lam = np.array([-1.0, 0.5, 2.0])
    np.testing.assert_allclose(matrix_exponential(np.diag(lam), 0.7), np.diag(np.exp(0.7 * lam)), rtol=1e-14)


def test_exponential_of_nilpotent():
    np.testing.assert_allclose(matrix_exponential(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0), [[1, 1], [0, 1]])


def test_exponential_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        matrix_exponential(np.ones((2, 3)))
    with pytest.raises(InvalidArgument):
        matrix_exponential(np.eye(2), -1.0)
    with pytest.raises(InvalidArgument):
        matrix_exponential(np.array([[np.nan]]))


def test_conditional_moments_at_zero_step_lift_the_state():
    spec = vasicek_spec()
    gen = build_generator(spec, enumerate_basis(1, 4))
    np.testing.assert_allclose(conditional_moments(gen, [0.7], 0.0), lift_state([0.7], gen.basis))


def test_vasicek_conditional_mean_closed_form():
    b, beta = 0.6, -0.5
    gen = build_generator(vasicek_spec(b, beta, 0.3), enumerate_basis(1, 2))
    x, dt = 0.7, 1.3
    got = conditional_moments(gen, [x], dt)[1]
    want = np.exp(beta * dt) * x + b / beta * (np.exp(beta * dt) - 1.0)
    assert abs(got - want) < 1e-10


def test_a13_conditional_moments_match_euler_paths(truth1):
    """Degree 1 and 2 conditional moments at the table1 design against 1e5 Euler paths."""
    spec = truth1.diffusion_spec("P").as_float()
    basis = enumerate_basis(3, 2)
    gen = build_generator(spec, basis)
    x0 = np.array([1.2, -0.3, 0.4])
    rng = np.random.default_rng(11)
    n, h = 100_000, 1e-3
    X = np.tile(x0, (n, 1))
    for _ in range(int(round(1 / h))):
        S = np.maximum(spec.B0 + X @ spec.Bx, 0.0)
        X = X + (spec.b + X @ spec.beta.T) * h + spec.sigma * np.sqrt(S * h) * rng.standard_normal((n, 3))
        X[:, 0] = np.maximum(X[:, 0], 0.0)
    ex = np.array(basis.exponents)
    vals = np.prod(X[:, None, :] ** ex[None], axis=2)[:, 1:]
    z = (vals.mean(axis=0) - conditional_moments(gen, x0, 1.0)[1:]) / (vals.std(axis=0, ddof=1) / np.sqrt(n))
    assert np.all(np.abs(z) < 3.0), z


# ---------------------------------------------------------------------------
# Stationary moments
# ---------------------------------------------------------------------------


def test_vasicek_stationary_mean_and_variance():
    b, beta, s = 0.6, -0.5, 0.3
    m = stationary_moments(build_generator(vasicek_spec(b, beta, s), enumerate_basis(1, 2)))
    mean = -b / beta
    np.testing.assert_allclose(m[0], mean, rtol=1e-10)
    np.testing.assert_allclose(m[1] - mean**2, s**2 / (-2 * beta), rtol=1e-10)


def test_cir_stationary_mean_and_variance():
    b, beta, s = 0.8, -0.6, 0.5
    m = stationary_moments(build_generator(cir_spec(b, beta, s), enumerate_basis(1, 2)))
    mean = -b / beta
    np.testing.assert_allclose(m[0], mean, rtol=1e-10)
    np.testing.assert_allclose(m[1] - mean**2, s**2 * b / (2 * beta**2), rtol=1e-10)


def test_stationary_moments_do_not_depend_on_step(truth1):
    gen = build_generator(truth1.diffusion_spec("P"), enumerate_basis(3, 4))
    np.testing.assert_allclose(stationary_moments(gen, 0.5), stationary_moments(gen, 2.0), rtol=1e-8, atol=1e-12)


def test_exponential_matches_high_precision_reference(truth1):
    """The degree-4 table1-design generator is a hard case for unscaled Pade."""
    import mpmath

    A = build_generator(truth1.diffusion_spec("P"), enumerate_basis(3, 4)).A
    with mpmath.workdps(30):
        ref = np.array(mpmath.expm(mpmath.matrix(A)).tolist(), dtype=float)
    np.testing.assert_allclose(matrix_exponential(A, 1.0), ref, rtol=0, atol=1e-12)


def test_stationary_state_moments_lead_with_one():
    gen = build_generator(vasicek_spec(), enumerate_basis(1, 3))
    full = stationary_state_moments(gen)
    assert full[0] == 1.0 and full.size == 4


def test_nonstationary_drift_fails():
    gen = build_generator(vasicek_spec(beta=0.2), enumerate_basis(1, 2))
    with pytest.raises(NumericalFailure):
        stationary_moments(gen)


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(
    b=st.floats(0.05, 2.0),
    b11=st.floats(-3.0, -0.1),
    offdiag=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2),
    jj=st.lists(st.floats(-0.5, 0.5), min_size=2, max_size=2),
    diag=st.lists(st.floats(-3.0, -0.6), min_size=2, max_size=2),
    t=st.sampled_from([0.1, 1.0, 10.0]),
)
def test_exponential_is_block_lower_triangular(b, b11, offdiag, jj, diag, t):
    beta = [[b11, 0, 0], [offdiag[0], diag[0], jj[0]], [offdiag[1], jj[1], diag[1]]]
    spec = DiffusionSpec([b, -0.1, 0.1], beta, [0.5, 1.0, 0.8], [0, 1, 1], [[1, 0.1, 0.01], [0, 0, 0], [0, 0, 0]])
    basis = enumerate_basis(3, 4)
    E = matrix_exponential(build_generator(spec, basis).A, t)
    deg = basis.degrees()
    above = deg[None, :] > deg[:, None]
    assert np.all(np.abs(E[above]) < 1e-12)


@settings(max_examples=40, deadline=None)
@given(b=st.floats(0.05, 2.0), beta=st.floats(-3.0, -0.05), s=st.floats(0.01, 1.5))
def test_generator_annihilates_constants_and_preserves_degree(b, beta, s):
    A = build_generator(vasicek_spec(b, beta, s), enumerate_basis(1, 4)).A
    assert np.all(A[0] == 0)
    assert np.all(np.triu(A, 1) == 0)
