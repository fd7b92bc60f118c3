"""Tests for the yield moment catalogue and its building blocks."""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np
import pytest
from conftest import cir_spec, vasicek_spec
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import roots_genlaguerre, roots_hermitenorm

from affine_gmm.errors import InvalidArgument
from affine_gmm.polyproc import build_generator, enumerate_basis, stationary_moments
from affine_gmm.riccati import YieldLoadings, yield_loadings
from affine_gmm.simulate import SimConfig, simulate_latent
from affine_gmm.yieldmoments import (
    MomentPlan,
    NoiseSpec,
    autocovariance_moments,
    catalogue_keys,
    catalogue_size,
    contemporaneous_moments,
    cross_time_moments,
    default_labels,
    g2,
    g3,
    g4,
    moment_catalogue,
    moment_coeff_vectors,
    parse_label,
    vech,
    vech_inverse,
)

# Enumerated index tables for d = 3, as printed.
G2_TABLE = {(1, 1): 1, (1, 2): 2, (1, 3): 3, (2, 2): 4, (2, 3): 5, (3, 3): 6}
G3_TABLE = {
    (1, 1, 1): 1, (1, 1, 2): 2, (1, 1, 3): 3, (1, 2, 2): 4, (1, 2, 3): 5,
    (1, 3, 3): 6, (2, 2, 2): 7, (2, 2, 3): 8, (2, 3, 3): 9, (3, 3, 3): 10,
}
G4_TABLE = {
    (1, 1, 1, 1): 1, (1, 1, 1, 2): 2, (1, 1, 1, 3): 3, (1, 1, 2, 2): 4, (1, 1, 2, 3): 5,
    (1, 1, 3, 3): 6, (1, 2, 2, 2): 7, (1, 2, 2, 3): 8, (1, 2, 3, 3): 9, (1, 3, 3, 3): 10,
    (2, 2, 2, 2): 11, (2, 2, 2, 3): 12, (2, 2, 3, 3): 13, (2, 3, 3, 3): 14, (3, 3, 3, 3): 15,
}


def printed_m_vectors(a, b):
    """Coefficient listings for d = 3 transcribed term by term."""
    m2 = [a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[0] * b[2] + a[2] * b[0], a[1] * b[1],
          a[1] * b[2] + a[2] * b[1], a[2] * b[2]]
    m3a = [a[0] ** 2 * b[0], a[0] ** 2 * b[1] + 2 * a[0] * a[1] * b[0], a[0] ** 2 * b[2] + 2 * a[0] * a[2] * b[0],
           a[1] ** 2 * b[0] + 2 * a[0] * a[1] * b[1], a[2] ** 2 * b[0] + 2 * a[0] * a[2] * b[2],
           2 * (a[0] * a[1] * b[2] + a[0] * a[2] * b[1] + a[1] * a[2] * b[0]), a[1] ** 2 * b[1],
           a[1] ** 2 * b[2] + 2 * a[1] * a[2] * b[1], a[2] ** 2 * b[1] + 2 * a[1] * a[2] * b[2], a[2] ** 2 * b[2]]
    m3b = [a[0] * b[0] ** 2, a[1] * b[0] ** 2 + 2 * a[0] * b[0] * b[1], a[2] * b[0] ** 2 + 2 * a[0] * b[0] * b[2],
           a[0] * b[1] ** 2 + 2 * a[1] * b[0] * b[1], a[0] * b[2] ** 2 + 2 * a[2] * b[0] * b[2],
           2 * (a[0] * b[1] * b[2] + a[1] * b[0] * b[2] + a[2] * b[0] * b[1]), a[1] * b[1] ** 2,
           a[2] * b[1] ** 2 + 2 * a[1] * b[1] * b[2], a[1] * b[2] ** 2 + 2 * a[2] * b[1] * b[2], a[2] * b[2] ** 2]
    m4 = [
        a[0] ** 2 * b[0] ** 2,
        2 * a[0] * b[0] * (a[1] * b[0] + a[0] * b[1]),
        2 * a[0] * b[0] * (a[0] * b[2] + a[2] * b[0]),
        a[0] ** 2 * b[1] ** 2 + a[1] ** 2 * b[0] ** 2 + 4 * a[0] * a[1] * b[0] * b[1],
        4 * a[0] * b[0] * (a[1] * b[2] + a[2] * b[1]) + 2 * (a[0] ** 2 * b[1] * b[2] + a[1] * a[2] * b[0] ** 2),
        a[0] ** 2 * b[2] ** 2 + a[2] ** 2 * b[0] ** 2 + 4 * a[0] * a[2] * b[0] * b[2],
        2 * a[1] * b[1] * (a[1] * b[0] + a[0] * b[1]),
        4 * a[1] * b[1] * (a[2] * b[0] + a[0] * b[2]) + 2 * (a[0] * a[2] * b[1] ** 2 + a[1] ** 2 * b[0] * b[2]),
        4 * a[2] * b[2] * (a[0] * b[1] + a[1] * b[0]) + 2 * (a[0] * a[1] * b[2] ** 2 + a[2] ** 2 * b[0] * b[1]),
        2 * a[2] * b[2] * (a[2] * b[0] + a[0] * b[2]),
        a[1] ** 2 * b[1] ** 2,
        2 * a[1] * b[1] * (a[2] * b[1] + a[1] * b[2]),
        a[1] ** 2 * b[2] ** 2 + a[2] ** 2 * b[1] ** 2 + 4 * a[1] * a[2] * b[1] * b[2],
        2 * a[2] * b[2] * (a[1] * b[2] + a[2] * b[1]),
        a[2] ** 2 * b[2] ** 2,
    ]
    return np.array(m2), np.array(m3a), np.array(m3b), np.array(m4)


def one_factor_loadings(Phi, Psi) -> YieldLoadings:
    Phi = np.asarray(Phi, dtype=float)
    return YieldLoadings(np.arange(1.0, Phi.size + 1), Phi, np.asarray(Psi, dtype=float).reshape(-1, 1))


def quadrature_law(model: str, b: float, beta: float, s: float, n: int = 80):
    """Nodes and weights of the stationary law of a one-factor model."""
    if model == "vasicek":
        x, w = roots_hermitenorm(n)
        return -b / beta + np.sqrt(s**2 / (-2 * beta)) * x, w / w.sum()
    shape, scale = 2 * b / s**2, s**2 / (-2 * beta)
    x, w = roots_genlaguerre(n, shape - 1)
    return x * scale, w / w.sum()


def conditional_law(model: str, b: float, beta: float, s: float, x: np.ndarray):
    """One-step conditional mean and variance of the state."""
    e = np.exp(beta)
    mean = e * x + b / beta * (e - 1)
    if model == "vasicek":
        return mean, np.full_like(x, s**2 * (1 - e**2) / (-2 * beta))
    k = -beta
    var = x * s**2 / k * (e - e**2) + b * s**2 / (2 * k**2) * (1 - e) ** 2
    return mean, var


def noise_poly_moment(a: np.ndarray, c: int, sigma2: float) -> np.ndarray:
    """``E((a + eps)^c)`` for Gaussian ``eps`` by Hermite quadrature."""
    z, w = roots_hermitenorm(8)
    w = w / w.sum()
    return ((a[:, None] + np.sqrt(sigma2) * z[None, :]) ** c) @ w


# ---------------------------------------------------------------------------
# vech and index functions
# ---------------------------------------------------------------------------


def test_vech_inverse_display():
    S = vech_inverse([1, 2, 3, 4, 5, 6], 3)
    np.testing.assert_array_equal(S, [[1, 2, 3], [2, 4, 5], [3, 5, 6]])


def test_vech_inverse_scalar():
    np.testing.assert_array_equal(vech_inverse([7.0], 1), [[7.0]])


def test_vech_inverse_length_check():
    with pytest.raises(InvalidArgument):
        vech_inverse([1, 2, 3], 3)


@settings(max_examples=50, deadline=None)
@given(d=st.integers(1, 3), data=st.data())
def test_vech_roundtrip(d, data):
    v = np.array(data.draw(st.lists(st.floats(-1e6, 1e6), min_size=d * (d + 1) // 2, max_size=d * (d + 1) // 2)))
    np.testing.assert_array_equal(vech(vech_inverse(v, d)), v)


def test_index_spot_values():
    assert g2(2, 3) == 5
    assert g3(1, 2, 3) == 5 and g3(3, 3, 3) == 10
    assert g4(2, 2, 3, 3) == 13


@pytest.mark.parametrize("fn,table", [(g2, G2_TABLE), (g3, G3_TABLE), (g4, G4_TABLE)])
def test_index_tables(fn, table):
    for args, pos in table.items():
        assert fn(*args) == pos


def test_index_functions_follow_basis_order():
    basis = enumerate_basis(3, 4)
    for k, fn in ((2, g2), (3, g3), (4, g4)):
        start = basis.degree_block(k).start
        for combo in combinations_with_replacement(range(1, 4), k):
            e = [0, 0, 0]
            for i in combo:
                e[i - 1] += 1
            assert basis.index[tuple(e)] == start + fn(*combo) - 1


@pytest.mark.parametrize("args", [(2, 1), (0, 1), (1, 4), (3, 2, 2), (1, 2, 1, 3)])
def test_index_rejects_unsorted_or_out_of_range(args):
    fn = {2: g2, 3: g3, 4: g4}[len(args)]
    with pytest.raises(InvalidArgument):
        fn(*args)


# ---------------------------------------------------------------------------
# Coefficient vectors
# ---------------------------------------------------------------------------


def test_m_vectors_match_printed_listings():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b = rng.normal(size=3), rng.normal(size=3)
        m2, m3a, m3b, m4 = moment_coeff_vectors(a, b)
        p2, p3a, p3b, p4 = printed_m_vectors(a, b)
        np.testing.assert_allclose(m2, p2, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(m4, p4, rtol=1e-12, atol=1e-14)
        # The printed degree-3 listings put x1*x3^2 before x1*x2*x3; the basis
        # order is x1*x2*x3 then x1*x3^2.
        swap = [0, 1, 2, 3, 5, 4, 6, 7, 8, 9]
        np.testing.assert_allclose(m3a, p3a[swap], rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(m3b, p3b[swap], rtol=1e-12, atol=1e-14)


def test_m2_symmetric_and_unit_case():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(moment_coeff_vectors(a, b)[0], moment_coeff_vectors(b, a)[0])
    np.testing.assert_array_equal(moment_coeff_vectors([1, 0, 0], [1, 0, 0])[0], [1, 0, 0, 0, 0, 0])


def test_m_vectors_reproduce_products_on_draws():
    """Inner products with empirical monomial averages equal direct products."""
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=3), rng.normal(size=3)
    X = rng.gamma(2.0, size=(20_000, 3)) - 1.0
    basis = enumerate_basis(3, 4)
    ex = np.array(basis.exponents)
    mono = np.prod(X[:, None, :] ** ex[None], axis=2).mean(axis=0)
    m2, m3a, m3b, m4 = moment_coeff_vectors(a, b)
    pa, pb = X @ a, X @ b
    blk = lambda k: mono[basis.degree_block(k)]
    np.testing.assert_allclose(m2 @ blk(2), np.mean(pa * pb), rtol=1e-10)
    np.testing.assert_allclose(m3a @ blk(3), np.mean(pa**2 * pb), rtol=1e-10)
    np.testing.assert_allclose(m3b @ blk(3), np.mean(pa * pb**2), rtol=1e-10)
    np.testing.assert_allclose(m4 @ blk(4), np.mean(pa**2 * pb**2), rtol=1e-10)


def test_m_vectors_zero_pad_lower_dimensions():
    m2 = moment_coeff_vectors([2.0], [3.0])[0]
    np.testing.assert_array_equal(m2, [6, 0, 0, 0, 0, 0])


# ---------------------------------------------------------------------------
# Catalogue layout
# ---------------------------------------------------------------------------


def test_catalogue_size_for_ten_maturities():
    assert catalogue_size(10) == 10 + 55 + 220 + 715 + 20
    assert len(catalogue_keys(10)) == catalogue_size(10)


def test_default_labels():
    labels = default_labels(10)
    assert len(labels) == 27 and len(set(labels)) == 27
    assert "Eyy 2 3" in labels and "Eyy 9 10" in labels and "Eylag 10" in labels


def test_label_parsing_is_order_free():
    assert parse_label("Eyy 3 2") == parse_label("Eyy 2 3")
    assert parse_label("Ey2y 1 2").mats == (0, 0, 1)
    assert parse_label("Ey2y2lag 4").lag and parse_label("Ey2y2lag 4").power == 2
    for bad in ("Eyy 1", "Ezz 1 2", "Eylag 1 2", "Ey 0", "Eyyyyy 1 1 1 1 1"):
        with pytest.raises(InvalidArgument):
            parse_label(bad)


def test_plan_rejects_duplicates():
    with pytest.raises(InvalidArgument):
        MomentPlan(["Eyy 1 2", "Eyy 2 1"], 3, 1)


# ---------------------------------------------------------------------------
# Contemporaneous and lag moments
# ---------------------------------------------------------------------------


def test_pure_noise_reduction():
    L = one_factor_loadings([0.5, 1.5], [0.0, 0.0])
    stat = stationary_moments(build_generator(vasicek_spec(), enumerate_basis(1, 2)))
    cat = contemporaneous_moments(L, stat, NoiseSpec(0.01), p=2)
    assert cat.get("Ey 2") == pytest.approx(1.5, abs=1e-14)
    assert cat.get("Eyy 1 1") == pytest.approx(0.25 + 0.01, abs=1e-14)
    assert cat.get("Eyy 1 2") == pytest.approx(0.75, abs=1e-14)


def test_pure_noise_lag_moment():
    L = one_factor_loadings([0.5, 1.5], [0.0, 0.0])
    gen = build_generator(vasicek_spec(), enumerate_basis(1, 4))
    cat = autocovariance_moments(L, gen, stationary_moments(gen), NoiseSpec.gaussian(0.01))
    assert cat.get("Eylag 2") == pytest.approx(2.25, abs=1e-13)


def test_vasicek_second_moment_oracle():
    b, beta, s = 0.6, -0.5, 0.3
    Phi, Psi, sig2 = 0.4, 0.9, 0.02
    mu, var = -b / beta, s**2 / (-2 * beta)
    stat = stationary_moments(build_generator(vasicek_spec(b, beta, s), enumerate_basis(1, 2)))
    got = contemporaneous_moments(one_factor_loadings([Phi], [Psi]), stat, NoiseSpec(sig2), p=2).get("Eyy 1 1")
    assert got == pytest.approx(Phi**2 + 2 * Phi * Psi * mu + Psi**2 * (var + mu**2) + sig2, rel=1e-12)


def test_vasicek_lag_autocovariance():
    b, beta, s = 0.6, -0.5, 0.3
    Phi, Psi = 0.4, 0.9
    gen = build_generator(vasicek_spec(b, beta, s), enumerate_basis(1, 4))
    stat = stationary_moments(gen)
    cat = moment_catalogue(one_factor_loadings([Phi], [Psi]), gen, stat, NoiseSpec.gaussian(0.02))
    mean_y = Phi + Psi * (-b / beta)
    cov = cat.get("Eylag 1") - mean_y**2
    assert cov == pytest.approx(Psi**2 * np.exp(beta) * s**2 / (-2 * beta), rel=1e-10)


def test_cross_time_small_step_continuity(truth1):
    gen = build_generator(truth1.diffusion_spec("P"), enumerate_basis(3, 2))
    stat = stationary_moments(gen)
    C = cross_time_moments(gen, stat, 1, 1, 1e-6)
    np.testing.assert_allclose(C, vech_inverse(stat[3:9], 3), atol=1e-4)


def test_vasicek_cross_time_moment():
    b, beta, s = 0.6, -0.5, 0.3
    gen = build_generator(vasicek_spec(b, beta, s), enumerate_basis(1, 2))
    stat = stationary_moments(gen)
    got = cross_time_moments(gen, stat, 1, 1, 0.7)[0, 0]
    assert got == pytest.approx((b / beta) ** 2 + np.exp(0.7 * beta) * s**2 / (-2 * beta), rel=1e-12)


def test_cross_time_degree_limit(truth1):
    gen = build_generator(truth1.diffusion_spec("P"), enumerate_basis(3, 4))
    with pytest.raises(InvalidArgument):
        cross_time_moments(gen, stationary_moments(gen), 3, 2, 1.0)


def test_a13_cross_time_moment_against_long_path(truth1):
    """``E(X_{t,1}^2 X_{s,2})`` at lag one against a long simulated path."""
    spec = truth1.diffusion_spec("P")
    gen = build_generator(spec, enumerate_basis(3, 3))
    C = cross_time_moments(gen, stationary_moments(gen), 2, 1, 1.0)
    X = simulate_latent(spec, SimConfig(T=40_000, substeps=200, seed=21))
    series = X[1:, 0] ** 2 * X[:-1, 1]
    nb = int(np.sqrt(series.size))
    batches = series[: nb * nb].reshape(nb, nb).mean(axis=1)
    se = batches.std(ddof=1) / np.sqrt(nb)
    assert abs(series.mean() - C[0, 1]) < 4 * se


def test_fourth_moments_need_sigma4():
    L = one_factor_loadings([0.5], [1.0])
    stat = stationary_moments(build_generator(vasicek_spec(), enumerate_basis(1, 4)))
    with pytest.raises(InvalidArgument):
        contemporaneous_moments(L, stat, NoiseSpec(0.01), p=4)


@pytest.mark.parametrize("model", ["vasicek", "cir"])
def test_one_factor_catalogue_matches_quadrature(model):
    """Every catalogue entry against integration over the stationary law."""
    b, beta, s = (0.6, -0.5, 0.3) if model == "vasicek" else (0.8, -0.6, 0.5)
    spec = vasicek_spec(b, beta, s) if model == "vasicek" else cir_spec(b, beta, s)
    Phi, Psi, sig2 = np.array([0.3, 0.5, 0.8]), np.array([0.9, 0.6, 0.3]), 0.02
    gen = build_generator(spec, enumerate_basis(1, 4))
    cat = moment_catalogue(one_factor_loadings(Phi, Psi), gen, stationary_moments(gen), NoiseSpec.gaussian(sig2))
    x, w = quadrature_law(model, b, beta, s)
    cm, cv = conditional_law(model, b, beta, s, x)
    for key, got in zip(cat.labels, cat.values):
        k = parse_label(key)
        if not k.lag:
            vals = np.ones_like(x)
            for i in set(k.mats):
                vals = vals * noise_poly_moment(Phi[i] + Psi[i] * x, k.mats.count(i), sig2)
            want = vals @ w
        else:
            i, pw = k.mats[0], k.power
            now = noise_poly_moment(Phi[i] + Psi[i] * x, pw, sig2)
            m_next = Phi[i] + Psi[i] * cm
            if pw == 1:
                nxt = m_next
            else:
                nxt = m_next**2 + Psi[i] ** 2 * cv + sig2
            want = (now * nxt) @ w
        assert got == pytest.approx(want, rel=1e-6, abs=1e-9), key


# ---------------------------------------------------------------------------
# Properties on the A1(3) catalogue
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def a13_parts():
    from affine_gmm.model import table1_truth

    p = table1_truth()
    tau = np.array([0.25, 1.0, 5.0, 10.0])
    L = yield_loadings(p.q_spec(), tau)
    gen = build_generator(p.diffusion_spec("P"), enumerate_basis(3, 4))
    return p, L, gen, stationary_moments(gen)


def test_catalogue_symmetry_and_cauchy_schwarz(a13_parts):
    p, L, gen, stat = a13_parts
    cat = moment_catalogue(L, gen, stat, NoiseSpec.gaussian(p.sigma2eps), p=2)
    M = L.PhiTilde.size
    for i in range(1, M + 1):
        for j in range(1, M + 1):
            assert cat.get(f"Eyy {i} {j}") == cat.get(f"Eyy {j} {i}")
            assert cat.get(f"Eyy {i} {j}") ** 2 <= cat.get(f"Eyy {i} {i}") * cat.get(f"Eyy {j} {j}") * (1 + 1e-12)
        var = cat.get(f"Eyy {i} {i}") - cat.get(f"Ey {i}") ** 2
        assert abs(cat.get(f"Eylag {i}") - cat.get(f"Ey {i}") ** 2) <= var


@settings(max_examples=20, deadline=None)
@given(delta=st.floats(1e-4, 0.5))
def test_noise_separability(a13_parts, delta):
    p, L, gen, stat = a13_parts
    base = contemporaneous_moments(L, stat, NoiseSpec(p.sigma2eps), p=2)
    bumped = contemporaneous_moments(L, stat, NoiseSpec(p.sigma2eps + delta), p=2)
    for i in range(1, 5):
        for j in range(i, 5):
            diff = bumped.get(f"Eyy {i} {j}") - base.get(f"Eyy {i} {j}")
            assert diff == pytest.approx(delta if i == j else 0.0, abs=1e-10)
