"""Theoretical moments of noisy observed yields.

Observed yields are ``y_ti = PhiTilde_i + PsiTilde_i' X_t + eps_ti`` with
serially independent, homogeneous measurement noise.  Every moment of the
yields is a polynomial expectation in the state, so the stationary moment
vector of :mod:`affine_gmm.polyproc` plus the matrix exponential of the
generator determine all of them:

* contemporaneous moments ``E(y_i1 ... y_ik)`` for ``k <= 4`` are inner
  products of polynomial coefficient vectors with the stationary moments;
* lag-one moments ``E(y_ti^k y_{t-1,i}^k)`` use the moment-closure property
  ``E(f(X_t) | X_s) = (expm(dt A)' c_f)' x~(X_s)`` to reduce the time-``t``
  factor to a polynomial in ``X_s`` of the same degree.

Positions inside the degree blocks of the monomial basis are tracked by the
index functions :func:`g2`, :func:`g3` and :func:`g4`.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cache
from itertools import combinations_with_replacement, product
from math import comb

import numpy as np

from .errors import InvalidArgument
from .polyproc import (
    GeneratorMatrix,
    MonomialBasis,
    enumerate_basis,
    matrix_exponential,
)
from .riccati import YieldLoadings

logger = logging.getLogger(__name__)

MAX_YIELD_DEGREE = 4


# ---------------------------------------------------------------------------
# vech and the block index functions
# ---------------------------------------------------------------------------


def vech(S: np.ndarray) -> np.ndarray:
    """Stack the upper triangle of a symmetric matrix row by row.

    For a symmetric matrix this equals the usual column-wise lower-triangle
    ``vech`` and matches the order of the degree-two monomial block.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidArgument("vech expects a square matrix")
    return S[np.triu_indices(S.shape[0])]


def vech_inverse(v: Sequence[float], d: int) -> np.ndarray:
    """Symmetric ``d x d`` matrix whose :func:`vech` is ``v``."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size != d * (d + 1) // 2:
        raise InvalidArgument(f"vech_inverse needs {d * (d + 1) // 2} entries for d={d}, got shape {v.shape}")
    S = np.zeros((d, d))
    S[np.triu_indices(d)] = v
    return S + np.triu(S, 1).T


def _dim(i: int, K: int) -> int:
    """Number of monomials of degree ``i`` in ``K`` variables."""
    return comb(i + K - 1, i) if K > 0 else int(i == 0)


def _check_sorted(args: tuple[int, ...], d: int) -> None:
    if not (1 <= d <= 3):
        raise InvalidArgument(f"index functions support d in 1..3, got {d}")
    if any(not isinstance(a, (int, np.integer)) for a in args):
        raise InvalidArgument(f"indices must be integers, got {args}")
    if args[0] < 1 or args[-1] > d or any(a > b for a, b in zip(args, args[1:])):
        raise InvalidArgument(f"indices must satisfy 1 <= i <= ... <= {d}, got {args}")


def g2(i: int, j: int, d: int = 3) -> int:
    """1-based position of ``x_i x_j`` (``i <= j``) in the degree-two block."""
    _check_sorted((i, j), d)
    return (i - 1) * (2 * d - i) // 2 + j


def g3(i: int, j: int, m: int, d: int = 3) -> int:
    """1-based position of ``x_i x_j x_m`` (``i <= j <= m``) in the degree-three block."""
    _check_sorted((i, j, m), d)
    lead = sum(_dim(2, d - k + 1) for k in range(1, i))
    return lead + (j - i) * (2 * d - i - j + 3) // 2 + m - j + 1


def g4(i: int, j: int, m: int, n: int, d: int = 3) -> int:
    """1-based position of ``x_i x_j x_m x_n`` (sorted) in the degree-four block."""
    _check_sorted((i, j, m, n), d)
    lead = sum(_dim(3, d - k + 1) for k in range(1, i))
    second = sum(_dim(2, d - s + 1) for s in range(i, j))
    return lead + second + (2 * d + 2 - (m + j - 1)) * (m - j) // 2 + n - m + 1


def _verify_index_functions() -> None:
    """Compare the closed formulas with brute-force enumeration for d <= 3."""
    for d in range(1, 4):
        for k, fn in ((2, g2), (3, g3), (4, g4)):
            for pos, combo in enumerate(combinations_with_replacement(range(1, d + 1), k), start=1):
                got = fn(*combo, d=d)
                if got != pos:
                    raise AssertionError(f"g{k}{combo} = {got} for d={d}, enumeration gives {pos}")


_verify_index_functions()


# ---------------------------------------------------------------------------
# Polynomial algebra on the monomial basis
# ---------------------------------------------------------------------------


@cache
def _scatter(d: int, k: int) -> np.ndarray:
    """Map flattened ``(d+1)^k`` tensor entries to basis positions.

    Slot 0 of each tensor axis is the constant 1, slots ``1..d`` are the state
    coordinates.  Returns an integer array of basis positions in the degree
    ``<= k`` basis (which is a prefix of every larger basis).
    """
    basis = enumerate_basis(d, max(k, 1))
    out = np.empty((d + 1) ** k, dtype=np.intp)
    for flat, slots in enumerate(product(range(d + 1), repeat=k)):
        e = [0] * d
        for s in slots:
            if s:
                e[s - 1] += 1
        out[flat] = basis.index[tuple(e)]
    return out


@cache
def _scatter_matrix(d: int, k: int, N: int) -> np.ndarray:
    """Dense 0/1 matrix sending flattened tensors to coefficient vectors of length ``N``."""
    idx = _scatter(d, k)
    W = np.zeros((idx.size, N))
    W[np.arange(idx.size), idx] = 1.0
    return W


def product_coefficients(forms: np.ndarray, N: int) -> np.ndarray:
    """Basis coefficients of products of affine forms.

    ``forms`` has shape ``(n, k, d + 1)``; row ``r`` describes the polynomial
    ``prod_q (forms[r, q, 0] + forms[r, q, 1:] @ x)``.  Returns an ``(n, N)``
    array of coefficients in the graded basis of length ``N``.
    """
    forms = np.asarray(forms, dtype=float)
    n, k, d1 = forms.shape
    if k == 0:
        out = np.zeros((n, N))
        out[:, 0] = 1.0
        return out
    outer = forms[:, 0, :]
    for q in range(1, k):
        outer = (outer[:, :, None] * forms[:, q, None, :]).reshape(n, -1)
    return outer @ _scatter_matrix(d1 - 1, k, N)


@cache
def _product_table(d: int, p: int) -> np.ndarray:
    """``T[n, m]`` = basis position of ``x^(e_n + e_m)``, or -1 above degree ``p``."""
    basis = enumerate_basis(d, p)
    T = -np.ones((basis.N, basis.N), dtype=np.intp)
    for n, en in enumerate(basis.exponents):
        for m, em in enumerate(basis.exponents):
            e = tuple(a + b for a, b in zip(en, em))
            if sum(e) <= p:
                T[n, m] = basis.index[e]
    return T


def _block_end(d: int, k: int) -> int:
    """Number of basis monomials of degree ``<= k``."""
    return sum(_dim(j, d) for j in range(k + 1))


def moment_coeff_vectors(
    PsiI: Sequence[float], PsiJ: Sequence[float]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Coefficient vectors of ``(Psi_i'x)(Psi_j'x)``, ``(Psi_i'x)^2 (Psi_j'x)``,
    ``(Psi_i'x)(Psi_j'x)^2`` and ``(Psi_i'x)^2 (Psi_j'x)^2``.

    Each vector is expressed in the degree-2, degree-3 or degree-4 block of
    the graded basis, so that its inner product with the matching block of
    stationary moments gives the corresponding expectation.  Vectors of
    length ``d < 3`` are zero-padded to ``d = 3``.
    """
    a = np.asarray(PsiI, dtype=float)
    b = np.asarray(PsiJ, dtype=float)
    if a.ndim != 1 or a.shape != b.shape or not 1 <= a.size <= 3:
        raise InvalidArgument("loadings must be vectors of equal length between 1 and 3")
    a = np.pad(a, (0, 3 - a.size))
    b = np.pad(b, (0, 3 - b.size))
    la = np.concatenate([[0.0], a])
    lb = np.concatenate([[0.0], b])
    N = _block_end(3, 4)
    forms = [[la, lb], [la, la, lb], [la, lb, lb], [la, la, lb, lb]]
    out = []
    for k, f in zip((2, 3, 3, 4), forms):
        c = product_coefficients(np.array([f]), N)[0]
        out.append(c[_block_end(3, k - 1):_block_end(3, k)])
    return out[0], out[1], out[2], out[3]


# ---------------------------------------------------------------------------
# Cross-time moments of the state
# ---------------------------------------------------------------------------


def _full_moments(statmoms: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    mu = np.asarray(statmoms, dtype=float)
    if mu.size == basis.N - 1:
        mu = np.concatenate([[1.0], mu])
    if mu.shape != (basis.N,):
        raise InvalidArgument(f"expected {basis.N} stationary moments for d={basis.d}, p={basis.p}, got {mu.size}")
    return mu


def cross_moment_matrix(E: np.ndarray, mu: np.ndarray, basis: MonomialBasis, v: int, w: int) -> np.ndarray:
    """``C[r, c] = E(x~_r(X_t) x~_c(X_s))`` for basis rows of degree ``<= v``
    and columns of degree ``<= w``, given ``E = expm((t - s) A)``.

    Only the leading ``N_v x N_v`` block of ``E`` enters, which is exact
    because ``E`` never maps a degree-``v`` monomial onto higher degrees.
    """
    if v + w > basis.p:
        raise InvalidArgument(f"cross moments need v + w <= {basis.p}, got v={v}, w={w}")
    Nv = _block_end(basis.d, v)
    Nw = _block_end(basis.d, w)
    T = _product_table(basis.d, basis.p)[:Nv, :Nw]
    return E[:Nv, :Nv] @ mu[T]


def cross_time_moments(A: GeneratorMatrix, statmoms: np.ndarray, v: int, w: int, dt: float) -> np.ndarray:
    """``E(X_t^v (X_s^w)')`` for ``t = s + dt`` under the stationary law.

    Rows follow the degree-``v`` monomial block and columns the degree-``w``
    block.  ``statmoms`` may or may not include the leading constant.
    """
    if not (isinstance(v, (int, np.integer)) and isinstance(w, (int, np.integer)) and v >= 0 and w >= 0):
        raise InvalidArgument("degrees must be nonnegative integers")
    if v + w > MAX_YIELD_DEGREE:
        raise InvalidArgument(f"v + w must not exceed {MAX_YIELD_DEGREE}, got {v + w}")
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt!r}")
    basis = A.basis
    if v + w > basis.p:
        raise InvalidArgument(f"generator basis has degree {basis.p}, need {v + w}")
    mu = _full_moments(statmoms, basis)
    E = matrix_exponential(A.A, dt)
    C = cross_moment_matrix(E, mu, basis, v, w)
    rows = slice(_block_end(basis.d, v - 1) if v else 0, _block_end(basis.d, v))
    cols = slice(_block_end(basis.d, w - 1) if w else 0, _block_end(basis.d, w))
    return C[rows, cols]


# ---------------------------------------------------------------------------
# Noise and the moment catalogue
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Homogeneous measurement noise: variance ``sigma2`` and optional fourth moment."""

    sigma2: float
    sigma4: float | None = None

    def __post_init__(self) -> None:
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InvalidArgument(f"noise variance must be positive, got {self.sigma2!r}")
        if self.sigma4 is not None and not (np.isfinite(self.sigma4) and self.sigma4 >= self.sigma2**2):
            raise InvalidArgument(
                f"noise fourth moment {self.sigma4!r} is below the squared variance {self.sigma2**2!r}"
            )

    @classmethod
    def gaussian(cls, sigma2: float) -> NoiseSpec:
        return cls(sigma2, 3.0 * sigma2**2)

    def moment(self, k: int) -> float:
        """``E(eps^k)`` for ``k <= 4``."""
        if k == 0:
            return 1.0
        if k % 2:
            return 0.0
        if k == 2:
            return self.sigma2
        if self.sigma4 is None:
            raise InvalidArgument("the noise fourth moment is required for this moment but was not given")
        return self.sigma4


@dataclass(frozen=True)
class MomentKey:
    """Identity of one catalogue entry.

    ``mats`` holds sorted 0-based maturity indices.  For contemporaneous
    entries (``lag = False``) the key is the multiset of yields multiplied at
    the same date.  For lag entries ``mats = (i,)`` and ``power`` gives the
    exponent used at both dates: ``E(y_ti^power y_{t-1,i}^power)``.
    """

    mats: tuple[int, ...]
    lag: bool = False
    power: int = 1

    @property
    def label(self) -> str:
        """Canonical text label with 1-based maturity indices.

        ``Ey i``, ``Eyy i j``, ``Ey2y i j`` (``y_i^2 y_j``), ``Eyy2 i j``,
        ``Ey2y2 i j``, ``Ey3y i j``, ``Eyy3 i j``, ``Eyyy i j k``,
        ``Eyyyy i j k l``, ``Eylag i`` and ``Ey2y2lag i``.
        """
        if self.lag:
            name = "Eylag" if self.power == 1 else "Ey2y2lag"
            return f"{name} {self.mats[0] + 1}"
        distinct = sorted(set(self.mats))
        counts = [self.mats.count(i) for i in distinct]
        if len(self.mats) <= 2 or len(distinct) > 2:
            name, idx = "E" + "y" * len(self.mats), self.mats
        elif len(distinct) == 1:
            half = len(self.mats) // 2
            rest = len(self.mats) - half
            name, idx = "E" + _factor(rest) + _factor(half), (distinct[0], distinct[0])
        else:
            name, idx = "E" + "".join(_factor(c) for c in counts), distinct
        return name + " " + " ".join(str(i + 1) for i in idx)

    @property
    def degree(self) -> int:
        return 2 * self.power if self.lag else len(self.mats)


def _factor(c: int) -> str:
    return "y" if c == 1 else f"y{c}"


def parse_label(label: str) -> MomentKey:
    """Parse a catalogue label such as ``Eyy 3 2`` or ``Ey2y2lag 10``.

    Factors in the name pair up with the listed maturities, so ``Eyy 3 2``
    and ``Eyy 2 3`` denote the same moment.
    """
    parts = label.split()
    try:
        if not parts or not parts[0].startswith("E"):
            raise ValueError
        name, idx = parts[0][1:], [int(x) - 1 for x in parts[1:]]
        if any(i < 0 for i in idx):
            raise ValueError
        if name in ("ylag", "y2y2lag"):
            if len(idx) != 1:
                raise ValueError
            return MomentKey((idx[0],), True, 1 if name == "ylag" else 2)
        factors = _split_factors(name)
        if len(factors) != len(idx):
            raise ValueError
        mats = sorted(i for i, c in zip(idx, factors) for _ in range(c))
        if not 1 <= len(mats) <= MAX_YIELD_DEGREE:
            raise ValueError
        return MomentKey(tuple(mats))
    except ValueError:
        raise InvalidArgument(f"cannot parse moment label {label!r}") from None


def _split_factors(name: str) -> list[int]:
    out: list[int] = []
    pos = 0
    while pos < len(name):
        if name[pos] != "y":
            raise ValueError
        pos += 1
        digits = ""
        while pos < len(name) and name[pos].isdigit():
            digits += name[pos]
            pos += 1
        out.append(int(digits) if digits else 1)
    if not out or min(out) < 1:
        raise ValueError
    return out


def catalogue_keys(M: int, p: int = 4) -> tuple[MomentKey, ...]:
    """Frozen order of the full catalogue for ``M`` maturities and order ``p``.

    Contemporaneous products of degree ``1..p`` come first, degree by degree
    and lexicographically in the maturity indices, followed by the ``M``
    yield autocovariances and the ``M`` squared-yield autocovariances.
    """
    if M < 1 or not 1 <= p <= MAX_YIELD_DEGREE:
        raise InvalidArgument(f"need M >= 1 and 1 <= p <= {MAX_YIELD_DEGREE}")
    keys = [MomentKey(c) for k in range(1, p + 1) for c in combinations_with_replacement(range(M), k)]
    keys += [MomentKey((i,), True, 1) for i in range(M)]
    keys += [MomentKey((i,), True, 2) for i in range(M)]
    return tuple(keys)


def catalogue_size(M: int, p: int = 4) -> int:
    """Number of distinct yield products of degree ``1..p`` plus ``2M`` lag terms."""
    return sum(comb(j + M - 1, j) for j in range(1, p + 1)) + 2 * M


def default_labels(M: int = 10) -> tuple[str, ...]:
    """The 27-moment default selection used for estimation with 10 maturities."""
    if M != 10:
        raise InvalidArgument("the default selection is defined for 10 maturities")
    keys = [MomentKey((i,)) for i in range(M)]
    keys += [MomentKey((i,), True, 1) for i in range(M)]
    pairs = ((1, 1), (2, 2), (3, 2), (5, 5), (7, 7), (9, 10), (10, 10))
    keys += [MomentKey(tuple(sorted((i - 1, j - 1)))) for i, j in pairs]
    return tuple(k.label for k in keys)


@dataclass(frozen=True)
class MomentCatalogue:
    """Ordered labels with their moment values."""

    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.values):
            raise InvalidArgument("labels and values differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    def get(self, label: str) -> float:
        return float(self.values[self.labels.index(parse_label(label).label)])

    def select(self, labels: Sequence[str]) -> MomentCatalogue:
        keys = [parse_label(s).label for s in labels]
        return MomentCatalogue(tuple(keys), np.array([self.values[self.labels.index(k)] for k in keys]))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, map(float, self.values)))


def _noise_splits(counts: dict[int, int], noise_moment) -> Iterable[tuple[float, dict[int, int]]]:
    """Expand ``prod_i (A_i + eps_i)^{c_i}`` into ``weight * E(prod A_i^{c_i - a_i})`` terms."""
    items = list(counts.items())
    for split in product(*(range(c + 1) for _, c in items)):
        w = 1.0
        for (_, c), a in zip(items, split):
            w *= comb(c, a) * noise_moment(a)
            if w == 0.0:
                break
        if w == 0.0:
            continue
        yield w, {i: c - a for (i, c), a in zip(items, split) if c - a}


class MomentPlan:
    """Precompiled evaluation plan for a fixed list of catalogue entries.

    Compiling once per selection keeps the per-evaluation cost to a handful
    of small matrix products, which matters inside estimation loops.
    """

    def __init__(self, labels: Sequence[str] | Sequence[MomentKey], M: int, d: int):
        self.keys = tuple(k if isinstance(k, MomentKey) else parse_label(k) for k in labels)
        self.labels = tuple(k.label for k in self.keys)
        if len(set(self.labels)) != len(self.labels):
            raise InvalidArgument("duplicate moment labels in selection")
        if any(max(k.mats) >= M for k in self.keys):
            raise InvalidArgument(f"moment selection refers to maturities beyond M={M}")
        self.M = M
        self.d = d
        self.degree = max(k.degree for k in self.keys)
        self.needs_lag = any(k.lag for k in self.keys)
        self.lag_power = max((k.power for k in self.keys if k.lag), default=0)
        self.needs_sigma4 = any(
            (not k.lag) and max(k.mats.count(i) for i in set(k.mats)) == 4 for k in self.keys
        )

    @property
    def p(self) -> int:
        """Basis degree required for the stationary moments."""
        return max(self.degree, 1)

    def evaluate(
        self,
        loadings: YieldLoadings,
        statmoms: np.ndarray,
        noise: NoiseSpec,
        gen: GeneratorMatrix | None = None,
        dt: float = 1.0,
        E: np.ndarray | None = None,
    ) -> np.ndarray:
        Phi = np.asarray(loadings.PhiTilde, dtype=float)
        Psi = np.asarray(loadings.PsiTilde, dtype=float)
        if Psi.shape != (self.M, self.d):
            raise InvalidArgument(f"loadings have shape {Psi.shape}, plan expects {(self.M, self.d)}")
        L = np.column_stack([Phi, Psi])
        basis = gen.basis if gen is not None else enumerate_basis(self.d, _basis_degree(statmoms, self.d))
        if basis.p < self.degree:
            raise InvalidArgument(
                f"stationary moments of degree {self.degree} are required, basis has degree {basis.p}"
            )
        mu = _full_moments(statmoms, basis)
        if self.needs_sigma4 and noise.sigma4 is None:
            raise InvalidArgument("fourth-order yield moments need the noise fourth moment")
        out = np.empty(len(self.keys))
        C = None
        if self.needs_lag:
            if E is None:
                if gen is None:
                    raise InvalidArgument("lag moments need the generator or its exponential")
                if not dt > 0:
                    raise InvalidArgument(f"dt must be positive, got {dt!r}")
                E = matrix_exponential(gen.A, dt)
            C = cross_moment_matrix(E, mu, basis, self.lag_power, self.lag_power)
        cache: dict[tuple[int, ...], float] = {}
        for r, key in enumerate(self.keys):
            if key.lag:
                out[r] = _lag_moment(L[key.mats[0]], key.power, C, noise, basis.d)
            else:
                out[r] = _contemporaneous_moment(L, key.mats, mu, noise, cache)
        return out


def _contemporaneous_moment(L, mats, mu, noise, cache) -> float:
    counts = {i: mats.count(i) for i in sorted(set(mats))}
    total = 0.0
    for w, rest in _noise_splits(counts, noise.moment):
        sub = tuple(i for i in sorted(rest) for _ in range(rest[i]))
        if sub not in cache:
            forms = L[list(sub)][None] if sub else np.empty((1, 0, L.shape[1]))
            cache[sub] = float(product_coefficients(forms, mu.size)[0] @ mu)
        total += w * cache[sub]
    return total


def _lag_moment(Li: np.ndarray, power: int, C: np.ndarray, noise: NoiseSpec, d: int) -> float:
    """``E(y_t^k y_s^k)`` for one maturity with independent noise at the two dates."""
    n = C.shape[0]
    coef = [product_coefficients(np.tile(Li, (1, u, 1)) if u else np.empty((1, 0, d + 1)), n)[0] for u in range(power + 1)]
    total = 0.0
    for a in range(power + 1):
        wa = comb(power, a) * noise.moment(a)
        if wa == 0.0:
            continue
        for b in range(power + 1):
            wb = comb(power, b) * noise.moment(b)
            if wb == 0.0:
                continue
            total += wa * wb * float(coef[power - a] @ C @ coef[power - b])
    return total


def contemporaneous_moments(
    loadings: YieldLoadings,
    statmoms: np.ndarray,
    noise: NoiseSpec,
    p: int = 4,
    labels: Sequence[str] | None = None,
) -> MomentCatalogue:
    """Moments ``E(y_i1 ... y_ik)``, ``k <= p``, of the observed yields.

    With ``labels=None`` the full contemporaneous part of the catalogue is
    returned in its frozen order.
    """
    Psi = np.asarray(loadings.PsiTilde)
    M, d = Psi.shape
    keys = [k for k in catalogue_keys(M, p) if not k.lag] if labels is None else [parse_label(s) for s in labels]
    if any(k.lag for k in keys):
        raise InvalidArgument("lag moments belong to autocovariance_moments")
    plan = MomentPlan(keys, M, d)
    return MomentCatalogue(plan.labels, plan.evaluate(loadings, statmoms, noise))


def autocovariance_moments(
    loadings: YieldLoadings,
    A: GeneratorMatrix,
    statmoms: np.ndarray,
    noise: NoiseSpec,
    dt: float = 1.0,
) -> MomentCatalogue:
    """``E(y_ti y_{t-dt,i})`` and ``E(y_ti^2 y_{t-dt,i}^2)`` for every maturity."""
    Psi = np.asarray(loadings.PsiTilde)
    M, d = Psi.shape
    keys = [k for k in catalogue_keys(M, 1) if k.lag]
    plan = MomentPlan(keys, M, d)
    return MomentCatalogue(plan.labels, plan.evaluate(loadings, statmoms, noise, gen=A, dt=dt))


def moment_catalogue(
    loadings: YieldLoadings,
    A: GeneratorMatrix,
    statmoms: np.ndarray,
    noise: NoiseSpec,
    p: int = 4,
    dt: float = 1.0,
) -> MomentCatalogue:
    """Full catalogue: contemporaneous moments up to order ``p`` and all lag terms."""
    Psi = np.asarray(loadings.PsiTilde)
    M, d = Psi.shape
    plan = MomentPlan(catalogue_keys(M, p), M, d)
    return MomentCatalogue(plan.labels, plan.evaluate(loadings, statmoms, noise, gen=A, dt=dt))


def _basis_degree(statmoms: np.ndarray, d: int) -> int:
    """Basis degree implied by the length of a stationary moment vector.

    Vectors without the leading constant (the output of
    :func:`~affine_gmm.polyproc.stationary_moments`) are matched first.  For
    ``d = 1`` a length can fit both forms; pass the generator to disambiguate.
    """
    n = np.asarray(statmoms).size
    for offset in (1, 0):
        for p in range(1, MAX_YIELD_DEGREE + 1):
            if n == _block_end(d, p) - offset:
                return p
    raise InvalidArgument(f"{n} stationary moments do not match any basis for d={d}")
