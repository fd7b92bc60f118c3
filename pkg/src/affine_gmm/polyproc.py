"""Polynomial-process machinery for affine diffusions with diagonal diffusion.

The generator of an affine diffusion maps polynomials of degree ``k`` into
polynomials of degree at most ``k``.  Restricted to the monomial basis of
degree ``<= p`` it is therefore a finite matrix ``A`` and conditional moments
of the state follow from a single matrix exponential::

    E[x~(X_{s+dt}) | X_s = x] = expm(dt * A) @ x~(x)

where ``x~`` stacks all monomials of ``x`` in basis order.  Stationary
moments solve a linear fixed-point system built from the same exponential.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb
from typing import Any

import numpy as np
from scipy import linalg

from .errors import InvalidArgument, NumericalFailure

logger = logging.getLogger(__name__)

MAX_DIM = 3
MAX_DEGREE = 4
COND_WARN = 1e12


@dataclass(frozen=True)
class MonomialBasis:
    """Graded monomial basis ``1 | x_1..x_d | x^2 block | ... | x^p block``.

    Within a degree block the monomials are ordered lexicographically by their
    sorted variable indices, i.e. ``x1^2, x1x2, x1x3, x2^2, x2x3, x3^2`` for
    ``d = 3`` and degree two.  Positions in this list are a public contract
    because every entry of the generator matrix depends on them.
    """

    d: int
    p: int
    exponents: tuple[tuple[int, ...], ...]
    index: dict[tuple[int, ...], int] = field(repr=False, compare=False)

    @property
    def N(self) -> int:
        return len(self.exponents)

    def degree_block(self, k: int) -> slice:
        """Slice of basis positions holding the monomials of total degree ``k``."""
        if not 0 <= k <= self.p:
            raise InvalidArgument(f"degree {k} outside 0..{self.p}")
        start = sum(comb(j + self.d - 1, j) for j in range(k))
        return slice(start, start + comb(k + self.d - 1, k))

    def degrees(self) -> np.ndarray:
        return np.array([sum(e) for e in self.exponents])

    def label(self, pos: int) -> str:
        e = self.exponents[pos]
        if sum(e) == 0:
            return "1"
        parts = []
        for i, k in enumerate(e):
            if k == 1:
                parts.append(f"x{i + 1}")
            elif k > 1:
                parts.append(f"x{i + 1}^{k}")
        return "*".join(parts)


def enumerate_basis(d: int, p: int) -> MonomialBasis:
    """Build the graded basis for ``d`` state variables up to degree ``p``."""
    if not (isinstance(d, (int, np.integer)) and 1 <= d <= MAX_DIM):
        raise InvalidArgument(f"state dimension must be in 1..{MAX_DIM}, got {d!r}")
    if not (isinstance(p, (int, np.integer)) and 1 <= p <= MAX_DEGREE):
        raise InvalidArgument(f"max degree must be in 1..{MAX_DEGREE}, got {p!r}")
    exps: list[tuple[int, ...]] = []
    for k in range(p + 1):
        for combo in combinations_with_replacement(range(d), k):
            e = [0] * d
            for i in combo:
                e[i] += 1
            exps.append(tuple(e))
    return MonomialBasis(int(d), int(p), tuple(exps), {e: n for n, e in enumerate(exps)})


@dataclass(frozen=True)
class DiffusionSpec:
    """Affine diffusion ``dX = (b + beta X) dt + diag(sigma_i sqrt(S_ii)) dW``.

    ``S_ii = B0[i] + sum_j Bx[j, i] * x_j``, so column ``i`` of ``Bx`` holds the
    state loadings of the ``i``-th variance.  For an A_1(3) model this gives
    ``S_11 = x_1``, ``S_22 = 1 + Bx[0, 1] x_1`` and ``S_33 = 1 + Bx[0, 2] x_1``.

    Entries may be floats or exact numbers (``fractions.Fraction``, sympy
    rationals); the generator builder keeps whatever arithmetic it is given
    when asked for an exact matrix.
    """

    b: Any
    beta: Any
    sigma: Any
    B0: Any
    Bx: Any

    def __post_init__(self) -> None:
        d = len(self.b)
        beta = np.asarray(self.beta, dtype=object)
        Bx = np.asarray(self.Bx, dtype=object)
        if beta.shape != (d, d) or Bx.shape != (d, d):
            raise InvalidArgument("beta and Bx must be d x d matrices")
        if len(self.sigma) != d or len(self.B0) != d:
            raise InvalidArgument("sigma and B0 must have length d")
        if any(s < 0 for s in self.sigma):
            raise InvalidArgument("diffusion scales must be nonnegative")

    @property
    def d(self) -> int:
        return len(self.b)

    def as_float(self) -> DiffusionSpec:
        return DiffusionSpec(
            np.asarray(self.b, dtype=float),
            np.asarray(self.beta, dtype=float),
            np.asarray(self.sigma, dtype=float),
            np.asarray(self.B0, dtype=float),
            np.asarray(self.Bx, dtype=float),
        )


@dataclass(frozen=True)
class GeneratorMatrix:
    """Generator restricted to a monomial basis; row ``r`` holds ``G(e_r)``."""

    A: np.ndarray
    basis: MonomialBasis


def _generator_entries(spec: DiffusionSpec, basis: MonomialBasis):
    """Yield ``(row, col, value)`` contributions of the generator.

    For ``f = x^l`` the generator gives

    ``G f = sum_i (b_i + sum_j beta_ij x_j) l_i x^(l - e_i)
          + sum_i sigma_i^2 C(l_i, 2) (B0_i + sum_j Bx_ji x_j) x^(l - 2 e_i)``.
    """
    d = basis.d
    idx = basis.index
    for row, ex in enumerate(basis.exponents):
        for i in range(d):
            li = ex[i]
            if li == 0:
                continue
            lower = list(ex)
            lower[i] -= 1
            yield row, idx[tuple(lower)], li * spec.b[i]
            for j in range(d):
                up = list(lower)
                up[j] += 1
                yield row, idx[tuple(up)], li * spec.beta[i][j]
            if li < 2:
                continue
            half = li * (li - 1) // 2
            s2 = spec.sigma[i] * spec.sigma[i]
            lower2 = list(ex)
            lower2[i] -= 2
            yield row, idx[tuple(lower2)], half * s2 * spec.B0[i]
            for j in range(d):
                up = list(lower2)
                up[j] += 1
                yield row, idx[tuple(up)], half * s2 * spec.Bx[j][i]


def build_generator(spec: DiffusionSpec, basis: MonomialBasis, exact: bool = False) -> GeneratorMatrix:
    """Matrix of the generator in ``basis``.

    With ``exact=True`` the result is an object array whose entries use the
    arithmetic of the specification's entries (useful for rational checks).
    """
    if spec.d != basis.d:
        raise InvalidArgument(f"spec has d={spec.d} but basis has d={basis.d}")
    if exact:
        A = np.empty((basis.N, basis.N), dtype=object)
        A.fill(0)
        work = spec
    else:
        A = np.zeros((basis.N, basis.N))
        work = spec.as_float()
    for row, col, val in _generator_entries(work, basis):
        A[row, col] = A[row, col] + val
    return GeneratorMatrix(A, basis)


def matrix_exponential(M: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(t M)`` by scaling and squaring with a Pade approximant.

    The argument is scaled to unit 1-norm before calling
    :func:`scipy.linalg.expm` and the result is squared back.  Generator
    matrices are strongly non-normal, and for some of them (the A_1(3)
    degree-4 generator at moderate ``t``) scipy's own scaling choice loses
    about five digits.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgument("matrix_exponential expects a square matrix")
    if not (np.isfinite(t) and t >= 0):
        raise InvalidArgument(f"time must be finite and nonnegative, got {t!r}")
    if not np.all(np.isfinite(M)):
        raise InvalidArgument("matrix contains non-finite entries")
    X = t * M
    norm = np.linalg.norm(X, 1)
    s = max(0, int(np.ceil(np.log2(norm)))) if norm > 0 else 0
    E = linalg.expm(X / 2.0**s)
    for _ in range(s):
        E = E @ E
    return E


def lift_state(x: Sequence[float], basis: MonomialBasis) -> np.ndarray:
    """Evaluate every basis monomial at ``x`` (the vector ``x~``)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.d,):
        raise InvalidArgument(f"state must have length {basis.d}")
    ex = np.array(basis.exponents)
    return np.prod(x[None, :] ** ex, axis=1)


def conditional_moments(gen: GeneratorMatrix, x: Sequence[float], dt: float) -> np.ndarray:
    """``E[x~(X_{s+dt}) | X_s = x]`` for every basis monomial."""
    if not dt >= 0:
        raise InvalidArgument(f"dt must be nonnegative, got {dt!r}")
    out = matrix_exponential(gen.A, dt) @ lift_state(x, gen.basis)
    out[0] = 1.0
    return out


def drift_eigenvalues(gen: GeneratorMatrix) -> np.ndarray:
    """Eigenvalues of the degree-one block of ``A``, i.e. of the drift slope."""
    blk = gen.basis.degree_block(1)
    return np.linalg.eigvals(np.asarray(gen.A[blk, blk], dtype=float))


def stationary_moments(gen: GeneratorMatrix, dt: float = 1.0) -> np.ndarray:
    """Unconditional moments of all non-constant basis monomials.

    Solves ``(I - E[1:, 1:]) m = E[1:, 0]`` with ``E = expm(dt A)``, the fixed
    point of the one-step moment recursion.  The result does not depend on
    ``dt``.
    """
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt!r}")
    eig = drift_eigenvalues(gen)
    if np.any(eig.real >= 0):
        raise NumericalFailure(f"no stationary law: drift eigenvalues {np.round(eig, 6).tolist()}")
    E = matrix_exponential(gen.A, dt)
    S = np.eye(gen.basis.N - 1) - E[1:, 1:]
    cond = np.linalg.cond(S)
    if not np.isfinite(cond):
        raise NumericalFailure(f"singular stationary system; drift eigenvalues {eig.tolist()}")
    if cond > COND_WARN:
        logger.warning("stationary system is ill-conditioned (cond=%.3g)", cond)
    lu = linalg.lu_factor(S, check_finite=False)
    m = linalg.lu_solve(lu, E[1:, 0], check_finite=False)
    if not np.all(np.isfinite(m)):
        raise NumericalFailure("stationary moments are not finite")
    return m


def stationary_state_moments(gen: GeneratorMatrix, dt: float = 1.0) -> np.ndarray:
    """Stationary moments including the leading constant, aligned with the basis."""
    return np.concatenate([[1.0], stationary_moments(gen, dt)])
