"""Riccati system for zero-coupon bond prices in diagonal A_m(d) models.

Under Q the log bond price is ``Phi(tau) + Psi(tau)' x`` where ``(Phi, Psi)``
solve the affine Riccati system with ``Psi(0) = 0``.  With ``beta_IJ = 0`` and
diagonal ``beta_II`` the system splits:

* the Gaussian block ``Psi_J`` solves a linear ODE and has a closed form;
* each square-root component ``Psi_i`` solves a scalar Riccati equation whose
  forcing ``gamma~_i`` depends on ``Psi_J``.  It is linearised into a 2x2
  linear system whose propagator is built from 2x2 matrix exponentials;
* ``Phi`` is an integral of the other two.

Yields are ``y(tau) = PhiTilde + PsiTilde @ x`` with
``PhiTilde = -Phi(tau)/tau`` and ``PsiTilde = -Psi(tau)'/tau``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

from .errors import InvalidArgument, NumericalFailure

DEFAULT_G = 2000
RCOND_MIN = 1e-12


@dataclass(frozen=True)
class QSpec:
    """Risk-neutral dynamics plus the short-rate intercept ``gamma0``.

    ``m`` is the number of square-root factors; they occupy the first ``m``
    coordinates.  ``Bx`` follows the :class:`~affine_gmm.polyproc.DiffusionSpec`
    convention (column ``i`` loads the variance of factor ``i``).  The short
    rate is ``gamma0 + gammax' x``.
    """

    b: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    B0: np.ndarray
    Bx: np.ndarray
    gamma0: float
    m: int
    gammax: np.ndarray | None = None

    def __post_init__(self) -> None:
        d = len(self.b)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(d, d))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "B0", np.asarray(self.B0, dtype=float))
        object.__setattr__(self, "Bx", np.asarray(self.Bx, dtype=float).reshape(d, d))
        gx = np.ones(d) if self.gammax is None else np.asarray(self.gammax, dtype=float)
        object.__setattr__(self, "gammax", gx)
        if not 0 <= self.m <= d:
            raise InvalidArgument(f"m must be in 0..{d}")
        m = self.m
        bII = self.beta[:m, :m]
        if np.any(bII - np.diag(np.diag(bII))):
            raise InvalidArgument("beta_II must be diagonal")
        if np.any(np.diag(bII) >= 0):
            raise InvalidArgument("beta_II must have a strictly negative diagonal")
        if np.any(self.beta[:m, m:]):
            raise InvalidArgument("beta_IJ must be zero")

    @property
    def d(self) -> int:
        return len(self.b)

    @property
    def n(self) -> int:
        return self.d - self.m


@dataclass(frozen=True)
class TimeGrid:
    """Integration grid on ``[0, max maturity]`` that contains every maturity.

    ``mat_index[l]`` is the position of maturity ``l`` in ``points``.  A
    maturity that coincides with an equally spaced node appears twice; the
    zero-width interval contributes nothing to any integral.
    """

    points: np.ndarray
    mat_index: np.ndarray
    maturities: np.ndarray

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.points)


def make_grid(maturities: Sequence[float], G: int = DEFAULT_G) -> TimeGrid:
    """Equally spaced grid with ``G`` intervals plus the maturities, sorted."""
    tau = np.asarray(maturities, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise InvalidArgument("maturities must be a non-empty list")
    if np.any(~np.isfinite(tau)) or np.any(tau <= 0):
        raise InvalidArgument("maturities must be positive and finite")
    if np.any(np.diff(tau) <= 0):
        raise InvalidArgument("maturities must be distinct and sorted ascending")
    if G < 1:
        raise InvalidArgument("G must be at least 1")
    base = np.linspace(0.0, tau[-1], G + 1)
    pts = np.sort(np.concatenate([base, tau]), kind="stable")
    # Last occurrence, so that a duplicated node is reached through its zero step.
    idx = np.searchsorted(pts, tau, side="right") - 1
    return TimeGrid(pts, idx, tau)


# ---------------------------------------------------------------------------
# Closed forms for the Gaussian block


def _expm_batch(B: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``exp(t_k B)`` for every entry of ``t``; closed forms for n <= 2."""
    n = B.shape[0]
    if n == 1:
        return np.exp(t * B[0, 0])[:, None, None]
    if n == 2:
        return expm2x2(t[:, None, None] * B[None, :, :])
    return linalg.expm(t[:, None, None] * B[None, :, :])


def _sinhc_cosh(D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(sinh(q)/q, cosh(q))`` with ``q = sqrt(D)``, analytic for ``D < 0``."""
    q = np.sqrt(np.abs(D))
    pos = D >= 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ch = np.where(pos, np.cosh(q), np.cos(q))
        sc = np.where(pos, np.sinh(q), np.sin(q)) / q
    small = q < 1e-6
    sc = np.where(small, 1.0 + D / 6.0, sc)
    ch = np.where(small, 1.0 + D / 2.0, ch)
    return sc, ch


def expm2x2(M: np.ndarray) -> np.ndarray:
    """Exponential of a stack of 2x2 real matrices (shape ``(..., 2, 2)``).

    Uses ``exp(M) = e^s (cosh(q) I + sinh(q)/q (M - s I))`` with ``s`` half
    the trace and ``q^2`` the discriminant, which also covers repeated and
    complex eigenvalues.
    """
    a, b = M[..., 0, 0], M[..., 0, 1]
    c, d = M[..., 1, 0], M[..., 1, 1]
    s = 0.5 * (a + d)
    D = 0.25 * (a - d) ** 2 + b * c
    sc, ch = _sinhc_cosh(D)
    es = np.exp(s)
    out = np.empty(M.shape)
    out[..., 0, 0] = es * (ch + sc * (a - s))
    out[..., 0, 1] = es * sc * b
    out[..., 1, 0] = es * sc * c
    out[..., 1, 1] = es * (ch + sc * (d - s))
    return out


class _GaussianBlock:
    """Closed forms for ``Psi_J`` and its integrals at arbitrary times."""

    def __init__(self, spec: QSpec):
        m = spec.m
        self.n = spec.n
        if self.n == 0:
            return
        self.B = spec.beta[m:, m:].T.copy()
        if 1.0 / np.linalg.cond(self.B) < RCOND_MIN:
            raise NumericalFailure("beta_JJ is numerically singular")
        self.c = np.linalg.solve(self.B, spec.gammax[m:])
        # Lyapunov operator X -> B X + X B' in row-major vec form.
        eye = np.eye(self.n)
        self.lyap = linalg.lu_factor(np.kron(self.B, eye) + np.kron(eye, self.B))

    def evaluate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``Psi_J(t)``, ``int_0^t Psi_J`` and ``int_0^t Psi_J**2``.

        ``Psi_J(t) = (I - e^{tB}) c`` with ``B = beta_JJ'`` and
        ``c = B^{-1} gamma_xJ``.  The squared integral uses
        ``int_0^t e^{sB} c c' e^{sB'} ds = X(t)`` where
        ``B X + X B' = e^{tB} c c' e^{tB'} - c c'``.
        """
        n = self.n
        E = _expm_batch(self.B, t)
        Ec = E @ self.c
        psi = self.c[None, :] - Ec
        # int_0^t e^{sB} c ds = B^{-1} (e^{tB} - I) c
        int_ec = np.linalg.solve(self.B, (Ec - self.c[None, :]).T).T
        int_psi = t[:, None] * self.c[None, :] - int_ec
        cc = np.outer(self.c, self.c)
        rhs = np.einsum("ki,kj->kij", Ec, Ec) - cc[None]
        X = linalg.lu_solve(self.lyap, rhs.reshape(len(t), n * n).T).T.reshape(len(t), n, n)
        int_ec2 = np.einsum("kii->ki", X)
        int_psi2 = t[:, None] * self.c[None, :] ** 2 - 2 * self.c[None, :] * int_ec + int_ec2
        return psi, int_psi, int_psi2


def psi_J(t: float, spec: QSpec, uJ: Sequence[float] | None = None) -> np.ndarray:
    """Closed-form Gaussian-block solution ``Psi_J(t, u)``.

    ``Psi_J = e^{tB} u_J - B^{-1}(e^{tB} - I) gamma_xJ`` with ``B = beta_JJ'``.
    """
    if not t >= 0:
        raise InvalidArgument("t must be nonnegative")
    m, n = spec.m, spec.n
    uJ = np.zeros(n) if uJ is None else np.asarray(uJ, dtype=float)
    if n == 0:
        return np.zeros(0)
    B = spec.beta[m:, m:].T
    if 1.0 / np.linalg.cond(B) < RCOND_MIN:
        raise NumericalFailure("beta_JJ is numerically singular")
    E = _expm_batch(B, np.array([float(t)]))[0]
    return E @ uJ - np.linalg.solve(B, (E - np.eye(n)) @ spec.gammax[m:])


def integrate_psi_J(
    t: float, spec: QSpec, grid: TimeGrid, method: str = "exact"
) -> tuple[np.ndarray, np.ndarray]:
    """``(int_0^t Psi_J ds, int_0^t Psi_J(s)**2 ds)`` at a grid time ``t``.

    The first integral is always the closed form.  The squared integral is
    the closed form for ``method='exact'`` and a right Riemann sum over the
    grid for ``method='right'``.
    """
    hits = np.flatnonzero(grid.points == t)
    if hits.size == 0:
        raise InvalidArgument(f"t={t} is not a grid point")
    if spec.n == 0:
        return np.zeros(0), np.zeros(0)
    block = _GaussianBlock(spec)
    _, ip, ip2 = block.evaluate(np.array([float(t)]))
    if method == "exact":
        return ip[0], ip2[0]
    if method != "right":
        raise InvalidArgument(f"unknown method {method!r}")
    k = hits[-1]
    psi, _, _ = block.evaluate(grid.points[1 : k + 1])
    return ip[0], (psi**2 * grid.steps[:k, None]).sum(axis=0)


# ---------------------------------------------------------------------------
# Square-root block and Phi
#
# Each square-root component solves d/dt Psi_i = S/2 Psi_i^2 + b_ii Psi_i - g_i(t)
# with S = Sigma_i^2 and g_i = gamma~_i.  Writing S Psi_i = w_1 / w_2 gives the
# linear system w' = K(t) w, K(t) = [[b_ii, -S g_i(t)], [-1/2, 0]], w(0) = (0, 1).
# Moreover (log w_2)' = -S Psi_i / 2, so int_0^t Psi_i = -(2/S) log w_2(t).
#
# method="riemann" replaces the propagator by exp(int_0^t K), which is exact only
# when g_i is constant (e.g. a one-factor CIR model).  method="exact" builds the
# propagator as a product of fourth-order Magnus steps over the grid.

_MAGNUS_C = np.array([0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6])


def _gamma_tilde(spec: QSpec, i: int, psiJ: np.ndarray) -> np.ndarray:
    """Forcing ``gamma~_i`` given Psi_J values (rows are times)."""
    m = spec.m
    out = np.full(psiJ.shape[0], spec.gammax[i])
    if spec.n:
        out = out - psiJ @ spec.beta[m:, i] - 0.5 * (psiJ**2) @ (spec.sigma[m:] ** 2 * spec.Bx[i, m:])
    return out


def _gamma_tilde_integral(spec: QSpec, i: int, t, int_psi, int_psi2):
    """``int_0^t gamma~_i ds`` given the Gaussian-block integrals."""
    m = spec.m
    out = spec.gammax[i] * t
    if spec.n:
        out = out - int_psi @ spec.beta[m:, i]
        out = out - 0.5 * int_psi2 @ (spec.sigma[m:] ** 2 * spec.Bx[i, m:])
    return out


def _explosion(i: int, t: float) -> NumericalFailure:
    return NumericalFailure(f"Riccati solution for factor {i + 1} explodes before maturity t={t:.6g}")


def _psi_I_riemann(spec: QSpec, i: int, t: np.ndarray, gint: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(Psi_i, w_2)`` from the single exponential ``exp(int_0^t K)``."""
    M = np.empty(t.shape + (2, 2))
    M[..., 0, 0] = t * spec.beta[i, i]
    M[..., 0, 1] = -spec.sigma[i] ** 2 * gint
    M[..., 1, 0] = -0.5 * t
    M[..., 1, 1] = 0.0
    W = expm2x2(M)
    m2, m4 = W[..., 0, 1], W[..., 1, 1]
    bad = ~(m4 > 0) | ~np.isfinite(m2)
    if np.any(bad):
        raise _explosion(i, float(t[np.flatnonzero(bad)[0]]))
    return m2 / (spec.sigma[i] ** 2 * m4), m4


@njit(cache=True)
def _propagate(E):  # pragma: no cover - compiled
    """Running products ``w_{k+1} = E_k w_k`` from ``w_0 = (0, 1)``."""
    n = E.shape[0]
    W1 = np.empty(n + 1)
    W2 = np.empty(n + 1)
    w1, w2 = 0.0, 1.0
    W1[0], W2[0] = w1, w2
    for k in range(n):
        w1, w2 = E[k, 0, 0] * w1 + E[k, 0, 1] * w2, E[k, 1, 0] * w1 + E[k, 1, 1] * w2
        W1[k + 1], W2[k + 1] = w1, w2
    return W1, W2


def _psi_I_magnus(spec: QSpec, i: int, grid: TimeGrid, block: _GaussianBlock) -> tuple[np.ndarray, np.ndarray]:
    """``(Psi_i, w_2)`` on the grid from a product of Magnus-4 propagators."""
    t, h = grid.points, grid.steps
    s2 = spec.sigma[i] ** 2
    nodes = t[:-1, None] + h[:, None] * _MAGNUS_C[None, :]
    if spec.n:
        psiJ, _, _ = block.evaluate(nodes.ravel())
        g = _gamma_tilde(spec, i, psiJ).reshape(nodes.shape)
    else:
        g = np.full(nodes.shape, spec.gammax[i])
    bii = spec.beta[i, i]
    # K1, K2 differ only in the (0, 1) entry, so [K2, K1] has a closed form.
    k1, k2 = -s2 * g[:, 0], -s2 * g[:, 1]
    Om = np.empty((len(h), 2, 2))
    Om[:, 0, 0] = h * bii
    Om[:, 0, 1] = 0.5 * h * (k1 + k2)
    Om[:, 1, 0] = -0.5 * h
    Om[:, 1, 1] = 0.0
    # For K = [[a, k], [-1/2, 0]]:
    # [K2, K1] = [[(k1 - k2)/2, a (k1 - k2)], [0, (k2 - k1)/2]].
    c = np.sqrt(3) / 12 * h**2 * (k1 - k2)
    Om[:, 0, 0] += 0.5 * c
    Om[:, 0, 1] += c * bii
    Om[:, 1, 1] -= 0.5 * c
    W1, W2 = _propagate(np.ascontiguousarray(expm2x2(Om)))
    bad = ~(W2 > 0) | ~np.isfinite(W1)
    if np.any(bad):
        raise _explosion(i, float(t[np.flatnonzero(bad)[0]]))
    return W1 / (s2 * W2), W2


def psi_I(t: float, i: int, spec: QSpec, grid: TimeGrid, method: str = "exact") -> float:
    """Square-root component ``Psi_i(t, 0)`` (``i`` is zero-based, ``i < m``)."""
    if not 0 <= i < spec.m:
        raise InvalidArgument(f"index {i} is not a square-root factor")
    path = solve_riccati(spec, grid, method)
    hits = np.flatnonzero(grid.points == t)
    if hits.size == 0:
        raise InvalidArgument(f"t={t} is not a grid point")
    return float(path.psi[hits[-1], i])


@dataclass(frozen=True)
class RiccatiPath:
    """``Phi`` and ``Psi`` on every grid point."""

    grid: TimeGrid
    phi: np.ndarray
    psi: np.ndarray


def solve_riccati(spec: QSpec, grid: TimeGrid, method: str = "exact") -> RiccatiPath:
    """Solve for ``Phi(t, 0)`` and ``Psi(t, 0)`` at all grid points.

    ``method='exact'``: Gaussian-block quantities in closed form, square-root
    factors by Magnus-4 propagation of the linearised 2x2 system, and
    ``Phi_I`` from ``log w_2``.  Accurate to roughly ``h^4``.

    ``method='riemann'``: ``Psi_i = M_2/(Sigma_i^2 M_4)`` with
    ``M = exp([[t b_ii, -Sigma_i^2 int gamma~], [-t/2, 0]])``, the squared
    Gaussian integral and ``Phi`` by right Riemann sums on the grid.
    """
    if method not in ("exact", "riemann"):
        raise InvalidArgument(f"unknown method {method!r}")
    t = grid.points
    h = grid.steps
    m, n, d = spec.m, spec.n, spec.d
    block = _GaussianBlock(spec)
    psi = np.zeros((len(t), d))
    ip = ip2 = np.zeros((len(t), 0))
    if n:
        psi[:, m:], ip, ip2 = block.evaluate(t)

    if method == "riemann":
        if n:
            ip2 = np.concatenate([np.zeros((1, n)), np.cumsum(psi[1:, m:] ** 2 * h[:, None], axis=0)])
        for i in range(m):
            gint = _gamma_tilde_integral(spec, i, t, ip, ip2)
            psi[:, i], _ = _psi_I_riemann(spec, i, t, gint)
        f = 0.5 * (psi**2) @ (spec.sigma**2 * spec.B0) + psi @ spec.b
        phi = np.concatenate([[0.0], np.cumsum(f[1:] * h)]) - spec.gamma0 * t
        return RiccatiPath(grid, phi, psi)

    phi = -spec.gamma0 * t
    if n:
        phi = phi + ip @ spec.b[m:] + 0.5 * ip2 @ (spec.sigma[m:] ** 2)
    for i in range(m):
        psi[:, i], w2 = _psi_I_magnus(spec, i, grid, block)
        phi = phi - 2.0 * spec.b[i] / spec.sigma[i] ** 2 * np.log(w2)
    return RiccatiPath(grid, phi, psi)


def phi(t: float, spec: QSpec, grid: TimeGrid, method: str = "exact") -> float:
    """``Phi(t, 0)`` at a grid time ``t``."""
    hits = np.flatnonzero(grid.points == t)
    if hits.size == 0:
        raise InvalidArgument(f"t={t} is not a grid point")
    return float(solve_riccati(spec, grid, method).phi[hits[-1]])


@dataclass(frozen=True)
class YieldLoadings:
    """Per-maturity intercepts and factor loadings of model yields."""

    maturities: np.ndarray
    PhiTilde: np.ndarray
    PsiTilde: np.ndarray

    def yields(self, x: np.ndarray) -> np.ndarray:
        """Model yields for one state (shape ``(d,)``) or a path (``(T, d)``)."""
        return self.PhiTilde + np.asarray(x) @ self.PsiTilde.T


def yield_loadings(
    spec: QSpec,
    maturities: Sequence[float],
    grid: TimeGrid | None = None,
    method: str = "exact",
) -> YieldLoadings:
    """``PhiTilde_l = -Phi(tau_l)/tau_l`` and ``PsiTilde_l = -Psi(tau_l)'/tau_l``."""
    tau = np.asarray(maturities, dtype=float)
    if grid is None:
        grid = make_grid(tau)
    elif not np.array_equal(grid.maturities, tau):
        raise InvalidArgument("grid was built for different maturities")
    path = solve_riccati(spec, grid, method)
    k = grid.mat_index
    PhiT = -path.phi[k] / tau
    PsiT = -path.psi[k] / tau[:, None]
    if not (np.all(np.isfinite(PhiT)) and np.all(np.isfinite(PsiT))):
        raise NumericalFailure("yield loadings are not finite")
    return YieldLoadings(tau, PhiT, PsiT)
