"""GMM machinery: moment selection, sample moments, CUE distance and Wald tests.

Sample moments follow two conventions.  Contemporaneous products average
over all ``T`` dates, while lag products ``y_t^k y_{t-1}^k`` average over the
``T - 1`` dates ``t = 2..T``.  The per-date rows ``m_(t)`` used for the
weighting matrix are formed for ``t = 2..T`` only, so that every row
contains every selected moment.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import linalg, stats

from .errors import AffineGmmError, ConfigError, InvalidArgument, NumericalFailure
from .model import ParamVector
from .polyproc import (
    build_generator,
    enumerate_basis,
    matrix_exponential,
    stationary_state_moments,
)
from .riccati import DEFAULT_G, YieldLoadings, make_grid, yield_loadings
from .simulate import YieldPanel
from .yieldmoments import (
    MomentKey,
    MomentPlan,
    NoiseSpec,
    catalogue_keys,
    default_labels,
    parse_label,
)

logger = logging.getLogger(__name__)

RIDGE_RCOND = 1e-14
RIDGE_SCALE = 1e-10
FD_REL_STEP = 1e-5
FD_ABS_STEP = 1e-7
COV_RCOND = 1e-12


# ---------------------------------------------------------------------------
# Moment selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentSelector:
    """Ordered list of selected catalogue entries."""

    keys: tuple[MomentKey, ...]

    def __post_init__(self) -> None:
        labels = [k.label for k in self.keys]
        if len(set(labels)) != len(labels):
            dup = sorted({s for s in labels if labels.count(s) > 1})
            raise InvalidArgument(f"duplicate moment labels: {', '.join(dup)}")
        if not self.keys:
            raise InvalidArgument("a selector needs at least one moment")

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> MomentSelector:
        return cls(tuple(parse_label(s) for s in labels))

    @classmethod
    def from_file(cls, path: str | Path) -> MomentSelector:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read selector file {path}: {exc}") from exc
        labels = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        try:
            return cls.from_labels([s for s in labels if s])
        except InvalidArgument as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(k.label for k in self.keys)

    @property
    def q(self) -> int:
        return len(self.keys)

    def check_order(self, n_params: int) -> None:
        """Order condition ``q >= p``."""
        if self.q < n_params:
            raise InvalidArgument(f"{self.q} moments cannot identify {n_params} parameters")

    def matrix(self, M: int, p: int = 4) -> np.ndarray:
        """Binary ``q x q~`` matrix selecting rows of the full catalogue."""
        full = {k.label: n for n, k in enumerate(catalogue_keys(M, p))}
        S = np.zeros((self.q, len(full)))
        for r, k in enumerate(self.keys):
            if k.label not in full:
                raise InvalidArgument(f"{k.label} is not in the catalogue for M={M}, p={p}")
            S[r, full[k.label]] = 1.0
        return S

    @property
    def needs_sigma4(self) -> bool:
        return any((not k.lag) and max(k.mats.count(i) for i in k.mats) == 4 for k in self.keys)


def default_selector(M: int = 10) -> MomentSelector:
    """The 27 moments used for estimation with ten maturities."""
    if M != 10:
        raise InvalidArgument(f"the default selector is defined for M=10 maturities, got M={M}; supply a selector")
    return MomentSelector.from_labels(default_labels(M))


# ---------------------------------------------------------------------------
# Sample moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GmmContext:
    """Data side of the GMM problem; immutable once built."""

    panel: YieldPanel
    selector: MomentSelector
    rows: np.ndarray
    m_T: np.ndarray

    @property
    def T(self) -> int:
        return self.panel.T

    @property
    def q(self) -> int:
        return self.selector.q

    @property
    def shortest_yield_mean(self) -> float:
        return float(np.mean(self.panel.observations[:, 0]))


def _moment_series(Y: np.ndarray, key: MomentKey) -> np.ndarray:
    """Per-date products for one moment; lag entries start at the second date."""
    if key.lag:
        y = Y[:, key.mats[0]] ** key.power
        return y[1:] * y[:-1]
    out = np.ones(Y.shape[0])
    for i in key.mats:
        out = out * Y[:, i]
    return out


def sample_moments(panel: YieldPanel, selector: MomentSelector) -> GmmContext:
    """Sample counterparts ``m_T`` and per-date rows ``m_(t)``, ``t = 2..T``."""
    Y = panel.observations
    T, M = Y.shape
    if T < 2:
        raise InvalidArgument("at least two dates are needed")
    if any(max(k.mats) >= M for k in selector.keys):
        raise InvalidArgument(f"selector refers to maturities beyond the {M} panel columns")
    rows = np.empty((T - 1, selector.q))
    m_T = np.empty(selector.q)
    for c, key in enumerate(selector.keys):
        s = _moment_series(Y, key)
        m_T[c] = s.mean()
        rows[:, c] = s if key.lag else s[1:]
    rows.setflags(write=False)
    m_T.setflags(write=False)
    return GmmContext(panel, selector, rows, m_T)


# ---------------------------------------------------------------------------
# Model moments
# ---------------------------------------------------------------------------


class MomentModel:
    """``mu(theta)`` for one selector and set of maturities.

    Yield loadings depend only on the risk-neutral block and stationary
    moments only on the physical block, so both are cached separately.  A
    block update of the physical drift then skips the Riccati solve.
    """

    def __init__(self, maturities: Sequence[float], selector: MomentSelector, G: int = DEFAULT_G,
                 riccati_method: str = "exact", cache_size: int = 16):
        self.maturities = np.asarray(maturities, dtype=float)
        self.selector = selector
        self.plan = MomentPlan(selector.keys, self.maturities.size, 3)
        self.basis = enumerate_basis(3, self.plan.p)
        self.grid = make_grid(self.maturities, G)
        self.riccati_method = riccati_method
        self._cache_size = cache_size
        self._loadings: OrderedDict[tuple, YieldLoadings] = OrderedDict()
        self._state: OrderedDict[tuple, tuple[np.ndarray, np.ndarray | None]] = OrderedDict()

    @property
    def q(self) -> int:
        return self.selector.q

    def _remember(self, cache: OrderedDict, key, value):
        cache[key] = value
        if len(cache) > self._cache_size:
            cache.popitem(last=False)
        return value

    def loadings(self, theta: ParamVector) -> YieldLoadings:
        key = theta.q_key()
        hit = self._loadings.get(key)
        if hit is not None:
            self._loadings.move_to_end(key)
            return hit
        L = yield_loadings(theta.q_spec(), self.maturities, self.grid, self.riccati_method)
        return self._remember(self._loadings, key, L)

    def state_moments(self, theta: ParamVector) -> tuple[np.ndarray, np.ndarray | None]:
        key = theta.p_key()
        hit = self._state.get(key)
        if hit is not None:
            self._state.move_to_end(key)
            return hit
        gen = build_generator(theta.diffusion_spec("P"), self.basis)
        mu = stationary_state_moments(gen)
        E = matrix_exponential(gen.A, 1.0) if self.plan.needs_lag else None
        return self._remember(self._state, key, (mu, E))

    def noise(self, theta: ParamVector) -> NoiseSpec:
        s4 = theta.sigma4eps
        if s4 is None and self.selector.needs_sigma4:
            raise InvalidArgument("selected fourth-order moments need the sigma4eps parameter")
        return NoiseSpec(theta.sigma2eps, s4)

    def mu(self, theta: ParamVector) -> np.ndarray:
        """Model moments; raises :class:`AffineGmmError` when not computable."""
        L = self.loadings(theta)
        mu, E = self.state_moments(theta)
        out = self.plan.evaluate(L, mu, self.noise(theta), E=E)
        if not np.all(np.isfinite(out)):
            raise NumericalFailure("model moments are not finite")
        return out

    def mu_array(self, values: np.ndarray) -> np.ndarray:
        return self.mu(ParamVector.from_array(values))

    def try_mu(self, theta: ParamVector) -> np.ndarray | None:
        """``mu(theta)`` or ``None`` when the moments cannot be computed."""
        try:
            return self.mu(theta)
        except (AffineGmmError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
            logger.debug("moments not computable: %s", exc)
            return None


class MomentFunction(Protocol):
    def mu_array(self, values: np.ndarray) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# Distance, weights, covariance, Wald
# ---------------------------------------------------------------------------


def _check_weight(C: np.ndarray, q: int) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.shape != (q, q):
        raise InvalidArgument(f"weight matrix must be {q}x{q}, got {C.shape}")
    if not np.allclose(C, C.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(C).max())):
        raise InvalidArgument("weight matrix must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (C + C.T))
    if w.min() < -1e-10 * max(1.0, abs(w).max()):
        raise InvalidArgument("weight matrix must be positive semidefinite")
    return C


def quadratic_form(h: np.ndarray, C: np.ndarray) -> float:
    return float(h @ C @ h)


def distance(theta: ParamVector, ctx: GmmContext, C: np.ndarray, model: MomentModel) -> float:
    """``Q_T = h_T' C h_T``; ``inf`` when the model moments are not computable."""
    C = _check_weight(C, ctx.q)
    mu = model.try_mu(theta)
    if mu is None:
        return float("inf")
    return quadratic_form(ctx.m_T - mu, C)


@dataclass(frozen=True)
class CueWeight:
    """Inverse of the moment covariance ``Lambda_T`` and whether a ridge was needed."""

    C: np.ndarray
    Lambda: np.ndarray
    ridged: bool


def weight_from_mu(mu: np.ndarray, ctx: GmmContext) -> CueWeight:
    """CUE weight given model moments ``mu``."""
    h = ctx.rows - mu
    Lam = h.T @ h / h.shape[0]
    Lam = 0.5 * (Lam + Lam.T)
    ridged = False
    w = np.linalg.eigvalsh(Lam)
    rcond = w.min() / w.max() if w.max() > 0 else 0.0
    if not rcond >= RIDGE_RCOND:
        ridge = RIDGE_SCALE * np.trace(Lam) / ctx.q
        if not ridge > 0:
            raise NumericalFailure("moment covariance is zero; the CUE weight is undefined")
        Lam = Lam + ridge * np.eye(ctx.q)
        ridged = True
        logger.warning("moment covariance is near singular (rcond=%.3g); added ridge %.3g", rcond, ridge)
    try:
        cf = linalg.cho_factor(Lam, check_finite=True)
        C = linalg.cho_solve(cf, np.eye(ctx.q))
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"moment covariance cannot be inverted: {exc}") from exc
    return CueWeight(0.5 * (C + C.T), Lam, ridged)


def cue_weight(theta: ParamVector, ctx: GmmContext, model: MomentModel) -> CueWeight:
    """``C_T = Lambda_T(theta)^{-1}`` with ``Lambda_T = mean_t h_(t) h_(t)'``."""
    return weight_from_mu(model.mu(theta), ctx)


def jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, central: bool = True) -> np.ndarray:
    """Finite-difference Jacobian with fixed steps ``max(1e-5 |x_j|, 1e-7)``."""
    x = np.asarray(x, dtype=float)
    f0 = None if central else np.asarray(fun(x))
    cols = []
    for j in range(x.size):
        h = max(FD_REL_STEP * abs(x[j]), FD_ABS_STEP)
        xp = x.copy()
        xp[j] += h
        if central:
            xm = x.copy()
            xm[j] -= h
            cols.append((np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2 * h))
        else:
            cols.append((np.asarray(fun(xp)) - f0) / h)
    return np.column_stack(cols)


def standard_covariance(theta_hat, ctx: GmmContext, model: MomentFunction) -> np.ndarray:
    """``V = (H' Lambda^{-1} H)^{-1}`` with ``H = d h_T / d theta = -d mu / d theta``."""
    x = theta_hat.to_array() if isinstance(theta_hat, ParamVector) else np.asarray(theta_hat, dtype=float)
    try:
        mu = np.asarray(model.mu_array(x))
        H = -jacobian(model.mu_array, x)
    except AffineGmmError as exc:
        raise NumericalFailure(f"Jacobian not computable at the estimate: {exc}") from exc
    W = weight_from_mu(mu, ctx)
    A = H.T @ W.C @ H
    A = 0.5 * (A + A.T)
    # Rank check on the scale-free (correlation) form, so that parameters of
    # very different magnitudes do not look singular.
    D = np.sqrt(np.clip(np.diag(A), 0.0, None))
    if np.any(D == 0):
        raise NumericalFailure("H' Lambda^-1 H is singular: a parameter does not move any moment")
    w = np.linalg.eigvalsh(A / np.outer(D, D))
    if w.min() <= COV_RCOND * w.max():
        raise NumericalFailure(f"H' Lambda^-1 H is singular (reciprocal condition {w.min() / w.max():.3g})")
    try:
        cf = linalg.cho_factor(A)
        V = linalg.cho_solve(cf, np.eye(A.shape[0]))
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"H' Lambda^-1 H is singular: {exc}") from exc
    return 0.5 * (V + V.T)


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    p_value: float
    df: int


def wald(r_value: Sequence[float], R: np.ndarray, V: np.ndarray, T: int) -> WaldResult:
    """``W = T r' (R V R')^{-1} r`` with a chi-square p-value on ``len(r)`` degrees of freedom."""
    r = np.atleast_1d(np.asarray(r_value, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    V = np.asarray(V, dtype=float)
    if R.shape != (r.size, V.shape[0]) or V.shape[0] != V.shape[1]:
        raise InvalidArgument(f"shapes do not conform: r {r.shape}, R {R.shape}, V {V.shape}")
    if not T > 0:
        raise InvalidArgument("T must be positive")
    if not np.any(r):
        return WaldResult(0.0, 1.0, r.size)
    S = R @ V @ R.T
    S = 0.5 * (S + S.T)
    w = np.linalg.eigvalsh(S)
    if w.min() <= 1e-14 * max(abs(w).max(), 1e-300):
        raise NumericalFailure("R V R' is rank deficient")
    stat = float(T * r @ linalg.solve(S, r, assume_a="pos"))
    return WaldResult(stat, float(stats.chi2.sf(stat, r.size)), r.size)
