"""Quasi-Bayesian minimisation of the CUE-GMM distance.

The quasi-likelihood ``L(theta) = exp(-T Q_T(theta) / 2)`` is combined with a
flat prior on the restricted space ``Theta_0``.  The minimiser is located
in three stages:

1. multistart random search around a centre with an identity weight,
2. a block random-walk Metropolis-Hastings chain whose CUE weight is
   refreshed once per sweep from the previous draw,
3. reversible-jump moves between the tied state ``s1`` (``thetaQ == thetaP``)
   and the free state ``s2``.

Estimates are chain means after burn-in.  Spread is summarised twice: the
sample standard deviation of the draws estimates the sampling standard
deviation of the estimator, and batch means give the Monte Carlo error of
the chain mean.

The sampler talks to its objective through a small target interface
(``moments``, ``weight``, ``in_support``), so the same code drives the GMM
problem and analytic surrogates used for validation.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import stats

from .errors import AffineGmmError, GiveUp, InvalidArgument
from .gmm import GmmContext, MomentModel, WaldResult, wald, weight_from_mu
from .model import (
    PARAM_NAMES,
    SIGMA4_NAME,
    ParamVector,
    Theta0Bounds,
    in_theta0,
    is_in_theta0,
    perturbation_mask,
)

logger = logging.getLogger(__name__)

# Zero-based coordinates of the five update blocks; the optional fourth
# noise moment joins the volatility block.
BLOCKS: tuple[tuple[int, ...], ...] = (
    (0, 1, 18),
    (2, 3, 4, 5, 6, 7, 8),
    (9, 10, 11, 12, 13, 14),
    (15, 16, 17),
    (19, 20, 21, 22),
)
THETA_Q, THETA_P, GAMMA0 = 0, 1, 18
MAX_START_TRIES = 10_000
S1, S2 = 1, 2
WALD_CONVENTIONS = ("posterior", "batch_means")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    """Settings of the multistart search and the Markov chain."""

    n_starts: int = 2000
    n_draws: int = 20000
    burnin: int = 5000
    c_theta: float = 1.0
    rw_scale: float = 0.01
    big_move_scale: float = 0.1
    big_move_prob: float = 0.10
    rj_prob: float = 0.10
    p_s1: float = 0.90
    tie_prob: float = 0.80
    sigma_u: float = 1.0
    sigma_ugamma: float = 0.5
    rj_update_gamma: bool = True
    rw_floor: float = 0.0
    hastings_correction: bool = False
    wald_convention: str = "posterior"
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_starts", "n_draws", "burnin", "seed"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 0:
                raise InvalidArgument(f"{name} must be a nonnegative integer, got {v!r}")
        if self.n_starts < 1 or self.n_draws < 1:
            raise InvalidArgument("n_starts and n_draws must be positive")
        if not self.burnin < self.n_draws:
            raise InvalidArgument(f"burnin ({self.burnin}) must be smaller than n_draws ({self.n_draws})")
        for name in ("big_move_prob", "rj_prob", "p_s1", "tie_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgument(f"{name} must lie in [0, 1], got {v!r}")
        if not 0.0 < self.p_s1 < 1.0:
            raise InvalidArgument("p_s1 must lie strictly between 0 and 1")
        for name in ("rw_scale", "big_move_scale", "sigma_u", "sigma_ugamma"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if not (self.c_theta >= 0 and self.rw_floor >= 0):
            raise InvalidArgument("c_theta and rw_floor must be nonnegative")
        if self.wald_convention not in WALD_CONVENTIONS:
            raise InvalidArgument(f"wald_convention must be one of {WALD_CONVENTIONS}")

    @classmethod
    def preset(cls, name: str, **overrides) -> SamplerConfig:
        """Named profiles: ``desk`` for quick runs, ``paper`` for the full-length design."""
        base = PRESETS.get(name)
        if base is None:
            raise InvalidArgument(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return replace(base, **overrides)

    @property
    def n_kept(self) -> int:
        return self.n_draws - self.burnin


PRESETS = {
    "desk": SamplerConfig(n_starts=200, n_draws=2000, burnin=500),
    "paper": SamplerConfig(n_starts=2000, n_draws=20000, burnin=5000),
}


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------


class Target(Protocol):
    """Objective seen by the sampler: ``Q = (m_T - mu)' C (m_T - mu)``."""

    T: int
    m_T: np.ndarray
    n_params: int

    def moments(self, values: np.ndarray) -> np.ndarray | None: ...

    def weight(self, mu: np.ndarray) -> np.ndarray: ...

    def in_support(self, values: np.ndarray) -> bool: ...

    def explain(self, values: np.ndarray) -> list[str]: ...


class GmmTarget:
    """CUE-GMM objective on a data panel, supported on ``Theta_0``."""

    def __init__(self, ctx: GmmContext, model: MomentModel, bounds: Theta0Bounds = Theta0Bounds(),
                 n_params: int = 23):
        if n_params not in (23, 24):
            raise InvalidArgument("n_params must be 23 or 24")
        ctx.selector.check_order(n_params)
        if ctx.selector.needs_sigma4 and n_params != 24:
            raise InvalidArgument("fourth-order moments need the sigma4eps parameter (n_params=24)")
        self.ctx = ctx
        self.model = model
        self.bounds = bounds
        self.T = ctx.T
        self.m_T = np.asarray(ctx.m_T)
        self.n_params = n_params
        self.level = ctx.shortest_yield_mean
        self.weight_ridged = False

    def moments(self, values: np.ndarray) -> np.ndarray | None:
        try:
            p = ParamVector.from_array(values)
        except AffineGmmError:
            return None
        return self.model.try_mu(p)

    def weight(self, mu: np.ndarray) -> np.ndarray:
        w = weight_from_mu(mu, self.ctx)
        self.weight_ridged = self.weight_ridged or w.ridged
        return w.C

    def in_support(self, values: np.ndarray) -> bool:
        return is_in_theta0(ParamVector.from_array(values), self.level, self.bounds)

    def explain(self, values: np.ndarray) -> list[str]:
        return [c.name for c in in_theta0(ParamVector.from_array(values), self.level, self.bounds).failures]


class QuadraticTarget:
    """Surrogate with ``Q(theta) = (theta - centre)' P (theta - centre)``.

    The quasi-posterior is Gaussian with mean ``centre`` and covariance
    ``(T P)^{-1}``, truncated to the support.
    """

    def __init__(self, center: Sequence[float], precision: np.ndarray, T: int,
                 support: Callable[[np.ndarray], bool] | None = None):
        self.m_T = np.asarray(center, dtype=float)
        self.P = np.asarray(precision, dtype=float)
        if self.P.shape != (self.m_T.size,) * 2:
            raise InvalidArgument("precision must be square and match the centre")
        self.T = int(T)
        self.n_params = self.m_T.size
        self._support = support

    def moments(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float)

    def weight(self, mu: np.ndarray) -> np.ndarray:
        return self.P

    def in_support(self, values: np.ndarray) -> bool:
        return True if self._support is None else bool(self._support(values))

    def explain(self, values: np.ndarray) -> list[str]:
        return [] if self.in_support(values) else ["outside surrogate support"]


class FlatTarget:
    """``L == 1`` on a support set; used to check the transition kernels."""

    def __init__(self, n_params: int, support: Callable[[np.ndarray], bool] | None = None):
        self.T = 1
        self.m_T = np.zeros(1)
        self.n_params = n_params
        self._support = support

    def moments(self, values: np.ndarray) -> np.ndarray:
        return np.zeros(1)

    def weight(self, mu: np.ndarray) -> np.ndarray:
        return np.eye(1)

    def in_support(self, values: np.ndarray) -> bool:
        return True if self._support is None else bool(self._support(values))

    def explain(self, values: np.ndarray) -> list[str]:
        return [] if self.in_support(values) else ["outside flat support"]


def _quad(target: Target, mu: np.ndarray, C: np.ndarray) -> float:
    h = target.m_T - mu
    return float(h @ C @ h)


def param_names(n_params: int) -> tuple[str, ...]:
    return PARAM_NAMES + ((SIGMA4_NAME,) if n_params == 24 else ())


def blocks_for(n_params: int) -> tuple[tuple[int, ...], ...]:
    if n_params == 23:
        return BLOCKS
    if n_params == 24:
        return BLOCKS[:4] + (BLOCKS[4] + (23,),)
    raise InvalidArgument(f"expected 23 or 24 parameters, got {n_params}")


# ---------------------------------------------------------------------------
# Starting values
# ---------------------------------------------------------------------------


def _as_values(x) -> np.ndarray:
    return x.to_array() if isinstance(x, ParamVector) else np.array(x, dtype=float)


def perturb_start(center, c_theta: float, rng: np.random.Generator, target: Target,
                  tie_prob: float = 0.8, max_tries: int = MAX_START_TRIES) -> np.ndarray:
    """Random start around ``center`` inside the target's support.

    Real-line coordinates move by ``c |x| z``; sign-constrained coordinates
    move on the log scale, ``sgn(x) exp(log|x| + c z)``.  With probability
    ``tie_prob`` the physical level is set equal to the risk-neutral one.
    ``c_theta = 0`` returns the centre unchanged.
    """
    x0 = _as_values(center)
    if c_theta == 0:
        return x0.copy()
    logmask = perturbation_mask(param_names(x0.size))
    ax = np.abs(x0)
    with np.errstate(divide="ignore"):
        logax = np.log(ax)
    sgn = np.sign(x0)
    failures: Counter[str] = Counter()
    for _ in range(max_tries):
        z = rng.standard_normal(x0.size)
        x = np.where(logmask, sgn * np.exp(logax + c_theta * z), x0 + c_theta * ax * z)
        if rng.random() < tie_prob:
            x[THETA_P] = x[THETA_Q]
        if np.all(np.isfinite(x)) and target.in_support(x):
            return x
        failures.update(target.explain(x))
    top = ", ".join(f"{name} ({n})" for name, n in failures.most_common(5))
    raise GiveUp(f"no admissible start in {max_tries} consecutive draws; binding constraints: {top}")


@dataclass(frozen=True)
class MultistartResult:
    start: np.ndarray
    q_identity: float
    n_feasible: int
    q_values: np.ndarray


def multistart(target: Target, center, cfg: SamplerConfig, rng: np.random.Generator | None = None
               ) -> MultistartResult:
    """Best of ``n_starts`` perturbed points under the identity weight."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    eye = np.eye(target.m_T.size)
    best, best_q = None, math.inf
    qs = np.full(cfg.n_starts, math.inf)
    for n in range(cfg.n_starts):
        x = perturb_start(center, cfg.c_theta, rng, target, cfg.tie_prob)
        mu = target.moments(x)
        if mu is None:
            continue
        q = _quad(target, mu, eye)
        qs[n] = q
        if q < best_q:
            best, best_q = x, q
    n_ok = int(np.isfinite(qs).sum())
    if best is None:
        raise GiveUp(f"none of the {cfg.n_starts} starts has computable model moments")
    logger.info("multistart: %d/%d feasible starts, best identity-weight Q_T = %.6g", n_ok, cfg.n_starts, best_q)
    return MultistartResult(best, best_q, n_ok, qs)


# ---------------------------------------------------------------------------
# Chain state and transitions
# ---------------------------------------------------------------------------


@dataclass
class ChainState:
    """Current draw with its cached moments and distance under the current weight."""

    values: np.ndarray
    mu: np.ndarray
    q: float
    tied: bool

    @property
    def flag(self) -> int:
        return S1 if self.tied else S2


def _rw_scales(old: np.ndarray, scale: float, floor: float) -> np.ndarray:
    return np.maximum(scale * np.abs(old), floor)


def _log_proposal(new: np.ndarray, old: np.ndarray, cfg: SamplerConfig) -> float:
    """Log density of the two-scale random-walk mixture for one block.

    Coordinates with zero proposal scale never move; they are left out of
    the density.
    """
    live = _rw_scales(old, 1.0, cfg.rw_floor) > 0
    new, old = new[live], old[live]
    out = []
    for w, s in ((1.0 - cfg.big_move_prob, cfg.rw_scale), (cfg.big_move_prob, cfg.big_move_scale)):
        if w == 0:
            continue
        sd = _rw_scales(old, s, cfg.rw_floor)
        out.append(math.log(w) + float(np.sum(stats.norm.logpdf(new, old, sd))))
    return float(np.logaddexp.reduce(out))


def _accept(log_ratio: float, rng: np.random.Generator) -> bool:
    u = rng.random()
    return log_ratio >= 0 or (u > 0 and math.log(u) <= log_ratio)


def _try(target: Target, state: ChainState, new: np.ndarray, C: np.ndarray, T: int, log_extra: float,
         rng: np.random.Generator, tied: bool) -> tuple[ChainState, bool]:
    """Metropolis-Hastings decision for a proposal; the uniform is always drawn."""
    if not (np.all(np.isfinite(new)) and target.in_support(new)):
        rng.random()
        return state, False
    mu = target.moments(new)
    if mu is None:
        rng.random()
        return state, False
    q = _quad(target, mu, C)
    if not math.isfinite(q):
        rng.random()
        return state, False
    if _accept(-0.5 * T * (q - state.q) + log_extra, rng):
        return ChainState(new, mu, q, tied), True
    return state, False


def mh_block_step(state: ChainState, block: Sequence[int], target: Target, C: np.ndarray,
                  cfg: SamplerConfig, rng: np.random.Generator) -> tuple[ChainState, bool]:
    """One random-walk Metropolis-Hastings update of the coordinates in ``block``.

    In the tied state the two long-run levels move together as one
    coordinate.  The proposal standard deviation is ``rw_scale |x|`` or,
    with probability ``big_move_prob``, ``big_move_scale |x|``, floored at
    ``rw_floor``.
    """
    idx = [i for i in block if not (state.tied and i == THETA_P)]
    old = state.values[idx]
    scale = cfg.big_move_scale if rng.random() < cfg.big_move_prob else cfg.rw_scale
    prop = old + _rw_scales(old, scale, cfg.rw_floor) * rng.standard_normal(len(idx))
    new = state.values.copy()
    new[idx] = prop
    if state.tied and THETA_Q in idx:
        new[THETA_P] = new[THETA_Q]
    log_extra = 0.0
    if cfg.hastings_correction:
        log_extra = _log_proposal(old, prop, cfg) - _log_proposal(prop, old, cfg)
    return _try(target, state, new, C, target.T, log_extra, rng, state.tied)


def split_proposal(values: np.ndarray, eta: float, u: float, u_gamma: float, update_gamma: bool) -> np.ndarray:
    """Split a tied level ``theta`` into ``(thetaQ, thetaP)``."""
    new = values.copy()
    theta = values[THETA_Q]
    new[THETA_P] = theta - 2.0 * eta * u
    new[THETA_Q] = theta + 2.0 * (1.0 - eta) * u
    if update_gamma:
        new[GAMMA0] = values[GAMMA0] - 2.0 * eta * u + u_gamma
    return new


def merge_proposal(values: np.ndarray, eta: float, u_gamma: float, update_gamma: bool) -> tuple[np.ndarray, float]:
    """Merge ``(thetaQ, thetaP)`` into one level; inverse of :func:`split_proposal` for the same draws."""
    new = values.copy()
    u = 0.5 * (values[THETA_Q] - values[THETA_P])
    theta = values[THETA_P] + 2.0 * eta * u
    new[THETA_P] = theta
    new[THETA_Q] = theta
    if update_gamma:
        new[GAMMA0] = values[GAMMA0] + 2.0 * eta * u - u_gamma
    return new, u


def _draw_eta(rng: np.random.Generator) -> float:
    while True:
        eta = rng.random()
        if 0.0 < eta < 1.0:
            return eta


def rj_split(state: ChainState, target: Target, C: np.ndarray, cfg: SamplerConfig,
             rng: np.random.Generator) -> tuple[ChainState, bool]:
    """Reversible-jump move from ``s1`` to ``s2``."""
    if not state.tied:
        raise InvalidArgument("split needs a tied state")
    eta = _draw_eta(rng)
    u = cfg.sigma_u * rng.standard_normal()
    ug = cfg.sigma_ugamma * rng.standard_normal()
    new = split_proposal(state.values, eta, u, ug, cfg.rj_update_gamma)
    log_extra = (math.log((1 - cfg.p_s1) / cfg.p_s1) + math.log(2.0)
                 - float(stats.norm.logpdf(u, 0.0, cfg.sigma_u)))
    return _try(target, state, new, C, target.T, log_extra, rng, tied=False)


def rj_merge(state: ChainState, target: Target, C: np.ndarray, cfg: SamplerConfig,
             rng: np.random.Generator) -> tuple[ChainState, bool]:
    """Reversible-jump move from ``s2`` to ``s1``."""
    if state.tied:
        raise InvalidArgument("merge needs an untied state")
    eta = _draw_eta(rng)
    ug = cfg.sigma_ugamma * rng.standard_normal()
    new, u = merge_proposal(state.values, eta, ug, cfg.rj_update_gamma)
    log_extra = (math.log(cfg.p_s1 / (1 - cfg.p_s1)) + float(stats.norm.logpdf(u, 0.0, cfg.sigma_u))
                 - math.log(2.0))
    return _try(target, state, new, C, target.T, log_extra, rng, tied=True)


# ---------------------------------------------------------------------------
# Chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainTrace:
    """Draws of one chain with acceptance bookkeeping."""

    names: tuple[str, ...]
    draws: np.ndarray
    flags: np.ndarray
    q: np.ndarray
    block_accepted: np.ndarray
    block_rejected: np.ndarray
    rj_counts: dict = field(default_factory=dict)
    burnin: int = 0
    T: int = 1

    def __post_init__(self) -> None:
        for a in (self.draws, self.flags, self.q, self.block_accepted, self.block_rejected):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.draws.shape[0]

    def kept(self) -> np.ndarray:
        return self.draws[self.burnin:]

    @property
    def acceptance_rates(self) -> np.ndarray:
        tot = self.block_accepted + self.block_rejected
        return np.divide(self.block_accepted, tot, out=np.zeros(tot.shape), where=tot > 0)

    @property
    def s1_occupancy(self) -> float:
        return float(np.mean(self.flags[self.burnin:] == S1))

    def to_csv(self, path: str | Path, provenance: dict | None = None) -> None:
        """Columns ``m, state_flag, Q_T`` and the parameters; provenance as ``#`` lines."""
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.writelines(f"# {k}={v}\n" for k, v in sorted((provenance or {}).items()))
            fh.write(f"# burnin={self.burnin}\n# T={self.T}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "state_flag", "Q_T", *self.names])
            for m in range(self.n):
                w.writerow([m + 1, "s1" if self.flags[m] == S1 else "s2", repr(float(self.q[m])),
                            *(repr(float(v)) for v in self.draws[m])])

    @classmethod
    def from_csv(cls, path: str | Path) -> ChainTrace:
        meta, rows, header = {}, [], None
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    k, _, v = line[1:].strip().partition("=")
                    meta[k] = v
                elif header is None:
                    header = line.strip().split(",")
                elif line.strip():
                    rows.append(line.strip().split(","))
        if header is None or header[:3] != ["m", "state_flag", "Q_T"] or not rows:
            raise InvalidArgument(f"{path} is not a chain trace")
        flags = np.array([S1 if r[1] == "s1" else S2 for r in rows])
        q = np.array([float(r[2]) for r in rows])
        draws = np.array([[float(v) for v in r[3:]] for r in rows])
        zeros = np.zeros(len(blocks_for(draws.shape[1])), dtype=int)
        return cls(tuple(header[3:]), draws, flags, q, zeros, zeros.copy(), {},
                   int(meta.get("burnin", 0)), int(meta.get("T", 1)))


def run_chain(target: Target, start, cfg: SamplerConfig, rng: np.random.Generator | None = None) -> ChainTrace:
    """Block Metropolis-Hastings sweeps with optional reversible-jump moves.

    The weight matrix is refreshed at the start of each sweep from the
    previous draw.  Every stored draw is checked against the support.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    x0 = _as_values(start)
    if x0.size != target.n_params:
        raise InvalidArgument(f"start has {x0.size} parameters, target expects {target.n_params}")
    if not target.in_support(x0):
        raise InvalidArgument("start lies outside the support: " + ", ".join(target.explain(x0)))
    mu0 = target.moments(x0)
    if mu0 is None:
        raise InvalidArgument("model moments are not computable at the start")
    blocks = blocks_for(x0.size)
    state = ChainState(x0.copy(), mu0, math.nan, bool(x0[THETA_Q] == x0[THETA_P]))
    M = cfg.n_draws
    draws = np.empty((M, x0.size))
    flags = np.empty(M, dtype=int)
    qs = np.empty(M)
    acc = np.zeros(len(blocks), dtype=int)
    rej = np.zeros(len(blocks), dtype=int)
    rj = Counter()
    for m in range(M):
        C = target.weight(state.mu)
        state.q = _quad(target, state.mu, C)
        for k, block in enumerate(blocks):
            state, ok = mh_block_step(state, block, target, C, cfg, rng)
            acc[k] += ok
            rej[k] += not ok
        if rng.random() < cfg.rj_prob:
            kind = "split" if state.tied else "merge"
            move = rj_split if state.tied else rj_merge
            state, ok = move(state, target, C, cfg, rng)
            rj[f"{kind}_proposed"] += 1
            rj[f"{kind}_accepted"] += ok
        if not target.in_support(state.values):
            raise AffineGmmError(f"draw {m + 1} left the support")
        if state.tied and state.values[THETA_Q] != state.values[THETA_P]:
            raise AffineGmmError(f"draw {m + 1} is flagged s1 with unequal levels")
        draws[m] = state.values
        flags[m] = state.flag
        qs[m] = state.q
    return ChainTrace(param_names(x0.size), draws, flags, qs, acc, rej, dict(rj), cfg.burnin, target.T)


# ---------------------------------------------------------------------------
# Inference from the chain
# ---------------------------------------------------------------------------


def _batches(n: int) -> tuple[int, int]:
    if n < 100:
        raise InvalidArgument(f"batch means need at least 100 draws, got {n}")
    b = math.isqrt(n)
    return b, n // b


def batch_means_variance(series: Sequence[float] | np.ndarray, contrast: Sequence[float] | None = None) -> float:
    """Asymptotic variance ``sigma^2`` of a chain mean by non-overlapping batch means.

    With ``n`` draws, batch size ``b = floor(sqrt(n))`` and ``a = floor(n / b)``
    batches, ``sigma^2 = b / (a - 1) * sum_k (Ybar_k - Ybar)^2``, so that
    ``Var(mean) ~ sigma^2 / n``.  A 2-d array of draws is reduced to the
    scalar series ``draws @ contrast`` first.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 2:
        if contrast is None:
            raise InvalidArgument("a contrast vector is needed for a matrix of draws")
        x = x @ np.asarray(contrast, dtype=float)
    elif contrast is not None:
        raise InvalidArgument("a contrast applies to a matrix of draws only")
    return float(batch_means_covariance(x[:, None])[0, 0])


def batch_means_covariance(draws: np.ndarray) -> np.ndarray:
    """Multivariate batch-means estimate of the asymptotic covariance of the chain mean."""
    X = np.asarray(draws, dtype=float)
    if X.ndim != 2:
        raise InvalidArgument("draws must be a 2-d array")
    b, a = _batches(X.shape[0])
    Y = X[: a * b].reshape(a, b, X.shape[1]).mean(axis=1)
    D = Y - Y.mean(axis=0)
    return b * (D.T @ D) / (a - 1)


@dataclass(frozen=True)
class ChainEstimate:
    """Chain summary: mean, sampling standard deviation and Monte Carlo error per coordinate."""

    names: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    mcse: np.ndarray
    cov: np.ndarray
    bm_cov: np.ndarray
    n: int
    T: int
    s1_occupancy: float

    @property
    def theta_hat(self) -> ParamVector:
        return ParamVector.from_array(self.mean)

    def covariance(self, convention: str = "posterior") -> np.ndarray:
        """``V / T``: draw covariance, or the batch-means asymptotic covariance of the chain mean."""
        if convention == "posterior":
            return self.cov
        if convention == "batch_means":
            return self.bm_cov
        raise InvalidArgument(f"unknown Wald convention {convention!r}")

    def contrast(self, R: np.ndarray, convention: str = "posterior") -> ContrastTest:
        R = np.atleast_2d(np.asarray(R, dtype=float))
        r = R @ self.mean
        V = self.T * self.covariance(convention)
        res = wald(r, R, V, self.T)
        var = R @ (V / self.T) @ R.T
        return ContrastTest(r, np.sqrt(np.clip(np.diag(var), 0, None)), res, convention)


@dataclass(frozen=True)
class ContrastTest:
    estimate: np.ndarray
    sd: np.ndarray
    wald: WaldResult
    convention: str


def estimate(trace: ChainTrace) -> ChainEstimate:
    """Post-burn-in mean, draw standard deviations and batch-means Monte Carlo errors."""
    X = trace.kept()
    n = X.shape[0]
    if n < 2:
        raise InvalidArgument("need at least two post-burn-in draws")
    # Shifting by the first kept draw keeps a constant coordinate exactly constant.
    D = X - X[0]
    mean = X[0] + D.mean(axis=0)
    cov = np.atleast_2d(np.cov(D, rowvar=False, ddof=1))
    bm = batch_means_covariance(D) if n >= 100 else np.full_like(cov, np.nan)
    sd = np.sqrt(np.clip(np.diag(cov), 0, None))
    mcse = np.sqrt(np.clip(np.diag(bm), 0, None) / n)
    return ChainEstimate(trace.names, mean, sd, mcse, cov, bm, n, trace.T,
                         float(np.mean(trace.flags[trace.burnin:] == S1)))


def theta_restriction(n_params: int = 23) -> np.ndarray:
    """``R`` for ``thetaQ - thetaP = 0``."""
    R = np.zeros((1, n_params))
    R[0, THETA_Q], R[0, THETA_P] = 1.0, -1.0
    return R


def beta_restriction(n_params: int = 23) -> np.ndarray:
    """``R`` for ``betaQ - betaP = 0`` (rank 7)."""
    R = np.zeros((7, n_params))
    for k in range(7):
        R[k, 2 + k], R[k, 9 + k] = 1.0, -1.0
    return R


# ---------------------------------------------------------------------------
# Whole procedure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QBResult:
    start: MultistartResult
    trace: ChainTrace
    estimate: ChainEstimate


def run_estimation(target: Target, center, cfg: SamplerConfig) -> QBResult:
    """Multistart search followed by the chain; the two stages draw from independent streams."""
    ss = np.random.SeedSequence(cfg.seed)
    rng_start, rng_chain = (np.random.default_rng(s) for s in ss.spawn(2))
    ms = multistart(target, center, cfg, rng_start)
    trace = run_chain(target, ms.start, cfg, rng_chain)
    return QBResult(ms, trace, estimate(trace))
