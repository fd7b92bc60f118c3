"""Parameter layout and constraints of the A_1(3) term-structure model.

The state ``X = (X_1, X_2, X_3)`` has one square-root factor.  Under measure
``M`` in ``{P, Q}`` the drift is ``b^M + beta^M X`` with ``b^M = -beta^M theta^M``
and ``theta^M = (theta^M, 0, 0)``; the variances are ``S_11 = X_1`` and
``S_ii = 1 + Bx_1i X_1`` for ``i = 2, 3``, scaled by ``Sigma_i^2``.  The short
rate is ``gamma0 + X_1 + X_2 + X_3``.

``beta`` has the admissible lower-triangular pattern

    [[b11,   0,   0],
     [b21, b22, b23],
     [b31, b32, b33]]

and is stored as seven numbers in the order ``b11, b21, b31, b22, b32, b23, b33``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InvalidArgument, NumericalFailure
from .polyproc import DiffusionSpec
from .riccati import QSpec

logger = logging.getLogger(__name__)

BETA_KEYS = ("11", "21", "31", "22", "32", "23", "33")
PARAM_NAMES: tuple[str, ...] = (
    ("thetaQ", "thetaP")
    + tuple(f"betaQ{k}" for k in BETA_KEYS)
    + tuple(f"betaP{k}" for k in BETA_KEYS)
    + ("Bx12", "Bx13", "gamma0", "Sigma1", "Sigma2", "Sigma3", "sigma2eps")
)
SIGMA4_NAME = "sigma4eps"

# Coordinates perturbed on the log scale because their sign is fixed by the
# model (drift levels, mean-reversion diagonals, feedback into the Gaussian
# factors, volatility loadings and scales).
SIGN_CONSTRAINED: frozenset[str] = frozenset(
    {"thetaQ", "thetaP", "Bx12", "Bx13", "Sigma1", "Sigma2", "Sigma3", "sigma2eps", SIGMA4_NAME}
    | {f"beta{m}{k}" for m in "QP" for k in ("11", "21", "31", "22", "33")}
)

EIG_TOL = 1e-10
THETA0_C = 1.45


@dataclass(frozen=True)
class Theta0Bounds:
    """Box constraints of the sampler's restricted parameter space."""

    sigma: tuple[float, float] = (0.1, 2.0)
    bx: tuple[float, float] = (0.0, 2.0)
    noise: tuple[float, float] = (0.005, 0.025)
    beta_diag: tuple[float, float] = (-50.0, -0.1)
    beta_offdiag: tuple[float, float] = (-10.0, 10.0)
    c: float = THETA0_C


def beta_matrix(entries: Sequence[float]) -> np.ndarray:
    """3x3 drift slope from the seven stored entries."""
    if len(entries) != 7:
        raise InvalidArgument(f"beta needs 7 entries, got {len(entries)}")
    b11, b21, b31, b22, b32, b23, b33 = (float(v) for v in entries)
    return np.array([[b11, 0.0, 0.0], [b21, b22, b23], [b31, b32, b33]])


def b_from_theta(beta: np.ndarray, theta: Sequence[float]) -> np.ndarray:
    """Drift intercept ``b = -beta theta`` for a long-run level ``theta``."""
    beta = np.asarray(beta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if beta.shape != (theta.size, theta.size):
        raise InvalidArgument("beta must be square and match theta")
    return -beta @ theta


@dataclass(frozen=True)
class ParamVector:
    """Parameters of the A_1(3) model in their canonical order."""

    thetaQ: float
    thetaP: float
    betaQ: tuple[float, ...]
    betaP: tuple[float, ...]
    Bx12: float
    Bx13: float
    gamma0: float
    Sigma: tuple[float, float, float]
    sigma2eps: float
    sigma4eps: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "betaQ", tuple(float(v) for v in self.betaQ))
        object.__setattr__(self, "betaP", tuple(float(v) for v in self.betaP))
        object.__setattr__(self, "Sigma", tuple(float(v) for v in self.Sigma))
        if len(self.betaQ) != 7 or len(self.betaP) != 7 or len(self.Sigma) != 3:
            raise InvalidArgument("betaQ/betaP need 7 entries and Sigma needs 3")
        for f in ("thetaQ", "thetaP", "Bx12", "Bx13", "gamma0", "sigma2eps"):
            object.__setattr__(self, f, float(getattr(self, f)))
        if self.sigma4eps is not None:
            object.__setattr__(self, "sigma4eps", float(self.sigma4eps))
        if not np.all(np.isfinite(self.to_array())):
            raise InvalidArgument("parameters must be finite")

    # -- flat representation -------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return PARAM_NAMES + ((SIGMA4_NAME,) if self.sigma4eps is not None else ())

    def to_array(self) -> np.ndarray:
        vals = [self.thetaQ, self.thetaP, *self.betaQ, *self.betaP, self.Bx12, self.Bx13, self.gamma0,
                *self.Sigma, self.sigma2eps]
        if self.sigma4eps is not None:
            vals.append(self.sigma4eps)
        return np.array(vals, dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> ParamVector:
        v = [float(x) for x in values]
        if len(v) not in (23, 24):
            raise InvalidArgument(f"expected 23 or 24 parameters, got {len(v)}")
        return cls(v[0], v[1], tuple(v[2:9]), tuple(v[9:16]), v[16], v[17], v[18], tuple(v[19:22]), v[22],
                   v[23] if len(v) == 24 else None)

    def to_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.to_array())))

    def to_text(self) -> str:
        """``key=value`` lines; floats use ``repr`` so that parsing round-trips exactly."""
        return "".join(f"{k}={v!r}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_text(cls, text: str) -> ParamVector:
        vals: dict[str, float] = {}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in PARAM_NAMES + (SIGMA4_NAME,):
                raise ConfigError(f"line {n}: expected one of the parameter names as key=value, got {raw!r}")
            if key in vals:
                raise ConfigError(f"line {n}: duplicate key {key}")
            try:
                vals[key] = float(value)
            except ValueError:
                raise ConfigError(f"line {n}: {value.strip()!r} is not a number") from None
        missing = [k for k in PARAM_NAMES if k not in vals]
        if missing:
            raise ConfigError(f"missing parameters: {', '.join(missing)}")
        arr = [vals[k] for k in PARAM_NAMES] + ([vals[SIGMA4_NAME]] if SIGMA4_NAME in vals else [])
        return cls.from_array(arr)

    def with_values(self, **changes: float) -> ParamVector:
        return replace(self, **changes)

    @property
    def tied(self) -> bool:
        """True when the P and Q long-run levels coincide (state ``s1``)."""
        return self.thetaQ == self.thetaP

    # -- model objects -------------------------------------------------------

    @property
    def Bx(self) -> np.ndarray:
        Bx = np.zeros((3, 3))
        Bx[0] = (1.0, self.Bx12, self.Bx13)
        return Bx

    @property
    def B0(self) -> np.ndarray:
        return np.array([0.0, 1.0, 1.0])

    def beta(self, measure: str) -> np.ndarray:
        return beta_matrix(self._pick(measure)[1])

    def theta(self, measure: str) -> np.ndarray:
        return np.array([self._pick(measure)[0], 0.0, 0.0])

    def b(self, measure: str) -> np.ndarray:
        return b_from_theta(self.beta(measure), self.theta(measure))

    def _pick(self, measure: str) -> tuple[float, tuple[float, ...]]:
        if measure == "Q":
            return self.thetaQ, self.betaQ
        if measure == "P":
            return self.thetaP, self.betaP
        raise InvalidArgument(f"measure must be 'P' or 'Q', got {measure!r}")

    def diffusion_spec(self, measure: str = "P") -> DiffusionSpec:
        return DiffusionSpec(self.b(measure), self.beta(measure), np.array(self.Sigma), self.B0, self.Bx)

    def q_spec(self) -> QSpec:
        return QSpec(self.b("Q"), self.beta("Q"), np.array(self.Sigma), self.B0, self.Bx, self.gamma0, m=1)

    def q_key(self) -> tuple[float, ...]:
        """Parameters that determine the yield loadings."""
        return (self.thetaQ, *self.betaQ, self.Bx12, self.Bx13, self.gamma0, *self.Sigma)

    def p_key(self) -> tuple[float, ...]:
        """Parameters that determine the P-dynamics of the state."""
        return (self.thetaP, *self.betaP, self.Bx12, self.Bx13, *self.Sigma)


# ---------------------------------------------------------------------------
# Constraint reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    value: float | str


@dataclass
class ConstraintReport:
    checks: list[ConstraintCheck] = field(default_factory=list)

    def add(self, name: str, passed: bool, value) -> None:
        self.checks.append(ConstraintCheck(name, bool(passed), value))

    def extend(self, other: ConstraintReport) -> None:
        self.checks.extend(other.checks)

    @property
    def failures(self) -> list[ConstraintCheck]:
        return [c for c in self.checks if not c.passed]

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.ok

    def summary(self) -> str:
        if self.ok:
            return "all constraints satisfied"
        return "; ".join(f"{c.name} (value {c.value})" for c in self.failures)


def check_admissibility(p: ParamVector) -> ConstraintReport:
    """Sign restrictions that make the A_1(3) specification well defined."""
    rep = ConstraintReport()
    for m in "QP":
        theta, beta = p._pick(m)
        b11, b21, b31 = beta[0], beta[1], beta[2]
        rep.add(f"theta{m} >= 0", theta >= 0, theta)
        rep.add(f"beta{m}11 < 0 (beta_II diagonal negative)", b11 < 0, b11)
        rep.add(f"beta{m}21 >= 0", b21 >= 0, b21)
        rep.add(f"beta{m}31 >= 0", b31 >= 0, b31)
        rep.add(f"beta{m}11 * theta{m} < 0", b11 * theta < 0, b11 * theta)
    rep.add("Bx12 >= 0", p.Bx12 >= 0, p.Bx12)
    rep.add("Bx13 >= 0", p.Bx13 >= 0, p.Bx13)
    for i, s in enumerate(p.Sigma, start=1):
        rep.add(f"Sigma{i} > 0", s > 0, s)
    rep.add("sigma2eps > 0", p.sigma2eps > 0, p.sigma2eps)
    if p.sigma4eps is not None:
        rep.add("sigma4eps >= sigma2eps^2", p.sigma4eps >= p.sigma2eps**2, p.sigma4eps)
    return rep


def check_feller(p: ParamVector) -> ConstraintReport:
    """Advisory boundary condition ``b_1 >= Sigma_1^2 / 2`` under both measures."""
    rep = ConstraintReport()
    for m in "QP":
        b1 = float(p.b(m)[0])
        rep.add(f"Feller {m}: b1 >= Sigma1^2/2", b1 >= 0.5 * p.Sigma[0] ** 2, b1)
    return rep


def feller_condition(b: Sequence[float], sigma: Sequence[float], m: int) -> ConstraintReport:
    """Feller check for the first ``m`` factors of a generic specification."""
    rep = ConstraintReport()
    for i in range(m):
        rep.add(f"Feller factor {i + 1}", b[i] >= 0.5 * sigma[i] ** 2, float(b[i]))
    return rep


def check_stationarity(p: ParamVector) -> ConstraintReport:
    """Eigenvalues of ``beta^P`` and ``beta^Q`` must have negative real parts."""
    rep = ConstraintReport()
    for m in "PQ":
        try:
            eig = np.linalg.eigvals(p.beta(m))
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"eigenvalues of beta{m} failed: {exc}") from exc
        worst = float(np.max(eig.real))
        rep.add(f"beta{m} eigenvalues Re < 0", worst < -EIG_TOL, worst)
    return rep


def in_theta0(p: ParamVector, shortest_yield_mean: float, bounds: Theta0Bounds = Theta0Bounds()) -> ConstraintReport:
    """Membership in the restricted parameter space used by the sampler."""
    if not shortest_yield_mean > 0:
        raise InvalidArgument(f"shortest_yield_mean must be positive, got {shortest_yield_mean!r}")
    rep = ConstraintReport()
    lo, hi = bounds.sigma
    for i, s in enumerate(p.Sigma, start=1):
        rep.add(f"Sigma{i} in [{lo}, {hi}]", lo <= s <= hi, s)
    lo, hi = bounds.bx
    rep.add(f"Bx12 in [{lo}, {hi}]", lo <= p.Bx12 <= hi, p.Bx12)
    rep.add(f"Bx13 in [{lo}, {hi}]", lo <= p.Bx13 <= hi, p.Bx13)
    lo, hi = bounds.noise
    rep.add(f"sigma2eps in [{lo}, {hi}]", lo <= p.sigma2eps <= hi, p.sigma2eps)
    for m in "QP":
        beta = p._pick(m)[1]
        for key, v in zip(BETA_KEYS, beta):
            lo, hi = bounds.beta_diag if key[0] == key[1] else bounds.beta_offdiag
            rep.add(f"beta{m}{key} in [{lo}, {hi}]", lo <= v <= hi, v)
    level = p.gamma0 + p.thetaP
    lo, hi = shortest_yield_mean / bounds.c, shortest_yield_mean * bounds.c
    rep.add(f"gamma0 + thetaP in [{lo:.6g}, {hi:.6g}]", lo <= level <= hi, level)
    rep.extend(check_admissibility(p))
    rep.extend(check_stationarity(p))
    return rep


def is_in_theta0(p: ParamVector, shortest_yield_mean: float, bounds: Theta0Bounds = Theta0Bounds()) -> bool:
    """Fast boolean form of :func:`in_theta0` for sampler hot loops."""
    s1, s2, s3 = p.Sigma
    lo, hi = bounds.sigma
    if not (lo <= s1 <= hi and lo <= s2 <= hi and lo <= s3 <= hi):
        return False
    lo, hi = bounds.bx
    if not (lo <= p.Bx12 <= hi and lo <= p.Bx13 <= hi):
        return False
    lo, hi = bounds.noise
    if not lo <= p.sigma2eps <= hi:
        return False
    if p.sigma4eps is not None and not p.sigma4eps >= p.sigma2eps**2:
        return False
    dlo, dhi = bounds.beta_diag
    olo, ohi = bounds.beta_offdiag
    for theta, beta in ((p.thetaQ, p.betaQ), (p.thetaP, p.betaP)):
        b11, b21, b31, b22, b32, b23, b33 = beta
        if not (dlo <= b11 <= dhi and dlo <= b22 <= dhi and dlo <= b33 <= dhi):
            return False
        if not (olo <= b21 <= ohi and olo <= b31 <= ohi and olo <= b32 <= ohi and olo <= b23 <= ohi):
            return False
        if not (theta > 0 and b21 >= 0 and b31 >= 0):
            return False
        # beta is block triangular: eigenvalues are b11 and those of the lower 2x2 block.
        tr = b22 + b33
        det = b22 * b33 - b23 * b32
        if not (tr < -2 * EIG_TOL and det > 0):
            return False
        disc = tr * tr - 4 * det
        top = 0.5 * tr + (0.5 * math.sqrt(disc) if disc > 0 else 0.0)
        if not top < -EIG_TOL:
            return False
    m = shortest_yield_mean
    level = p.gamma0 + p.thetaP
    return m / bounds.c <= level <= m * bounds.c


def perturbation_mask(names: Iterable[str]) -> np.ndarray:
    """Boolean mask of coordinates perturbed on the log scale."""
    return np.array([n in SIGN_CONSTRAINED for n in names])


def table1_truth() -> ParamVector:
    """Parameter vector of the main simulation design (distinct P and Q levels)."""
    return ParamVector(
        thetaQ=10.0,
        thetaP=1.5,
        betaQ=(-1.0, 0.2, 0.02, -1.0, 0.04, 0.0, -0.8),
        betaP=(-1.0, 0.02, 0.01, -0.7, 0.01, 0.0, -0.7),
        Bx12=0.1,
        Bx13=0.01,
        gamma0=2.0,
        Sigma=(0.7, 1.0, 0.8),
        sigma2eps=0.0067,
    )


def table2_truth() -> ParamVector:
    """Variant of :func:`table1_truth` with equal P and Q long-run levels."""
    return replace(table1_truth(), thetaQ=1.5)
