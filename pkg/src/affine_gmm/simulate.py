"""Simulation of latent affine paths and noisy yield panels.

Latent paths use an Euler scheme with full truncation: the variance
arguments ``S_ii`` are clipped at zero inside the square root, and the
square-root factors are truncated at zero after every substep.  Paths start
at the stationary mean ``theta^P`` and a burn-in stretch is discarded.
Observed yields add independent Gaussian noise to the model yields.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import DataError, InvalidArgument, NumericalFailure
from .model import ParamVector
from .polyproc import DiffusionSpec
from .riccati import yield_loadings

logger = logging.getLogger(__name__)

CHUNK_DATES = 500


@dataclass(frozen=True)
class SimConfig:
    """Length, resolution and seed of one simulated path."""

    T: int
    substeps: int = 1000
    seed: int = 0
    burnin: int = 500

    def __post_init__(self) -> None:
        if not (isinstance(self.T, (int, np.integer)) and self.T >= 2):
            raise InvalidArgument(f"T must be an integer >= 2, got {self.T!r}")
        if not (isinstance(self.substeps, (int, np.integer)) and self.substeps >= 100):
            raise InvalidArgument(f"substeps must be an integer >= 100, got {self.substeps!r}")
        if not (isinstance(self.burnin, (int, np.integer)) and self.burnin >= 0):
            raise InvalidArgument(f"burnin must be a nonnegative integer, got {self.burnin!r}")
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2**64):
            raise InvalidArgument(f"seed must be a 64-bit nonnegative integer, got {self.seed!r}")


@dataclass(frozen=True)
class YieldPanel:
    """Observed yields: one row per date, one column per maturity."""

    maturities: np.ndarray
    observations: np.ndarray
    dates: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        tau = np.asarray(self.maturities, dtype=float)
        Y = np.asarray(self.observations, dtype=float)
        object.__setattr__(self, "maturities", tau)
        object.__setattr__(self, "observations", Y)
        if Y.ndim != 2 or Y.shape[1] != tau.size:
            raise InvalidArgument(f"observations of shape {Y.shape} do not match {tau.size} maturities")
        if np.any(np.diff(tau) <= 0):
            raise InvalidArgument("maturities must be sorted ascending without duplicates")
        if not np.all(np.isfinite(Y)):
            raise InvalidArgument("panel has missing or non-finite entries")
        if self.dates is not None:
            object.__setattr__(self, "dates", tuple(str(d) for d in self.dates))
            if len(self.dates) != Y.shape[0]:
                raise InvalidArgument("number of dates differs from number of rows")

    @property
    def T(self) -> int:
        return self.observations.shape[0]

    @property
    def M(self) -> int:
        return self.observations.shape[1]


@njit(cache=True)
def _euler_chunk(x, b, beta, sigma, B0, Bx, h, sqrt_h, Z, out, substeps, m):  # pragma: no cover - compiled
    d = x.shape[0]
    n_dates = out.shape[0]
    drift = np.empty(d)
    k = 0
    for t in range(n_dates):
        for _ in range(substeps):
            for i in range(d):
                acc = b[i]
                for j in range(d):
                    acc += beta[i, j] * x[j]
                drift[i] = acc
            for i in range(d):
                s = B0[i]
                for j in range(d):
                    s += Bx[j, i] * x[j]
                s = max(s, 0.0)
                x[i] += drift[i] * h + sigma[i] * math.sqrt(s) * sqrt_h * Z[k, i]
            for i in range(m):
                x[i] = max(x[i], 0.0)
            k += 1
        for i in range(d):
            out[t, i] = x[i]


def _volatility_factors(spec: DiffusionSpec) -> int:
    """Number of leading coordinates whose variance vanishes at zero (``B0_i = 0``)."""
    B0 = np.asarray(spec.B0, dtype=float)
    m = 0
    while m < B0.size and B0[m] == 0.0:
        m += 1
    return m


def simulate_latent(
    pspec: DiffusionSpec,
    cfg: SimConfig,
    x0: Sequence[float] | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Sample ``X`` at ``T`` unit-spaced dates after ``burnin`` discarded dates.

    The default start is the stationary mean ``-beta^{-1} b``.
    """
    spec = pspec.as_float()
    d = spec.d
    b = np.ascontiguousarray(spec.b, dtype=float)
    beta = np.ascontiguousarray(spec.beta, dtype=float)
    sigma = np.ascontiguousarray(spec.sigma, dtype=float)
    B0 = np.ascontiguousarray(spec.B0, dtype=float)
    Bx = np.ascontiguousarray(spec.Bx, dtype=float)
    if x0 is None:
        try:
            x = -np.linalg.solve(beta, b)
        except np.linalg.LinAlgError as exc:
            raise InvalidArgument("drift slope is singular; pass an explicit start") from exc
    else:
        x = np.array(x0, dtype=float)
        if x.shape != (d,):
            raise InvalidArgument(f"start must have length {d}")
    m = _volatility_factors(spec)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    h = 1.0 / cfg.substeps
    total = cfg.burnin + cfg.T
    path = np.empty((cfg.T, d))
    buf = np.empty((CHUNK_DATES, d))
    done = 0
    while done < total:
        n = min(CHUNK_DATES, total - done)
        Z = rng.standard_normal((n * cfg.substeps, d))
        out = buf[:n]
        _euler_chunk(x, b, beta, sigma, B0, Bx, h, math.sqrt(h), Z, out, cfg.substeps, m)
        if not np.all(np.isfinite(out)):
            raise NumericalFailure(f"simulated path became non-finite near date {done + n - cfg.burnin}")
        lo = max(done, cfg.burnin)
        if lo < done + n:
            path[lo - cfg.burnin:done + n - cfg.burnin] = out[lo - done:]
        done += n
    return path


def simulate_panel(
    p: ParamVector,
    maturities: Sequence[float],
    cfg: SimConfig,
    return_latent: bool = False,
):
    """Simulate ``y_t = PhiTilde + PsiTilde X_t + eps_t`` with Gaussian noise."""
    tau = np.asarray(maturities, dtype=float)
    loadings = yield_loadings(p.q_spec(), tau)
    rng = np.random.default_rng(cfg.seed)
    X = simulate_latent(p.diffusion_spec("P"), cfg, rng=rng)
    eps = rng.standard_normal((cfg.T, tau.size)) * math.sqrt(p.sigma2eps)
    Y = loadings.yields(X) + eps
    panel = YieldPanel(tau, Y, tuple(str(t) for t in range(1, cfg.T + 1)))
    return (panel, X) if return_latent else panel


# ---------------------------------------------------------------------------
# CSV input and output
# ---------------------------------------------------------------------------


def _tau_label(tau: float) -> str:
    text = f"{tau:.4f}".rstrip("0").rstrip(".")
    return f"tau_{text}"


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_panel_csv(path: str | Path, panel: YieldPanel, metadata: dict | None = None, units: str = "level") -> None:
    """Write the panel and a JSON sidecar holding units, exact maturities and provenance."""
    path = Path(path)
    dates = panel.dates or tuple(str(t) for t in range(1, panel.T + 1))
    header = "date," + ",".join(_tau_label(t) for t in panel.maturities)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for d, row in zip(dates, panel.observations):
            fh.write(d + "," + ",".join(repr(float(v)) for v in row) + "\n")
    meta = {"units": units, "maturities": [float(t) for t in panel.maturities]}
    meta.update(metadata or {})
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_panel_csv(path: str | Path, maturities: Sequence[float] | None = None, tol: float = 5e-5) -> YieldPanel:
    """Read a ``date,<yield columns>`` CSV, dropping rows with missing cells.

    Column maturities come from the sidecar when present, otherwise from
    ``tau_<years>`` headers.  When ``maturities`` is given the columns must
    agree with it within ``tol`` and the given values are used.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file {path} does not exist")
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path} is empty")
    cols = [c.strip() for c in lines[0].split(",")]
    if len(cols) < 2:
        raise DataError(f"{path}: expected a date column followed by yield columns")
    tau = _column_maturities(path, cols[1:])
    if maturities is not None:
        want = np.asarray(maturities, dtype=float)
        if tau is not None and (tau.size != want.size or np.any(np.abs(tau - want) > tol)):
            raise DataError(f"{path}: columns {cols[1:]} do not match configured maturities {want.tolist()}")
        if tau is None and want.size != len(cols) - 1:
            raise DataError(f"{path}: {len(cols) - 1} yield columns but {want.size} maturities configured")
        tau = want
    if tau is None:
        raise DataError(f"{path}: cannot infer maturities from header; configure them explicitly")
    dates, rows, dropped = [], [], 0
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(cols):
            raise DataError(f"{path}:{n}: expected {len(cols)} cells, got {len(cells)}")
        try:
            vals = [float(c) if c not in ("", "NA", "ND", "nan", "NaN") else math.nan for c in cells[1:]]
        except ValueError:
            raise DataError(f"{path}:{n}: non-numeric yield entry") from None
        if any(math.isnan(v) for v in vals):
            dropped += 1
            continue
        dates.append(cells[0])
        rows.append(vals)
    if dropped:
        logger.info("dropped %d rows with missing cells from %s", dropped, path)
    if len(rows) < 2:
        raise DataError(f"{path}: fewer than two complete rows")
    return YieldPanel(tau, np.array(rows), tuple(dates))


def _column_maturities(path: Path, names: list[str]) -> np.ndarray | None:
    side = sidecar_path(path)
    if side.is_file():
        try:
            meta = json.loads(side.read_text(encoding="utf-8"))
            tau = np.asarray(meta["maturities"], dtype=float)
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"malformed sidecar {side}: {exc}") from exc
        if tau.size != len(names):
            raise DataError(f"sidecar {side} lists {tau.size} maturities for {len(names)} columns")
        return tau
    out = []
    for name in names:
        if not name.startswith("tau_"):
            return None
        try:
            out.append(float(name[4:]))
        except ValueError:
            return None
    return np.array(out)


def read_metadata(path: str | Path) -> dict:
    side = sidecar_path(path)
    if not side.is_file():
        return {}
    return json.loads(side.read_text(encoding="utf-8"))
