"""Command-line front end: simulate panels, list moments, estimate and test.

Runs are driven by a JSON config file.  Every output file carries the hash
of the resolved config and the seed, so a result can be traced back to (and
regenerated from) its inputs.  Exit codes: 0 success, 2 config error,
3 data error, 4 numerical failure.

Example config::

    {
      "params": "table1",
      "maturities": [0.0833333, 0.25, 0.5, 1, 2, 3, 5, 7, 10, 20],
      "selector": "default27",
      "preset": "desk",
      "sampler": {"c_theta": 1.0},
      "simulate": {"T": 500},
      "data": "panel.csv",
      "units": "level",
      "seed": 1
    }
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import click
import numpy as np

from .errors import (
    AffineGmmError,
    ConfigError,
    DataError,
    InvalidArgument,
    NumericalFailure,
)
from .gmm import MomentModel, MomentSelector, default_selector, sample_moments
from .model import (
    ParamVector,
    Theta0Bounds,
    check_admissibility,
    check_stationarity,
    table1_truth,
    table2_truth,
)
from .qbayes import (
    WALD_CONVENTIONS,
    ChainEstimate,
    ChainTrace,
    GmmTarget,
    SamplerConfig,
    beta_restriction,
    estimate,
    run_estimation,
    theta_restriction,
)
from .simulate import (
    SimConfig,
    YieldPanel,
    read_metadata,
    read_panel_csv,
    simulate_panel,
    write_panel_csv,
)
from .yieldmoments import NoiseSpec, moment_catalogue

logger = logging.getLogger(__name__)

DEFAULT_MATURITIES = (1 / 12, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 20.0)
PARAM_PRESETS = {"table1": table1_truth, "table2": table2_truth}
UNITS = ("level", "percent", "decimal")
THREADS_ENV = "AFFINE_GMM_THREADS"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Resolved run configuration."""

    params: ParamVector
    params_source: str
    maturities: tuple[float, ...] = DEFAULT_MATURITIES
    selector: str = "default27"
    preset: str = "desk"
    sampler: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    data: str | None = None
    units: str | None = None
    out: str = "."
    seed: int = 0
    sweep: dict = field(default_factory=dict)
    base_dir: str = "."

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def sampler_config(self) -> SamplerConfig:
        try:
            return SamplerConfig.preset(self.preset, seed=self.seed, **self.sampler)
        except TypeError as exc:
            raise ConfigError(f"unknown sampler option: {exc}") from exc
        except InvalidArgument as exc:
            raise ConfigError(f"sampler: {exc}") from exc

    def sim_config(self, seed: int | None = None) -> SimConfig:
        opts = dict(self.simulate)
        opts.setdefault("T", 500)
        try:
            return SimConfig(seed=self.seed if seed is None else seed, **opts)
        except TypeError as exc:
            raise ConfigError(f"unknown simulate option: {exc}") from exc
        except InvalidArgument as exc:
            raise ConfigError(f"simulate: {exc}") from exc

    def moment_selector(self) -> MomentSelector:
        if self.selector == "default27":
            try:
                return default_selector(len(self.maturities))
            except InvalidArgument as exc:
                raise ConfigError(str(exc)) from exc
        path = self.resolve(self.selector)
        if not path.is_file():
            raise ConfigError(f"selector file {path} does not exist")
        return MomentSelector.from_file(path)

    def canonical(self) -> dict:
        """Content that determines results; hashed for provenance."""
        return {
            "params": self.params.to_dict(),
            "maturities": list(self.maturities),
            "selector": self.moment_selector().labels,
            "sampler": {k: v for k, v in dataclasses.asdict(self.sampler_config()).items() if k != "seed"},
            "simulate": {k: v for k, v in dataclasses.asdict(self.sim_config()).items() if k != "seed"},
            "data": self.data,
            "units": self.units,
            "sweep": self.sweep,
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **changes) -> RunConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


CONFIG_KEYS = {"model", "params", "maturities", "selector", "preset", "sampler", "simulate", "data", "units",
               "out", "seed", "sweep"}


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON run config; ``None`` gives the defaults with the table1 design."""
    if path is None:
        return RunConfig(params=table1_truth(), params_source="table1")
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(raw, path.parent)


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    model = raw.get("model", "A1(3)")
    if model != "A1(3)":
        raise ConfigError(f"unsupported model {model!r}; only A1(3) is available")
    base = Path(base_dir)
    params, source = _load_params(raw.get("params", "table1"), base)
    tau = raw.get("maturities", list(DEFAULT_MATURITIES))
    try:
        tau = tuple(float(t) for t in tau)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"maturities must be numbers: {exc}") from exc
    if not tau or any(t <= 0 for t in tau) or any(b <= a for a, b in zip(tau, tau[1:])):
        raise ConfigError("maturities must be positive and strictly increasing")
    units = raw.get("units")
    if units is not None and units not in UNITS:
        raise ConfigError(f"units must be one of {UNITS}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    for key in ("sampler", "simulate", "sweep"):
        if not isinstance(raw.get(key, {}), dict):
            raise ConfigError(f"{key} must be an object")
    cfg = RunConfig(
        params=params,
        params_source=source,
        maturities=tau,
        selector=str(raw.get("selector", "default27")),
        preset=str(raw.get("preset", "desk")),
        sampler=dict(raw.get("sampler", {})),
        simulate=dict(raw.get("simulate", {})),
        data=raw.get("data"),
        units=units,
        out=str(raw.get("out", ".")),
        seed=seed,
        sweep=dict(raw.get("sweep", {})),
        base_dir=str(base),
    )
    cfg.sampler_config()
    cfg.sim_config()
    cfg.moment_selector()
    return cfg


def _load_params(spec: Any, base: Path) -> tuple[ParamVector, str]:
    if isinstance(spec, dict):
        text = "".join(f"{k}={v}\n" for k, v in spec.items())
        return ParamVector.from_text(text), "inline"
    if not isinstance(spec, str):
        raise ConfigError("params must be a preset name, a file path or an object")
    if spec in PARAM_PRESETS:
        return PARAM_PRESETS[spec](), spec
    path = Path(spec) if Path(spec).is_absolute() else base / spec
    if not path.is_file():
        raise ConfigError(f"parameter file {path} does not exist (presets: {', '.join(PARAM_PRESETS)})")
    return ParamVector.from_text(path.read_text(encoding="utf-8")), str(spec)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return min(n, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Pipeline pieces shared by the subcommands
# ---------------------------------------------------------------------------


def _provenance(cfg: RunConfig, **extra) -> dict:
    out = {"config_hash": cfg.config_hash(), "seed": cfg.seed}
    out.update(extra)
    return out


def _check_params(p: ParamVector) -> None:
    rep = check_admissibility(p)
    rep.extend(check_stationarity(p))
    if not rep:
        raise ConfigError("parameters violate model constraints:\n" + rep.summary())


def load_panel(cfg: RunConfig) -> YieldPanel:
    path = cfg.resolve(cfg.data)
    if path is None:
        raise ConfigError("no data file configured")
    meta = read_metadata(path)
    units = cfg.units or meta.get("units")
    if units is None:
        raise ConfigError("the yield units of the data are unknown; set \"units\" in the config")
    if meta.get("units") not in (None, units):
        raise DataError(f"{path} declares units {meta['units']!r} but the config says {units!r}")
    return read_panel_csv(path, cfg.maturities)


def simulate_to(cfg: RunConfig, out: Path, seed: int | None = None) -> tuple[Path, YieldPanel]:
    _check_params(cfg.params)
    sim = cfg.sim_config(seed)
    panel = simulate_panel(cfg.params, cfg.maturities, sim)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "panel.csv"
    prov = _provenance(cfg, seed=sim.seed, T=sim.T, substeps=sim.substeps, burnin=sim.burnin)
    write_panel_csv(csv_path, panel, {"provenance": prov, "truth": cfg.params.to_dict()}, units="level")
    header = "".join(f"# {k}={v}\n" for k, v in sorted(prov.items()))
    (out / "truth.txt").write_text(header + cfg.params.to_text(), encoding="utf-8")
    return csv_path, panel


@dataclass(frozen=True)
class TestBlock:
    restriction: str
    convention: str
    df: int
    statistic: float | None
    p_value: float | None
    estimate: tuple[float, ...]
    note: str = ""

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def contrast_test(est: ChainEstimate, restriction: str, convention: str) -> TestBlock:
    n = len(est.mean)
    R = {"theta": theta_restriction, "beta": beta_restriction}[restriction](n)
    r = tuple(float(v) for v in R @ est.mean)
    try:
        res = est.contrast(R, convention)
    except (NumericalFailure, InvalidArgument) as exc:
        return TestBlock(restriction, convention, R.shape[0], None, None, r, f"not available: {exc}")
    return TestBlock(restriction, convention, res.wald.df, res.wald.statistic, res.wald.p_value, r)


@dataclass(frozen=True)
class ResultReport:
    names: tuple[str, ...]
    estimate: tuple[float, ...]
    sd: tuple[float, ...]
    mcse: tuple[float, ...]
    truth: tuple[float, ...] | None
    tests: tuple[TestBlock, ...]
    diagnostics: dict
    provenance: dict

    def as_dict(self) -> dict:
        return {
            "parameters": [
                {"name": n, "estimate": e, "sd": s, "mcse": m, **({"truth": t} if self.truth else {})}
                for n, e, s, m, t in zip(self.names, self.estimate, self.sd, self.mcse,
                                         self.truth or [None] * len(self.names))
            ],
            "tests": [t.as_dict() for t in self.tests],
            "diagnostics": self.diagnostics,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def to_text(self) -> str:
        lines = [f"# config_hash={self.provenance['config_hash']} seed={self.provenance['seed']}", ""]
        head = f"{'parameter':<11}{'estimate':>13}{'sd':>12}{'mcse':>12}"
        if self.truth:
            head += f"{'truth':>12}"
        lines += [head, "-" * len(head)]
        for i, n in enumerate(self.names):
            row = f"{n:<11}{self.estimate[i]:>13.6g}{self.sd[i]:>12.4g}{self.mcse[i]:>12.4g}"
            if self.truth:
                row += f"{self.truth[i]:>12.6g}"
            lines.append(row)
        lines += ["", "Wald tests"]
        for t in self.tests:
            if t.statistic is None:
                lines.append(f"  {t.restriction:<6} [{t.convention}] df={t.df}: {t.note}")
            else:
                lines.append(f"  {t.restriction:<6} [{t.convention}] df={t.df}: W = {t.statistic:.6g}, "
                             f"p = {t.p_value:.4g}")
        d = self.diagnostics
        lines += ["", "Chain diagnostics",
                  f"  draws kept        {d['n_kept']}",
                  f"  block acceptance  {', '.join(f'{a:.3f}' for a in d['block_acceptance'])}",
                  f"  s1 occupancy      {d['s1_occupancy']:.4f}",
                  f"  jump moves        {d['jump_moves']}",
                  f"  multistart        {d['n_feasible_starts']} feasible, best Q_T {d['start_q_identity']:.6g}",
                  f"  final Q_T         {d['final_q']:.6g}",
                  f"  weight ridged     {d['weight_ridged']}"]
        return "\n".join(lines) + "\n"


def build_report(result, target: GmmTarget, cfg: RunConfig, scfg: SamplerConfig,
                 truth: ParamVector | None) -> ResultReport:
    est = result.estimate
    tests = []
    for restriction in ("theta", "beta"):
        tests.append(contrast_test(est, restriction, scfg.wald_convention))
        other = [c for c in WALD_CONVENTIONS if c != scfg.wald_convention][0]
        tests.append(contrast_test(est, restriction, other))
    tr = result.trace
    diag = {
        "n_kept": est.n,
        "block_acceptance": [float(a) for a in tr.acceptance_rates],
        "s1_occupancy": est.s1_occupancy,
        "jump_moves": {k: int(v) for k, v in sorted(tr.rj_counts.items())},
        "n_feasible_starts": result.start.n_feasible,
        "start_q_identity": result.start.q_identity,
        "final_q": float(tr.q[-1]),
        "weight_ridged": bool(target.weight_ridged),
    }
    return ResultReport(
        est.names, tuple(map(float, est.mean)), tuple(map(float, est.sd)), tuple(map(float, est.mcse)),
        None if truth is None else tuple(map(float, truth.to_array())), tuple(tests), diag,
        _provenance(cfg, data=cfg.data, params_source=cfg.params_source),
    )


def estimate_panel(cfg: RunConfig, panel: YieldPanel, scfg: SamplerConfig):
    sel = cfg.moment_selector()
    ctx = sample_moments(panel, sel)
    n_params = 24 if cfg.params.sigma4eps is not None else 23
    model = MomentModel(panel.maturities, sel)
    target = GmmTarget(ctx, model, Theta0Bounds(), n_params)
    return run_estimation(target, cfg.params, scfg), target


# ---------------------------------------------------------------------------
# Replication sweeps
# ---------------------------------------------------------------------------


def sweep_replication(cfg: RunConfig, scfg: SamplerConfig, rep: int, base_seed: int) -> dict:
    """Simulate one panel and estimate on it; returns the per-replication row."""
    data_seed, chain_seed = np.random.SeedSequence([base_seed, rep]).generate_state(2)
    panel = simulate_panel(cfg.params, cfg.maturities, cfg.sim_config(int(data_seed)))
    sc = dataclasses.replace(scfg, seed=int(chain_seed))
    row: dict[str, Any] = {"rep": rep, "data_seed": int(data_seed), "chain_seed": int(chain_seed)}
    try:
        result, _ = estimate_panel(cfg, panel, sc)
    except NumericalFailure as exc:
        row["error"] = str(exc)
        return row
    est = result.estimate
    row.update({
        "thetaQ_hat": float(est.mean[0]), "thetaP_hat": float(est.mean[1]),
        "s1_occupancy": est.s1_occupancy, "start_tied": bool(result.start.start[0] == result.start.start[1]),
    })
    for conv in WALD_CONVENTIONS:
        t = contrast_test(est, "theta", conv)
        # A chain that never leaves the tied state has a zero contrast: W = 0.
        row[f"W_{conv}"] = t.statistic
        row[f"p_{conv}"] = t.p_value
    return row


def run_sweep(cfg: RunConfig, scfg: SamplerConfig, L: int, base_seed: int, n_jobs: int = 1) -> list[dict]:
    if n_jobs > 1:
        from joblib import Parallel, delayed

        return list(Parallel(n_jobs=n_jobs)(delayed(sweep_replication)(cfg, scfg, l, base_seed) for l in range(L)))
    rows = []
    for l in range(L):
        rows.append(sweep_replication(cfg, scfg, l, base_seed))
        logger.info("replication %d/%d done", l + 1, L)
    return rows


def rejection_rates(rows: Sequence[dict], alphas: Sequence[float], convention: str) -> dict[float, float]:
    """Share of replications with ``p < alpha``; failed replications count as non-rejections."""
    ps = [r.get(f"p_{convention}") for r in rows]
    n = len(ps)
    return {a: sum(1 for p in ps if p is not None and p < a) / n for a in alphas}


# ---------------------------------------------------------------------------
# click commands
# ---------------------------------------------------------------------------


def _setup(config: str | None, seed: int | None, out: str | None, preset: str | None,
           selector: str | None) -> tuple[RunConfig, Path]:
    cfg = load_config(config)
    cfg = cfg.with_overrides(seed=seed, preset=preset, selector=selector)
    cfg.sampler_config()
    cfg.moment_selector()
    out_dir = Path(out) if out is not None else cfg.resolve(cfg.out)
    return cfg, out_dir


def common_options(f):
    f = click.option("--selector", default=None, help="Selector file or 'default27'.")(f)
    f = click.option("--preset", type=click.Choice(["desk", "paper"]), default=None, help="Sampler profile.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--seed", type=click.IntRange(min=0), default=None, help="Random seed (overrides config).")(f)
    f = click.option("--config", type=click.Path(dir_okay=False), default=None, help="JSON run config.")(f)
    return f


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
def main(verbose: int) -> None:
    """Moment-based estimation and testing for affine term-structure models."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


@main.command()
@common_options
def simulate(config, seed, out, preset, selector) -> None:
    """Simulate a yield panel and record the generating parameters."""
    cfg, out_dir = _setup(config, seed, out, preset, selector)
    path, panel = simulate_to(cfg, out_dir)
    click.echo(f"wrote {path} ({panel.T} dates x {panel.M} maturities) and {out_dir / 'truth.txt'}")


@main.command()
@common_options
@click.option("--all", "show_all", is_flag=True, help="List the full catalogue, not only the selected moments.")
def moments(config, seed, out, preset, selector, show_all) -> None:
    """Print model moments, with sample moments when data are configured."""
    cfg, _ = _setup(config, seed, out, preset, selector)
    p = cfg.params
    _check_params(p)
    sel = cfg.moment_selector()
    tau = np.asarray(cfg.maturities)
    model = MomentModel(tau, sel)
    chosen = set(sel.labels)
    sample = None
    if cfg.data is not None:
        sample = dict(zip(sel.labels, sample_moments(load_panel(cfg), sel).m_T))
    click.echo(f"# config_hash={cfg.config_hash()} seed={cfg.seed}")
    if show_all:
        noise = NoiseSpec(p.sigma2eps, p.sigma4eps if p.sigma4eps is not None else 3 * p.sigma2eps**2)
        from .polyproc import build_generator, enumerate_basis, stationary_state_moments

        gen = build_generator(p.diffusion_spec("P"), enumerate_basis(3, 4))
        cat = moment_catalogue(model.loadings(p), gen, stationary_state_moments(gen), noise, p=4)
        rows = list(zip(cat.labels, cat.values))
        if p.sigma4eps is None:
            click.echo("# fourth noise moment taken as Gaussian: 3 sigma2eps^2")
    else:
        rows = list(zip(sel.labels, model.mu(p)))
    click.echo(f"{'':2}{'moment':<18}{'model':>16}" + (f"{'sample':>16}" if sample else ""))
    for label, v in rows:
        flag = "*" if label in chosen else " "
        line = f"{flag:2}{label:<18}{v:>16.8g}"
        if sample:
            line += f"{sample[label]:>16.8g}" if label in sample else f"{'':>16}"
        click.echo(line)


@main.command("estimate")
@common_options
def estimate_cmd(config, seed, out, preset, selector) -> None:
    """Multistart search, quasi-Bayesian chain and Wald tests on a data panel."""
    cfg, out_dir = _setup(config, seed, out, preset, selector)
    scfg = cfg.sampler_config()
    panel = load_panel(cfg)
    meta = read_metadata(cfg.resolve(cfg.data))
    truth = None
    if "truth" in meta:
        truth = ParamVector.from_text("".join(f"{k}={v}\n" for k, v in meta["truth"].items()))
    result, target = estimate_panel(cfg, panel, scfg)
    report = build_report(result, target, cfg, scfg, truth)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    result.trace.to_csv(out_dir / "trace.csv", _provenance(cfg))
    click.echo(report.to_text(), nl=False)


@main.command("test")
@common_options
@click.option("--restriction", type=click.Choice(["theta", "beta"]), default="theta", show_default=True)
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None,
              help="Trace CSV (default: <out>/trace.csv).")
@click.option("--convention", type=click.Choice(WALD_CONVENTIONS), default=None,
              help="Covariance used in the Wald statistic (default: sampler config).")
def test_cmd(config, seed, out, preset, selector, restriction, trace_path, convention) -> None:
    """Wald test of equal P and Q drift parameters from a stored chain."""
    cfg, out_dir = _setup(config, seed, out, preset, selector)
    path = Path(trace_path) if trace_path else out_dir / "trace.csv"
    if not path.is_file():
        raise DataError(f"trace file {path} does not exist; run estimate first")
    try:
        trace = ChainTrace.from_csv(path)
    except (InvalidArgument, ValueError, IndexError) as exc:
        raise DataError(f"cannot read trace {path}: {exc}") from exc
    est = estimate(trace)
    conv = convention or cfg.sampler_config().wald_convention
    t = contrast_test(est, restriction, conv)
    if t.statistic is None:
        raise NumericalFailure(t.note)
    click.echo(f"restriction {restriction}: df={t.df} W={t.statistic:.6g} p={t.p_value:.6g} [{conv}]")
    click.echo("contrast estimate: " + " ".join(f"{v:.6g}" for v in t.estimate))


@main.command()
@common_options
@click.option("--replications", "-L", type=click.IntRange(min=1), default=None, help="Number of replications.")
def sweep(config, seed, out, preset, selector, replications) -> None:
    """Repeat simulate-and-estimate and tabulate Wald rejection rates for thetaQ = thetaP."""
    cfg, out_dir = _setup(config, seed, out, preset, selector)
    scfg = cfg.sampler_config()
    L = replications or int(cfg.sweep.get("replications", 50))
    alphas = tuple(float(a) for a in cfg.sweep.get("alphas", (0.01, 0.05, 0.10)))
    _check_params(cfg.params)
    rows = run_sweep(cfg, scfg, L, cfg.seed, worker_count())
    out_dir.mkdir(parents=True, exist_ok=True)
    keys = ["rep", "data_seed", "chain_seed", "thetaQ_hat", "thetaP_hat", "s1_occupancy", "start_tied",
            *(f"{s}_{c}" for c in WALD_CONVENTIONS for s in ("W", "p")), "error"]
    with (out_dir / "sweep.csv").open("w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg.config_hash()}\n# seed={cfg.seed}\n")
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join("" if r.get(k) is None else str(r.get(k)) for k in keys) + "\n")
    click.echo(f"# config_hash={cfg.config_hash()} seed={cfg.seed} replications={L}")
    for conv in WALD_CONVENTIONS:
        rates = rejection_rates(rows, alphas, conv)
        click.echo(f"{conv:<12}" + "  ".join(f"alpha={a:g}: {r:.4f}" for a, r in rates.items()))


def run(argv: Sequence[str] | None = None) -> int:
    """Entry point mapping package errors to exit codes."""
    try:
        code = main.main(args=argv, prog_name="affine-gmm", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2
    except AffineGmmError as exc:
        click.echo(f"error ({type(exc).__name__}): {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"error (I/O): {exc}", err=True)
        return 3
    return code if isinstance(code, int) else 0


def entry() -> None:
    sys.exit(run())
