"""Command-line runner: config-driven runs, canned figure data, validation.

Config files are INI with a single ``[run]`` section::

    [run]
    dims = 8            ; "16" or "4x4"
    boundary = periodic ; periodic | open
    initial = thermal   ; staggered | thermal
    t = 1.0
    V = 10.0
    beta = 1.0
    channel_set = nn_quadratic
    mu = 1.0
    tau_start = 0
    tau_stop = 2
    tau_count = 21
    tau_spacing = linear ; linear | log
    observables = staggered_susceptibility, structure_factor(2)
    method = both       ; oracle | closure | both
    output = fig1
    tolerance = 1e-10
    integrator = adaptive ; adaptive | fixed
    step = 1e-3

Relative ``output`` paths resolve under ``$DISSFERMI_OUTPUT_ROOT`` (default
``./runs``).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, closure, validation
from .channels import CHANNEL_SETS, NN_LINEAR, NN_QUADRATIC, SINGLE_SITE_LINEAR, ChannelError, build_channel_set
from .fock import StateError
from .lattice import OPEN, PERIODIC, GeometryError, build_lattice
from .master import FIXED, ADAPTIVE, MAX_ORACLE_SITES, EvolutionConfig, IntegrationError, observable_series
from .model import ModelParams, staggered_mask, staggered_state, thermal_tv_state
from .observables import (
    CHI_S,
    O,
    ONE_POINT,
    TWO_POINT,
    ObservableError,
    SiteCorrelations,
    parse_kind,
    structure_factor,
    to_coefficients,
)

logger = logging.getLogger("dissfermi")

OUTPUT_ROOT_ENV = "DISSFERMI_OUTPUT_ROOT"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

ORACLE, CLOSURE, BOTH = "oracle", "closure", "both"
STAGGERED, THERMAL = "staggered", "thermal"
# dense t-V diagonalization for thermal initial states
MAX_THERMAL_SITES = 12


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in str(text).lower().replace(",", "x").split("x") if p.strip())
    except ValueError:
        raise ConfigError(f"cannot parse lattice dims {text!r}") from None
    if not dims:
        raise ConfigError("empty lattice dims")
    return dims


@dataclass
class RunConfig:
    dims: tuple[int, ...]
    channel_set: str
    boundary: str = PERIODIC
    initial: str = STAGGERED
    t: float = 1.0
    V: float = 10.0
    beta: float = 1.0
    mu: float = 1.0
    tau_start: float = 0.0
    tau_stop: float = 2.0
    tau_count: int = 21
    tau_spacing: str = "linear"
    observables: tuple[str, ...] = ("staggered_susceptibility",)
    method: str = CLOSURE
    output: str = "run"
    tolerance: float = 1e-10
    integrator: str = ADAPTIVE
    step: float = 1e-3

    def validate(self):
        try:
            lat = build_lattice(self.dims, self.boundary)
            kinds = [parse_kind(o) for o in self.observables]
            for k in kinds:
                if k.q is not None:
                    k.momentum(lat)
            ModelParams(self.t, self.V, self.beta)
        except (GeometryError, ObservableError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.channel_set not in CHANNEL_SETS:
            raise ConfigError(f"unknown channel_set {self.channel_set!r}; choose from {', '.join(CHANNEL_SETS)}")
        if self.method not in (ORACLE, CLOSURE, BOTH):
            raise ConfigError(f"method must be oracle, closure or both, got {self.method!r}")
        if self.method in (ORACLE, BOTH) and lat.N > MAX_ORACLE_SITES:
            raise ConfigError(f"method={self.method} needs N <= {MAX_ORACLE_SITES}, lattice has {lat.N}")
        if self.initial not in (STAGGERED, THERMAL):
            raise ConfigError(f"initial must be staggered or thermal, got {self.initial!r}")
        if self.initial == THERMAL and lat.N > MAX_THERMAL_SITES:
            raise ConfigError(f"thermal initial states need N <= {MAX_THERMAL_SITES}")
        if self.integrator not in (ADAPTIVE, FIXED):
            raise ConfigError(f"integrator must be adaptive or fixed, got {self.integrator!r}")
        if not np.isfinite(self.mu) or self.mu <= 0:
            raise ConfigError("mu must be positive")
        if not kinds:
            raise ConfigError("no observables requested")
        try:
            cfg = EvolutionConfig(self.tau_grid(), self.tolerance, method=self.integrator, step=self.step)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return lat, kinds, cfg

    def tau_grid(self) -> tuple[float, ...]:
        if self.tau_count < 1:
            raise ConfigError("tau_count must be >= 1")
        if self.tau_spacing == "linear":
            return tuple(np.linspace(self.tau_start, self.tau_stop, self.tau_count))
        if self.tau_spacing == "log":
            if self.tau_start <= 0:
                raise ConfigError("log spacing needs tau_start > 0")
            return tuple(np.geomspace(self.tau_start, self.tau_stop, self.tau_count))
        raise ConfigError(f"tau_spacing must be linear or log, got {self.tau_spacing!r}")

    def echo(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["observables"] = list(self.observables)
        return d


_FLOATS = ("t", "V", "beta", "mu", "tau_start", "tau_stop", "tolerance", "step")


def load_config(path: str | Path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        if not parser.read(path):
            raise ConfigError(f"cannot read config {path}")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if "run" not in parser:
        raise ConfigError("config needs a [run] section")
    return config_from_mapping(dict(parser["run"]))


def config_from_mapping(raw: dict) -> RunConfig:
    raw = {k.strip(): str(v).strip() for k, v in raw.items()}
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("dims", "channel_set"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    kw: dict = {"dims": parse_dims(raw.pop("dims"))}
    try:
        for k in _FLOATS:
            if k in raw:
                kw[k] = float(raw.pop(k))
        if "tau_count" in raw:
            kw["tau_count"] = int(raw.pop("tau_count"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "observables" in raw:
        kw["observables"] = tuple(_split_observables(raw.pop("observables")))
    kw.update(raw)
    return RunConfig(**kw)


def _split_observables(text: str) -> list[str]:
    # commas separate names, except inside parentheses
    out, depth, cur = [], 0, ""
    for ch in text:
        depth += ch == "("
        depth -= ch == ")"
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


# -- run --------------------------------------------------------------------------------


def _initial(cfg: RunConfig, lat):
    if cfg.initial == STAGGERED:
        return staggered_state(lat) if lat.N <= MAX_THERMAL_SITES else None
    return thermal_tv_state(lat, ModelParams(cfg.t, cfg.V, cfg.beta))


def _series_rows(tau, kind, value: complex, method: str) -> list[list[str]]:
    rows = [[_fmt(tau), str(kind), _fmt(value.real), method]]
    if not kind.hermitian:
        rows.append([_fmt(tau), f"{kind}#im", _fmt(value.imag), method])
    return rows


def _spectrum(gen, lat) -> list[list[str]]:
    basis = closure.eigen_basis(gen)
    target = to_coefficients(lat, CHI_S if gen.sector == TWO_POINT else O).values
    overlap = np.abs(basis.vectors.T @ target) / np.linalg.norm(target)
    order = np.argsort(basis.rates, kind="stable")
    return [[str(i), _fmt(basis.insertion_eigenvalues[j]), _fmt(basis.rates[j]), _fmt(overlap[j])]
            for i, j in enumerate(order)]


def _write_csv(path: Path, header: Sequence[str], rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def resolve_output(name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else output_root() / p


def execute(cfg: RunConfig, out_dir: Optional[Path] = None) -> dict:
    """Run one configuration and write its artifacts; returns the manifest.

    Raises ConfigError or NumericalFailure; the manifest is written either way
    once the configuration parsed.
    """
    t0 = time.perf_counter()
    lat, kinds, ecfg = cfg.validate()
    out_dir = resolve_output(cfg.output) if out_dir is None else Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"version": __version__, "config": cfg.echo(), "lattice": lat.label(), "status": "running"}
    try:
        cs = build_channel_set(cfg.channel_set, lat, cfg.mu)
        manifest["normalization_deviation"] = cs.normalization_deviation
        rows: list[list[str]] = []
        rho0 = _initial(cfg, lat)
        if cfg.method in (ORACLE, BOTH):
            for r in observable_series(cs, rho0, kinds, ecfg):
                rows += _series_rows(r.tau, parse_kind(r.observable), r.value, ORACLE)
        if cfg.method in (CLOSURE, BOTH):
            corr = (SiteCorrelations.from_mask(lat.N, staggered_mask(lat)) if rho0 is None
                    else SiteCorrelations.from_density(rho0))
            gens = {}
            for sector in {k.sector for k in kinds}:
                gen = closure.build_generator(cs, sector=sector)
                gens[sector] = gen
                manifest.setdefault("closure_residuals", {})[sector] = gen.residual
                if not gen.closed:
                    raise NumericalFailure(
                        f"{cfg.channel_set} does not close in the {sector} sector (residual {gen.residual:.3e})")
            bases = {s: closure.eigen_basis(g) for s, g in gens.items()}
            for kind in kinds:
                vals = closure.coefficient_series(gens[kind.sector], kind, corr, ecfg.tau_grid, bases[kind.sector])
                for tau, v in zip(ecfg.tau_grid, vals):
                    rows += _series_rows(tau, kind, complex(v), CLOSURE)
            spec_sector = TWO_POINT if TWO_POINT in gens else ONE_POINT
            _write_csv(out_dir / "spectrum.csv", ["index", "lambda_paper", "rate", "staggered_overlap"],
                       _spectrum(gens[spec_sector], lat))
            manifest["spectrum_sector"] = spec_sector
        _write_csv(out_dir / "series.csv", ["tau", "observable", "value", "method"], rows)
        manifest["status"] = "ok"
    except (IntegrationError, closure.ClosureError, StateError, np.linalg.LinAlgError, NumericalFailure) as exc:
        manifest["status"] = "numerical_failure"
        manifest["diagnostics"] = {"error": type(exc).__name__, "message": str(exc),
                                   "tau_reached": getattr(exc, "tau_reached", None)}
        raise NumericalFailure(str(exc)) from exc
    except ChannelError as exc:
        manifest["status"] = "config_error"
        manifest["diagnostics"] = {"error": type(exc).__name__, "message": str(exc)}
        raise ConfigError(str(exc)) from exc
    finally:
        manifest["wall_time_s"] = time.perf_counter() - t0
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, default=_json_default)
    return manifest


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o).__name__}")


# -- figures ----------------------------------------------------------------------------


DEFAULT_BETAS = {"1": (0.1, 1.0, 10.0), "3": (10.0,)}


def figure_configs(fig_id: str, base: str, betas: Optional[Sequence[float]] = None) -> dict[str, RunConfig]:
    """Canned run configurations for the time-series figures."""
    betas = DEFAULT_BETAS.get(fig_id, ()) if betas is None else tuple(betas)
    if fig_id == "1":
        return {f"beta_{b:g}": RunConfig((8,), NN_QUADRATIC, initial=THERMAL, beta=b, method=BOTH,
                                         output=f"{base}/beta_{b:g}", tau_stop=2.0, tau_count=41)
                for b in betas}
    if fig_id == "3":
        if len(betas) != 1:
            raise ConfigError("figure 3 takes a single beta")
        obs = tuple(str(structure_factor(q)) for q in range(5))
        return {"structure": RunConfig((8,), NN_QUADRATIC, initial=THERMAL, beta=betas[0], method=BOTH,
                                       observables=obs, output=f"{base}/structure", tau_stop=2.0, tau_count=41)}
    if fig_id == "4":
        out = {}
        for dims in ((16,), (4, 4)):
            tag = "x".join(map(str, dims))
            for name in (SINGLE_SITE_LINEAR, NN_LINEAR, NN_QUADRATIC):
                out[f"{tag}_{name}"] = RunConfig(dims, name, method=CLOSURE, output=f"{base}/{tag}_{name}",
                                                 tau_stop=1.5, tau_count=31)
        return out
    raise ConfigError(f"figure {fig_id!r} has no run configuration")


FIGURES = ("1", "2a", "2b", "3", "4")


def _run_one(item):
    key, cfg = item
    return key, execute(cfg)["status"]


def run_figure(fig_id: str, jobs: int = 1, betas: Optional[Sequence[float]] = None) -> Path:
    if fig_id not in FIGURES:
        raise ConfigError(f"unknown figure {fig_id!r}; choose from {', '.join(FIGURES)}")
    base = f"figure_{fig_id}"
    out_dir = output_root() / base
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    manifest: dict = {"version": __version__, "figure": fig_id}
    if fig_id == "2a":
        rows = validation.dominant_rates()
        _write_csv(out_dir / "dominant_rate.csv", ["N", "rate"], [[str(n), _fmt(r)] for n, r in rows])
        manifest["rows"] = len(rows)
    elif fig_id == "2b":
        rows = validation.steady_fractions()
        _write_csv(out_dir / "chi0_over_N.csv", ["N", "chi0_over_N"], [[str(n), _fmt(r)] for n, r in rows])
        manifest["rows"] = len(rows)
    else:
        cfgs = figure_configs(fig_id, base, betas)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                manifest["panels"] = dict(pool.map(_run_one, cfgs.items()))
        else:
            manifest["panels"] = dict(map(_run_one, cfgs.items()))
        if fig_id == "3":
            rates = validation.structure_factor_rates(cfgs["structure"].beta)
            _write_csv(out_dir / "rates.csv", ["q", "one_minus_cos", "operator_rate", "series_rate"],
                       [[str(r["q"]), _fmt(r["one_minus_cos"]), _fmt(r["operator_rate"]), _fmt(r["series_rate"])]
                        for r in rates])
    manifest["wall_time_s"] = time.perf_counter() - t0
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return out_dir


# -- entry point ------------------------------------------------------------------------


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = execute(cfg, Path(args.output) if args.output else None)
    print(f"{out['status']}: {resolve_output(cfg.output) if not args.output else args.output}")
    return EXIT_OK


def _cmd_figure(args) -> int:
    print(run_figure(args.fig_id, args.jobs, args.beta))
    return EXIT_OK


def _cmd_validate(args) -> int:
    results = validation.run_all(args.only, echo=print)
    rep = validation.report(results, diagnostics=not args.no_diagnostics)
    text = json.dumps(rep, indent=2, default=_json_default)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text, encoding="utf-8")
    elif args.json:
        print(text)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def _cmd_normcheck(args) -> int:
    try:
        lat = build_lattice(parse_dims(args.dims), args.boundary)
        cs = build_channel_set(args.set, lat, args.mu)
    except (GeometryError, ChannelError) as exc:
        raise ConfigError(str(exc)) from None
    dev = cs.normalization_deviation
    print(json.dumps({"set": args.set, "lattice": lat.label(), "mu": args.mu, "label_count": cs.label_count,
                      "deviation": dev, "normalized": cs.normalized}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dissfermi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an INI configuration")
    r.add_argument("config")
    r.add_argument("--output", help="write into this directory instead of the configured one")
    r.set_defaults(func=_cmd_run)

    f = sub.add_parser("figure", help="regenerate canned figure data")
    f.add_argument("fig_id", choices=FIGURES)
    f.add_argument("--jobs", type=int, default=1, help="panels run in parallel processes")
    f.add_argument("--beta", type=float, nargs="+", help="inverse temperatures for figures 1 and 3")
    f.set_defaults(func=_cmd_figure)

    v = sub.add_parser("validate", help="run the acceptance checks")
    v.add_argument("--only", type=int, nargs="+", choices=sorted(validation.CRITERIA), metavar="N")
    v.add_argument("--report", help="write the JSON report here")
    v.add_argument("--json", action="store_true", help="print the JSON report")
    v.add_argument("--no-diagnostics", action="store_true", help="skip the residual table")
    v.set_defaults(func=_cmd_validate)

    n = sub.add_parser("normcheck", help="deviation of sum L^dag L from mu^2 times label count")
    n.add_argument("set", choices=CHANNEL_SETS)
    n.add_argument("dims", help='e.g. "6" or "2x4"')
    n.add_argument("--boundary", default=PERIODIC, choices=(PERIODIC, OPEN))
    n.add_argument("--mu", type=float, default=1.0)
    n.set_defaults(func=_cmd_normcheck)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
