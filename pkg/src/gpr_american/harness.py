"""Configuration, dispatch, suites and the command-line entry point.

A configuration is a flat ``key = value`` text file (``#`` starts a comment).
In suite files a value written as ``[a, b, c]`` is a sweep: the file expands
into the cartesian product of all its sweeps, in key order.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bs_model import MAX_EKVALL_DIM, MAX_TREE_DIM, BsParams, Payoff, ekvall_tree_price, geometric_benchmark
from .errors import ConfigInvalid, PricingError
from .gpr_ei_bs import price_gpr_ei_bs
from .gpr_tree_bs import price_gpr_tree_bs
from .rbergomi import RbParams
from .rbergomi_pricers import MAX_TREE_BLOCK, RbPriceConfig, price_rb_gpr_ei, price_rb_gpr_tree
from .report import PriceReport

log = logging.getLogger(__name__)

THREADS_ENV = "GPR_AMERICAN_THREADS"
MODELS = ("bs", "rbergomi")
METHODS = ("gpr-tree", "gpr-ei", "crr-benchmark", "ekvall-benchmark")
PAYOFFS = ("geo-put", "ari-put", "call-max", "put")
CSV_COLUMNS = ["model", "method", "payoff", "d", "K", "N", "P", "m", "J", "seed", "price", "seconds", "error"]


@dataclass(frozen=True)
class PricingConfig:
    model: str = "bs"
    method: str = "gpr-ei"
    payoff: str = "geo-put"
    d: int = 2
    strike: float = 100.0
    maturity: float = 1.0
    rate: float = 0.05
    spot: float = 100.0
    vols: tuple = (0.2,)
    rho: float = 0.2
    corr_file: str | None = None
    n_steps: int = 10
    p_count: int = 1000
    tree_block: int = 2
    j: int = 0
    seed: int = 0
    halton_skip: int = 20
    benchmark_steps: int | None = None
    max_fit_points: int | None = 500
    hurst: float = 0.07
    rb_rho: float = -0.9
    xi0: float = 0.09
    eta: float = 1.9
    out: str | None = None

    def __post_init__(self):
        validate(self)

    def vol_vector(self) -> np.ndarray:
        v = np.asarray(self.vols, dtype=float)
        return np.full(self.d, v[0]) if v.size == 1 else v

    def corr_matrix(self) -> np.ndarray:
        if self.corr_file is not None:
            return np.loadtxt(self.corr_file, ndmin=2)
        c = np.full((self.d, self.d), float(self.rho))
        np.fill_diagonal(c, 1.0)
        return c


def validate(cfg: PricingConfig) -> None:
    """Raise ConfigInvalid naming the first violated rule."""
    if cfg.model not in MODELS:
        raise ConfigInvalid(f"unknown model {cfg.model!r}; expected one of {MODELS}")
    if cfg.method not in METHODS:
        raise ConfigInvalid(f"unknown method {cfg.method!r}; expected one of {METHODS}")
    if cfg.payoff not in PAYOFFS:
        raise ConfigInvalid(f"unknown payoff {cfg.payoff!r}; expected one of {PAYOFFS}")
    if cfg.model == "rbergomi":
        if cfg.payoff != "put":
            raise ConfigInvalid("the rbergomi model only prices the payoff 'put'")
        if cfg.method not in ("gpr-tree", "gpr-ei"):
            raise ConfigInvalid(f"method {cfg.method!r} is not available under rbergomi")
        if not 0.0 < cfg.hurst < 1.0:
            raise ConfigInvalid("hurst must lie in (0, 1)")
        if abs(cfg.rb_rho) > 1.0:
            raise ConfigInvalid("rb_rho must lie in [-1, 1]")
        if not cfg.xi0 > 0 or cfg.eta < 0:
            raise ConfigInvalid("xi0 must be positive and eta non-negative")
        if cfg.method == "gpr-tree":
            if cfg.tree_block < 1 or cfg.tree_block > MAX_TREE_BLOCK:
                raise ConfigInvalid(f"tree_block must lie in 1..{MAX_TREE_BLOCK}")
            if cfg.n_steps % cfg.tree_block:
                raise ConfigInvalid("tree_block must divide n_steps")
    else:
        if cfg.payoff == "put":
            raise ConfigInvalid("payoff 'put' is only available under rbergomi; use geo-put, ari-put or call-max")
        if cfg.method == "gpr-tree" and cfg.d > MAX_TREE_DIM:
            raise ConfigInvalid(f"gpr-tree under bs requires d <= {MAX_TREE_DIM}")
        if cfg.method == "crr-benchmark" and cfg.payoff != "geo-put":
            raise ConfigInvalid("crr-benchmark only prices the geometric basket put")
        if cfg.method == "ekvall-benchmark" and cfg.d > MAX_EKVALL_DIM:
            raise ConfigInvalid(f"ekvall-benchmark requires d <= {MAX_EKVALL_DIM}")
        vols = np.asarray(cfg.vols, dtype=float)
        if vols.size not in (1, cfg.d):
            raise ConfigInvalid(f"vols must hold 1 or d={cfg.d} values, got {vols.size}")
        if np.any(vols < 0):
            raise ConfigInvalid("vols must be non-negative")
        if abs(cfg.rho) > 1.0:
            raise ConfigInvalid("rho must lie in [-1, 1]")
        if cfg.corr_file is not None:
            _check_corr_file(cfg.corr_file, cfg.d)
    if cfg.d < 1:
        raise ConfigInvalid("d must be >= 1")
    if cfg.model == "rbergomi" and cfg.d != 1:
        raise ConfigInvalid("the rbergomi model has a single asset; set d = 1")
    if not cfg.strike > 0:
        raise ConfigInvalid("strike must be positive")
    if not cfg.maturity > 0:
        raise ConfigInvalid("maturity must be positive")
    if not cfg.spot > 0:
        raise ConfigInvalid("spot must be positive")
    if cfg.n_steps < 1:
        raise ConfigInvalid("n_steps must be >= 1")
    if cfg.p_count < 2:
        raise ConfigInvalid("p_count must be >= 2")
    if cfg.j < 0:
        raise ConfigInvalid("j must be >= 0")
    if cfg.halton_skip < 0:
        raise ConfigInvalid("halton_skip must be >= 0")


def _check_corr_file(path: str, d: int) -> None:
    try:
        c = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigInvalid(f"cannot read correlation matrix from {path}: {exc}") from None
    if c.shape != (d, d):
        raise ConfigInvalid(f"correlation matrix in {path} is {c.shape}, expected ({d}, {d})")
    if not np.allclose(c, c.T) or not np.allclose(np.diag(c), 1.0):
        raise ConfigInvalid(f"correlation matrix in {path} must be symmetric with unit diagonal")
    if np.linalg.eigvalsh(c).min() < -1e-10:
        raise ConfigInvalid(f"correlation matrix in {path} is not positive semidefinite")


_FIELDS = {f.name: f for f in dataclasses.fields(PricingConfig)}
_INT = {"d", "n_steps", "p_count", "tree_block", "j", "seed", "halton_skip", "benchmark_steps", "max_fit_points"}
_STR = {"model", "method", "payoff", "corr_file", "out"}


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key not in _FIELDS:
        raise ConfigInvalid(f"unknown configuration key {key!r}")
    if raw.lower() in ("none", "") and _FIELDS[key].default is None:
        return None
    try:
        if key in _STR:
            return raw
        if key in _INT:
            return int(raw)
        if key == "vols":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        return float(raw)
    except ValueError:
        raise ConfigInvalid(f"cannot parse {key} = {raw!r}") from None


def parse_pairs(lines, source: str = "<config>") -> dict:
    """Raw ``key -> value string`` mapping from config lines."""
    out = {}
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{source}:{no}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def config_from_pairs(pairs: dict, base_dir: Path | None = None) -> PricingConfig:
    values = {k: _convert(k, v) for k, v in pairs.items()}
    if base_dir is not None and values.get("corr_file"):
        path = Path(values["corr_file"])
        values["corr_file"] = str(path if path.is_absolute() else base_dir / path)
    if values.get("model") == "rbergomi":
        values.setdefault("d", 1)
        values.setdefault("payoff", "put")
    try:
        return PricingConfig(**values)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from None


def load_config(path, overrides=()) -> PricingConfig:
    """Read one config file and apply ``key=value`` overrides on top."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc}") from None
    pairs = parse_pairs(text.splitlines(), str(path))
    pairs.update(parse_pairs(overrides, "--override"))
    return config_from_pairs(pairs, path.parent)


def expand_sweeps(pairs: dict) -> list[dict]:
    keys = list(pairs)
    options = []
    for k in keys:
        v = pairs[k].strip()
        if v.startswith("[") and v.endswith("]"):
            items = [x.strip() for x in v[1:-1].split(",") if x.strip()]
            if not items:
                raise ConfigInvalid(f"empty sweep for {k}")
            options.append(items)
        else:
            options.append([v])
    return [dict(zip(keys, combo)) for combo in itertools.product(*options)]


def load_suite(config_dir) -> list[PricingConfig]:
    """Every ``*.cfg`` file in ``config_dir`` (sorted by name), sweeps expanded."""
    config_dir = Path(config_dir)
    files = sorted(config_dir.glob("*.cfg"))
    if not files:
        raise ConfigInvalid(f"no *.cfg files in {config_dir}")
    out = []
    for f in files:
        pairs = parse_pairs(f.read_text(encoding="utf-8").splitlines(), str(f))
        out.extend(config_from_pairs(p, f.parent) for p in expand_sweeps(pairs))
    return out


def bs_params(cfg: PricingConfig) -> BsParams:
    return BsParams(np.full(cfg.d, cfg.spot), cfg.rate, cfg.vol_vector(), cfg.corr_matrix())


def rb_params(cfg: PricingConfig) -> RbParams:
    return RbParams(cfg.spot, cfg.rate, cfg.xi0, cfg.eta, cfg.hurst, cfg.rb_rho)


def run(cfg: PricingConfig) -> PriceReport:
    """Price one configuration with the pricer it names."""
    validate(cfg)
    t0 = time.perf_counter()
    if cfg.model == "rbergomi":
        rcfg = RbPriceConfig(
            cfg.n_steps, cfg.p_count, cfg.strike, j=cfg.j, tree_block=cfg.tree_block,
            seed=cfg.seed, maturity=cfg.maturity, max_fit_points=cfg.max_fit_points,
        )
        pricer = price_rb_gpr_tree if cfg.method == "gpr-tree" else price_rb_gpr_ei
        report = pricer(rb_params(cfg), rcfg)
    else:
        params = bs_params(cfg)
        payoff = Payoff(cfg.payoff, cfg.strike)
        if cfg.method == "gpr-tree":
            report = price_gpr_tree_bs(
                params, payoff, cfg.maturity, cfg.n_steps, cfg.p_count, cfg.halton_skip, cfg.max_fit_points
            )
        elif cfg.method == "gpr-ei":
            report = price_gpr_ei_bs(
                params, payoff, cfg.maturity, cfg.n_steps, cfg.p_count, cfg.halton_skip, cfg.max_fit_points
            )
        elif cfg.method == "crr-benchmark":
            steps = cfg.benchmark_steps or 1000
            price = geometric_benchmark(params, cfg.strike, cfg.maturity, steps)
            report = PriceReport("crr-benchmark", price, time.perf_counter() - t0)
        else:
            steps = cfg.benchmark_steps or 200
            price = ekvall_tree_price(params, payoff, cfg.maturity, steps)
            report = PriceReport("ekvall-benchmark", price, time.perf_counter() - t0)
    report.config = dataclasses.asdict(cfg)
    if not np.isfinite(report.price):
        raise PricingError("pricer returned a non-finite price")
    return report


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


def _row(cfg: PricingConfig, report: PriceReport | None, error: str = "") -> dict:
    return {
        "model": cfg.model,
        "method": cfg.method,
        "payoff": cfg.payoff,
        "d": cfg.d,
        "K": f"{cfg.strike:g}",
        "N": cfg.n_steps,
        "P": cfg.p_count,
        "m": cfg.tree_block,
        "J": cfg.j,
        "seed": cfg.seed,
        "price": "" if report is None else f"{report.price:.4f}",
        "seconds": "" if report is None else f"{report.wall_time:.1f}",
        "error": error,
    }


def _safe_run(cfg: PricingConfig) -> dict:
    try:
        return _row(cfg, run(cfg))
    except (PricingError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("%s/%s failed: %s", cfg.model, cfg.method, exc)
        return _row(cfg, None, f"{type(exc).__name__}: {exc}")


def run_suite(configs, repeat: int = 1, threads: int | None = None) -> list[dict]:
    """One row per (config, repetition), in input order; failures do not stop the suite."""
    configs = list(configs)
    if not configs:
        raise ConfigInvalid("a suite needs at least one configuration")
    if repeat < 1:
        raise ConfigInvalid("repeat must be >= 1")
    jobs = [c for c in configs for _ in range(repeat)]
    workers = min(len(jobs), threads or thread_count())
    if workers <= 1:
        return [_safe_run(c) for c in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_safe_run, jobs))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def _print_rows(rows) -> None:
    for r in rows:
        tail = f"ERROR {r['error']}" if r["error"] else f"{r['price']:>10}  {r['seconds']:>7}s"
        print(f"{r['model']:<9}{r['method']:<17}{r['payoff']:<9}d={r['d']:<4}K={r['K']:<5}"
              f"N={r['N']:<4}P={r['P']:<6}{tail}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gpr-american", description="Bermudan basket and rough Bergomi pricers")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_price = sub.add_parser("price", help="price one configuration")
    p_price.add_argument("--config", required=True)
    p_price.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p_price.add_argument("--out", default=None, help="CSV file (defaults to the config's 'out' key)")
    p_suite = sub.add_parser("suite", help="price every configuration in a directory")
    p_suite.add_argument("--config-dir", required=True)
    p_suite.add_argument("--out", required=True)
    p_suite.add_argument("--repeat", type=int, default=1)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        if args.command == "price":
            cfg = load_config(args.config, args.override)
            out = args.out or cfg.out
            try:
                report = run(cfg)
            except ConfigInvalid:
                raise
            except (PricingError, ArithmeticError, np.linalg.LinAlgError) as exc:
                print(f"numerical failure: {exc}", file=sys.stderr)
                rows = [_row(cfg, None, f"{type(exc).__name__}: {exc}")]
                if out:
                    write_csv(rows, out)
                return 2
            rows = [_row(cfg, report)]
        else:
            rows = run_suite(load_suite(args.config_dir), args.repeat)
            out = args.out
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    _print_rows(rows)
    if out:
        write_csv(rows, out)
    return 2 if any(r["error"] for r in rows) else 0


if __name__ == "__main__":
    sys.exit(main())
