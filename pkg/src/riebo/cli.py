"""Command-line runner: ``riebo run`` for experiments, ``riebo validate`` for self-checks.

Each ``run`` writes one ``trace_seed<k>.csv`` per seed, an ``aggregate.csv``
with per-iteration means, ``metadata.json`` with the effective configuration
and (unless ``--no-plots``) ``convergence.png``.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, fields
import json
import logging
import os
from pathlib import Path
import sys
from typing import Optional

import numpy as np

from . import __version__
from .errors import SolverError
from .hypergrad import EstimatorConfig
from .problems import make_robust_instance, make_toy_quadratic, robust_oracles
from .solvers import IterateTrace, SolverConfig, riebo, riesbo, robust_bilevel

log = logging.getLogger("riebo")

EXIT_OK = 0
EXIT_FAILED_CHECKS = 1
EXIT_USAGE = 2
EXIT_ORACLE_FAILURE = 3

EXPERIMENTS = ("toy-riebo", "toy-riesbo", "robust-karcher", "robust-mle", "validate")
TRACE_COLUMNS = ("iter", "cpu_seconds", "objective", "grad_norm", "inner_residual")


class ConfigError(ValueError):
    """Malformed configuration document or flag."""


@dataclass(frozen=True)
class RunConfig:
    """Effective settings of one ``run`` invocation.

    For the toy experiments ``d`` is the upper dimension and ``n`` the lower
    one.  ``alpha``, ``beta`` and ``eta`` may be ``None`` to derive them from
    the problem constants.
    """

    experiment: str
    d: int = 10
    n: int = 10
    kappa: float = 10.0
    lam: float = 1.0
    sigma: float = 0.0
    K: int = 100
    T: int = 10
    N: int = 10
    Q: int = 50
    alpha: Optional[float] = None
    beta: Optional[float] = None
    eta: Optional[float] = None
    seeds: tuple = (0,)
    record_every: int = 1
    out: str = "riebo-out"
    plots: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        for name in ("d", "n", "K", "T", "N", "Q", "record_every"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or isinstance(val, bool):
                raise ConfigError(f"{name} must be an integer, got {val!r}")
        if self.d < 1 or self.n < 1:
            raise ConfigError("d and n must be positive")
        if self.K < 0 or self.T < 0 or self.N < 1 or self.Q < 1 or self.record_every < 1:
            raise ConfigError("K, T must be >= 0 and N, Q, record_every >= 1")
        if not self.kappa >= 1 or self.lam < 0 or self.sigma < 0:
            raise ConfigError("kappa must be >= 1, lambda and sigma >= 0")
        for name in ("alpha", "beta", "eta"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ConfigError(f"{name} must be positive")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("seeds must be non-empty")
        if any(not 0 <= s < 2**64 for s in seeds):
            raise ConfigError("seeds must be 64-bit unsigned integers")
        object.__setattr__(self, "seeds", seeds)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        doc["seeds"] = list(self.seeds)
        return doc


PRESETS = {
    "toy-riebo": dict(d=10, n=10, kappa=10.0, sigma=0.0, K=500, T=20, N=10, seeds=(0,)),
    "toy-riesbo": dict(d=10, n=10, kappa=5.0, sigma=0.1, K=1000, T=5, Q=50, seeds=(0,)),
    "robust-karcher": dict(
        d=10, n=5, kappa=10.0, lam=1.0, K=200, T=200, Q=50, alpha=1e-2, beta=1e-1, seeds=(0, 1, 2, 3, 4)
    ),
    "robust-mle": dict(
        d=10, n=100, kappa=10.0, lam=1.0, K=1000, T=200, Q=50, alpha=1e-2, beta=1e-1, seeds=(0, 1, 2, 3, 4)
    ),
    "validate": dict(),
}

# document key -> RunConfig field
_KEYS = {f.name: f.name for f in fields(RunConfig)}
_KEYS["lambda"] = "lam"
del _KEYS["lam"]


def _coerce(name: str, value):
    """Convert a flag string or JSON value to the field's type."""
    ints = {"d", "n", "K", "T", "N", "Q", "record_every"}
    floats = {"kappa", "lam", "sigma"}
    optional = {"alpha", "beta", "eta"}
    try:
        if name in ints:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            if isinstance(value, bool):
                raise ValueError
            return int(value)
        if name in floats:
            return float(value)
        if name in optional:
            if value is None or (isinstance(value, str) and value.lower() in ("none", "null", "auto")):
                return None
            return float(value)
        if name == "seeds":
            if isinstance(value, str):
                return tuple(int(s) for s in value.split(",") if s.strip())
            if isinstance(value, (list, tuple)):
                return tuple(int(s) for s in value)
            return (int(value),)
        if name == "plots":
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes", "on")
            return bool(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {name}: {value!r}") from None


def _doc_to_fields(doc: dict) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = sorted(set(doc) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return {_KEYS[k]: (v if k == "experiment" else _coerce(_KEYS[k], v)) for k, v in doc.items()}


def parse_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Build a :class:`RunConfig` from preset, then file, then flag values.

    ``overrides`` uses document keys (``lambda``, ``record_every`` ...); keys
    whose value is ``None`` are ignored.
    """
    file_fields = {}
    if path is not None:
        try:
            text = Path(path).read_text()
            doc = json.loads(text) if text.strip() else {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        file_fields = _doc_to_fields(doc)
    flag_fields = _doc_to_fields({k: v for k, v in (overrides or {}).items() if v is not None})
    experiment = flag_fields.get("experiment", file_fields.get("experiment"))
    if experiment is None:
        raise ConfigError("no experiment given")
    if experiment not in PRESETS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    merged = {"experiment": experiment, **PRESETS[experiment], **file_fields, **flag_fields}
    return RunConfig(**merged)


# ---------------------------------------------------------------------------
# running


@dataclass
class SeedResult:
    seed: int
    trace: IterateTrace
    error: Optional[str] = None
    resolved: dict = field(default_factory=dict)


def _solver_config(cfg: RunConfig, seed: int, alpha: float, beta: float) -> SolverConfig:
    est = EstimatorConfig(cg_steps=cfg.N, neumann_terms=cfg.Q, neumann_scale=cfg.eta)
    return SolverConfig(
        K=cfg.K, T=cfg.T, alpha=alpha, beta=beta, estimator=est, seed=seed, record_every=cfg.record_every
    )


def run_seed(cfg: RunConfig, seed: int) -> SeedResult:
    """Execute one seed of ``cfg``; solver failures are captured, not raised."""
    if cfg.experiment in ("toy-riebo", "toy-riesbo"):
        toy = make_toy_quadratic(cfg.d, cfg.n, cfg.kappa, seed=seed, sigma=cfg.sigma)
        oracles = toy.oracles
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        x0 = oracles.upper.point(rng.standard_normal(cfg.d))
        y0 = oracles.lower.point(np.zeros(cfg.n))
        alpha = cfg.alpha if cfg.alpha is not None else 1.0 / (8.0 * toy.meta.phi_smoothness())
        solve = riebo if cfg.experiment == "toy-riebo" else riesbo
    else:
        kind = "karcher" if cfg.experiment == "robust-karcher" else "mle"
        inst = make_robust_instance(kind, cfg.d, cfg.n, lam=cfg.lam, conditioning=cfg.kappa, seed=seed)
        oracles = robust_oracles(inst)
        x0 = oracles.upper.uniform()
        y0 = oracles.lower.point(np.eye(cfg.d))
        alpha = cfg.alpha if cfg.alpha is not None else 1e-2
        solve = robust_bilevel
    beta = cfg.beta if cfg.beta is not None else 1.0 / oracles.meta.l_g1
    resolved = {"alpha": alpha, "beta": beta, "eta": cfg.eta if cfg.eta is not None else 1.0 / oracles.meta.l_g1}
    scfg = _solver_config(cfg, seed, alpha, beta)
    try:
        trace = solve(oracles, x0, y0, scfg)
        return SeedResult(seed, trace, resolved=resolved)
    except SolverError as exc:
        return SeedResult(seed, exc.trace or IterateTrace(), error=str(exc), resolved=resolved)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_trace(path: Path, trace: IterateTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace.records:
            w.writerow([r.k, _fmt(r.elapsed_s), _fmt(r.objective), _fmt(r.grad_norm), _fmt(r.inner_residual)])


def read_trace(path) -> dict:
    """Load a trace or aggregate CSV into a dict of numpy columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in row] for row in body]).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def aggregate_traces(traces) -> dict:
    """Per-iteration means over the iterations recorded by every trace."""
    common = None
    for t in traces:
        ks = {r.k for r in t.records}
        common = ks if common is None else common & ks
    ks = sorted(common or ())
    out = {"iter": np.array(ks, dtype=float)}
    for col, attr in (
        ("cpu_seconds", "elapsed_s"),
        ("objective", "objective"),
        ("grad_norm", "grad_norm"),
        ("inner_residual", "inner_residual"),
    ):
        rows = []
        for t in traces:
            by_k = {r.k: getattr(r, attr) for r in t.records}
            rows.append([by_k[k] for k in ks])
        out[col] = np.mean(np.array(rows, dtype=float).reshape(len(traces), len(ks)), axis=0)
    return out


def write_aggregate(path: Path, agg: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i in range(len(agg["iter"])):
            w.writerow([int(agg["iter"][i])] + [_fmt(agg[c][i]) for c in TRACE_COLUMNS[1:]])


def _threads(n_jobs: int) -> int:
    raw = os.environ.get("RIEBO_THREADS", "")
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        log.warning("ignoring invalid RIEBO_THREADS=%r", raw)
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def run(cfg: RunConfig) -> int:
    """Run every seed of ``cfg`` and write the output files; returns an exit code."""
    if cfg.experiment == "validate":
        from .validate import run_suite

        return EXIT_OK if run_suite(fast=False) else EXIT_FAILED_CHECKS
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = _threads(len(cfg.seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: run_seed(cfg, s), cfg.seeds))
    else:
        results = [run_seed(cfg, s) for s in cfg.seeds]

    per_seed = {}
    for res in results:
        write_trace(out / f"trace_seed{res.seed}.csv", res.trace)
        per_seed[res.seed] = {
            "cpu_seconds": res.trace.column("elapsed_s"),
            "objective": res.trace.column("objective"),
            "grad_norm": res.trace.column("grad_norm"),
        }
        if res.error:
            log.error("seed %d failed: %s", res.seed, res.error)
    agg = aggregate_traces([r.trace for r in results])
    write_aggregate(out / "aggregate.csv", agg)
    meta = {
        "build": f"riebo {__version__}",
        "config": cfg.to_dict(),
        "resolved": {str(r.seed): r.resolved for r in results},
        "status": {str(r.seed): ("ok" if r.error is None else r.error) for r in results},
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if cfg.plots:
        from .plotting import plot_convergence

        plot_convergence(per_seed, agg, out / "convergence.png", title=cfg.experiment)
    failed = [r for r in results if r.error]
    return EXIT_ORACLE_FAILURE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

_FLAG_FIELDS = (
    ("d", int),
    ("n", int),
    ("kappa", float),
    ("lambda", float),
    ("sigma", float),
    ("K", int),
    ("T", int),
    ("N", int),
    ("Q", int),
    ("alpha", str),
    ("beta", str),
    ("eta", str),
    ("seeds", str),
    ("record-every", int),
    ("out", str),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riebo", description="Riemannian bilevel optimization experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment and write traces")
    p_run.add_argument("--experiment", help=f"one of {', '.join(EXPERIMENTS)}")
    p_run.add_argument("--config", help="JSON config file; flags override its values")
    for name, typ in _FLAG_FIELDS:
        p_run.add_argument(f"--{name}", dest=name.replace("-", "_"), type=typ, default=None)
    p_run.add_argument("--no-plots", dest="plots", action="store_false", default=None)
    p_run.add_argument("--emit-config", action="store_true", help="print the effective config and exit")

    p_val = sub.add_parser("validate", help="run the built-in invariant suite")
    p_val.add_argument("--fast", action="store_true", help="fewer random cases")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.command == "validate":
        from .validate import run_suite

        return EXIT_OK if run_suite(fast=args.fast) else EXIT_FAILED_CHECKS

    overrides = {"experiment": args.experiment, "plots": args.plots}
    for name, _ in _FLAG_FIELDS:
        key = name.replace("-", "_")
        overrides[key] = getattr(args, key)
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"riebo: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.emit_config:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
