"""Command-line entry point.

Subcommands:

* ``zeta``        -- analytic overlap fractions by both routes, cross-check,
                     heavy-traffic limit (writes zeta.json)
* ``sweep``       -- simulation sweep over the epsilon grid with parallel
                     replications (writes sweep.csv and sweep.json)
* ``lower-bound`` -- priority-ordering lower bound, n <= 3 (writes lb.json)
* ``simulate``    -- one replication, optional per-slot trace CSV
* ``validate``    -- desk-scale invariant suite, pass/fail table

Exit codes: 0 success, 1 configuration error, 2 analytic cross-check
failure, 3 infeasible request.

A single JSON document configures everything; cost/arrival presets are
expanded at parse time and the expanded form is embedded in every output for
provenance.  One master seed plus SeedSequence spawn keys
(epsilon index, replication, purpose) derive every stream, so adding
replications or epsilon points never perturbs existing runs, and results are
independent of worker count and completion order.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analytics, simulator, validate
from .scheduling import MatcherConfig
from .traffic import ArrivalModel, face_check, uniform_nu
from .wlinalg import CostMatrix

CROSS_ERROR_LIMIT = 1e-6

SWEEP_CSV_COLUMNS = [
    "epsilon",
    "scaled_weighted_qsum",
    "stderr",
    "perp_norm_mean",
    "perp_norm2_mean",
    "unused_service_rate",
    "slots",
    "replications",
]


class ConfigError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


# -------- configuration --------


def _expand_cost(n: int, spec) -> np.ndarray:
    if not isinstance(spec, dict):
        raise ConfigError("cost must be an object with 'preset' or 'matrix'")
    if "matrix" in spec:
        m = np.array(spec["matrix"], dtype=float)
        if m.shape != (n, n):
            raise ConfigError(f"cost matrix must be {n}x{n}")
        return m
    preset = spec.get("preset")
    if preset == "ones":
        return np.ones((n, n))
    if preset == "checker":
        a, b = float(spec.get("a", 1.0)), float(spec.get("b", 2.0))
        m = np.full((n, n), a)
        for i in range(n):
            for j in range(n):
                if (i + j) % 2:
                    m[i, j] = b
        return m
    if preset == "random":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        lo, hi = float(spec.get("lo", 0.5)), float(spec.get("hi", 2.0))
        return rng.uniform(lo, hi, (n, n))
    raise ConfigError(f"unknown cost preset {preset!r}")


def _expand_nu(n: int, spec) -> np.ndarray:
    if spec == "uniform" or spec is None:
        return uniform_nu(n)
    nu = np.array(spec, dtype=float)
    if nu.shape != (n, n):
        raise ConfigError(f"nu must be {n}x{n}")
    return nu


@dataclass(eq=False)
class ExperimentConfig:
    n: int
    cost: np.ndarray
    arrival_kind: str
    nu: np.ndarray
    a_max: int
    epsilon_grid: list[float]
    slots: int
    slots_by_epsilon: dict[float, int] = field(default_factory=dict)
    warmup: int | None = None
    replications: int = 1
    batch_count: int = 30
    seed: int = 0
    matcher_mode: str = "auto"
    exact_threshold: int = 7
    ssc_sampling_stride: int = 100
    sigma2: np.ndarray | None = None
    output_dir: str = "out"

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if not self.epsilon_grid:
            raise ConfigError("epsilon_grid must be nonempty")
        for eps in self.epsilon_grid:
            if not (0.0 < eps < 1.0):
                raise ConfigError(f"epsilon {eps} outside (0, 1): load must be stable")
        if np.any(self.cost <= 0):
            raise ConfigError("cost entries must be positive")
        if not face_check(self.nu):
            raise ConfigError("nu must have unit row and column sums")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.slots < self.batch_count:
            raise ConfigError("slots must be >= batch_count")

    # -- construction / serialization --

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            n = int(doc["n"])
            cost = _expand_cost(n, doc.get("cost", {"preset": "ones"}))
            arrival = doc.get("arrival", {})
            kind = arrival.get("kind", "bernoulli")
            nu = _expand_nu(n, arrival.get("nu", "uniform"))
            default_amax = {"bernoulli": 1, "uniform-integer": 2, "truncated-poisson": 10}
            a_max = int(arrival.get("a_max", default_amax.get(kind, 1)))
            sbe = {float(k): int(v) for k, v in doc.get("slots_by_epsilon", {}).items()}
            sigma2 = doc.get("sigma2")
            matcher = doc.get("matcher", {})
            return cls(
                n=n,
                cost=cost,
                arrival_kind=kind,
                nu=nu,
                a_max=a_max,
                epsilon_grid=[float(e) for e in doc["epsilon_grid"]],
                slots=int(doc.get("slots", 1_000_000)),
                slots_by_epsilon=sbe,
                warmup=None if doc.get("warmup") is None else int(doc["warmup"]),
                replications=int(doc.get("replications", 1)),
                batch_count=int(doc.get("batch_count", 30)),
                seed=int(doc.get("seed", 0)),
                matcher_mode=matcher.get("mode", "auto"),
                exact_threshold=int(matcher.get("exact_threshold", 7)),
                ssc_sampling_stride=int(doc.get("ssc_sampling_stride", 100)),
                sigma2=None if sigma2 is None else np.array(sigma2, dtype=float),
                output_dir=doc.get("output_dir", "out"),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed configuration: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cost": {"matrix": self.cost.tolist()},
            "arrival": {"kind": self.arrival_kind, "nu": self.nu.tolist(), "a_max": self.a_max},
            "epsilon_grid": list(self.epsilon_grid),
            "slots": self.slots,
            "slots_by_epsilon": {repr(k): v for k, v in self.slots_by_epsilon.items()},
            "warmup": self.warmup,
            "replications": self.replications,
            "batch_count": self.batch_count,
            "seed": self.seed,
            "matcher": {"mode": self.matcher_mode, "exact_threshold": self.exact_threshold},
            "ssc_sampling_stride": self.ssc_sampling_stride,
            "sigma2": None if self.sigma2 is None else self.sigma2.tolist(),
            "output_dir": self.output_dir,
        }

    # -- derived objects --

    def cost_matrix(self) -> CostMatrix:
        return CostMatrix(self.cost)

    def model(self, epsilon: float) -> ArrivalModel:
        return ArrivalModel(kind=self.arrival_kind, nu=self.nu, epsilon=epsilon, a_max=self.a_max)

    def matcher(self) -> MatcherConfig:
        return MatcherConfig(mode=self.matcher_mode, exact_threshold=self.exact_threshold)

    def slots_for(self, epsilon: float) -> int:
        return self.slots_by_epsilon.get(epsilon, self.slots)

    def sigma2_limit(self) -> np.ndarray:
        """Variance vector entering the heavy-traffic constant (load -> 1)."""
        if self.sigma2 is not None:
            return self.sigma2
        probe = self.model(self.epsilon_grid[0])
        return probe.limit_moments().var

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path: str) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


# -------- sweep orchestration --------


def _run_task(payload: tuple) -> simulator.RunStats:
    doc, eps_index, rep = payload
    cfg = ExperimentConfig.from_dict(doc)
    eps = cfg.epsilon_grid[eps_index]
    rc = simulator.RunConfig(
        c=cfg.cost_matrix(),
        model=cfg.model(eps),
        matcher=cfg.matcher(),
        measured=cfg.slots_for(eps),
        warmup=cfg.warmup,
        batch_count=cfg.batch_count,
        ssc_stride=cfg.ssc_sampling_stride,
        seed=cfg.seed,
        stream_key=(eps_index, rep),
    )
    return simulator.run(rc)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is not None and jobs >= 1:
        return jobs
    env = os.environ.get("SWITCHLAB_JOBS")
    if env:
        try:
            v = int(env)
            if v >= 1:
                return v
        except ValueError:
            pass
    return os.cpu_count() or 1


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> dict[float, list[simulator.RunStats]]:
    """All (epsilon, replication) runs, reduced in deterministic task order."""
    doc = cfg.to_dict()
    tasks = [
        (doc, ei, rep)
        for ei in range(len(cfg.epsilon_grid))
        for rep in range(cfg.replications)
    ]
    if jobs <= 1 or len(tasks) == 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_task, tasks))
    by_eps: dict[float, list[simulator.RunStats]] = {e: [] for e in cfg.epsilon_grid}
    for (_, ei, _), st in zip(tasks, results):
        by_eps[cfg.epsilon_grid[ei]].append(st)
    return by_eps


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_rows(cfg: ExperimentConfig, by_eps: dict[float, list[simulator.RunStats]]) -> list[dict]:
    rows = []
    for eps in cfg.epsilon_grid:
        reps = by_eps[eps]
        pooled = analytics.pool_runs(reps)
        rows.append(
            {
                "epsilon": eps,
                "scaled_weighted_qsum": eps * pooled["mean_weighted_qsum"],
                "stderr": eps * pooled["stderr_weighted_qsum"],
                "mean_weighted_qsum": pooled["mean_weighted_qsum"],
                "stderr_weighted_qsum": pooled["stderr_weighted_qsum"],
                "perp_norm_mean": pooled["perp_mean"],
                "perp_norm2_mean": pooled["perp2_mean"],
                "perp_norm4_mean": pooled["perp4_mean"],
                "par_norm_mean": pooled["par_mean"],
                "unused_service_rate": pooled["unused_service_rate"],
                "stderr_unused_service": pooled["stderr_unused_service"],
                "slots": reps[0].measured_slots,
                "replications": len(reps),
                "warmup": reps[0].warmup_slots,
                "matcher_mode": reps[0].matcher_mode,
            }
        )
    return rows


def write_sweep_csv(path: Path, rows: list[dict]) -> None:
    lines = [",".join(SWEEP_CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row[col]) for col in SWEEP_CSV_COLUMNS))
    path.write_text("\n".join(lines) + "\n")


def analytic_block(cfg: ExperimentConfig) -> dict:
    cost = cfg.cost_matrix()
    rep = analytics.cross_validated_zeta(cost)
    sigma2 = cfg.sigma2_limit()
    limit = analytics.ht_limit(cost, sigma2)
    block = {
        "zeta_projection": rep.projection.zeta.tolist(),
        "zeta_gmatrix": rep.gmatrix.zeta.tolist(),
        "cross_error": rep.cross_error,
        "sigma2": sigma2.tolist(),
        "ht_limit": limit,
    }
    if cfg.n == 2:
        alt = analytics.n2_closed_form(cost, sigma2)
        block["n2_closed_form"] = alt
        block["ht_limit_over_n2_closed_form"] = (limit / alt) if alt else None
    if cfg.n <= 3:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lbs = {}
            for eps in cfg.epsilon_grid:
                lb = analytics.universal_lower_bound(cost, cfg.model(eps))
                lbs[repr(eps)] = {"Qstar_eps": lb.Qstar_eps, "Qstar_limit": lb.Qstar_limit}
            block["lower_bound"] = lbs
    return block


def _json_dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -------- subcommands --------


def cmd_zeta(args) -> int:
    cfg = load_config(args.config)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    block = analytic_block(cfg)
    doc = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "version": __version__,
        **block,
    }
    _json_dump(out / "zeta.json", doc)
    if args.verbose:
        print(f"zeta cross-error {block['cross_error']:.3e}, ht_limit {block['ht_limit']:.6g}")
    print(f"wrote {out / 'zeta.json'}")
    if block["cross_error"] > CROSS_ERROR_LIMIT:
        print(
            f"error: zeta routes disagree by {block['cross_error']:.3e} > {CROSS_ERROR_LIMIT:g}",
            file=sys.stderr,
        )
        return 2
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    jobs = resolve_jobs(args.jobs)
    by_eps = run_sweep(cfg, jobs=jobs)
    rows = sweep_rows(cfg, by_eps)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out / "sweep.csv", rows)
    curve = analytics.ssc_curve(by_eps) if len(cfg.epsilon_grid) >= 3 else None
    doc = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": __version__,
        "rows": rows,
        "analytics": analytic_block(cfg),
        "ssc": None
        if curve is None
        else {"par_slope": curve.par_slope, "perp_slope": curve.perp_slope},
    }
    _json_dump(out / "sweep.json", doc)
    print(f"wrote {out / 'sweep.csv'} and {out / 'sweep.json'}")
    return 0


def cmd_lower_bound(args) -> int:
    cfg = load_config(args.config)
    if cfg.n > 3:
        n_fact = math.factorial(cfg.n)
        print(
            f"error: n={cfg.n} requires ({n_fact})! = factorial({n_fact}) priority orderings; "
            "the enumeration is only feasible for n <= 3",
            file=sys.stderr,
        )
        return 3
    cost = cfg.cost_matrix()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_eps = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for eps in cfg.epsilon_grid:
            lb = analytics.universal_lower_bound(cost, cfg.model(eps))
            per_eps[repr(eps)] = {
                "Qstar_eps": lb.Qstar_eps,
                "Qstar_limit": lb.Qstar_limit,
                "clamped_classes": lb.clamped_classes,
                "per_ordering": [
                    {
                        "ordering": list(b.ordering),
                        "value_eps": b.value_eps,
                        "value_limit": b.value_limit,
                    }
                    for b in lb.per_ordering
                ],
            }
            schedules = lb.schedules
    doc = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "schedules": [list(s) for s in schedules],
        "orderings_enumerated": math.factorial(math.factorial(cfg.n)),
        "by_epsilon": per_eps,
    }
    _json_dump(out / "lb.json", doc)
    print(f"wrote {out / 'lb.json'}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    eps = cfg.epsilon_grid[0]
    rc = simulator.RunConfig(
        c=cfg.cost_matrix(),
        model=cfg.model(eps),
        matcher=cfg.matcher(),
        measured=cfg.slots_for(eps),
        warmup=cfg.warmup,
        batch_count=cfg.batch_count,
        ssc_stride=cfg.ssc_sampling_stride,
        seed=cfg.seed,
        stream_key=(0, 0),
        record_slots=args.trace is not None,
    )
    stats = simulator.run(rc)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "epsilon": eps,
        "seed": cfg.seed,
        "matcher_mode": stats.matcher_mode,
        "warmup_slots": stats.warmup_slots,
        "measured_slots": stats.measured_slots,
        "mean_weighted_qsum": stats.mean_weighted_qsum,
        "stderr_weighted_qsum": stats.stderr_weighted_qsum,
        "scaled_weighted_qsum": eps * stats.mean_weighted_qsum,
        "unused_service_rate": stats.unused_service_rate,
        "stderr_unused_service": stats.stderr_unused_service,
        "mean_perp_norm": stats.mean_perp_norm_r[1],
        "mean_perp_norm2": stats.mean_perp_norm_r[2],
        "mean_perp_norm4": stats.mean_perp_norm_r[4],
        "mean_par_norm": stats.mean_par_norm,
        "conservation_ok": stats.conservation_ok,
        "qu_dot_violation": stats.qu_dot_violation,
    }
    _json_dump(out / "run.json", doc)
    print(f"wrote {out / 'run.json'}")
    if args.trace is not None:
        n = cfg.n
        lines = ["t,i,j,Q,A,S,U"]
        Q = np.zeros((n, n), dtype=np.int64)
        for rec in stats.records:
            Q = Q + rec.A - rec.S + rec.U
            for i in range(n):
                for j in range(n):
                    lines.append(
                        f"{rec.t},{i},{j},{Q[i, j]},{rec.A[i, j]},{rec.S[i, j]},{rec.U[i, j]}"
                    )
        Path(args.trace).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.trace}")
    return 0


def cmd_validate(args) -> int:
    results = validate.run_suite(seed=args.seed or 0, verbose=args.verbose)
    ok = all(r.ok for r in results)
    total = sum(r.seconds for r in results)
    print(f"{sum(r.ok for r in results)}/{len(results)} checks passed in {total:.1f}s")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="switchlab",
        description="Input-queued switch simulator and heavy-traffic analytics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="path to JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("zeta", help="analytic overlap fractions and heavy-traffic limit")
    add_common(p)
    p.set_defaults(fn=cmd_zeta)

    p = sub.add_parser("sweep", help="epsilon sweep with parallel replications")
    add_common(p)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: cores)")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("lower-bound", help="priority-ordering lower bound (n <= 3)")
    add_common(p)
    p.set_defaults(fn=cmd_lower_bound)

    p = sub.add_parser("simulate", help="single replication with optional trace dump")
    add_common(p)
    p.add_argument("--trace", default=None, help="write per-slot trace CSV here")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("validate", help="run the invariant suite")
    add_common(p, config_required=False)
    p.set_defaults(fn=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except InfeasibleError as exc:
        print(f"infeasible request: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
