"""Slotted-time evolution of the switch under cost-weighted MaxWeight.

Per slot: the schedule is chosen from Q(t), arrivals of the slot are drawn,
service tokens granted to queues with nothing to send become unused service,
and

    Q(t+1) = Q(t) + A(t) - S(t) + U(t),   U_ij = max(0, S_ij - Q_ij - A_ij).

Arrivals of a slot are servable within the slot, which is exactly what makes
<Q(t+1), U(t)> vanish identically.  ``run`` drives a long replication with
batch-means statistics and periodic cone-projection sampling; ``step`` is the
single-slot reference used by tests and trace tooling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .scheduling import MatcherConfig, Schedule, hungarian_schedule, max_weight_schedule
from .traffic import ArrivalModel
from .wlinalg import CostMatrix, project_cone

__all__ = [
    "QueueState",
    "SlotRecord",
    "RunConfig",
    "RunStats",
    "DriftDiagnostics",
    "step",
    "run",
    "drift_diagnostics",
    "derive_rngs",
    "default_warmup",
]

ARRIVAL_STREAM = 0
TIEBREAK_STREAM = 1
_BLOCK = 65536


def default_warmup(epsilon: float) -> int:
    """Relaxation-time heuristic: the transient decays on a 1/epsilon^2 scale."""
    return max(100_000, math.ceil(20.0 / epsilon**2))


def derive_rngs(seed: int, stream_key: tuple[int, ...] = ()) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (arrival, tiebreak) generators for one replication.

    Streams are split as SeedSequence(seed, spawn_key=(*stream_key, purpose)),
    so adding epsilon points or replications never perturbs existing runs.
    """
    mk = lambda purpose: np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(*stream_key, purpose))
    )
    return mk(ARRIVAL_STREAM), mk(TIEBREAK_STREAM)


@dataclass
class QueueState:
    Q: np.ndarray
    t: int = 0

    def __post_init__(self):
        Q = np.array(self.Q, dtype=np.int64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("queue matrix must be square")
        if (Q < 0).any():
            raise ValueError("queue lengths must be nonnegative")
        self.Q = Q

    @classmethod
    def empty(cls, n: int) -> "QueueState":
        return cls(Q=np.zeros((n, n), dtype=np.int64), t=0)


@dataclass
class SlotRecord:
    t: int
    A: np.ndarray
    S: np.ndarray
    U: np.ndarray
    weighted_qsum: float
    perp_norm: float | None = None
    par_norm: float | None = None
    drift_W: float | None = None


@dataclass
class RunConfig:
    c: CostMatrix
    model: ArrivalModel
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    measured: int = 1_000_000
    warmup: int | None = None
    batch_count: int = 30
    ssc_stride: int = 100
    collect_ssc: bool = True
    record_slots: bool = False
    seed: int = 0
    stream_key: tuple[int, ...] = ()

    def __post_init__(self):
        if self.c.n != self.model.n:
            raise ValueError("cost and arrival dimensions differ")
        if self.batch_count < 20:
            raise ValueError("batch_count must be >= 20 for trustworthy standard errors")
        if self.measured < self.batch_count:
            raise ValueError("measured slots must be >= batch_count")
        if self.warmup is not None and self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.ssc_stride < 1:
            raise ValueError("ssc_stride must be >= 1")


@dataclass
class RunStats:
    n: int
    epsilon: float
    seed: int
    stream_key: tuple[int, ...]
    matcher_mode: str
    warmup_slots: int
    measured_slots: int
    batch_count: int
    mean_weighted_qsum: float
    stderr_weighted_qsum: float
    unused_service_rate: float
    stderr_unused_service: float
    mean_perp_norm_r: dict[int, float]
    mean_par_norm: float
    perp_samples: np.ndarray
    par_samples: np.ndarray
    drift_samples: np.ndarray
    qu_dot_violation: float
    conservation_ok: bool
    departure_rate: np.ndarray
    records: list[SlotRecord] | None = None


def _apply_slot(Q: np.ndarray, A: np.ndarray, s: Schedule):
    """One dynamics update in place; returns the unused-service matrix."""
    n = Q.shape[0]
    U = np.zeros((n, n), dtype=np.int64)
    Q += A
    for i, j in enumerate(s.perm):
        if Q[i, j] > 0:
            Q[i, j] -= 1
        else:
            U[i, j] = 1
    return U


def step(
    state: QueueState,
    model: ArrivalModel,
    cost: CostMatrix,
    matcher: MatcherConfig,
    arrival_rng: np.random.Generator,
    tiebreak_rng: np.random.Generator,
    schedule: Schedule | None = None,
    arrivals: np.ndarray | None = None,
) -> tuple[QueueState, SlotRecord]:
    """Advance one slot.  ``schedule``/``arrivals`` override sampling for
    controlled tests."""
    Q = state.Q
    s = schedule if schedule is not None else max_weight_schedule(Q, cost, matcher, tiebreak_rng)
    A = np.asarray(arrivals, dtype=np.int64) if arrivals is not None else model.sample(arrival_rng)
    Qn = Q.copy()
    U = _apply_slot(Qn, A, s)
    rec = SlotRecord(
        t=state.t,
        A=A,
        S=s.as_matrix(),
        U=U,
        weighted_qsum=float((cost.c * Qn).sum()),
    )
    return QueueState(Q=Qn, t=state.t + 1), rec


class _BatchAcc:
    """Equal-size batch means with a pooled overall mean."""

    def __init__(self, batch_size: int):
        self.size = batch_size
        self.cur = 0.0
        self.fill = 0
        self.means: list[float] = []

    def add(self, value: float):
        self.cur += value
        self.fill += 1
        if self.fill == self.size:
            self.means.append(self.cur / self.size)
            self.cur = 0.0
            self.fill = 0

    def mean(self) -> float:
        return float(np.mean(self.means))

    def stderr(self) -> float:
        m = np.asarray(self.means)
        if len(m) < 2:
            return float("nan")
        return float(m.std(ddof=1) / math.sqrt(len(m)))


def run(cfg: RunConfig) -> RunStats:
    """Simulate one replication and summarize it.

    Deterministic given (seed, stream_key).  The measured window is trimmed
    down to a multiple of batch_count so every batch has equal size.
    """
    cost, model, matcher = cfg.c, cfg.model, cfg.matcher
    n = cost.n
    n2 = n * n
    warmup = cfg.warmup if cfg.warmup is not None else default_warmup(model.epsilon)
    batch = cfg.measured // cfg.batch_count
    measured = batch * cfg.batch_count
    arrival_rng, tiebreak_rng = derive_rngs(cfg.seed, cfg.stream_key)
    mode = matcher.resolved_mode(n)

    c_flat = [float(v) for v in cost.flat]
    Q = [0] * n2
    q_start = np.zeros(n2, dtype=np.int64)

    use_exact = mode == "exact-enumeration"
    if use_exact:
        perms = list(itertools.permutations(range(n)))
        pidx = [[i * n + p[i] for i in range(n)] for p in perms]
        nperm = len(perms)
    tb: list[float] = []
    tbi = 0

    w_acc = _BatchAcc(batch)
    u_acc = _BatchAcc(batch)
    arrivals_total = np.zeros(n2, dtype=np.int64)
    unused_total = np.zeros(n2, dtype=np.int64)
    sched_count: dict[tuple[int, ...], int] = {}
    qu_violation = 0.0

    perp_samples: list[float] = []
    par_samples: list[float] = []
    drift_samples: list[float] = []
    warm_w = warm_wt = None
    records: list[SlotRecord] | None = [] if cfg.record_slots else None

    total = warmup + measured
    done = 0
    rec_on = records is not None
    while done < total:
        blk_n = min(_BLOCK, total - done)
        ablk_np = model.sample_block(arrival_rng, blk_n)
        off = max(0, warmup - done)
        if off < blk_n:
            arrivals_total += ablk_np[off:].sum(axis=0)
        ablk = ablk_np.tolist()
        for A in ablk:
            m_idx = done - warmup
            in_measured = m_idx >= 0
            if m_idx == 0:
                q_start = np.array(Q, dtype=np.int64)
            sample_now = cfg.collect_ssc and in_measured and m_idx % cfg.ssc_stride == 0
            if sample_now:
                q_before = np.array(Q, dtype=float).reshape(n, n)

            # -- schedule from Q(t)
            if use_exact:
                best = -1.0
                ties: list[int] = []
                for p in range(nperm):
                    w = 0.0
                    for k in pidx[p]:
                        w += c_flat[k] * Q[k]
                    if w > best:
                        best = w
                        ties = [p]
                    elif w == best:
                        ties.append(p)
                if len(ties) == 1:
                    sp = ties[0]
                else:
                    if tbi >= len(tb):
                        tb = tiebreak_rng.random(_BLOCK).tolist()
                        tbi = 0
                    sp = ties[int(tb[tbi] * len(ties))]
                    tbi += 1
                perm = perms[sp]
                idxs = pidx[sp]
            else:
                qmat = np.array(Q, dtype=np.int64).reshape(n, n)
                perm = hungarian_schedule(qmat, cost, tiebreak_rng).perm
                idxs = [i * n + perm[i] for i in range(n)]

            # -- arrivals, unused service, update
            for k in range(n2):
                a = A[k]
                if a:
                    Q[k] += a
            u_slot = 0
            unused_k: list[int] = []
            for k in idxs:
                if Q[k] > 0:
                    Q[k] -= 1
                else:
                    u_slot += 1
                    if in_measured:
                        unused_total[k] += 1
                    if rec_on:
                        unused_k.append(k)
                    qu_violation = max(qu_violation, abs(c_flat[k] * Q[k]))

            if in_measured:
                wsum = 0.0
                for k in range(n2):
                    wsum += c_flat[k] * Q[k]
                w_acc.add(wsum)
                u_acc.add(float(u_slot))
                sched_count[perm] = sched_count.get(perm, 0) + 1

            if sample_now:
                proj_b = project_cone(q_before, cost, w0=warm_w, wt0=warm_wt)
                q_after = np.array(Q, dtype=float).reshape(n, n)
                proj_a = project_cone(q_after, cost, w0=proj_b.w, wt0=proj_b.wt)
                warm_w, warm_wt = proj_a.w, proj_a.wt
                w_before = math.sqrt(max(0.0, float((cost.c * proj_b.perp**2).sum())))
                w_after = math.sqrt(max(0.0, float((cost.c * proj_a.perp**2).sum())))
                perp_samples.append(w_before)
                par_samples.append(math.sqrt(max(0.0, float((cost.c * proj_b.parallel**2).sum()))))
                drift_samples.append(w_after - w_before)

            if rec_on:
                Smat = np.zeros(n2, dtype=np.int64)
                Umat = np.zeros(n2, dtype=np.int64)
                for k in idxs:
                    Smat[k] = 1
                for k in unused_k:
                    Umat[k] = 1
                records.append(
                    SlotRecord(
                        t=done,
                        A=np.array(A, dtype=np.int64).reshape(n, n),
                        S=Smat.reshape(n, n),
                        U=Umat.reshape(n, n),
                        weighted_qsum=float(sum(c_flat[k] * Q[k] for k in range(n2))),
                        perp_norm=perp_samples[-1] if sample_now else None,
                        par_norm=par_samples[-1] if sample_now else None,
                        drift_W=drift_samples[-1] if sample_now else None,
                    )
                )

            done += 1

    q_end = np.array(Q, dtype=np.int64)
    s_total = np.zeros(n2, dtype=np.int64)
    for perm, cnt in sched_count.items():
        for i, j in enumerate(perm):
            s_total[i * n + j] += cnt
    conservation_ok = bool(
        np.array_equal(q_end - q_start, arrivals_total - s_total + unused_total)
    )

    perp = np.asarray(perp_samples)
    par = np.asarray(par_samples)
    drift = np.asarray(drift_samples)
    mean_perp = {
        r: (float(np.mean(perp**r)) if perp.size else float("nan")) for r in (1, 2, 4)
    }
    departures = s_total - unused_total

    return RunStats(
        n=n,
        epsilon=model.epsilon,
        seed=cfg.seed,
        stream_key=cfg.stream_key,
        matcher_mode=mode,
        warmup_slots=warmup,
        measured_slots=measured,
        batch_count=cfg.batch_count,
        mean_weighted_qsum=w_acc.mean(),
        stderr_weighted_qsum=w_acc.stderr(),
        unused_service_rate=u_acc.mean(),
        stderr_unused_service=u_acc.stderr(),
        mean_perp_norm_r=mean_perp,
        mean_par_norm=float(par.mean()) if par.size else float("nan"),
        perp_samples=perp,
        par_samples=par,
        drift_samples=drift,
        qu_dot_violation=qu_violation,
        conservation_ok=conservation_ok,
        departure_rate=(departures / measured).reshape(n, n),
        records=records,
    )


@dataclass
class DriftDiagnostics:
    max_abs_drift: float
    bound: float
    within_bound: bool
    rows: list[tuple[float, int, float]]  # (kappa, samples, conditional mean drift)


def drift_diagnostics(
    source,
    cost: CostMatrix,
    a_max: int,
    kappa_grid=None,
) -> DriftDiagnostics:
    """Boundedness and negative-drift diagnostics for the perpendicular norm.

    ``source`` is a RunStats or a list of SlotRecords carrying perp_norm /
    drift_W.  Reports max |dW| against the bound n * sqrt(c_max) * a_max and
    the conditional mean of dW given perp norm >= kappa for each kappa.
    """
    if isinstance(source, RunStats):
        perp, drift = source.perp_samples, source.drift_samples
    else:
        vals = [(r.perp_norm, r.drift_W) for r in source if r.drift_W is not None]
        if not vals:
            raise ValueError("trace has no perp_norm / drift_W samples")
        perp = np.array([v[0] for v in vals])
        drift = np.array([v[1] for v in vals])
    if perp.size == 0:
        raise ValueError("no drift samples available")
    bound = cost.n * math.sqrt(cost.cmax) * a_max
    max_abs = float(np.abs(drift).max())
    if kappa_grid is None:
        kappa_grid = [float(np.percentile(perp, q)) for q in (50, 75, 90)]
    rows = []
    for kappa in kappa_grid:
        mask = perp >= kappa
        cnt = int(mask.sum())
        mean = float(drift[mask].mean()) if cnt else float("nan")
        rows.append((float(kappa), cnt, mean))
    return DriftDiagnostics(
        max_abs_drift=max_abs, bound=bound, within_bound=max_abs <= bound, rows=rows
    )
