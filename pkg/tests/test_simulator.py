from __future__ import annotations

import numpy as np
import pytest

from switchlab.scheduling import MatcherConfig, Schedule
from switchlab.simulator import (
    QueueState,
    RunConfig,
    default_warmup,
    derive_rngs,
    drift_diagnostics,
    run,
    step,
)
from switchlab.traffic import ArrivalModel, uniform_nu
from switchlab.wlinalg import CostMatrix, cdot, project_cone


def ones_cost(n=2):
    return CostMatrix(np.ones((n, n)))


def bernoulli(eps, n=2):
    return ArrivalModel.bernoulli(uniform_nu(n), eps)


def small_cfg(**kw):
    base = dict(
        c=ones_cost(),
        model=bernoulli(0.3),
        measured=20_000,
        warmup=2_000,
        seed=3,
        ssc_stride=50,
    )
    base.update(kw)
    return RunConfig(**base)


# -------- single-slot dynamics --------

def test_step_empty_queue_all_service_unused():
    c = ones_cost()
    model = bernoulli(0.5)
    a_rng, t_rng = derive_rngs(0)
    state = QueueState.empty(2)
    nxt, rec = step(state, model, c, MatcherConfig(), a_rng, t_rng,
                    arrivals=np.zeros((2, 2), dtype=int))
    assert (nxt.Q == 0).all()
    assert (rec.U == rec.S).all()
    assert nxt.t == 1


def test_step_partial_unused_service():
    c = ones_cost()
    model = bernoulli(0.5)
    a_rng, t_rng = derive_rngs(0)
    state = QueueState(Q=np.array([[1, 0], [0, 0]]))
    nxt, rec = step(state, model, c, MatcherConfig(), a_rng, t_rng,
                    schedule=Schedule((0, 1)),
                    arrivals=np.zeros((2, 2), dtype=int))
    assert rec.U.tolist() == [[0, 0], [0, 1]]
    assert (nxt.Q == 0).all()


def test_step_same_slot_arrivals_are_servable():
    c = ones_cost()
    model = bernoulli(0.5)
    a_rng, t_rng = derive_rngs(0)
    state = QueueState.empty(2)
    nxt, rec = step(state, model, c, MatcherConfig(), a_rng, t_rng,
                    schedule=Schedule((0, 1)),
                    arrivals=np.eye(2, dtype=int))
    assert (rec.U == 0).all()
    assert (nxt.Q == 0).all()


def test_step_random_slots_keep_invariants(rng):
    c = CostMatrix([[1.0, 2.0], [2.0, 1.0]])
    model = bernoulli(0.2)
    a_rng, t_rng = derive_rngs(9)
    state = QueueState.empty(2)
    for _ in range(2000):
        nxt, rec = step(state, model, c, MatcherConfig(), a_rng, t_rng)
        assert (nxt.Q >= 0).all()
        assert set(np.unique(rec.U)) <= {0, 1}
        assert (rec.U <= rec.S).all()
        assert cdot(nxt.Q, rec.U, c) == 0.0
        assert (nxt.Q == state.Q + rec.A - rec.S + rec.U).all()
        state = nxt


# -------- full runs --------

def test_run_slot_records_and_conservation():
    stats = run(small_cfg(measured=5_000, warmup=500, record_slots=True, ssc_stride=10))
    assert stats.conservation_ok
    assert stats.qu_dot_violation == 0.0
    Q = np.zeros((2, 2), dtype=np.int64)
    for rec in stats.records:
        Q = Q + rec.A - rec.S + rec.U
        assert (Q >= 0).all()
        assert (rec.U <= rec.S).all()
        assert float((Q * rec.U).sum()) == 0.0
    assert len(stats.records) == stats.warmup_slots + stats.measured_slots


def test_run_reproducible():
    a = run(small_cfg())
    b = run(small_cfg())
    assert a.mean_weighted_qsum == b.mean_weighted_qsum
    assert a.unused_service_rate == b.unused_service_rate
    assert np.array_equal(a.perp_samples, b.perp_samples)
    c = run(small_cfg(seed=4))
    assert c.mean_weighted_qsum != a.mean_weighted_qsum


def test_run_unused_service_identity():
    stats = run(small_cfg(model=bernoulli(0.5), measured=200_000, warmup=10_000))
    assert abs(stats.unused_service_rate - 2 * 0.5) <= 3 * stats.stderr_unused_service


def test_run_departure_rates_match_arrival_rates():
    model = bernoulli(0.2)
    stats = run(small_cfg(model=model, measured=200_000, warmup=10_000))
    se = np.sqrt(model.mean * (1 - model.mean) / stats.measured_slots)
    assert np.all(np.abs(stats.departure_rate - model.mean) <= 5 * se + 1e-3)


def test_run_queue_scaling_with_epsilon():
    big = run(small_cfg(model=bernoulli(0.1), measured=400_000, warmup=50_000, seed=21))
    small = run(small_cfg(model=bernoulli(0.05), measured=800_000, warmup=100_000, seed=22))
    ratio = small.mean_weighted_qsum / big.mean_weighted_qsum
    assert 1.6 <= ratio <= 2.6


def test_run_measured_trimmed_to_batches():
    stats = run(small_cfg(measured=20_011))
    assert stats.measured_slots == (20_011 // 30) * 30
    assert stats.batch_count == 30
    assert stats.stderr_weighted_qsum > 0


def test_run_hungarian_mode_matches_dynamics():
    stats = run(small_cfg(matcher=MatcherConfig(mode="hungarian"), measured=5_000, warmup=500))
    assert stats.matcher_mode == "hungarian"
    assert stats.conservation_ok
    assert abs(stats.unused_service_rate - 2 * 0.3) < 0.05


def test_run_config_validation():
    with pytest.raises(ValueError):
        small_cfg(batch_count=10)
    with pytest.raises(ValueError):
        small_cfg(measured=10)
    with pytest.raises(ValueError):
        small_cfg(warmup=-1)
    with pytest.raises(ValueError):
        RunConfig(c=ones_cost(3), model=bernoulli(0.3, 2), measured=1000)


def test_default_warmup_heuristic():
    assert default_warmup(0.5) == 100_000
    assert default_warmup(0.01) == 200_000


# -------- drift diagnostics --------

def test_drift_bound_and_negative_conditional_drift():
    stats = run(small_cfg(model=bernoulli(0.1), measured=200_000, warmup=20_000,
                          ssc_stride=10, seed=5))
    diag = drift_diagnostics(stats, ones_cost(), a_max=1)
    assert diag.bound == pytest.approx(2.0)
    assert diag.within_bound
    assert diag.max_abs_drift <= diag.bound
    kappa90 = float(np.percentile(stats.perp_samples, 90))
    diag90 = drift_diagnostics(stats, ones_cost(), a_max=1, kappa_grid=[kappa90])
    _, cnt, mean_drift = diag90.rows[0]
    assert cnt > 100
    assert mean_drift < 0


def test_drift_diagnostics_from_records():
    stats = run(small_cfg(measured=2_000, warmup=100, record_slots=True, ssc_stride=5))
    diag = drift_diagnostics(stats.records, ones_cost(), a_max=1)
    assert diag.within_bound
    with pytest.raises(ValueError):
        drift_diagnostics([r for r in stats.records if r.drift_W is None],
                          ones_cost(), a_max=1)


def test_queues_drain_without_arrivals():
    # degenerate no-arrival regime: perpendicular norm cannot rise, and the
    # system empties
    c = ones_cost()
    model = bernoulli(0.5)
    a_rng, t_rng = derive_rngs(1)
    state = QueueState(Q=np.array([[7, 1], [0, 4]]))
    zero = np.zeros((2, 2), dtype=int)
    norms = []
    for _ in range(40):
        proj = project_cone(state.Q.astype(float), c)
        norms.append(np.sqrt(max(0.0, (c.c * proj.perp**2).sum())))
        state, _ = step(state, model, c, MatcherConfig(), a_rng, t_rng, arrivals=zero)
    assert (state.Q == 0).all()
    tail = norms[-10:]
    assert all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))
    assert norms[-1] == pytest.approx(0.0, abs=1e-9)
