import numpy as np
import pytest

from trafusion import (
    BtSample,
    DataSplit,
    FcdTrace,
    GridSpec,
    LoopRecord,
    NoDataError,
    SensorData,
    SpeedField,
    imae,
    mape,
    run_experiment,
    split_train_test,
    virtual_trajectory,
)
from trafusion.evaluate import aggregate_results, gridded_test_cells

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")


def _field(spec, values):
    return SpeedField(spec, values, np.ones(spec.shape))


def fixed_step_travel_time(field, t_start, x_start, x_end, h=1e-3):
    """Naive fixed-step oracle for the event-stepping integrator."""
    spec = field.spec
    t, x = t_start, x_start
    values = field.values
    while x < x_end:
        i = min(int((x - spec.x_min) // spec.dx), spec.n_x - 1)
        j = min(max(int((t - spec.t_min) // spec.dt), 0), spec.n_t - 1)
        x += values[i, j] * h
        t += h
    return t - t_start


# --------------------------------------------------------------------- split


def _loops(n_detectors, per_det=3):
    recs = []
    for d in range(n_detectors):
        for j in range(per_det):
            recs.append(LoopRecord(f"d{d:02d}", 100.0 * d + 50.0, 60.0 * j, 20.0))
    return recs


def _traces(n):
    return [
        FcdTrace(f"v{k:04d}", np.array([0.0, 10.0]), np.array([0.0, 100.0]))
        for k in range(n)
    ]


def test_split_27_detectors_half():
    data = SensorData(loops=_loops(27))
    split = split_train_test(data, 0.5, seed=3)
    train_ids = {r.detector_id for r in split.train.loops}
    test_ids = {r.detector_id for r in split.test.loops}
    assert len(train_ids) in (13, 14)
    assert len(train_ids) + len(test_ids) == 27
    assert not train_ids & test_ids
    # whole detectors move together
    assert len(split.train.loops) == 3 * len(train_ids)


def test_split_deterministic():
    data = SensorData(loops=_loops(8), fcd=tuple(_traces(10)))
    a = split_train_test(data, 0.5, seed=42)
    b = split_train_test(data, 0.5, seed=42)
    assert a.train == b.train and a.test == b.test
    c = split_train_test(data, 0.5, seed=43)
    assert a.train != c.train


def test_split_traces_per_trace():
    data = SensorData(fcd=tuple(_traces(1578)))
    split = split_train_test(data, 0.5, seed=0)
    assert len(split.train.fcd) == 789
    assert len(split.test.fcd) == 789


def test_split_single_unit_all_train():
    data = SensorData(loops=_loops(1), fcd=tuple(_traces(4)))
    split = split_train_test(data, 0.5, seed=0)
    assert len(split.train.loops) == 3
    assert len(split.test.loops) == 0


# ---------------------------------------------------------------------- imae


@pytest.fixture
def spec():
    return GridSpec(0.0, 2000.0, 0.0, 600.0, dx=100.0, dt=60.0)


def test_imae_exact_match_zero(spec):
    est = _field(spec, np.full(spec.shape, 20.0))
    cells = (np.array([0, 1]), np.array([0, 0]), np.array([20.0, 20.0]))
    assert imae(est, cells) == 0.0


def test_imae_single_cell(spec):
    est = _field(spec, np.full(spec.shape, 20.0))
    cells = (np.array([0]), np.array([0]), np.array([10.0]))
    assert imae(est, cells) == pytest.approx(0.05)


def test_imae_mean(spec):
    est = _field(spec, np.full(spec.shape, 20.0))
    # errors 0.05 and 0.01 -> mean 0.03
    v2 = 1.0 / (1.0 / 20.0 + 0.01)
    cells = (np.array([0, 0]), np.array([0, 1]), np.array([10.0, v2]))
    assert imae(est, cells) == pytest.approx(0.03)


def test_imae_empty_errors(spec):
    est = _field(spec, np.full(spec.shape, 20.0))
    with pytest.raises(NoDataError):
        imae(est, (np.array([]), np.array([]), np.array([])))


# -------------------------------------------------------- virtual trajectories


def test_trajectory_constant_field(spec):
    est = _field(spec, np.full(spec.shape, 20.0))
    res = virtual_trajectory(est, 0.0, 0.0, 2000.0)
    assert res.t_end == pytest.approx(100.0, abs=1e-9)
    assert not res.extrapolated


def test_trajectory_two_segments(spec):
    values = np.full(spec.shape, 10.0)
    values[10:, :] = 20.0
    est = _field(spec, values)
    res = virtual_trajectory(est, 0.0, 0.0, 2000.0)
    assert res.t_end == pytest.approx(150.0, abs=1e-9)


def test_trajectory_time_varying_column_switch():
    spec = GridSpec(0.0, 1000.0, 0.0, 600.0, dx=100.0, dt=60.0)
    values = np.full(spec.shape, 10.0)
    values[:, 1:] = 20.0  # all cells switch at t=60
    est = _field(spec, values)
    res = virtual_trajectory(est, 0.0, 0.0, 900.0)
    # 600 m in the first minute, remaining 300 m at 20 m/s
    assert res.t_end == pytest.approx(75.0, abs=1e-9)
    oracle = fixed_step_travel_time(est, 0.0, 0.0, 900.0)
    assert res.t_end == pytest.approx(oracle, abs=0.05)


def test_trajectory_extrapolation_flagged(spec):
    est = _field(spec, np.full(spec.shape, 1.0))
    res = virtual_trajectory(est, 500.0, 0.0, 2000.0)
    assert res.extrapolated
    assert res.t_end == pytest.approx(500.0 + 2000.0, abs=1e-9)


def test_trajectory_monotone_in_speed(spec):
    rng = np.random.default_rng(8)
    base = rng.uniform(5.0, 30.0, spec.shape)
    est_slow = _field(spec, base)
    est_fast = _field(spec, base * 1.2)
    slow = virtual_trajectory(est_slow, 0.0, 0.0, 2000.0).t_end
    fast = virtual_trajectory(est_fast, 0.0, 0.0, 2000.0).t_end
    assert fast < slow


def test_trajectory_random_fields_match_fixed_step_oracle():
    rng = np.random.default_rng(17)
    spec = GridSpec(0.0, 2000.0, 0.0, 1200.0, dx=100.0, dt=60.0)
    for _ in range(20):
        values = rng.uniform(5.0, 30.0, spec.shape)
        est = _field(spec, values)
        t0 = float(rng.uniform(0.0, 300.0))
        res = virtual_trajectory(est, t0, 0.0, 2000.0)
        oracle = fixed_step_travel_time(est, t0, 0.0, 2000.0)
        assert res.t_end - t0 == pytest.approx(oracle, abs=0.05)


# ---------------------------------------------------------------------- mape


def test_mape_exact_zero(spec):
    est = _field(spec, np.full(spec.shape, 20.0))
    s = BtSample("a", 0.0, 2000.0, 0.0, 100.0)
    assert mape(est, [s]) == pytest.approx(0.0, abs=1e-6)


def test_mape_definition(spec):
    est = _field(spec, np.full(spec.shape, 2000.0 / 110.0))
    s = BtSample("a", 0.0, 2000.0, 0.0, 100.0)  # measured 100 s, virtual 110 s
    assert mape(est, [s]) == pytest.approx(0.10, rel=1e-9)


def test_mape_mean_of_two(spec):
    est = _field(spec, np.full(spec.shape, 20.0))
    s1 = BtSample("a", 0.0, 2000.0, 0.0, 100.0 / 1.1)  # rel error 0.1
    s2 = BtSample("b", 0.0, 2000.0, 0.0, 100.0 / 1.3)  # rel error 0.3
    assert mape(est, [s1, s2]) == pytest.approx(0.2, rel=1e-9)


def test_mape_empty_errors(spec):
    est = _field(spec, np.full(spec.shape, 20.0))
    with pytest.raises(NoDataError):
        mape(est, [])


# ------------------------------------------------------------ run_experiment


def _tiny_dataset():
    spec = GridSpec(0.0, 2000.0, 0.0, 1200.0, dx=100.0, dt=60.0)
    rng = np.random.default_rng(0)
    loops = []
    for d, pos in enumerate((300.0, 900.0, 1500.0)):
        for j in range(spec.n_t):
            loops.append(LoopRecord(f"d{d}", pos, 60.0 * j, float(rng.uniform(8, 25))))
    fcd = []
    for k in range(14):
        t0 = float(rng.uniform(0, 900))
        ts = t0 + np.arange(12) * 10.0
        xs = np.minimum(np.cumsum(np.full(12, 150.0)) - 150.0, 2000.0)
        fcd.append(FcdTrace(f"v{k}", ts, xs))
    bt = []
    for k in range(16):
        t0 = float(rng.uniform(0, 900))
        bt.append(BtSample(f"b{k}", 200.0, 1800.0, t0, t0 + float(rng.uniform(90, 220))))
    return SensorData(tuple(loops), tuple(fcd), tuple(bt)), spec


def test_run_experiment_counts_and_determinism():
    data, spec = _tiny_dataset()
    rows1 = run_experiment(data, spec, n_runs=1, seed=7, threads=1,
                           algorithms=("secavg", "asm"), combinations=("LOOP",))
    assert len(rows1) == 2
    rows2 = run_experiment(data, spec, n_runs=1, seed=7, threads=1,
                           algorithms=("secavg", "asm"), combinations=("LOOP",))
    assert rows1 == rows2 or all(
        a.imae == b.imae and a.mape == b.mape for a, b in zip(rows1, rows2)
    )


def test_run_experiment_thread_count_invariant():
    data, spec = _tiny_dataset()
    kw = dict(n_runs=3, seed=1, algorithms=("asm", "psm"), combinations=("LOOP+FCD", "FCD"))
    rows1 = run_experiment(data, spec, threads=1, **kw)
    rows4 = run_experiment(data, spec, threads=4, **kw)
    assert [(r.algorithm, r.sensors, r.run, r.imae, r.mape) for r in rows1] == [
        (r.algorithm, r.sensors, r.run, r.imae, r.mape) for r in rows4
    ]


def test_run_experiment_aggregate():
    data, spec = _tiny_dataset()
    rows = run_experiment(data, spec, n_runs=2, seed=3, threads=2,
                          algorithms=("secavg",), combinations=("LOOP", "LOOP+BT"))
    aggs = aggregate_results(rows)
    assert {a["stat"] for a in aggs} == {"mean", "std"}
    assert len(aggs) == 4  # 2 combos x 2 stats


def test_test_cells_union_of_loop_and_fcd():
    data, spec = _tiny_dataset()
    split = split_train_test(data, 0.5, seed=2)
    ii, jj, vv = gridded_test_cells(split.test, spec)
    assert ii.size > 0
    assert vv.min() > 0
