import numpy as np
import pytest

from trafusion import (
    GridSpec,
    NoDataError,
    ReconstructionParams,
    SpeedField,
)
from trafusion.btweight import bt_weight_field
from trafusion.ingest import combine_cellwise, grid_fcd, grid_loop, grid_bt
from trafusion.psm import PhaseField, classify_phases, reconstruct_psm, reconstruct_psm_w
from trafusion.scenario import (
    Bottleneck,
    MovingJam,
    NoiseModel,
    ScenarioConfig,
    SensorLayout,
    desk_default,
    generate_ground_truth,
    sample_fcd,
    synthesize,
)

P = ReconstructionParams()
KMH = 1 / 3.6


def _uniform(spec, v):
    return SpeedField(spec, np.full(spec.shape, v), np.ones(spec.shape))


def _sparse(spec, cells):
    values = np.zeros(spec.shape)
    weights = np.zeros(spec.shape)
    for (i, j), v in cells.items():
        values[i, j] = v
        weights[i, j] = 1.0
    return SpeedField(spec, values, weights)


@pytest.fixture(scope="module")
def spec():
    return GridSpec(0.0, 4000.0, 0.0, 2400.0)


# -------------------------------------------------------------- classification


def test_phase_probabilities_sum_to_one(spec):
    rng = np.random.default_rng(4)
    cells = {
        (int(rng.integers(0, spec.n_x)), int(rng.integers(0, spec.n_t))): float(v)
        for v in rng.uniform(3, 33, 60)
    }
    pf = classify_phases(_sparse(spec, cells), P)
    total = pf.p_free + pf.p_sync + pf.p_wmj
    np.testing.assert_allclose(total, 1.0, atol=1e-9)


def test_uniform_free_flow_saturates(spec):
    pf = classify_phases(_uniform(spec, 120 * KMH), P)
    assert pf.p_free.min() > 0.95


def test_moving_band_classified_as_jam(spec):
    jam = MovingJam(origin=3500.0, onset=0.0, width=600.0, jam_speed=10 * KMH)
    cfg = ScenarioConfig(
        spec=spec, free_speed=100 * KMH, jams=(jam,),
        sensors=SensorLayout(loop_positions=(), bt_positions=()),
        noise=NoiseModel(0, 0, 0),
    )
    truth = generate_ground_truth(cfg)
    pf = classify_phases(truth, P)
    inside = truth.values <= 10 * KMH + 1e-9
    assert np.all(pf.p_wmj[inside] > pf.p_sync[inside])
    assert np.all(pf.p_wmj[inside] > pf.p_free[inside])


def test_stationary_band_classified_as_synchronized(spec):
    b = Bottleneck(location=3000.0, onset=0.0, duration=2400.0,
                   sync_speed=40 * KMH, extent=1000.0)
    cfg = ScenarioConfig(
        spec=spec, free_speed=100 * KMH, bottlenecks=(b,),
        sensors=SensorLayout(loop_positions=(), bt_positions=()),
        noise=NoiseModel(0, 0, 0),
    )
    truth = generate_ground_truth(cfg)
    pf = classify_phases(truth, P)
    inside = truth.values <= 40 * KMH + 1e-9
    assert np.all(pf.p_sync[inside] > pf.p_wmj[inside])
    assert np.all(pf.p_sync[inside] > pf.p_free[inside])


def test_dominant_ties_break_congested(spec):
    third = np.full(spec.shape, 1.0 / 3.0)
    pf = PhaseField(spec, third, third, third)
    assert np.all(pf.dominant() == 2)  # jam phase on exact ties


# ------------------------------------------------------------- reconstruction


def test_constant_fixed_point(spec):
    out = reconstruct_psm(_uniform(spec, 25.0), P)
    np.testing.assert_allclose(out.values, 25.0, rtol=1e-9)


def test_empty_raises(spec):
    with pytest.raises(NoDataError):
        reconstruct_psm(SpeedField.empty(spec), P)


def test_output_bounded_by_data(spec):
    rng = np.random.default_rng(9)
    cells = {
        (int(rng.integers(0, spec.n_x)), int(rng.integers(0, spec.n_t))): float(v)
        for v in rng.uniform(4, 30, 50)
    }
    raw = _sparse(spec, cells)
    out = reconstruct_psm(raw, P)
    _, _, vv = raw.data_cells()
    assert out.values.min() >= vv.min() - 1e-9
    assert out.values.max() <= vv.max() + 1e-9


def test_moving_jam_slope_from_sparse_probes():
    spec = GridSpec(0.0, 10_000.0, 0.0, 7200.0)
    jam = MovingJam(origin=9000.0, onset=600.0, width=900.0, jam_speed=10 * KMH)
    cfg = ScenarioConfig(
        spec=spec, free_speed=100 * KMH, jams=(jam,),
        sensors=SensorLayout(loop_positions=(), bt_positions=(),
                             fcd_penetration=0.10, demand_veh_per_h=1800.0),
        noise=NoiseModel(0, 0, 0),
    )
    truth = generate_ground_truth(cfg)
    raw = grid_fcd(sample_fcd(truth, cfg, seed=11), spec)
    est = reconstruct_psm(raw, P)
    rows, cols = [], []
    for j in range(spec.n_t):
        t = spec.t_centers()[j]
        centre = 9000.0 + jam.wave_speed * (t - jam.onset)
        if t < jam.onset + 120 or centre < 1000.0:
            continue
        col = est.values[:, j]
        if col.min() < 40 * KMH:
            rows.append(int(np.argmin(col)))
            cols.append(j)
    slope = np.polyfit(cols, rows, 1)[0] * spec.dx / spec.dt
    assert slope == pytest.approx(jam.wave_speed, rel=0.2)


def test_bottleneck_front_pinned_from_sparse_probes():
    # the reconstructed downstream front must not drift: its per-column
    # position (steepest spatial speed rise) stays within one cell of its
    # median, and sits within the kernel's spatial scale of the bottleneck
    spec = GridSpec(0.0, 10_000.0, 0.0, 7200.0)
    b = Bottleneck(location=6000.0, onset=1800.0, duration=3600.0,
                   sync_speed=30 * KMH, extent=1500.0)
    cfg = ScenarioConfig(
        spec=spec, free_speed=100 * KMH, bottlenecks=(b,),
        sensors=SensorLayout(loop_positions=(), bt_positions=(),
                             fcd_penetration=0.10, demand_veh_per_h=1800.0),
        noise=NoiseModel(0, 0, 0),
    )
    truth = generate_ground_truth(cfg)
    raw = grid_fcd(sample_fcd(truth, cfg, seed=5), spec)
    est = reconstruct_psm(raw, P)
    fronts = []
    for j in range(spec.n_t):
        t = spec.t_centers()[j]
        if not (b.onset + 600 <= t < b.onset + b.duration - 600):
            continue
        col = est.values[:, j]
        if col.min() > 50 * KMH:
            continue
        fronts.append(float(np.argmax(np.diff(col))) + 0.5)
    fronts = np.array(fronts)
    assert fronts.size > 30
    assert np.abs(fronts - np.median(fronts)).max() <= 1.0
    front_row = (b.location - spec.x_min) / spec.dx
    assert abs(np.median(fronts) - front_row) <= P.sigma / spec.dx


# ----------------------------------------------------------------- psm-w


@pytest.fixture(scope="module")
def desk_fields():
    cfg = desk_default()
    truth, data = synthesize(cfg, seed=3)
    spec = cfg.spec
    return {
        "spec": spec,
        "loop": grid_loop(data.loops, spec),
        "fcd": grid_fcd(data.fcd, spec),
        "bt": grid_bt(data.bt, spec),
        "btw": bt_weight_field(data.bt, spec, P.bt),
    }


def test_zero_bt_weight_bit_equals_psm(desk_fields):
    d = desk_fields
    a = reconstruct_psm_w(d["loop"], d["fcd"], d["bt"], np.zeros(d["spec"].shape), P)
    b = reconstruct_psm(combine_cellwise([d["loop"], d["fcd"]]), P)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.weights, b.weights)


def test_unit_bt_weight_equals_plain_fusion(desk_fields):
    d = desk_fields
    a = reconstruct_psm_w(d["loop"], d["fcd"], d["bt"], np.ones(d["spec"].shape), P)
    b = reconstruct_psm(combine_cellwise([d["loop"], d["fcd"], d["bt"]]), P)
    assert np.array_equal(a.values, b.values)


def test_monotone_trust_phase_stable(spec):
    # lowering every trust weight moves the output cell-wise toward the
    # reconstruction without travel-time data (fixture chosen congested
    # throughout so no cell flips its dominant phase)
    rng = np.random.default_rng(2)
    loop_cells = {
        (int(rng.integers(0, spec.n_x)), int(rng.integers(0, spec.n_t))): 15 * KMH
        for _ in range(80)
    }
    fcd_cells = {
        (int(rng.integers(0, spec.n_x)), int(rng.integers(0, spec.n_t))): 14 * KMH
        for _ in range(80)
    }
    bt_cells = {
        (i, j): 22 * KMH
        for i in range(spec.n_x)
        for j in range(spec.n_t)
        if (i + j) % 3 == 0
    }
    lf, ff, bf = _sparse(spec, loop_cells), _sparse(spec, fcd_cells), _sparse(spec, bt_cells)
    btw = np.where(bf.weights > 0, 0.8, 0.0)
    ref = reconstruct_psm(combine_cellwise([lf, ff]), P)
    prev = None
    for lam in (1.0, 0.7, 0.4, 0.2, 0.1, 0.0):
        est = reconstruct_psm_w(lf, ff, bf, lam * btw, P)
        dist = np.abs(1.0 / est.values - 1.0 / ref.values)
        if prev is not None:
            assert np.all(dist <= prev + 1e-9)
        prev = dist
    assert prev.max() == 0.0  # lam 0 coincides with the reference


def test_monotone_trust_global_on_scenario(desk_fields):
    # on a full scenario individual cells may flip phase while trust fades,
    # but the overall distance to the no-travel-time output still shrinks
    d = desk_fields
    ref = reconstruct_psm(combine_cellwise([d["loop"], d["fcd"]]), P)
    last = None
    for lam in (1.0, 0.5, 0.2, 0.05, 0.0):
        est = reconstruct_psm_w(d["loop"], d["fcd"], d["bt"], lam * d["btw"], P)
        dist = np.abs(1.0 / est.values - 1.0 / ref.values)
        score = (dist.max(), dist.mean())
        if last is not None:
            assert score[0] <= last[0] + 1e-9
            assert score[1] <= last[1] + 1e-12
        last = score
