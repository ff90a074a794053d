import numpy as np
import pytest

from trafusion import (
    BtSample,
    FcdTrace,
    GridSpec,
    LoopRecord,
    NoDataError,
    define_sections,
    reconstruct_section_average,
    section_average_loop,
    section_average_traces,
)

FILL = 100 / 3.6


@pytest.fixture
def spec():
    return GridSpec(0.0, 5000.0, 0.0, 600.0, dx=100.0, dt=60.0)


def test_sections_midpoint_rule(spec):
    part = define_sections([1000.0, 3000.0], spec)
    np.testing.assert_allclose(part.boundaries, [0.0, 2000.0, 5000.0])


def test_sections_single_detector(spec):
    part = define_sections([2500.0], spec)
    np.testing.assert_allclose(part.boundaries, [0.0, 5000.0])
    assert part.n_sections == 1


def test_sections_three_detectors(spec):
    part = define_sections([0.0, 100.0, 200.0], spec)
    np.testing.assert_allclose(part.boundaries, [0.0, 50.0, 150.0, 5000.0])


def test_sections_no_detectors(spec):
    part = define_sections([], spec)
    assert part.n_sections == 1


# --------------------------------------------------------------- loop averages


def _loop_series(det, pos, speeds, dt=60.0):
    return [
        LoopRecord(det, pos, j * dt, v) for j, v in enumerate(speeds) if v is not None
    ]


def test_loop_single_detector_constant(spec):
    recs = _loop_series("d", 2500.0, [20.0] * spec.n_t)
    part = define_sections([2500.0], spec)
    out = section_average_loop(recs, part, spec)
    np.testing.assert_allclose(out.values, 20.0)
    assert np.all(out.weights == 1.0)


def test_loop_missing_minute_takes_nearest_earlier(spec):
    speeds = [10.0] * spec.n_t
    speeds[3] = None  # outage; neighbors at j=2 (10) and j=4
    speeds[4] = 30.0
    recs = _loop_series("d", 2500.0, speeds)
    out = section_average_loop(recs, define_sections([2500.0], spec), spec)
    # equidistant neighbors: the earlier measurement wins
    assert out.values[0, 3] == pytest.approx(10.0)


def test_loop_two_detectors_step_at_midpoint(spec):
    recs = _loop_series("a", 1000.0, [10.0] * spec.n_t) + _loop_series(
        "b", 3000.0, [30.0] * spec.n_t
    )
    out = section_average_loop(recs, define_sections([1000.0, 3000.0], spec), spec)
    # boundary at 2000 m -> rows 0..19 from detector a, rows 20.. from b
    assert out.values[19, 0] == pytest.approx(10.0)
    assert out.values[20, 0] == pytest.approx(30.0)


def test_loop_dead_detector_uses_domain_neighbors(spec):
    recs = _loop_series("a", 1000.0, [20.0] * spec.n_t)
    part = define_sections([1000.0, 3000.0], spec)  # detector b never reports
    out = section_average_loop(recs, part, spec)
    assert out.values[40, 5] == pytest.approx(20.0)


# -------------------------------------------------------------- trace averages


def test_traces_constant_speed(spec):
    tr = FcdTrace("v", np.array([0.0, 250.0]), np.array([0.0, 5000.0]))
    part = define_sections([1000.0, 3000.0], spec)
    out = section_average_traces([tr], part, spec, FILL)
    crossed_cols = [0, 1, 2, 3, 4]
    for j in crossed_cols:
        assert out.values[0, j] == pytest.approx(20.0, rel=1e-9)


def test_traces_distance_over_time_quotient(spec):
    # two vehicles inside one (section, step): 100 m/10 s and 300 m/10 s
    t1 = FcdTrace("a", np.array([0.0, 10.0]), np.array([100.0, 200.0]))
    t2 = FcdTrace("b", np.array([20.0, 30.0]), np.array([100.0, 400.0]))
    part = define_sections([2500.0], spec)
    out = section_average_traces([t1, t2], part, spec, FILL)
    assert out.values[0, 0] == pytest.approx(20.0, rel=1e-9)  # 400 m / 20 s


def test_traces_temporal_linear_interpolation(spec):
    part = define_sections([2500.0], spec)
    t1 = FcdTrace("a", np.array([10.0, 20.0]), np.array([100.0, 200.0]))  # 10 m/s col 0
    t2 = FcdTrace("b", np.array([130.0, 140.0]), np.array([100.0, 400.0]))  # 30 m/s col 2
    out = section_average_traces([t1, t2], part, spec, FILL)
    assert out.values[0, 1] == pytest.approx(20.0, rel=1e-9)


def test_traces_never_crossed_section_filled(spec):
    part = define_sections([1000.0, 3000.0], spec)
    tr = FcdTrace("a", np.array([0.0, 10.0]), np.array([100.0, 200.0]))
    out = section_average_traces([tr], part, spec, FILL)
    assert out.values[-1, 0] == pytest.approx(FILL)


def test_traces_accept_bt_samples(spec):
    s = BtSample("b", 0.0, 5000.0, 0.0, 250.0)
    part = define_sections([0.0, 5000.0], spec)
    out = section_average_traces([s], part, spec, FILL)
    assert out.values[0, 0] == pytest.approx(20.0, rel=1e-9)


def test_traces_single_trace_conservation(spec):
    # one trace: section speed is exactly distance over time, no distortion
    tr = FcdTrace("v", np.array([7.0, 31.0]), np.array([120.0, 480.0]))
    part = define_sections([2500.0], spec)
    out = section_average_traces([tr], part, spec, FILL)
    assert out.values[0, 0] == pytest.approx(360.0 / 24.0, rel=1e-12)


# -------------------------------------------------------------------- fusion


def _const_field(spec, v):
    from trafusion import SpeedField

    return SpeedField(spec, np.full(spec.shape, float(v)), np.ones(spec.shape))


def test_fusion_single_source_identity(spec):
    f = _const_field(spec, 22.0)
    out = reconstruct_section_average([f])
    np.testing.assert_allclose(out.values, 22.0)


def test_fusion_arithmetic_mean(spec):
    out = reconstruct_section_average([_const_field(spec, 20.0), _const_field(spec, 40.0)])
    np.testing.assert_allclose(out.values, 30.0)


def test_fusion_three_sources(spec):
    out = reconstruct_section_average(
        [_const_field(spec, 10.0), _const_field(spec, 20.0), _const_field(spec, 30.0)]
    )
    np.testing.assert_allclose(out.values, 20.0)


def test_fusion_empty_errors():
    with pytest.raises(NoDataError):
        reconstruct_section_average([])
