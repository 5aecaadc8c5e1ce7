import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from losslab.analysis import (ComparisonReport, bump_statistic, compare, disagreement_rate,
                              functional_distance, output_disagreement, output_distance,
                              trajectory_series)
from losslab.landscape import InterpolationSpec, SurfaceSample, sweep
from losslab.model import InitScheme, ModelSpec, build, initialize
from losslab.optim import OptimizerSpec, SwitchSchedule, run_schedule
from losslab.rng import Stream

from conftest import blob_data

SPEC = ModelSpec((6, 5, 3), batch_norm=True)


def params(seed, scale=1.0):
    m = build(SPEC)
    return m.wrap(scale * np.random.default_rng(seed).normal(size=m.num_params))


seeds = st.integers(0, 2**31)


@settings(max_examples=25, deadline=None)
@given(seeds, seeds, seeds)
def test_functional_distance_is_a_bounded_metric(s1, s2, s3):
    data = blob_data(n=30)
    model = build(SPEC)
    a, b, c = params(s1, 3), params(s2, 3), params(s3, 3)
    dab = functional_distance(model, a, b, data)
    assert dab == functional_distance(model, b, a, data)
    assert functional_distance(model, a, a, data) == 0.0
    assert 0.0 <= dab <= math.sqrt(2)
    assert functional_distance(model, a, c, data) <= dab + functional_distance(model, b, c, data) + 1e-12


def test_output_distance_reference_values():
    p1 = np.array([[1.0, 0.0], [0.5, 0.5]])
    p2 = np.array([[0.0, 1.0], [0.5, 0.5]])
    # rows differ by sqrt(2) and 0, so RMS = sqrt((2 + 0) / 2) = 1
    assert output_distance(p1, p2) == pytest.approx(1.0, abs=1e-15)
    assert output_disagreement(p1, p2) == 0.5
    with pytest.raises(ValueError):
        output_distance(np.zeros((0, 2)), np.zeros((0, 2)))


@settings(max_examples=25, deadline=None)
@given(seeds, seeds)
def test_disagreement_symmetric_and_zero_on_self(s1, s2):
    data = blob_data(n=30)
    model = build(SPEC)
    a, b = params(s1), params(s2)
    assert disagreement_rate(model, a, a, data) == 0.0
    assert disagreement_rate(model, a, b, data) == disagreement_rate(model, b, a, data)


def _samples(losses):
    return [SurfaceSample(float(i), None, l, 1.0) for i, l in enumerate(losses)]


def test_bump_statistic_uses_max_endpoint():
    stat = bump_statistic(_samples([0.1, 0.5, 0.9, 0.3]))
    assert stat["bump_height"] == pytest.approx(0.6)
    assert stat["endpoint_losses"] == (0.1, 0.3)
    assert bump_statistic(_samples([0.2, 0.1, 0.3]))["bump_height"] < 0
    with pytest.raises(ValueError):
        bump_statistic(_samples([0.1, 0.2]))


def test_bump_keeps_diverged_interior():
    assert bump_statistic(_samples([0.1, math.inf, 0.2]))["bump_height"] == math.inf


def test_report_validation_and_dict():
    r = ComparisonReport(0.1, 0.05, 0.3, (0.01, 0.02), "a<->b")
    assert r.to_dict()["endpoint_losses"] == [0.01, 0.02]
    with pytest.raises(ValueError):
        ComparisonReport(0.1, 1.5, 0.0, (0, 0))
    with pytest.raises(ValueError):
        ComparisonReport(-0.1, 0.5, 0.0, (0, 0))


def test_compare_and_trajectory_on_short_runs():
    data = blob_data(n=90)
    theta0 = initialize(build(SPEC), InitScheme(), Stream(2, "init"))
    runs = [run_schedule(build(SPEC), theta0, SwitchSchedule.single(OptimizerSpec.default(k, eta=0.05)),
                         3, data, 2, batch_size=16) for k in ("sgd", "rmsprop")]
    model = build(SPEC)
    path = sweep(InterpolationSpec("linear", [runs[0].final, runs[1].final], resolution=5), model, data)
    rep = compare(model, runs[0].final, runs[1].final, data, path, path_id="x")
    assert rep.path_id == "x" and 0 <= rep.disagreement_rate <= 1
    series = trajectory_series(runs[0].series)
    assert series.init_norm == pytest.approx(np.linalg.norm(theta0.data))
    assert list(series.epoch) == [0, 1, 2, 3]
    assert series.nearly_identical()
