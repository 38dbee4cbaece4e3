"""Smoke test for the spflow extension module.

Run with ``python python/smoke_test.py`` or ``pytest python/``.
"""

import json
import math
import pathlib

import pytest

import spflow

SCENARIOS = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "scenarios"


def test_closed_form_families():
    d = spflow.Distribution.delayed_exp(2.0, delay=0.5, alpha=0.7)
    assert d.family == "delayed_exp"
    mean, var = d.moments()
    assert math.isclose(mean, 0.5 + 0.7 / 2.0)
    assert d.cdf(0.4) == 0.0
    assert math.isclose(d.atoms()[0][1], 0.3)
    back = spflow.Distribution.from_json(d.to_json())
    assert back.to_json() == d.to_json()


def test_numeric_composition():
    e = spflow.Distribution.exponential(1.0).discretize(points=4096)
    s = e
    for _ in range(9):
        s = s.convolve(e)
    assert abs(s.mean() - 10.0) < 1e-2
    m = e.max_compose(e)
    assert abs(m.mean() - 1.5) < 1e-2
    again = spflow.NumericDistribution.from_csv(m.to_csv())
    assert abs(again.mean() - m.mean()) < 1e-9


def test_rate_schedules():
    rates = spflow.rate_schedule(6.0, [1.0, 2.0])
    assert rates == pytest.approx([4.0, 2.0])
    queued = spflow.rate_schedule_queued(8.0, [9.0, 8.0])
    assert sum(queued) == pytest.approx(8.0)
    with pytest.raises(ValueError):
        spflow.rate_schedule(-1.0, [1.0])


def test_fit_constant():
    d = spflow.fit([2.0, 2.0, 2.0])
    assert d.family == "point_mass"


def test_scenario_allocation():
    sc = spflow.Scenario.load(str(SCENARIOS / "fig5.json"))
    assert sc.slot_ids == ["a", "b", "c", "d", "e", "f"]
    plan = sc.allocate("proposed")
    assert plan.method == "proposed"
    assert plan.binding["b"] == "mu9"
    best = sc.allocate("optimal")
    assert best.mean <= plan.mean + 1e-12
    mean, var, ks = sc.simulate(plan, trials=20000, seed=3)
    assert abs(mean - plan.mean) < 0.05 * plan.mean
    assert ks < 0.03
    report = json.loads(sc.compare(trials=2000, seed=1))
    assert {r["method"] for r in report["rows"]} == {"proposed", "optimal", "baseline"}


def test_invalid_scenario():
    with pytest.raises(ValueError):
        spflow.Scenario.from_json('{"servers": [], "workflow": {"type": "slot"}}')


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
