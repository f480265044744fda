import math
import warnings

import numpy as np
import pytest

from gslayout.energy import assemble
from gslayout.gscloud import Pose
from gslayout.optimizer import (
    DivergenceError,
    OptimConfig,
    ScheduleConfig,
    ScheduleWarning,
    normalize_energies,
    optimize,
    schedule_weights,
)
from gslayout.pipeline import scene_from_prompt
from gslayout.pools import load_pools

POOLS = load_pools()
LAMP = "object table\nobject lamp\nlamp on table"


def _scene(text=LAMP, points=200):
    return scene_from_prompt(text, POOLS, points=points, structured=True)[0]


@pytest.mark.parametrize("beta", [0.1, 0.5, 0.9])
def test_schedule_key_points(beta):
    T, x = 300, 40
    mid = (x + T) / 2
    assert schedule_weights(0, x, T, beta) == (1.0, 0.0)
    assert abs(schedule_weights(x, x, T, beta)[0] - 1.0) <= 1e-12
    assert abs(schedule_weights(mid, x, T, beta)[0] - (1 - beta / 2)) <= 1e-12
    assert abs(schedule_weights(T, x, T, beta)[0] - (1 - beta)) <= 1e-12


def test_schedule_sums_to_one_and_descends():
    prev = 1.0
    for t in np.linspace(40, 300, 5001):
        lp, ll = schedule_weights(t, 40, 300, 0.5)
        assert abs(lp + ll - 1.0) <= 1e-12
        assert lp <= prev + 1e-15
        prev = lp


def test_schedule_period_oscillates():
    lp = [schedule_weights(t, 0, 300, 0.5, period=50)[0] for t in (0, 50, 100)]
    assert np.allclose(lp, [1.0, 0.5, 1.0], atol=1e-12)


def test_schedule_clamps_late_threshold():
    with pytest.warns(ScheduleWarning):
        lp, _ = schedule_weights(300, 300, 300, 0.5)
    assert np.isclose(lp, 1 - 0.5 / 2 * (1 - math.cos(math.pi)))


def test_normalization_unit_norm():
    rng = np.random.default_rng(0)
    for ep, el in 10.0 ** rng.uniform(-8, 4, size=(1000, 2)):
        a, b = normalize_energies(ep, el)
        assert abs(a * a + b * b - 1.0) <= 1e-12
    assert normalize_energies(0.0, 0.0) == (0.0, 0.0)


def test_config_validation():
    for bad in (dict(T=0), dict(beta=1.0), dict(tau_p=0.0), dict(x_max=400)):
        with pytest.raises(ValueError):
            ScheduleConfig(**bad)
    with pytest.raises(ValueError):
        OptimConfig(method="lbfgs")


def test_phase_one_descends_on_lifted_lamp():
    sc = _scene()
    sc.poses["lamp_0"].translation[2] += 0.5
    res = optimize(sc, ScheduleConfig(T=40, tau_p=1e-9, x_max=40))
    Ep = [r["breakdown"]["E_p"] for r in res.trace]
    assert res.x is None or res.x >= 40
    assert all(b <= a + 1e-12 for a, b in zip(Ep, Ep[1:]))
    assert Ep[-1] < Ep[0]


def test_threshold_cap_warns():
    sc = _scene()
    sc.poses["lamp_0"].translation[2] += 0.5
    with pytest.warns(ScheduleWarning):
        res = optimize(sc, ScheduleConfig(T=20, tau_p=1e-12), trace=False)
    assert res.x == 10


def test_frozen_labels_untouched():
    sc = _scene()
    before = sc.poses["table_0"].copy()
    res = optimize(sc, ScheduleConfig(T=30), labels=["lamp_0"], trace=False)
    assert np.array_equal(res.poses["table_0"].translation, before.translation)
    assert np.array_equal(res.poses["table_0"].rotation, before.rotation)
    with pytest.raises(ValueError):
        optimize(sc, ScheduleConfig(T=5), labels=[])


def test_deterministic():
    a = optimize(_scene(), ScheduleConfig(T=30))
    b = optimize(_scene(), ScheduleConfig(T=30))
    assert a.trace_lines() == b.trace_lines()


def test_divergence_guard():
    sc = _scene()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(DivergenceError) as exc:
            optimize(sc, ScheduleConfig(T=200), OptimConfig(method="gd", lr_t=50.0, lr_r=50.0, lr_floor=1.0))
    assert exc.value.result.status == "diverged"


def test_final_breakdown_matches_poses():
    sc = _scene()
    res = optimize(sc, ScheduleConfig(T=20))
    again = assemble(sc, res.poses)
    assert again.to_dict() == res.final.to_dict()
    assert isinstance(res.poses["lamp_0"], Pose)
