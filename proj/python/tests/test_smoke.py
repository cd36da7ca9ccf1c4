import numpy as np
import pytest

import dyntomo

SMALL = {
    "grid": {"n": 12},
    "phantom": {"n": 12, "n_t": 3},
    "solver": {"outer_max_iters": 2, "inner_max_iters": 100},
    "seed": 5,
}


def test_default_config_round_trips():
    cfg = dyntomo.default_config()
    assert cfg["grid"]["n"] == 42
    assert cfg["solver"]["alpha"] == 0.1


def test_schedule_shapes():
    sched = dyntomo.schedule({**SMALL, "schedule": {"protocol": "tracking", "full_count": 6}})
    assert [len(s) for s in sched] == [6, 1, 6]


def test_simulate_reconstruct_evaluate():
    sim = dyntomo.simulate(SMALL)
    assert sim["truth"].shape == (3, 12, 12)
    assert len(sim["sinogram"]) == 3
    out = dyntomo.reconstruct(sim["sinogram"], SMALL)
    assert out["u"].shape == (3, 12, 12)
    assert out["v"].shape == (2, 2, 12, 12)
    assert len(out["energy"]) == 2
    m = dyntomo.evaluate(out["u"], sim["truth"])
    assert 0 <= m["rel_l1"] < 1
    assert -1 <= m["ssim"] <= 1
    again = dyntomo.simulate(SMALL)
    for (a1, v1), (a2, v2) in zip(sim["sinogram"], again["sinogram"]):
        assert np.array_equal(a1, a2) and np.array_equal(v1, v2)


def test_forward_is_linear():
    rng = np.random.default_rng(0)
    u = rng.random((2, 12, 12))
    angles = [[0.1, 0.5], [1.0]]
    a = dyntomo.forward(u, angles, SMALL)
    b = dyntomo.forward(2 * u, angles, SMALL)
    for (_, x), (_, y) in zip(a, b):
        np.testing.assert_allclose(2 * x, y, rtol=1e-14, atol=0)


def test_evaluate_identity_and_errors():
    t = np.random.default_rng(1).random((2, 5, 5))
    m = dyntomo.evaluate(t, t)
    assert m["rel_l1"] == 0 and m["ssim"] == 1
    with pytest.raises(ValueError):
        dyntomo.evaluate(t, t[:1])
    with pytest.raises(ValueError):
        dyntomo.simulate({"solver": {"alpha": -1}})


def test_table_single_cell():
    csv = dyntomo.table(SMALL, [("randomized", 1)])
    lines = csv.strip().split("\n")
    assert lines[0] == "protocol,fidelity,rel_l1,rel_l2,ssim,status"
    assert len(lines) == 2 and lines[1].endswith(",ok")
