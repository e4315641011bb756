import math

import numpy as np
import pytest

import hignn


def test_sample_shapes():
    s = hignn.generate_sample({"counts": [3, 2]}, 0)
    assert s.num_links == 5
    assert s.antennas == [1, 1, 1, 2, 2]
    assert s.channel(0, 4).shape == (2,)
    assert np.iscomplexobj(s.channel(0, 4))


def test_generation_is_deterministic():
    a = hignn.generate_sample(None, 7)
    b = hignn.generate_sample(None, 7)
    assert np.array_equal(a.channel(2, 5), b.channel(2, 5))


def test_unknown_config_key_raises():
    with pytest.raises(hignn.Error):
        hignn.generate_sample({"count": [1, 1]})


def test_fp_matches_wsr_and_power():
    s = hignn.generate_sample(None, 3)
    r = hignn.fp_solve(s)
    assert r["converged"]
    assert all(b - a >= -1e-9 for a, b in zip(r["wsr_trace"], r["wsr_trace"][1:]))
    assert math.isclose(hignn.weighted_sum_rate(s, r["beamformers"]), r["wsr_trace"][-1], rel_tol=1e-12)
    assert max(np.vdot(x, x).real for x in r["beamformers"]) <= s.p_max + 1e-9
    assert hignn.fp_solve(s, {"truncated_iters": 3})["iterations"] == 3


def test_model_inference_is_feasible(tmp_path):
    model = hignn.init_model({"width": 4}, seed=2)
    s = hignn.generate_sample(None, 1)
    x = model.infer(s)
    assert len(x) == s.num_links
    assert [len(v) for v in x] == s.antennas
    assert all(np.vdot(v, v).real <= s.p_max + 1e-9 for v in x)
    path = tmp_path / "m.higc"
    model.save(path)
    again = hignn.load_checkpoint(path)
    assert all(np.array_equal(a, b) for a, b in zip(again.infer(s), x))


def test_fit_small():
    train = hignn.generate_dataset(32, {"seed": 1})
    val = hignn.generate_dataset(8, {"seed": 2})
    ck = hignn.fit({"max_epochs": 2, "batch_size": 8, "model": {"width": 4, "hidden": [8]}}, train, val)
    assert ck.best_epoch in (1, 2)


def test_self_checks():
    err, _ = hignn.check_gradients(1)
    assert err <= 1e-4
    util, equiv = hignn.check_permutations(5, 1)
    assert util <= 1e-12 and equiv <= 1e-10
