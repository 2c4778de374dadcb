import numpy as np
import pytest

from cutlab import prob, rng, sim
from cutlab.errors import CapError, RecurrentEnvironment


def test_forced_moves(e0):
    s = rng.Stream(0, 0)
    assert sim.step(e0, sim.WalkState("X", 0), s).position == 1
    assert sim.step(e0, sim.WalkState("X", 1), s).position == 2
    assert sim.step(e0, sim.WalkState("Y", 1), s).position == 0
    assert sim.step(e0, sim.WalkState("Y", 0), s).position == 2


def test_step_jump_sizes(e1):
    s = rng.Stream(3, 0)
    st = sim.WalkState("X", 10)
    moves = set()
    for _ in range(500):
        nxt = sim.step(e1, st, s)
        moves.add(nxt.position - st.position)
    assert moves == {1, -1, -2}


def test_census_basic_and_cut_definition(e1):
    c = sim.cutpoint_census(e1, "X", 200, seed=1, trials=50)
    assert c.mode == "margin" and c.W is not None and c.eps_cens < 1e-6
    assert c.counts.shape == (50, 201)
    assert not c.cut[:, :2].any()
    t = 0
    np.testing.assert_array_equal(c.cutpoints(t), np.nonzero(c.counts[t] == 1)[0][
        np.nonzero(c.counts[t] == 1)[0] >= 2])
    # every site in [2, K] is visited by the transient-to-the-right walk
    assert np.all(c.counts[:, 2:] >= 1)


def test_census_y_layers(e0):
    c = sim.cutpoint_census(e0, "Y", 101, seed=2, trials=30)
    lc = c.layer_cut
    assert lc.shape == (30, 50)
    # at most one skipped site per layer: two consecutive skips are impossible
    skipped = c.counts[:, 2:] == 0
    assert not np.any(skipped[:, 1:] & skipped[:, :-1])


def test_recurrent_census_rejected(e0, e1):
    with pytest.raises(RecurrentEnvironment):
        sim.cutpoint_census(e0, "X", 100, seed=1)
    with pytest.raises(RecurrentEnvironment):
        sim.cutpoint_census(e1, "Y", 100, seed=1)


def test_seed_required(e1):
    with pytest.raises(ValueError):
        sim.cutpoint_census(e1, "X", 100)


def test_step_cap_partial(e1):
    with pytest.raises(CapError) as info:
        sim.cutpoint_census(e1, "X", 300, seed=1, trials=20, step_cap=400)
    part = info.value.partial
    assert part is not None and part.trials < 20
    assert np.all(part.steps <= 400)


def test_determinism_across_workers(e1):
    a = sim.cutpoint_census(e1, "X", 150, seed=5, trials=64, workers=1)
    b = sim.cutpoint_census(e1, "X", 150, seed=5, trials=64, workers=None)
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.steps, b.steps)
    c = sim.cutpoint_census(e1, "X", 150, seed=6, trials=64)
    assert not np.array_equal(a.counts, c.counts)


def test_trajectory_prefix_stable(e1):
    # trajectory i depends only on (seed, i)
    a = sim.cutpoint_census(e1, "X", 150, seed=5, trials=10)
    b = sim.cutpoint_census(e1, "X", 150, seed=5, trials=40)
    np.testing.assert_array_equal(a.counts, b.counts[:10])


@pytest.mark.parametrize("kind,envname", [("X", "e1"), ("Y", "e0")])
def test_resample_agrees_with_margin(kind, envname, request):
    env = request.getfixturevalue(envname)
    n = 2000
    m = sim.cutpoint_census(env, kind, 120, seed=3, trials=n, mode="margin")
    r = sim.cutpoint_census(env, kind, 120, seed=4, trials=n, mode="resample")
    assert r.mode == "resample" and r.W is None
    fm = m.cut[:, 20:100].mean()
    fr = r.cut[:, 20:100].mean()
    se = np.sqrt(fm * (1 - fm) / (n * 80) * 4)   # generous: sites are correlated
    assert abs(fm - fr) < 3 * se * 2


def test_x_landing_split_constant(e1):
    r, mu = sim.x_landing_split(e1, 100)
    assert r == pytest.approx(4 / 7, abs=1e-10)
    assert mu / r == pytest.approx(0.25, abs=1e-6)


def test_return_curve_decreasing(e0):
    ret, F = sim.return_curve(e0, "Y", 50, w_cap=64)
    assert np.all(np.diff(ret) <= 1e-15)
    assert ret[0] == pytest.approx(1 - 1 / F.estimate)


def test_s_n_statistics_shape(e1):
    tab = sim.s_n_statistics(e1, "X", [50, 100], 200, seed=1)
    assert tab.samples.shape == (200, 2)
    assert np.all(tab.samples[:, 1] >= tab.samples[:, 0])
    exact = prob.expected_cutpoints_X(e1, [50, 100])
    assert np.all(np.abs(tab.mean - exact) < tab.ci + 1.0)
    with pytest.raises(ValueError):
        sim.s_n_statistics(e1, "X", [10**6], 2, seed=1)


def test_layer_hit_estimate(e0):
    h1, h2 = sim.layer_hit_estimate(e0, 2, 20000, seed=1)
    assert h1 + h2 == pytest.approx(1.0)
    assert abs(h2 - 1 / 6) < 3 * np.sqrt((1 / 6) * (5 / 6) / 20000)
