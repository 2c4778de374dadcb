import numpy as np

from cutlab import _walk, rng


def test_philox_matches_numpy_reference():
    # numpy bumps its counter before each block, so its counter 0 is our block 1
    bg = np.random.Philox(key=np.array([7, 3], dtype=np.uint64),
                          counter=np.zeros(4, dtype=np.uint64))
    ref = [int(x) for x in bg.random_raw(12)]
    s = rng.Stream(7, 3)
    ours = [int(s.raw()) for _ in range(16)][4:]
    assert ours == ref


def test_streams_differ_by_key():
    a = [rng.Stream(1, 0).uniform() for _ in range(4)]
    b = [rng.Stream(1, 1).uniform() for _ in range(4)]
    c = [rng.Stream(2, 0).uniform() for _ in range(4)]
    assert a != b and a != c


def test_stream_matches_kernel_sequence():
    st = _walk.new_state()
    k0, k1 = np.uint64(11), np.uint64(5)
    kernel = [_walk.uniform(st, k0, k1) for _ in range(37)]
    s = rng.Stream(11, 5)
    assert [s.uniform() for _ in range(37)] == kernel


def test_uniform_range():
    s = rng.Stream(0, 0)
    u = np.array([s.uniform() for _ in range(2000)])
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.03
