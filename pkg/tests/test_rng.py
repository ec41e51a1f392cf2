import numpy as np
import pytest

from core.rng import NoiseStreams


def test_draws_do_not_depend_on_order():
    a = NoiseStreams(42)
    b = NoiseStreams(42)
    first = [a.normal("obs", 0, step, 4) for step in range(5)]
    reversed_draws = [b.normal("obs", 0, step, 4) for step in reversed(range(5))][::-1]
    for x, y in zip(first, reversed_draws):
        assert np.array_equal(x, y)


def test_roles_members_and_replicas_are_independent():
    s = NoiseStreams(42)
    base = s.normal("obs", 0, 0, 1000)
    for other in (s.normal("perturb", 0, 0, 1000), s.normal("obs", 1, 0, 1000), s.normal("obs", 0, 1, 1000),
                  s.for_replica(1).normal("obs", 0, 0, 1000)):
        assert not np.array_equal(base, other)
        assert abs(np.corrcoef(base, other)[0, 1]) < 0.15


def test_increment_variance_scales_with_dt():
    s = NoiseStreams(1)
    draws = np.concatenate([s.increment("truth", 0, step, 100, 0.01) for step in range(100)])
    assert draws.var() == pytest.approx(0.01, rel=0.1)


def test_lineage_and_validation():
    assert NoiseStreams(3, replica=2).lineage == (3, 2)
    with pytest.raises(ValueError):
        NoiseStreams(-1)
    with pytest.raises(KeyError):
        NoiseStreams(0).normal("unknown", 0, 0, 1)
