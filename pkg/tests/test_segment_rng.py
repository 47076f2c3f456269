"""Sample paths, segment views, initial data and random streams."""
import numpy as np
import pytest

from multiscale_mdp.rng import DOMAIN_TAGS, Streams, stream
from multiscale_mdp.segment import (
    InitialDatum,
    SamplePath,
    Segment,
    SegmentShapeError,
    grid_steps,
    segment_at,
    segment_sup_distance,
)


def _path_with_jump():
    # grid on [-1, 1] with dt = 0.5 plus a jump at t = 0.25 from 1.0 to 3.0
    t = np.array([-1.0, -0.5, 0.0, 0.25, 0.5, 1.0])
    left = np.array([0.0, 0.0, 0.0, 1.0, 3.0, 3.0])[:, None]
    right = np.array([0.0, 0.0, 0.0, 3.0, 3.0, 3.0])[:, None]
    flags = np.array([0, 0, 0, 1, 0, 0], bool)
    return SamplePath(t, left, right, flags, tau=1.0, dt=0.5)


def test_cadlag_values():
    p = _path_with_jump()
    assert p.value_at(0.25)[0] == 3.0
    assert p.left_limit_at(0.25)[0] == 1.0
    assert p.value_at(0.125)[0] == pytest.approx(0.5)
    assert p.value_at(np.array([0.125, 0.25]))[:, 0] == pytest.approx([0.5, 3.0])


def test_segment_endpoints_and_sup_norm():
    p = _path_with_jump()
    s = segment_at(p, 1.0)
    assert s.at(0.0)[0] == p.value_at(1.0)[0]
    assert s.at(-1.0)[0] == p.value_at(0.0)[0]
    assert s.sup_norm() == 3.0
    s2 = segment_at(p, 0.25)
    assert s2.sup_norm() == 3.0
    with pytest.raises(ValueError):
        segment_at(p, 1.5)


def test_sup_norm_includes_left_limits():
    # a downward jump: the left limit carries the maximum
    t = np.array([-1.0, 0.0, 0.5, 1.0])
    left = np.array([0.0, 0.0, 5.0, 0.0])[:, None]
    right = np.array([0.0, 0.0, 0.0, 0.0])[:, None]
    p = SamplePath(t, left, right, np.array([0, 0, 1, 0], bool), tau=1.0, dt=0.5)
    assert segment_at(p, 1.0).sup_norm() == 5.0


def test_segment_distance_and_combine():
    a = Segment.constant([1.0], 1.0)
    b = Segment.from_function(lambda th: np.array([th]), 1.0)
    assert segment_sup_distance(a, b) == pytest.approx(2.0)
    c = a.combine(b, 2.0, -1.0)
    assert c.at(-1.0)[0] == pytest.approx(3.0)
    assert c.at(0.0)[0] == pytest.approx(2.0)
    with pytest.raises(SegmentShapeError):
        a.combine(Segment.constant([1.0], 2.0))


def test_initial_datum_lipschitz():
    chi = InitialDatum(lambda th: np.array([np.sin(3 * th)]), 3.0)
    assert chi.check_lipschitz(1.0) <= 3.0 + 1e-9
    g = chi.on_grid(1.0, 0.25)
    assert g.shape == (5, 1)
    assert g[-1, 0] == pytest.approx(0.0)


def test_grid_steps_guard():
    assert grid_steps(1.0, 0.001) == 1000
    with pytest.raises(ValueError):
        grid_steps(1.0, 0.3)


def test_csv_roundtrip(tmp_path):
    p = _path_with_jump()
    f = tmp_path / "path.csv"
    p.to_csv(f, "manifest: abc")
    lines = f.read_text().splitlines()
    assert lines[0] == "# manifest: abc"
    assert lines[1] == "t,x_0,is_jump"
    q = SamplePath.from_csv(f, tau=1.0, dt=0.5)
    assert np.array_equal(q.times, p.times)
    assert np.array_equal(q.left, p.left) and np.array_equal(q.right, p.right)
    assert np.array_equal(q.is_jump, p.is_jump)


def test_streams_are_reproducible_and_separate():
    a = stream(3, "bm_slow", 7).standard_normal(5)
    b = stream(3, "bm_slow", 7).standard_normal(5)
    assert np.array_equal(a, b)
    c = stream(3, "bm_fast", 7).standard_normal(5)
    d = stream(3, "bm_slow", 8).standard_normal(5)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    with pytest.raises(ValueError):
        stream(3, "nope", 0)


def test_channel_stability():
    # drawing from one channel never shifts another
    s1 = Streams(4, 2)
    s1.channel("jump_count").random(100)
    x1 = s1.channel("bm_slow").standard_normal(3)
    x2 = Streams(4, 2).channel("bm_slow").standard_normal(3)
    assert np.array_equal(x1, x2)
    assert len(set(DOMAIN_TAGS.values())) == len(DOMAIN_TAGS)
