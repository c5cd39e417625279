import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from znorm_lab.metrics import (ConfusionCounts, PointSet, accuracy, confusion, directed_hausdorff, f1,
                               hausdorff, mask_hausdorff, mask_to_pointset, tversky)
from znorm_lab.tensor import InvalidInputError, ShapeError


def naive_hausdorff(a, b):
    def directed(x, y):
        worst = 0.0
        for px, py in x:
            best = math.inf
            for qx, qy in y:
                best = min(best, math.sqrt((px - qx) ** 2 + (py - qy) ** 2))
            worst = max(worst, best)
        return worst
    return max(directed(a, b), directed(b, a))


def test_accuracy_examples():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    assert accuracy([1, 0, 1, 1], [1, 0, 0, 1]) == 0.75
    with pytest.raises(ShapeError):
        accuracy([1, 2], [1])
    with pytest.raises(InvalidInputError):
        accuracy([], [])


def test_f1_and_tversky_examples():
    assert f1(ConfusionCounts(1, 0, 0, 0)) == 1.0
    assert f1(ConfusionCounts(0, 0, 5, 0)) == 0.0
    assert f1(ConfusionCounts(2, 1, 0, 1)) == pytest.approx(4 / 6, rel=1e-15)
    assert tversky(ConfusionCounts(2, 1, 0, 1)) == pytest.approx(2 / 3, rel=1e-15)
    assert tversky(ConfusionCounts(7, 0, 3, 0), 0.3, 0.7) == 1.0
    assert tversky(ConfusionCounts(0, 2, 1, 3)) == 0.0
    assert tversky(ConfusionCounts(2, 4, 0, 0), 0.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        tversky(ConfusionCounts(1, 1, 1, 1), -0.1, 0.5)


def test_confusion_examples():
    c = confusion(np.array([[1, 0], [0, 0]]), np.array([[1, 1], [0, 0]]))
    assert c == ConfusionCounts(tp=1, fp=0, tn=2, fn=1)
    m = np.random.default_rng(0).random((5, 5)) > 0.5
    same = confusion(m, m)
    assert same.fp == same.fn == 0 and same.total == 25
    with pytest.raises(ShapeError):
        confusion(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        confusion(m, m, threshold=1.0)


def test_pointsets_and_hausdorff_examples():
    assert len(mask_to_pointset(np.zeros((4, 4)))) == 0
    assert mask_to_pointset(np.array([[0, 1], [1, 0]])).points == ((0, 1), (1, 0))
    assert hausdorff(PointSet(((0, 0),)), PointSet(((3, 4),))) == 5.0
    p, g = PointSet(((0, 0), (1, 0))), PointSet(((0, 0),))
    assert hausdorff(p, g) == 1.0
    assert directed_hausdorff(p, g) == 1.0 and directed_hausdorff(g, p) == 0.0
    with pytest.raises(InvalidInputError):
        hausdorff(PointSet(()), g)
    with pytest.raises(InvalidInputError):
        mask_hausdorff(np.zeros((3, 3)), np.eye(3))


def random_mask(rng, size=None):
    h, w = size or rng.integers(1, 33, size=2)
    density = rng.uniform(0.02, 0.6)
    m = rng.random((h, w)) < density
    if not m.any():
        m[rng.integers(h), rng.integers(w)] = True
    return m


def test_matches_naive_oracle_on_random_masks():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        a = random_mask(rng)
        b = random_mask(rng, a.shape)
        pa, pb = mask_to_pointset(a), mask_to_pointset(b)
        got = hausdorff(pa, pb)
        assert got == naive_hausdorff(pa.points, pb.points)
        assert got == hausdorff(pb, pa)
        assert (got == 0) == (set(pa.points) == set(pb.points))
        assert hausdorff(pa, pa) == 0.0


coords = st.tuples(st.integers(0, 40), st.integers(0, 40))
pointsets = st.sets(coords, min_size=1, max_size=30).map(lambda s: PointSet(tuple(sorted(s))))


@settings(max_examples=200, deadline=None)
@given(pointsets, pointsets)
def test_hausdorff_symmetry_and_identity(p, g):
    assert hausdorff(p, g) == hausdorff(g, p)
    assert (hausdorff(p, g) == 0) == (set(p.points) == set(g.points))


@settings(max_examples=200, deadline=None)
@given(pointsets, pointsets, coords)
def test_adding_a_close_point_keeps_directed_term(p, g, extra):
    current = directed_hausdorff(p, g)
    if directed_hausdorff(PointSet((extra,)), g) <= current:
        grown = PointSet(tuple(sorted(set(p.points) | {extra})))
        assert directed_hausdorff(grown, g) == current


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000))
def test_f1_equals_dice_tversky(tp, fp, tn, fn):
    c = ConfusionCounts(tp, fp, tn, fn)
    assert abs(f1(c) - tversky(c, 0.5, 0.5)) <= 1e-12
    assert c.total == tp + fp + tn + fn
