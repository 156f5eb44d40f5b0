import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnewton.norm_tree import NormTree


def brute_sq(leaves, level, node, n_levels):
    span = 1 << (n_levels - level)
    padded = np.zeros(1 << n_levels)
    padded[: leaves.size] = leaves
    return float(np.sum(padded[node * span : (node + 1) * span] ** 2))


def check_parent_sums(tree):
    for kind in ("x", "f"):
        for level in range(tree.n_levels):
            for node in range(1 << level):
                parent = tree.node_sq(kind, level, node)
                kids = tree.node_sq(kind, level + 1, 2 * node) + tree.node_sq(kind, level + 1, 2 * node + 1)
                assert parent >= 0
                assert parent == pytest.approx(kids, rel=1e-12, abs=1e-300)


def test_unit_basis_root():
    tree = NormTree.build([1, 0, 0, 0], [0, 0, 0, 0])
    assert tree.partial_norm_x(0, 0) == 1.0
    assert tree.partial_norm_f(0, 0) == 0.0


def test_small_explicit_norms():
    tree = NormTree.build([1, 2, 2, 4], [3, 4, 0, 0])
    assert tree.partial_norm_x(0, 0) == pytest.approx(5.0)
    assert tree.partial_norm_x(1, 0) == pytest.approx(math.sqrt(5))
    assert tree.partial_norm_x(1, 1) == pytest.approx(math.sqrt(20))
    assert tree.partial_norm_f(0, 0) == pytest.approx(5.0)
    assert tree.partial_norm_x(2, 3) == pytest.approx(4.0)
    assert tree.get_x(3) == 4.0


def test_non_power_of_two_padding():
    tree = NormTree.build([1, 1, 1], [0, 0, 0])
    assert tree.n_levels == 2
    assert tree.partial_norm_x(0, 0) == pytest.approx(math.sqrt(3))
    # padded leaf exists in storage but is zero and not addressable
    assert tree.partial_norm_x(2, 3) == 0.0
    with pytest.raises(IndexError):
        tree.get_x(3)
    with pytest.raises(IndexError):
        tree.set_x([3], [1.0])


def test_single_entry_tree():
    tree = NormTree.build([-2.0], [3.0])
    assert tree.n_levels == 0
    assert tree.partial_norm_x(0, 0) == 2.0
    assert tree.update_entries([("f", 0, 4.0)]) == 1
    assert tree.partial_norm_f(0, 0) == 4.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        NormTree.build([1, 2], [1, 2, 3])


def test_read_your_write_and_counts():
    tree = NormTree.build([1, 2, 2, 4], np.zeros(4))
    assert tree.get_f(0) == 0.0
    assert tree.update_entries([("x", 2, 7.0)]) <= 3
    assert tree.get_x(2) == 7.0
    assert tree.update_entries([]) == 0
    assert tree.get_x(2) == 7.0


def test_zero_all_x():
    tree = NormTree.build([1, 2, 2, 4], [1, 1, 1, 1])
    tree.update_entries([("x", i, 0.0) for i in range(4)])
    assert tree.partial_norm_x(0, 0) == 0.0
    assert tree.partial_norm_f(0, 0) == 2.0


def test_duplicates_last_write_wins():
    tree = NormTree.build(np.zeros(8), np.zeros(8))
    tree.update_entries([("x", 5, 1.0), ("f", 5, 2.0), ("x", 5, -3.0)])
    assert tree.get_x(5) == -3.0
    assert tree.get_f(5) == 2.0
    assert tree.partial_norm_x(0, 0) == 3.0


def test_bad_update_leaves_tree_unmodified():
    tree = NormTree.build([1, 2, 3, 4], [1, 1, 1, 1])
    before = (np.array(tree.x), np.array(tree.f), tree.partial_norm_x(0, 0))
    with pytest.raises(IndexError):
        tree.update_entries([("x", 0, 9.0), ("f", 4, 1.0)])
    with pytest.raises(ValueError):
        tree.update_entries([("x", 0, 9.0), ("y", 1, 1.0)])
    np.testing.assert_array_equal(tree.x, before[0])
    np.testing.assert_array_equal(tree.f, before[1])
    assert tree.partial_norm_x(0, 0) == before[2]


def test_out_of_range_queries():
    tree = NormTree.build([1, 2, 3, 4], [1, 1, 1, 1])
    with pytest.raises(IndexError):
        tree.partial_norm_x(3, 0)
    with pytest.raises(IndexError):
        tree.partial_norm_f(1, 2)
    with pytest.raises(IndexError):
        tree.get_f(-1)


def test_views_are_read_only():
    tree = NormTree.build([1, 2], [3, 4])
    with pytest.raises(ValueError):
        tree.x[0] = 5.0


@pytest.mark.parametrize("N", [4, 37, 1024])
def test_randomized_update_sequence(N):
    rng = np.random.default_rng(N)
    x = rng.standard_normal(N)
    f = rng.standard_normal(N)
    tree = NormTree.build(x, f)
    bound = math.ceil(math.log2(N)) + 1
    for _ in range(1000):
        kind = "x" if rng.random() < 0.5 else "f"
        i = int(rng.integers(N))
        v = float(rng.standard_normal() * 10.0 ** rng.integers(-3, 4))
        touched = tree.update_entries([(kind, i, v)])
        assert touched <= bound
        (x if kind == "x" else f)[i] = v
        assert (tree.get_x(i) if kind == "x" else tree.get_f(i)) == v
    check_parent_sums(tree)
    assert tree.partial_norm_x(0, 0) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    assert tree.partial_norm_f(0, 0) == pytest.approx(np.linalg.norm(f), rel=1e-12)
    np.testing.assert_array_equal(tree.x, x)


@settings(max_examples=60, deadline=None)
@given(
    N=st.integers(1, 70),
    data=st.data(),
)
def test_batch_updates_match_brute_force(N, data):
    vals = st.floats(-1e3, 1e3, allow_nan=False)
    x = np.array(data.draw(st.lists(vals, min_size=N, max_size=N)))
    f = np.array(data.draw(st.lists(vals, min_size=N, max_size=N)))
    tree = NormTree.build(x, f)
    updates = data.draw(
        st.lists(st.tuples(st.sampled_from(["x", "f"]), st.integers(0, N - 1), vals), max_size=30)
    )
    touched = tree.update_entries(updates)
    for kind, i, v in updates:
        (x if kind == "x" else f)[i] = v
    distinct = len({(k, i) for k, i, _ in updates})
    assert touched <= distinct * (tree.n_levels + 1)
    for kind, leaves in (("x", x), ("f", f)):
        for level in range(tree.n_levels + 1):
            for node in range(1 << level):
                want = brute_sq(leaves, level, node, tree.n_levels)
                assert tree.node_sq(kind, level, node) == pytest.approx(want, rel=1e-12, abs=1e-300)
