import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexcomm import costmodel as cm
from flexcomm.collectives import Cluster
from flexcomm.costmodel import NetParams

NET = NetParams.from_ms_gbps(2, 8)


def sync(cluster):
    return cluster.clock.totals["sync"]


def test_allgather_semantics_and_charge():
    cl = Cluster(3, NET)
    out = cl.allgather([np.array([1.0]), np.array([2.0]), np.array([3.0])], 4)
    assert [[a.tolist() for a in w] for w in out] == [[[1.0], [2.0], [3.0]]] * 3
    assert sync(cl) == pytest.approx(cm.allgather_time(NET, 4, 3))


def test_allgather_copies_are_independent():
    cl = Cluster(2, NET)
    out = cl.allgather([np.zeros(2), np.ones(2)], 8)
    out[0][1][0] = 7.0
    assert out[1][1][0] == 1.0


def test_variance_exchange_charge():
    N = 8
    cl = Cluster(N, NET)
    cl.allgather([np.zeros(N) for _ in range(N)], 4 * N)
    assert sync(cl) == pytest.approx(NET.alpha * math.log2(N) + (N - 1) * 4 * N * NET.beta)


def test_allgather_unequal_sizes():
    with pytest.raises(ValueError):
        Cluster(2, NET).allgather([np.zeros(2), np.zeros(3)], 8)
    with pytest.raises(ValueError):
        Cluster(2, NET).allgather([np.zeros(2)], 8)


def test_single_worker_collectives_are_free():
    cl = Cluster(1, NET)
    assert [a.tolist() for a in cl.allgather([np.array([5.0])], 4)[0]] == [[5.0]]
    assert cl.broadcast(0, np.array([1.0]), 4)[0].tolist() == [1.0]
    assert cl.allreduce([np.array([2.0])], 4)[0].tolist() == [2.0]
    assert cl.clock.now == 0.0


def test_broadcast_semantics_and_charge():
    cl = Cluster(4, NET)
    out = cl.broadcast(2, np.array([9, 8]), 8)
    assert all(o.tolist() == [9, 8] for o in out)
    assert sync(cl) == pytest.approx(cm.broadcast_time(NET, 8, 4))
    with pytest.raises(ValueError):
        cl.broadcast(4, np.array([1]), 4)
    with pytest.raises(ValueError):
        cl.broadcast(-1, np.array([1]), 4)


def test_broadcast_of_k_indices_charges_4k_bytes():
    N, k = 8, 37
    cl = Cluster(N, NET)
    cl.broadcast(0, np.arange(k), cl.wire_bytes(k))
    assert sync(cl) == pytest.approx(math.log2(N) * (NET.alpha + 4 * k * NET.beta))


def test_allreduce_sum_and_avg():
    cl = Cluster(2, NET)
    out = cl.allreduce([np.array([1.0, 2.0]), np.array([3.0, 4.0])], 8, op="sum")
    assert all(o.tolist() == [4, 6] for o in out)
    out = cl.allreduce([np.array([1.0, 2.0]), np.array([3.0, 4.0])], 8, op="avg")
    assert all(o.tolist() == [2, 3] for o in out)


def test_allreduce_errors():
    cl = Cluster(2, NET)
    with pytest.raises(ValueError):
        cl.allreduce([np.zeros(2), np.zeros(3)], 8)
    with pytest.raises(ValueError):
        cl.allreduce([np.zeros(2), np.zeros(2)], 8, op="max")
    with pytest.raises(ValueError):
        cl.allreduce([np.zeros(2), np.zeros(2)], 8, algo="butterfly")


def test_ring_and_tree_same_vector_different_charge(rng):
    vecs = [rng.normal(size=11) for _ in range(5)]
    ring, tree = Cluster(5, NET), Cluster(5, NET)
    a = ring.allreduce(vecs, 44, algo="ring")
    b = tree.allreduce(vecs, 44, algo="tree")
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert sync(ring) == pytest.approx(cm.ring_allreduce_time(NET, 44, 5))
    assert sync(tree) == pytest.approx(cm.tree_allreduce_time(NET, 44, 5))
    assert sync(ring) != sync(tree)


@given(st.integers(1, 6), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_allreduce_rank_ordered_and_identical(n, G, seed):
    r = np.random.default_rng(seed)
    vecs = [r.normal(size=G) for _ in range(n)]
    out = Cluster(n, NET).allreduce(vecs, 4 * G, op="sum")
    acc = vecs[0].copy()
    for v in vecs[1:]:
        acc = acc + v
    for o in out:
        assert o.tobytes() == acc.tobytes()


def test_charging_context_redirects_category():
    cl = Cluster(2, NET)
    with cl.charging("exploration"):
        cl.broadcast(0, np.zeros(1), 4)
    assert cl.clock.totals["exploration"] > 0
    assert sync(cl) == 0.0
    assert cl.category == "sync"


def test_wire_bytes_scale():
    assert Cluster(2, NET).wire_bytes(10) == 40
    assert Cluster(2, NET, bytes_per_element=1000.0).wire_bytes(3) == 3000.0
    with pytest.raises(ValueError):
        Cluster(0, NET)
