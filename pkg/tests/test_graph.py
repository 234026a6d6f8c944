import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfmr.graphs import (
    IncidenceGraph,
    add_lag_edges,
    connected_components,
    decompose_trails,
    grid_graph,
    incidence_apply,
    max_degree,
    read_edge_list,
    write_edge_list,
)

from oracles import random_graph


class TestIncidenceGraph:
    def test_canonical_ordering(self):
        g = IncidenceGraph(4, [(2, 0), (3, 1)])
        assert g.edges.tolist() == [[0, 2], [1, 3]]

    def test_rejects_bad_edges(self):
        with pytest.raises(ValueError):
            IncidenceGraph(3, [(0, 3)])
        with pytest.raises(ValueError):
            IncidenceGraph(3, [(1, 1)])
        with pytest.raises(ValueError):
            IncidenceGraph(3, [(0, 1), (1, 0)])
        with pytest.raises(ValueError):
            IncidenceGraph(0, [])

    def test_degrees(self):
        g = IncidenceGraph(4, [(0, 1), (1, 2), (1, 3)])
        assert g.degrees.tolist() == [1, 3, 1, 1]
        assert max_degree(g) == 3

    def test_incidence_columns(self):
        g = IncidenceGraph(3, [(0, 1), (1, 2)])
        D = g.incidence().toarray()
        assert D.shape == (3, 2)
        # +1 at the smaller endpoint, -1 at the larger
        assert D[:, 0].tolist() == [1.0, -1.0, 0.0]
        assert D[:, 1].tolist() == [0.0, 1.0, -1.0]

    def test_incidence_apply_matches_matrix(self, rng):
        g = random_graph(rng, 9, 0.4)
        v = rng.normal(size=9)
        D = g.incidence().toarray()
        assert np.allclose(incidence_apply(g, v), D.T @ v, atol=1e-14)

    def test_edges_write_protected(self):
        g = IncidenceGraph(3, [(0, 1)])
        with pytest.raises(ValueError):
            g.edges[0, 0] = 2


class TestGridGraph:
    def test_chain(self):
        g = grid_graph((5,))
        assert g.num_nodes == 5
        assert g.edges.tolist() == [[0, 1], [1, 2], [2, 3], [3, 4]]

    def test_2d_counts_and_numbering(self):
        g = grid_graph((3, 4))
        assert g.num_nodes == 12
        # 2*4 vertical + 3*3 horizontal
        assert g.num_edges == 17
        pairs = {tuple(e) for e in g.edges.tolist()}
        # first axis varies fastest: (i,j) -> i + 3j
        assert (0, 1) in pairs      # (0,0)-(1,0)
        assert (0, 3) in pairs      # (0,0)-(0,1)
        assert (2, 5) in pairs      # (2,0)-(2,1)
        assert (1, 3) not in pairs  # (1,0)-(0,1) are not neighbors

    def test_3d_counts(self):
        g = grid_graph((2, 3, 2))
        # per axis: 1*3*2 + 2*2*2 + 2*3*1 = 6 + 8 + 6
        assert g.num_nodes == 12
        assert g.num_edges == 20

    def test_single_node(self):
        g = grid_graph((1,))
        assert g.num_nodes == 1 and g.num_edges == 0

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            grid_graph(())
        with pytest.raises(ValueError):
            grid_graph((3, 0))


class TestLagEdges:
    def test_chain_plus_lag(self):
        g = add_lag_edges(grid_graph((200,)), lag=100, count=100)
        assert g.num_edges == 299
        pairs = {tuple(e) for e in g.edges.tolist()}
        assert (0, 100) in pairs and (99, 199) in pairs
        assert (100, 200) not in pairs

    def test_duplicate_lag_edge_rejected(self):
        with pytest.raises(ValueError):
            add_lag_edges(grid_graph((5,)), lag=1, count=2)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            add_lag_edges(grid_graph((5,)), lag=3, count=3)
        with pytest.raises(ValueError):
            add_lag_edges(grid_graph((5,)), lag=0, count=1)


class TestComponents:
    def test_two_triangles(self):
        g = IncidenceGraph(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
        comps = connected_components(g)
        assert sorted(sorted(c.tolist()) for c in comps) == [[0, 1, 2], [3, 4, 5]]

    def test_isolated_nodes(self):
        g = IncidenceGraph(4, [(1, 2)])
        comps = connected_components(g)
        assert sorted(len(c) for c in comps) == [1, 1, 2]


def audit_trails(g):
    """Every edge covered exactly once by consecutive trail nodes."""
    dec = decompose_trails(g)
    seen = []
    for trail in dec.trails:
        assert len(trail) >= 2
        for a, b in zip(trail[:-1], trail[1:]):
            lo, hi = (int(a), int(b)) if a < b else (int(b), int(a))
            seen.append((lo, hi))
    assert sorted(seen) == sorted(map(tuple, g.edges.tolist()))
    # the cover indexes each edge at its position within its trail
    assert len(dec.edge_cover) == g.num_edges
    for (lo, hi), (ti, pos) in dec.edge_cover.items():
        trail = dec.trails[ti]
        got = {int(trail[pos]), int(trail[pos + 1])}
        assert got == {lo, hi}
    return dec


class TestTrailDecomposition:
    def test_path_is_one_trail(self):
        dec = audit_trails(grid_graph((7,)))
        assert len(dec.trails) == 1
        assert len(dec.trails[0]) == 7

    def test_cycle_is_one_trail(self):
        g = IncidenceGraph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
        dec = audit_trails(g)
        assert len(dec.trails) == 1
        # closed: first node equals last
        t = dec.trails[0]
        assert t[0] == t[-1] and len(t) == 5

    def test_star(self):
        # K_{1,4}: four odd vertices -> two trails
        g = IncidenceGraph(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
        dec = audit_trails(g)
        assert len(dec.trails) == 2

    def test_complete_k4(self):
        g = IncidenceGraph(4, [(a, b) for a in range(4) for b in range(a + 1, 4)])
        audit_trails(g)

    def test_diamond(self, diamond):
        audit_trails(diamond)

    def test_disconnected(self):
        g = IncidenceGraph(7, [(0, 1), (1, 2), (3, 4), (4, 5), (3, 5)])
        audit_trails(g)

    def test_no_edges(self):
        dec = decompose_trails(IncidenceGraph(3, []))
        assert dec.trails == ()

    def test_grid(self):
        audit_trails(grid_graph((4, 5)))

    def test_deterministic(self, grid34):
        d1 = decompose_trails(grid34)
        d2 = decompose_trails(grid34)
        assert len(d1.trails) == len(d2.trails)
        for a, b in zip(d1.trails, d2.trails):
            assert np.array_equal(a, b)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_random_graphs(self, seed):
        rng = np.random.default_rng(seed)
        M = int(rng.integers(2, 12))
        audit_trails(random_graph(rng, M, float(rng.uniform(0.1, 0.9))))


class TestEdgeListIO:
    def test_roundtrip(self, tmp_path, rng):
        g = random_graph(rng, 8, 0.5)
        path = tmp_path / "edges.txt"
        write_edge_list(g, path)
        back = read_edge_list(path, num_nodes=8)
        assert back.num_nodes == 8
        assert np.array_equal(back.edges, g.edges)

    def test_line_count_equals_edges(self, tmp_path):
        g = grid_graph((3, 3))
        path = tmp_path / "edges.txt"
        write_edge_list(g, path)
        lines = [ln for ln in path.read_text().splitlines()]
        assert len(lines) == g.num_edges
        assert all(len(ln.split()) == 2 for ln in lines)

    def test_infers_num_nodes(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("# comment\n0 1\n\n2 4\n")
        g = read_edge_list(path)
        assert g.num_nodes == 5 and g.num_edges == 2

    def test_rejects_malformed(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 1 2\n")
        with pytest.raises(ValueError):
            read_edge_list(path)

    def test_empty_needs_num_nodes(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(ValueError):
            read_edge_list(path)
        g = read_edge_list(path, num_nodes=3)
        assert g.num_nodes == 3 and g.num_edges == 0
