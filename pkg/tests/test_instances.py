import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcolor.baselines import brute_force
from mpcolor.graph import ConflictGraph, conflict_count
from mpcolor.instances import (
    CorpusManifest,
    ParseError,
    export_coloring,
    export_dimacs,
    export_edgelist,
    generate_corpus,
    generate_instance,
    generate_planted,
    generate_uncolorable,
    import_coloring,
    import_edgelist,
    load_corpus,
    parse_dimacs,
)

from conftest import random_graph


class TestDimacs:
    DOC = "c sample instance\np edge 4 3\ne 1 2\ne 2 3\ne 1 4\n"

    def test_parse_basic(self):
        g = parse_dimacs(self.DOC, k=3)
        assert g.node_count == 4
        assert g.k == 3
        assert g.edges == ((0, 1), (0, 3), (1, 2))

    def test_blank_lines_and_comments_skipped(self):
        g = parse_dimacs("c x\n\n   \np edge 2 1\nc mid\ne 1 2\n", k=2)
        assert g.edges == ((0, 1),)

    def test_edge_before_problem_line(self):
        with pytest.raises(ParseError) as exc:
            parse_dimacs("e 1 2\np edge 2 1\n", k=2)
        assert exc.value.line == 1

    def test_missing_problem_line(self):
        with pytest.raises(ParseError):
            parse_dimacs("c only comments\n", k=2)

    def test_malformed_problem_line(self):
        with pytest.raises(ParseError):
            parse_dimacs("p edge 4\n", k=2)
        with pytest.raises(ParseError):
            parse_dimacs("p col 4 3\n", k=2)

    def test_vertex_out_of_range(self):
        with pytest.raises(ParseError) as exc:
            parse_dimacs("p edge 3 1\ne 1 4\n", k=2)
        assert exc.value.line == 2

    def test_non_integer_rejected(self):
        with pytest.raises(ParseError):
            parse_dimacs("p edge 3 1\ne 1 x\n", k=2)

    def test_unrecognized_line(self):
        with pytest.raises(ParseError):
            parse_dimacs("p edge 3 1\nq 1 2\n", k=2)

    def test_export_format_exact(self):
        # edges come back in the graph's sorted storage order
        g = ConflictGraph(node_count=4, k=3, edges=((0, 1), (0, 3), (1, 2)))
        assert export_dimacs(g) == "p edge 4 3\ne 1 2\ne 1 4\ne 2 3\n"

    def test_export_parse_round_trip(self):
        g = parse_dimacs(self.DOC, k=3)
        doc = export_dimacs(g)
        assert parse_dimacs(doc, k=3) == g
        assert export_dimacs(parse_dimacs(doc, k=3)) == doc

    def test_export_drops_anchors(self):
        # the format has no anchor syntax, so they vanish on the way out
        g = ConflictGraph(node_count=3, k=3, edges=((0, 1),), anchors=((2, 1),))
        g2 = parse_dimacs(export_dimacs(g), k=3)
        assert g2.anchors == ()
        assert g2.edges == g.edges


class TestEdgeList:
    def test_round_trip_with_anchors(self):
        g = ConflictGraph(node_count=5, k=3, edges=((0, 1), (2, 4)), anchors=((1, 2),))
        assert import_edgelist(export_edgelist(g)) == g

    def test_export_format_exact(self):
        g = ConflictGraph(node_count=3, k=2, edges=((1, 2),), anchors=((0, 1),))
        assert export_edgelist(g) == "3 2\n1 2\na 0 1\n"

    def test_empty_document(self):
        with pytest.raises(ParseError):
            import_edgelist("\n\n")

    def test_malformed_header(self):
        with pytest.raises(ParseError):
            import_edgelist("3\n")

    def test_malformed_edge(self):
        with pytest.raises(ParseError):
            import_edgelist("3 2\n1 2 3\n")

    def test_bad_anchor(self):
        with pytest.raises(ParseError):
            import_edgelist("3 2\na 0\n")

    def test_contract_violation_becomes_parse_error(self):
        with pytest.raises(ParseError):
            import_edgelist("3 2\n1 1\n")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
    def test_round_trip_property(self, n, k, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, n, k=k, density=0.4, anchors=int(rng.integers(0, 3)))
        assert import_edgelist(export_edgelist(g)) == g


class TestColoringIO:
    def test_round_trip(self):
        colors = np.array([2, 0, 1, 1])
        assert np.array_equal(import_coloring(export_coloring(colors), 4), colors)

    def test_order_independent(self):
        assert import_coloring("1 2\n0 1\n", 2).tolist() == [1, 2]

    def test_missing_node(self):
        with pytest.raises(ParseError):
            import_coloring("0 1\n", 2)

    def test_node_out_of_range(self):
        with pytest.raises(ParseError):
            import_coloring("0 1\n5 0\n", 2)

    def test_malformed(self):
        with pytest.raises(ParseError):
            import_coloring("0\n", 1)


class TestPlanted:
    def test_witness_is_proper(self):
        g, witness = generate_planted(30, 3, 0.3, 7)
        assert conflict_count(g, witness) == 0

    def test_deterministic(self):
        a = generate_planted(25, 3, 0.3, 11)
        b = generate_planted(25, 3, 0.3, 11)
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1])
        c = generate_planted(25, 3, 0.3, 12)
        assert c[0] != a[0]

    def test_size_guard(self):
        with pytest.raises(Exception):
            generate_planted(2, 3, 0.3, 0)

    def test_density_guard(self):
        with pytest.raises(Exception):
            generate_planted(5, 2, 0.0, 0)

    def test_chromatic_number_exactly_k(self):
        # not (k-1)-colorable thanks to the pinning clique, but k-colorable
        for seed in range(5):
            g, _ = generate_planted(9, 3, 0.4, seed)
            assert brute_force(g, mode="feasibility").feasible
            downgraded = ConflictGraph(node_count=g.node_count, k=2, edges=g.edges)
            assert not brute_force(downgraded, mode="feasibility").feasible

    def test_uncolorable_is_infeasible(self):
        for seed in range(5):
            g = generate_uncolorable(9, 3, 0.4, seed)
            assert not brute_force(g, mode="feasibility").feasible


class TestCorpus:
    def test_generate_and_load(self, tmp_path):
        man = generate_corpus(tmp_path / "c", count=5, n_range=(8, 14), seed=3)
        assert len(man.entries) == 5
        loaded_man, graphs = load_corpus(tmp_path / "c")
        assert loaded_man == man
        assert len(graphs) == 5
        for entry, g in zip(man.entries, graphs):
            assert g.node_count == entry.n
            assert g.k == entry.k

    def test_load_accepts_manifest_path(self, tmp_path):
        generate_corpus(tmp_path / "c", count=2, n_range=(8, 10), seed=3)
        man, graphs = load_corpus(tmp_path / "c" / "manifest.json")
        assert len(graphs) == 2

    def test_manifest_round_trip(self, tmp_path):
        man = generate_corpus(tmp_path / "c", count=3, n_range=(8, 10), seed=5,
                              uncolorable_fraction=0.34)
        assert CorpusManifest.from_json(man.to_json()) == man

    def test_bad_manifest_format(self):
        with pytest.raises(ParseError):
            CorpusManifest.from_json('{"format": "other", "seed": 0, "k": 3, "entries": []}')

    def test_regeneration_matches_files(self, tmp_path):
        man = generate_corpus(tmp_path / "c", count=4, n_range=(8, 12), seed=9,
                              uncolorable_fraction=0.25)
        for entry in man.entries:
            g, witness = generate_instance(entry)
            stored = import_edgelist((tmp_path / "c" / entry.path).read_text())
            assert g == stored
            if entry.uncolorable:
                assert witness is None
                assert entry.witness_path is None
            else:
                disk = import_coloring((tmp_path / "c" / entry.witness_path).read_text(), entry.n)
                assert np.array_equal(witness, disk)

    def test_witnesses_proper(self, tmp_path):
        man = generate_corpus(tmp_path / "c", count=4, n_range=(10, 16), seed=13)
        _, graphs = load_corpus(tmp_path / "c")
        for entry, g in zip(man.entries, graphs):
            w = import_coloring((tmp_path / "c" / entry.witness_path).read_text(), entry.n)
            assert conflict_count(g, w) == 0

    def test_byte_identical_regeneration(self, tmp_path):
        generate_corpus(tmp_path / "a", count=4, n_range=(8, 12), seed=21,
                        uncolorable_fraction=0.25)
        generate_corpus(tmp_path / "b", count=4, n_range=(8, 12), seed=21,
                        uncolorable_fraction=0.25)
        names_a = sorted(p.name for p in (tmp_path / "a").iterdir())
        names_b = sorted(p.name for p in (tmp_path / "b").iterdir())
        assert names_a == names_b
        for name in names_a:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
