import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import benchmark_dir
from sanskg.datasets import DATA_ROOT
from sanskg.errors import ContractViolation, DatasetFormatError
from sanskg.graph import TripleStore, is_observed, load_dataset, write_dicts


def _read_rows(path):
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(tuple(line.split("\t")))
    return rows


class TestLoading:
    def test_toy_sizes(self):
        store = load_dataset(DATA_ROOT / "toy4")
        assert store.num_entities == 4
        assert store.num_relations == 1
        assert len(store.train) == 3

    def test_missing_file_is_named(self, make_dataset):
        root = make_dataset({"train": [("a", "r", "b")]})
        (root / "valid.txt").unlink()
        with pytest.raises(DatasetFormatError, match="valid.txt"):
            load_dataset(root)

    def test_malformed_line_reports_line_number(self, make_dataset):
        root = make_dataset({"train": [("a", "r", "b")]})
        with open(root / "train.txt", "a", encoding="utf-8") as fh:
            fh.write("c\tr\n")
        with pytest.raises(DatasetFormatError, match=r"train.txt:2"):
            load_dataset(root)

    def test_empty_train_loads(self, make_dataset):
        store = load_dataset(make_dataset({"valid": [("a", "r", "b")]}))
        assert len(store.train) == 0
        assert store.num_entities == 2
        assert len(store.out_edges) == 0 or store.out_edges.degrees().sum() == 0

    def test_blank_lines_and_utf8(self, make_dataset):
        root = make_dataset({"train": [("é", "r", "ß")]})
        with open(root / "train.txt", "a", encoding="utf-8") as fh:
            fh.write("\n\n")
        store = load_dataset(root)
        assert store.decode(store.train[0]) == ("é", "r", "ß")

    def test_decode_round_trip(self, synthetic):
        raw = _read_rows(DATA_ROOT / "synthetic50" / "train.txt")
        for row, ids in zip(raw, synthetic.train):
            assert synthetic.decode(ids) == row
            assert synthetic.encode(*row) == tuple(int(x) for x in ids)

    def test_deterministic(self):
        a = load_dataset(DATA_ROOT / "synthetic50")
        b = load_dataset(DATA_ROOT / "synthetic50")
        assert a.entities.names == b.entities.names
        assert a.relations.names == b.relations.names
        for split in ("train", "valid", "test"):
            assert np.array_equal(a.split(split), b.split(split))
        assert a.out_edges == b.out_edges and a.in_edges == b.in_edges

    def test_duplicates_kept_in_split_but_not_in_observed(self, make_dataset):
        store = load_dataset(make_dataset({"train": [("a", "r", "b"), ("a", "r", "b")]}))
        assert len(store.train) == 2
        assert store.num_observed == 1

    def test_dict_dumps(self, synthetic, tmp_path):
        write_dicts(synthetic, tmp_path)
        lines = (tmp_path / "entities.dict").read_text(encoding="utf-8").splitlines()
        assert len(lines) == synthetic.num_entities
        for i, line in enumerate(lines):
            idx, name = line.split("\t")
            assert int(idx) == i and synthetic.entities.lookup(name) == i
        rel = (tmp_path / "relations.dict").read_text(encoding="utf-8").splitlines()
        assert [r.split("\t")[1] for r in rel] == synthetic.relations.names

    @pytest.mark.benchmark
    def test_wn18rr_statistics(self):
        root = benchmark_dir("WN18RR")
        if root is None:
            pytest.skip("WN18RR not available under $SANS_DATA_DIR")
        store = load_dataset(root)
        assert (store.num_entities, store.num_relations) == (40943, 11)
        assert (len(store.train), len(store.valid), len(store.test)) == (86835, 3034, 3134)


class TestObserved:
    def test_matches_brute_force_set(self, synthetic):
        truth = set()
        for split in ("train", "valid", "test"):
            for h, r, t in _read_rows(DATA_ROOT / "synthetic50" / f"{split}.txt"):
                truth.add(synthetic.encode(h, r, t))
        assert synthetic.num_observed == len(truth)
        for triple in truth:
            assert is_observed(synthetic, triple)
        rng = np.random.default_rng(0)
        checked = 0
        while checked < 1000:
            tr = (int(rng.integers(50)), int(rng.integers(3)), int(rng.integers(50)))
            if tr in truth:
                continue
            assert not is_observed(synthetic, tr)
            checked += 1

    def test_out_of_range_ids_rejected(self, synthetic):
        with pytest.raises(ContractViolation):
            synthetic.observed_mask(50, 0, 0)
        with pytest.raises(ContractViolation):
            synthetic.observed_mask(0, 3, 0)
        with pytest.raises(ContractViolation):
            TripleStore.from_ids(2, 1, [(0, 0, 2)])

    def test_known_completions(self, synthetic):
        h, r, _ = (int(x) for x in synthetic.train[0])
        tails = synthetic.known_tails(h, r)
        expect = sorted(
            {int(t) for split in ("train", "valid", "test") for hh, rr, t in synthetic.split(split)
             if hh == h and rr == r}
        )
        assert sorted(tails.tolist()) == expect
        assert synthetic.count_tails(np.array([h]), np.array([r]))[0] == len(expect)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 2), st.integers(0, 7)), max_size=40))
    def test_adjacency_lists_match_train(self, rows):
        store = TripleStore.from_ids(8, 3, np.array(rows, dtype=np.int64).reshape(-1, 3))
        for e in range(8):
            out = sorted(store.out_edges.row(e))
            assert out == sorted((r, t) for h, r, t in rows if h == e)
            inc = sorted(store.in_edges.row(e))
            assert inc == sorted((r, h) for h, r, t in rows if t == e)
