from __future__ import annotations

from itertools import combinations

import pytest

from policyx.corpus import (
    corpus_digest,
    load_corpus,
    save_corpus,
    select_exemplars,
)
from policyx.errors import DuplicateId, InsufficientGold, InvalidGoldLabel, MalformedFile
from policyx.taxonomy import LegalStrategy, PolicyType

HEADER = "id,title,summary,state,effect_year,policy_type,strategy_1,strategy_2,grow,process,distribute,get,make,surplus"


def write_csv(tmp_path, rows, header=HEADER):
    path = tmp_path / "corpus.csv"
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_fixture_loads_with_gold(self, fixture_corpus):
        assert len(fixture_corpus) == 12
        assert all(r.gold is not None for r in fixture_corpus)
        first = fixture_corpus[0]
        assert first.id == "p-001"
        assert first.gold.state == "Washington"
        assert first.gold.effect_year == 2014
        assert first.gold.policy_type is PolicyType.LAW
        assert first.gold.strategies == frozenset({LegalStrategy.S1, LegalStrategy.S7})
        assert first.gold.food_row() == (1, 0, 1, 0, 0, 0)

    def test_formats_agree(self, data_dir):
        csv_records = load_corpus(data_dir / "fixture_corpus.csv")
        jsonl_records = load_corpus(data_dir / "fixture_corpus.jsonl")
        assert csv_records == jsonl_records
        assert corpus_digest(csv_records) == corpus_digest(jsonl_records)

    def test_invalid_gold_policy_type(self, tmp_path):
        path = write_csv(
            tmp_path,
            ['r-1,Some Title,Sum,Washington,2014,Ordnance,,,0,0,0,0,0,0'],
        )
        with pytest.raises(InvalidGoldLabel) as err:
            load_corpus(path)
        assert err.value.column == "policy_type"
        assert err.value.row == 2

    def test_invalid_gold_strategy(self, tmp_path):
        path = write_csv(
            tmp_path,
            ['r-1,Some Title,Sum,Washington,2014,Law,Bans advertising,,0,0,0,0,0,0'],
        )
        with pytest.raises(InvalidGoldLabel) as err:
            load_corpus(path)
        assert err.value.column == "strategy_1"

    def test_invalid_food_flag(self, tmp_path):
        path = write_csv(
            tmp_path,
            ['r-1,Some Title,Sum,Washington,2014,Law,,,2,0,0,0,0,0'],
        )
        with pytest.raises(InvalidGoldLabel) as err:
            load_corpus(path)
        assert err.value.column == "grow"

    def test_duplicate_id(self, tmp_path):
        row = 'p-001,Title,Sum,Washington,2014,Law,,,0,0,0,0,0,0'
        path = write_csv(tmp_path, [row, row])
        with pytest.raises(DuplicateId):
            load_corpus(path)

    def test_unparseable_jsonl(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "title": "t"}\nnot json\n', encoding="utf-8")
        with pytest.raises(MalformedFile):
            load_corpus(path)

    def test_unknown_column_rejected(self, tmp_path):
        path = write_csv(tmp_path, [], header=HEADER + ",city")
        with pytest.raises(MalformedFile):
            load_corpus(path)

    def test_missing_title_rejected(self, tmp_path):
        path = write_csv(tmp_path, ['r-1,,Sum,Washington,2014,Law,,,0,0,0,0,0,0'])
        with pytest.raises(MalformedFile):
            load_corpus(path)

    def test_records_without_gold(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "title": "A title", "summary": ""}\n', encoding="utf-8")
        records = load_corpus(path)
        assert records[0].gold is None

    def test_partial_gold_rejected(self, tmp_path):
        path = write_csv(tmp_path, ['r-1,Title,Sum,Washington,2014,,,,0,0,0,0,0,0'])
        with pytest.raises(InvalidGoldLabel) as err:
            load_corpus(path)
        assert err.value.column == "policy_type"


class TestRoundTrip:
    @pytest.mark.parametrize("fmt", ["csv", "jsonl"])
    def test_save_then_load_is_identity(self, fixture_corpus, tmp_path, fmt):
        path = tmp_path / f"again.{fmt}"
        save_corpus(fixture_corpus, path)
        assert load_corpus(path) == fixture_corpus

    def test_cross_format_round_trip(self, fixture_corpus, tmp_path):
        jsonl = tmp_path / "corpus.jsonl"
        save_corpus(fixture_corpus, jsonl)
        csv_path = tmp_path / "corpus.csv"
        save_corpus(load_corpus(jsonl), csv_path)
        assert load_corpus(csv_path) == fixture_corpus


class TestSelectExemplars:
    def test_partition_is_disjoint_and_complete(self, fixture_corpus):
        split = select_exemplars(fixture_corpus, k=3, seed=7)
        assert split.exemplar_ids.isdisjoint(split.eval_ids)
        assert split.exemplar_ids | split.eval_ids == {r.id for r in fixture_corpus}
        assert len(split.exemplar_ids) == 3

    def test_same_seed_same_split(self, fixture_corpus):
        a = select_exemplars(fixture_corpus, k=4, seed=11)
        b = select_exemplars(fixture_corpus, k=4, seed=11)
        assert a == b

    def test_coverage_of_policy_types(self, fixture_corpus):
        # Four exemplars suffice to cover all four policy types on the fixture:
        # brute force over size-4 subsets shows a full-coverage pick exists, and
        # greedy must cover at least as many labels as any single-type bound.
        split = select_exemplars(fixture_corpus, k=4, seed=0)
        by_id = {r.id: r for r in fixture_corpus}
        covered_types = {by_id[i].gold.policy_type for i in split.exemplar_ids}
        assert covered_types == set(PolicyType)

    def test_forced_single_pick(self, fixture_corpus):
        sub = fixture_corpus[:2]
        split = select_exemplars(sub, k=1, seed=3)
        assert len(split.exemplar_ids) == 1
        assert len(split.eval_ids) == 1

    def test_greedy_matches_bruteforce_on_small_corpus(self, fixture_corpus):
        sub = fixture_corpus[:6]

        def labels(r):
            return {("t", r.gold.policy_type.name)} | {("s", s.code) for s in r.gold.strategies}

        best = max(
            len(set().union(*(labels(r) for r in combo)))
            for combo in combinations(sub, 2)
        )
        split = select_exemplars(sub, k=2, seed=1)
        by_id = {r.id: r for r in sub}
        greedy = len(set().union(*(labels(by_id[i]) for i in split.exemplar_ids)))
        assert greedy >= best - 1

    def test_requires_gold(self, fixture_corpus):
        from policyx.corpus import PolicyRecord

        records = list(fixture_corpus) + [PolicyRecord(id="x", title="No gold")]
        with pytest.raises(InsufficientGold):
            select_exemplars(records, k=2, seed=0)

    def test_k_bounds(self, fixture_corpus):
        with pytest.raises(ValueError):
            select_exemplars(fixture_corpus, k=0, seed=0)
        with pytest.raises(ValueError):
            select_exemplars(fixture_corpus, k=12, seed=0)


class TestCorpusDigest:
    def test_stable_across_record_order(self, fixture_corpus):
        assert corpus_digest(fixture_corpus) == corpus_digest(list(reversed(fixture_corpus)))

    def test_sensitive_to_content(self, fixture_corpus, tmp_path):
        save_corpus(fixture_corpus[:-1], tmp_path / "smaller.csv")
        smaller = load_corpus(tmp_path / "smaller.csv")
        assert corpus_digest(smaller) != corpus_digest(fixture_corpus)
