import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moss.autodiff import Tape, Tensor, backward, tsum
from moss.corpus import SEP_REQ
from moss.kb import (KbError, KnowledgeBase, MatchDegree, condition_embedding,
                     query, state_to_query)


@pytest.fixture
def restaurant_kb():
    entities = [
        {"name": "bangkok_house", "food": "thai", "area": "west", "price": "cheap"},
        {"name": "thai_orchid", "food": "thai", "area": "east", "price": "dear"},
        {"name": "roma", "food": "italian", "area": "west", "price": "cheap"},
    ]
    return KnowledgeBase(informable=["food", "area", "price"],
                         requestable=["address", "phone"], entities=entities)


class TestStateToQuery:
    def test_constraint_tokens_map_to_slots(self, restaurant_kb):
        state = ["thai", "west", SEP_REQ, "address"]
        assert state_to_query(state, restaurant_kb) == {"food": "thai",
                                                        "area": "west"}

    def test_empty_constraint_segment(self, restaurant_kb):
        assert state_to_query([SEP_REQ, "address"], restaurant_kb) == {}

    def test_unknown_tokens_ignored(self, restaurant_kb):
        state = ["zorp", "thai", SEP_REQ]
        assert state_to_query(state, restaurant_kb) == {"food": "thai"}

    def test_duplicate_slot_keeps_first_occurrence(self, restaurant_kb):
        state = ["thai", "italian", SEP_REQ]
        assert state_to_query(state, restaurant_kb) == {"food": "thai"}

    def test_case_folded(self, restaurant_kb):
        assert state_to_query(["Thai", SEP_REQ], restaurant_kb) == {"food": "thai"}


class TestQuery:
    def test_empty_kb_hits_bucket_zero(self):
        kb = KnowledgeBase(informable=["food"], requestable=[], entities=[])
        matches, deg = query(kb, {"food": "thai"})
        assert matches == []
        np.testing.assert_array_equal(deg.vector,
                                      [1.0, 0.0, 0.0, 0.0, 0.0, 0.0])

    def test_seven_entities_cap_at_top_bucket(self):
        entities = [{"food": f"f{i}"} for i in range(7)]
        kb = KnowledgeBase(informable=["food"], requestable=[],
                           entities=entities)
        matches, deg = query(kb, {})
        assert len(matches) == 7
        assert deg.bucket == 5

    def test_single_match(self, restaurant_kb):
        matches, deg = query(restaurant_kb, {"food": "thai", "area": "west"})
        assert len(matches) == 1
        assert matches[0]["name"] == "bangkok_house"
        assert deg.bucket == 1

    def test_unknown_slot_rejected(self, restaurant_kb):
        with pytest.raises(KbError, match="unknown slots"):
            query(restaurant_kb, {"色": "x"})

    def test_adding_constraint_never_widens(self, restaurant_kb):
        base, _ = query(restaurant_kb, {"food": "thai"})
        narrowed, _ = query(restaurant_kb, {"food": "thai", "price": "dear"})
        assert len(narrowed) <= len(base)

    def test_result_independent_of_entity_order(self, restaurant_kb):
        reversed_kb = KnowledgeBase(informable=restaurant_kb.informable,
                                    requestable=restaurant_kb.requestable,
                                    entities=list(reversed(restaurant_kb.entities)))
        state = ["thai", SEP_REQ]
        _, d1 = query(restaurant_kb, state_to_query(state, restaurant_kb))
        _, d2 = query(reversed_kb, state_to_query(state, reversed_kb))
        np.testing.assert_array_equal(d1.vector, d2.vector)

    def test_missing_informable_slot_rejected_on_load(self):
        with pytest.raises(KbError, match="missing informable"):
            KnowledgeBase(informable=["food", "area"], requestable=[],
                          entities=[{"food": "thai"}])

    def test_save_load_round_trip(self, tmp_path, restaurant_kb):
        path = tmp_path / "kb.json"
        restaurant_kb.save(path)
        loaded = KnowledgeBase.load(path)
        assert loaded.informable == restaurant_kb.informable
        assert loaded.entities == restaurant_kb.entities


@given(st.integers(min_value=0, max_value=20))
def test_bucket_is_min_count_cap(n):
    assert MatchDegree(count=n).bucket == min(n, 5)
    vec = MatchDegree(count=n).vector
    assert vec.sum() == 1.0
    assert vec[min(n, 5)] == 1.0


@settings(max_examples=20)
@given(st.integers(min_value=0, max_value=20), st.integers(2, 10))
def test_bucket_respects_configured_dimension(n, dim):
    deg = MatchDegree(count=n, dim=dim)
    assert deg.vector.shape == (dim,)
    assert deg.bucket == min(n, dim - 1)


class TestConditionEmbedding:
    def test_zero_embedding_keeps_one_hot_tail(self):
        out = condition_embedding(Tensor(np.zeros(4)), MatchDegree(count=0))
        np.testing.assert_array_equal(
            out.data, [0, 0, 0, 0, 1, 0, 0, 0, 0, 0])

    def test_paper_dimensions(self):
        out = condition_embedding(Tensor(np.zeros(50)), MatchDegree(count=3))
        assert out.data.shape == (56,)

    def test_embedding_part_unchanged(self):
        emb = Tensor(np.arange(4, dtype=np.float32))
        out = condition_embedding(emb, MatchDegree(count=2))
        np.testing.assert_array_equal(out.data[:4], emb.data)

    def test_gradient_reaches_embedding_only(self):
        emb = Tensor(np.random.default_rng(0).normal(size=4),
                     requires_grad=True)
        with Tape() as tape:
            loss = tsum(condition_embedding(emb, MatchDegree(count=1)))
        backward(tape, loss)
        np.testing.assert_array_equal(emb.grad, np.ones(4))
