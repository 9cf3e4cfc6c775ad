import json

import pytest

from moss.corpus import (EOS_A, EOS_S, GO, RESERVED, SEP_REQ, CorpusError,
                         Dialog, DialogTurn, Goal, ModuleMask, Vocab,
                         build_vocab, load_corpus, make_turn_input,
                         save_corpus, split_state, state_summary)


def full_turn(user="i want thai food", m="inform <sep_inf> thai",
              s="thai <sep_req>", a="ask <sep_inf> area",
              resp="what area would you like"):
    return {"user": user, "m": m, "s": s, "a": a, "resp": resp,
            "mask": {"nlu": True, "dst": True, "dpl": True, "nlg": True}}


def write_corpus(tmp_path, lines):
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(json.dumps(x) for x in lines) + ("\n" if lines else ""),
                    encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_empty_file_gives_empty_corpus(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_corpus(path) == []

    def test_single_fully_annotated_dialog(self, tmp_path):
        path = write_corpus(tmp_path, [{"dialog_id": "d1", "goal": None,
                                        "turns": [full_turn()]}])
        corpus = load_corpus(path)
        assert len(corpus) == 1
        turn = corpus[0].turns[0]
        assert turn.mask.nlu and turn.mask.dst and turn.mask.dpl and turn.mask.nlg
        assert turn.semantics == ["inform", "<sep_inf>", "thai"]

    def test_missing_field_with_true_mask_reports_line(self, tmp_path):
        bad = full_turn()
        bad["m"] = None
        path = write_corpus(tmp_path, [
            {"dialog_id": "ok", "goal": None, "turns": [full_turn()]},
            {"dialog_id": "bad", "goal": None, "turns": [bad]},
        ])
        with pytest.raises(CorpusError, match="line 2.*mask.nlu.*'m'"):
            load_corpus(path)

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"dialog_id": "a", "turns": [%s]}\nnot json\n'
                        % json.dumps(full_turn()), encoding="utf-8")
        with pytest.raises(CorpusError, match="line 2"):
            load_corpus(path)

    def test_duplicate_constraint_rejected(self, tmp_path):
        bad = full_turn(s="thai thai <sep_req>")
        path = write_corpus(tmp_path, [{"dialog_id": "d", "goal": None,
                                        "turns": [bad]}])
        with pytest.raises(CorpusError, match="repeats"):
            load_corpus(path)

    def test_round_trip_is_byte_identical(self, tmp_path):
        path = write_corpus(tmp_path, [
            {"dialog_id": "d1",
             "goal": {"constraints": {"food": "thai"}, "requests": ["phone"],
                      "solution": None},
             "turns": [full_turn()]},
            {"dialog_id": "d2", "goal": None,
             "turns": [full_turn(m=None) | {"mask": {"nlu": False, "dst": True,
                                                     "dpl": True, "nlg": True}}]},
        ])
        corpus = load_corpus(path)
        out1 = tmp_path / "out1.jsonl"
        save_corpus(corpus, out1)
        out2 = tmp_path / "out2.jsonl"
        save_corpus(load_corpus(out1), out2)
        assert out1.read_bytes() == out2.read_bytes()


class TestVocab:
    def _dialog(self, words):
        return Dialog("d", [DialogTurn(user=words.split(),
                                       mask=ModuleMask(False, False, False, False))])

    def test_small_corpus_keeps_everything(self):
        vocab = build_vocab([self._dialog("alpha beta gamma")], limit=800)
        assert len(vocab) == 3 + len(RESERVED)

    def test_limit_caps_size_exactly(self):
        words = " ".join(f"tok{i:04d}" for i in range(1000))
        vocab = build_vocab([self._dialog(words)], limit=800)
        assert len(vocab) == 800

    def test_frequency_then_lexicographic_order(self):
        vocab = build_vocab([self._dialog("zebra zebra apple banana")], limit=800)
        assert vocab.encode("zebra") < vocab.encode("apple") < vocab.encode("banana")

    def test_ties_break_lexicographically(self):
        vocab = build_vocab([self._dialog("pear plum")], limit=800)
        assert vocab.encode("pear") < vocab.encode("plum")

    def test_oov_encodes_to_unk(self):
        vocab = build_vocab([self._dialog("alpha")], limit=800)
        assert vocab.encode("nonexistent") == vocab.unk_id

    def test_encode_decode_round_trip(self):
        vocab = build_vocab([self._dialog("alpha beta")], limit=800)
        for i in range(len(vocab)):
            assert vocab.encode(vocab.decode(i)) == i

    def test_save_load_preserves_ids(self, tmp_path):
        vocab = build_vocab([self._dialog("alpha beta gamma")], limit=800)
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        loaded = Vocab.load(path)
        assert len(loaded) == len(vocab)
        assert loaded.encode("beta") == vocab.encode("beta")

    def test_limit_below_reserved_rejected(self):
        with pytest.raises(CorpusError):
            build_vocab([self._dialog("x")], limit=3)


class TestStateSummary:
    def test_empty_summary_is_sentinel(self):
        assert state_summary(None, None) == [GO]

    def test_summary_concatenates_with_separators(self):
        s = ["thai", SEP_REQ, "phone"]
        a = ["ask", "<sep_inf>", "area"]
        assert state_summary(s, a) == s + [EOS_S] + a + [EOS_A]

    def test_split_state(self):
        assert split_state(["thai", "west", SEP_REQ, "phone"]) == (
            ["thai", "west"], ["phone"])
        assert split_state(["thai"]) == (["thai"], [])


class TestMakeTurnInput:
    def _dialog(self):
        t1 = DialogTurn(user="hi there".split(),
                        semantics=["greet", "<sep_inf>"],
                        state=[SEP_REQ], acts=["greet", "<sep_inf>"],
                        response="hello how can i help".split())
        t2 = DialogTurn(user="thai food please".split(),
                        semantics=["inform", "<sep_inf>", "thai"],
                        state=["thai", SEP_REQ],
                        acts=["ask", "<sep_inf>", "area"],
                        response="what area".split())
        return Dialog("d", [t1, t2])

    def test_first_turn_uses_sentinels(self):
        summary, resp, user = make_turn_input(self._dialog(), 1)
        assert summary == [GO]
        assert resp == [GO]
        assert user == ["hi", "there"]

    def test_gold_source_concatenates_previous_annotations(self):
        dialog = self._dialog()
        summary, resp, _ = make_turn_input(dialog, 2, source="gold")
        assert summary == state_summary(dialog.turns[0].state,
                                        dialog.turns[0].acts)
        assert resp == dialog.turns[0].response

    def test_predicted_source_uses_model_outputs_even_when_wrong(self):
        wrong = DialogTurn(user=[], state=["sushi", SEP_REQ],
                           acts=["bye", "<sep_inf>"],
                           response=["goodbye"],
                           mask=ModuleMask(False, False, False, False))
        summary, resp, _ = make_turn_input(self._dialog(), 2,
                                           source="predicted",
                                           predicted=[wrong])
        assert summary == ["sushi", SEP_REQ, EOS_S, "bye", "<sep_inf>", EOS_A]
        assert resp == ["goodbye"]

    def test_turn_out_of_range(self):
        with pytest.raises(IndexError):
            make_turn_input(self._dialog(), 3)

    def test_summary_chain_matches_stored_annotations(self):
        dialog = self._dialog()
        chain = [state_summary(t.state, t.acts) for t in dialog.turns]
        for t in range(2, len(dialog.turns) + 1):
            summary, _, _ = make_turn_input(dialog, t, source="gold")
            assert summary == chain[t - 2]


def test_goal_round_trip(tmp_path):
    goal = Goal(constraints={"food": "thai"}, requests=["phone", "address"],
                solution="solve_reset")
    d = Dialog("d", [DialogTurn(user=["hi"],
                                mask=ModuleMask(False, False, False, False))],
               goal=goal)
    path = tmp_path / "g.jsonl"
    save_corpus([d], path)
    loaded = load_corpus(path)[0]
    assert loaded.goal.constraints == {"food": "thai"}
    assert loaded.goal.requests == ["phone", "address"]
    assert loaded.goal.solution == "solve_reset"
