"""Unit tests for corpus generation, views, truncation and file IO."""

import math
from dataclasses import replace

import pytest

from coteach import (Corpus, GenConfig, PairwiseTriple, TokenizedDialogue,
                     generate_synthetic_corpus, load_corpus, save_corpus,
                     to_pointwise, truncate)
from coteach.corpus import CorpusFormatError


class TestGenConfigValidation:
    def test_rejects_noise_rate_outside_unit_interval(self):
        with pytest.raises(ValueError):
            GenConfig(false_negative_rate=1.5)
        with pytest.raises(ValueError):
            GenConfig(false_negative_rate=-0.1)

    def test_rejects_vocab_too_small_for_topics(self):
        with pytest.raises(ValueError):
            GenConfig(vocab_size=10, n_topics=10)

    def test_rejects_nonpositive_counts(self):
        with pytest.raises(ValueError):
            GenConfig(n_train=0)


class TestGeneration:
    def test_sizes_match_config(self, tiny_gen_config, tiny_corpus):
        assert len(tiny_corpus.train) == tiny_gen_config.n_train
        assert len(tiny_corpus.valid) == tiny_gen_config.n_valid
        assert len(tiny_corpus.test) == tiny_gen_config.n_test_contexts
        for group in tiny_corpus.test:
            assert len(group.candidates) == tiny_gen_config.n_candidates

    def test_same_seed_reproduces_corpus(self, tiny_gen_config):
        a = generate_synthetic_corpus(tiny_gen_config)
        b = generate_synthetic_corpus(tiny_gen_config)
        assert a == b

    def test_different_seed_changes_corpus(self, tiny_gen_config):
        other = generate_synthetic_corpus(replace(tiny_gen_config, seed=8))
        assert other != generate_synthetic_corpus(tiny_gen_config)

    def test_zero_noise_rate_marks_nothing(self, tiny_gen_config):
        corpus = generate_synthetic_corpus(
            replace(tiny_gen_config, false_negative_rate=0.0))
        assert all(t.noise_flag is False for t in corpus.train)
        assert all(t.noise_flag is False for t in corpus.valid)

    def test_full_noise_rate_marks_everything(self, tiny_gen_config):
        corpus = generate_synthetic_corpus(
            replace(tiny_gen_config, false_negative_rate=1.0))
        assert all(t.noise_flag is True for t in corpus.train)

    def test_noise_fraction_within_binomial_bound(self):
        rho, n = 0.3, 4000
        corpus = generate_synthetic_corpus(
            GenConfig(vocab_size=100, n_topics=5, n_train=n, n_valid=10,
                      n_test_contexts=5, false_negative_rate=rho, seed=3))
        fraction = sum(t.noise_flag for t in corpus.train) / n
        assert abs(fraction - rho) < 4 * math.sqrt(rho * (1 - rho) / n)

    def test_positive_differs_from_negative(self, tiny_corpus):
        for t in tiny_corpus.train:
            assert t.pos_response != t.neg_response

    def test_every_test_group_is_mixed(self, tiny_corpus):
        for group in tiny_corpus.test:
            labels = {label for _, label in group.candidates}
            assert labels == {0, 1}

    def test_token_ids_stay_inside_vocab(self, tiny_gen_config, tiny_corpus):
        vocab = tiny_gen_config.vocab_size
        for t in tiny_corpus.train[:20]:
            for utt in t.context:
                assert all(0 <= tok < vocab for tok in utt)
            assert all(0 <= tok < vocab for tok in t.pos_response)
            assert all(0 <= tok < vocab for tok in t.neg_response)


class TestToPointwise:
    def test_empty(self):
        assert to_pointwise([]) == []

    def test_single_triple_yields_labels_one_zero(self):
        t = PairwiseTriple(((1, 2),), (3,), (4,))
        examples = to_pointwise([t])
        assert [e.y for e in examples] == [1, 0]
        assert examples[0].dialogue.response == (3,)
        assert examples[1].dialogue.response == (4,)
        assert examples[0].dialogue.context == t.context

    def test_labels_alternate(self):
        triples = [PairwiseTriple(((i,),), (i, 1), (i, 2)) for i in range(3)]
        examples = to_pointwise(triples)
        assert [e.y for e in examples] == [1, 0, 1, 0, 1, 0]

    def test_balanced_labels(self, tiny_corpus):
        examples = to_pointwise(tiny_corpus.train)
        ones = sum(e.y for e in examples)
        assert ones == len(examples) - ones == len(tiny_corpus.train)


class TestTruncate:
    def test_keeps_last_turns(self):
        context = tuple((i,) for i in range(12))
        out = truncate(TokenizedDialogue(context, (0,)), max_turns=10)
        assert out.context == context[-10:]

    def test_under_limit_unchanged(self):
        d = TokenizedDialogue(((1,), (2,), (3,)), (4, 5))
        assert truncate(d) == d

    def test_keeps_first_tokens(self):
        response = tuple(range(60))
        out = truncate(TokenizedDialogue(((1,),), response), max_tokens=50)
        assert out.response == response[:50]

    def test_truncates_utterance_tokens(self):
        utt = tuple(range(60))
        out = truncate(TokenizedDialogue((utt,), (1,)), max_tokens=50)
        assert out.context[0] == utt[:50]

    def test_idempotent(self):
        d = TokenizedDialogue(tuple((i,) * 60 for i in range(12)), tuple(range(55)))
        once = truncate(d)
        assert truncate(once) == once


class TestFileIO:
    def test_round_trip_identity(self, tiny_corpus, tmp_path):
        save_corpus(tiny_corpus, tmp_path / "c")
        assert load_corpus(tmp_path / "c") == tiny_corpus

    def test_round_trip_without_noise_flags(self, tmp_path):
        corpus = Corpus(
            train=(PairwiseTriple(((1, 2), (3,)), (4,), (5,)),),
            valid=(), test=(), vocab_size=10)
        save_corpus(corpus, tmp_path / "c")
        loaded = load_corpus(tmp_path / "c")
        assert loaded.train == corpus.train
        assert loaded.train[0].noise_flag is None

    def test_empty_train_file_loads_empty(self, tiny_corpus, tmp_path):
        save_corpus(tiny_corpus, tmp_path / "c")
        (tmp_path / "c" / "train.txt").write_text("#vocab=60 candidates=6\n")
        (tmp_path / "c" / "meta.json").write_text("{}")
        assert load_corpus(tmp_path / "c").train == ()

    def test_malformed_line_names_location(self, tiny_corpus, tmp_path):
        save_corpus(tiny_corpus, tmp_path / "c")
        path = tmp_path / "c" / "train.txt"
        lines = path.read_text().splitlines()
        lines[1] = "POS"  # a line with one field
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorpusFormatError) as exc:
            load_corpus(tmp_path / "c")
        assert "train.txt:2" in str(exc.value)

    def test_token_beyond_vocab_rejected(self, tiny_corpus, tmp_path):
        save_corpus(tiny_corpus, tmp_path / "c")
        path = tmp_path / "c" / "test.txt"
        lines = path.read_text().splitlines()
        fields = lines[1].split("\t")
        fields[-1] = "9999"
        lines[1] = "\t".join(fields)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorpusFormatError, match="9999"):
            load_corpus(tmp_path / "c")

    def test_missing_header_rejected(self, tiny_corpus, tmp_path):
        save_corpus(tiny_corpus, tmp_path / "c")
        path = tmp_path / "c" / "valid.txt"
        body = path.read_text().splitlines()[1:]
        path.write_text("\n".join(body) + "\n")
        with pytest.raises(CorpusFormatError):
            load_corpus(tmp_path / "c")

    def test_dangling_pos_line_rejected(self, tiny_corpus, tmp_path):
        save_corpus(tiny_corpus, tmp_path / "c")
        path = tmp_path / "c" / "train.txt"
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")  # drop final NEG line
        with pytest.raises(CorpusFormatError, match="dangling"):
            load_corpus(tmp_path / "c")

    def test_save_is_deterministic(self, tiny_corpus, tmp_path):
        save_corpus(tiny_corpus, tmp_path / "a")
        save_corpus(tiny_corpus, tmp_path / "b")
        for name in ("train.txt", "valid.txt", "test.txt", "meta.json"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())
