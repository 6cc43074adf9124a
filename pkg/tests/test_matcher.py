"""Unit tests for the matcher architectures, gradients and checkpoints."""

import math

import numpy as np
import pytest

from coteach import (LearningProtocol, MatcherSpec, ModelState, PairwiseTriple,
                     PointwiseExample, TokenizedDialogue, finite_diff_check,
                     init_params, load_checkpoint, loss_and_grad,
                     save_checkpoint, score)
from coteach import matcher
from coteach.losses import (CROSS_ENTROPY, HINGE_WITH_MARGIN,
                            WEIGHTED_CROSS_ENTROPY)
from coteach.matcher import n_params, param_layout, protocol_loss

from conftest import random_dialogue, random_triple


class TestSpecAndLayout:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            MatcherSpec(kind="transformer", vocab_size=10)

    def test_nonpositive_dims_rejected(self):
        with pytest.raises(ValueError):
            MatcherSpec(kind="mean-embedding-bilinear", vocab_size=10,
                        embedding_dim=0)

    def test_layout_partitions_param_vector(self, small_spec):
        layout = param_layout(small_spec)
        total = layout.pop("_total")
        slices = sorted(layout.values(), key=lambda s: s.start)
        assert slices[0].start == 0
        for a, b in zip(slices, slices[1:]):
            assert a.stop == b.start
        assert slices[-1].stop == total.stop == n_params(small_spec)

    def test_model_state_validates_length(self, small_spec):
        with pytest.raises(ValueError):
            ModelState(small_spec, np.zeros(n_params(small_spec) + 1))

    def test_model_state_rejects_nonfinite(self, small_spec):
        params = np.zeros(n_params(small_spec))
        params[0] = np.nan
        with pytest.raises(ValueError):
            ModelState(small_spec, params)


class TestInitParams:
    def test_deterministic(self, small_spec):
        a = init_params(small_spec, seed=5)
        b = init_params(small_spec, seed=5)
        assert np.array_equal(a.params, b.params)

    def test_biases_are_zero(self, small_spec):
        model = init_params(small_spec, seed=5)
        layout = param_layout(small_spec)
        for name, sl in layout.items():
            if name.startswith("b") and name != "_total":
                assert np.all(model.params[sl] == 0.0)

    def test_weights_in_init_range(self, small_spec):
        model = init_params(small_spec, seed=5)
        assert np.all(np.abs(model.params) <= 0.1)


class TestScore:
    def test_score_in_open_unit_interval(self, small_model):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = score(small_model, random_dialogue(rng))
            assert 0.0 < s < 1.0

    def test_zero_head_gives_half(self, small_spec):
        # With every head parameter zero the pre-sigmoid logit is 0.
        model = init_params(small_spec, seed=5)
        params = model.params.copy()
        layout = param_layout(small_spec)
        for name, sl in layout.items():
            if name not in ("E", "_total"):
                params[sl] = 0.0
        model = ModelState(small_spec, params)
        assert score(model, TokenizedDialogue(((1, 2),), (3,))) == 0.5

    def test_bilinear_closed_form(self):
        # d=1, all embeddings 1, W=[2], b=0: u=v=1, s = sigmoid(2).
        spec = MatcherSpec("mean-embedding-bilinear", vocab_size=5, embedding_dim=1)
        params = np.zeros(n_params(spec))
        layout = param_layout(spec)
        params[layout["E"]] = 1.0
        params[layout["W"]] = 2.0
        model = ModelState(spec, params)
        s = score(model, TokenizedDialogue(((0, 1), (2,)), (3, 4)))
        assert s == pytest.approx(1.0 / (1.0 + math.exp(-2.0)), abs=1e-12)
        assert s == pytest.approx(0.880797, abs=1e-6)

    def test_token_permutation_invariance(self, small_model):
        d = TokenizedDialogue(((3, 1, 4, 1, 5), (9, 2, 6)), (5, 3, 5, 8))
        permuted = TokenizedDialogue(((1, 5, 4, 3, 1), (2, 6, 9)), (8, 5, 3, 5))
        assert score(small_model, d) == pytest.approx(
            score(small_model, permuted), abs=1e-15)

    def test_out_of_range_token_rejected(self, small_model):
        with pytest.raises(ValueError):
            score(small_model, TokenizedDialogue(((99,),), (1,)))

    def test_empty_utterance_rejected(self, small_model):
        with pytest.raises(ValueError):
            score(small_model, TokenizedDialogue(((),), (1,)))


def _pointwise_protocol(rng, kind, n=4):
    instances = []
    for i in range(n):
        y = int(rng.integers(2))
        weight = 1.0 if kind == CROSS_ENTROPY else float(rng.uniform(0, 1))
        instances.append((PointwiseExample(y, random_dialogue(rng)), weight))
    return LearningProtocol(kind, pointwise=tuple(instances))


def _pairwise_protocol(rng, n=4):
    instances = tuple((random_triple(rng), float(rng.uniform(0, 0.5)))
                      for _ in range(n))
    return LearningProtocol(HINGE_WITH_MARGIN, pairwise=instances)


class TestLossAndGrad:
    def test_satisfied_hinge_is_flat(self, small_spec):
        # Teacher margin 0 and positive already ahead: loss 0, zero gradient.
        model = init_params(small_spec, seed=1)
        rng = np.random.default_rng(2)
        triple = random_triple(rng)
        s_pos = score(model, TokenizedDialogue(triple.context, triple.pos_response))
        s_neg = score(model, TokenizedDialogue(triple.context, triple.neg_response))
        if s_pos < s_neg:
            triple = PairwiseTriple(triple.context, triple.neg_response,
                                    triple.pos_response)
        protocol = LearningProtocol(HINGE_WITH_MARGIN, pairwise=((triple, 0.0),))
        loss, grad = loss_and_grad(model, protocol)
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_zero_weights_give_zero_loss_and_grad(self, small_model):
        rng = np.random.default_rng(3)
        instances = tuple((PointwiseExample(1, random_dialogue(rng)), 0.0)
                          for _ in range(3))
        protocol = LearningProtocol(WEIGHTED_CROSS_ENTROPY, pointwise=instances)
        loss, grad = loss_and_grad(small_model, protocol)
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_empty_protocol_rejected(self):
        # the protocol container itself refuses emptiness
        with pytest.raises(ValueError):
            LearningProtocol(CROSS_ENTROPY)

    def test_loss_matches_protocol_loss(self, small_model):
        rng = np.random.default_rng(4)
        for kind in (CROSS_ENTROPY, WEIGHTED_CROSS_ENTROPY):
            protocol = _pointwise_protocol(rng, kind)
            loss, _ = loss_and_grad(small_model, protocol)
            assert loss == pytest.approx(protocol_loss(small_model, protocol),
                                         abs=1e-9)

    @pytest.mark.parametrize("loss_kind", ["hinge", "ce", "wce"])
    def test_gradient_matches_finite_differences(self, small_spec, loss_kind):
        rng = np.random.default_rng(5)
        model = init_params(small_spec, seed=int(rng.integers(1000)))
        if loss_kind == "hinge":
            protocol = _pairwise_protocol(rng)
        else:
            kind = CROSS_ENTROPY if loss_kind == "ce" else WEIGHTED_CROSS_ENTROPY
            protocol = _pointwise_protocol(rng, kind)
        assert finite_diff_check(model, protocol, step=1e-5) < 1e-4


class TestFiniteDiffCheck:
    def test_doubled_gradient_detected(self, small_model, monkeypatch):
        rng = np.random.default_rng(6)
        protocol = _pointwise_protocol(rng, CROSS_ENTROPY)
        real = matcher.loss_and_grad

        def doubled(model, proto):
            loss, grad = real(model, proto)
            return loss, 2.0 * grad

        monkeypatch.setattr(matcher, "loss_and_grad", doubled)
        err = finite_diff_check(small_model, protocol, step=1e-5)
        # |2g - g| / max(|2g|, |g|) = 0.5 on every active coordinate
        assert err == pytest.approx(0.5, abs=1e-3)

    def test_flat_region_reports_zero(self, small_spec):
        # A protocol whose loss is identically 0 near the current params.
        model = init_params(small_spec, seed=1)
        rng = np.random.default_rng(7)
        triple = random_triple(rng)
        s_pos = score(model, TokenizedDialogue(triple.context, triple.pos_response))
        s_neg = score(model, TokenizedDialogue(triple.context, triple.neg_response))
        if s_pos < s_neg:
            triple = PairwiseTriple(triple.context, triple.neg_response,
                                    triple.pos_response)
        protocol = LearningProtocol(HINGE_WITH_MARGIN, pairwise=((triple, 0.0),))
        assert finite_diff_check(model, protocol, step=1e-6) == 0.0

    def test_nonpositive_step_rejected(self, small_model):
        rng = np.random.default_rng(8)
        with pytest.raises(ValueError):
            finite_diff_check(small_model, _pointwise_protocol(rng, CROSS_ENTROPY),
                              step=0.0)


class TestCheckpoints:
    def test_round_trip_preserves_bits(self, small_model, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(small_model, path)
        loaded = load_checkpoint(path)
        assert loaded.spec == small_model.spec
        assert np.array_equal(loaded.params, small_model.params)
        rng = np.random.default_rng(9)
        d = random_dialogue(rng)
        assert score(loaded, d) == score(small_model, d)

    def test_truncated_file_rejected(self, small_model, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(small_model, path)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"not a checkpoint\n")
        with pytest.raises(ValueError):
            load_checkpoint(path)
