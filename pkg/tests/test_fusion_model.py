"""Fusion model tests: shapes, pooling math, losses, decoder causality,
training determinism, gradient correctness, checkpoint round-trip."""

import math

import numpy as np
import pytest
import torch

from persuasionkit.corpus import AdSample
from persuasionkit.errors import (
    DivergenceError,
    EmptyCorpusError,
    ShapeError,
    ValidationError,
    VocabError,
)
from persuasionkit.features import ExtractorConfig, stub_suite
from persuasionkit.features.pipeline import extract_raw_features
from persuasionkit.model import (
    BOS,
    EOS,
    FusionConfig,
    FusionModel,
    TrainConfig,
    TrainedModel,
    Vocabulary,
    collate_raw,
    load_checkpoint,
    make_prediction,
    multitask_loss,
    pool_self_attention,
    save_checkpoint,
    strategy_loss,
    train,
)
from persuasionkit.synthetic import make_synthetic_corpus
from persuasionkit.taxonomy import StrategySet, load_taxonomy

TAXONOMY = load_taxonomy()

SMALL_EX = ExtractorConfig(
    d_model=32, ocr_max_tokens=8, n_roi=3, n_cap=1, backbone_dim=16, symbol_classes=8
)
SMALL_ARCH = FusionConfig(
    extractor=SMALL_EX,
    num_classes=TAXONOMY.num_classes,
    n_heads=2,
    ff_width=64,
    max_decode_len=16,
)


def small_train_config(**kw):
    defaults = dict(epochs=2, batch_size=8, seed=0)
    defaults.update(kw)
    return TrainConfig(**defaults)


@pytest.fixture(scope="module")
def suite():
    return stub_suite()


@pytest.fixture(scope="module")
def full_model():
    return FusionModel.build(
        FusionConfig(extractor=ExtractorConfig(), num_classes=TAXONOMY.num_classes), seed=0
    )


class TestEncode:
    def test_shape_preserving_114x256(self, full_model, suite):
        cfg = full_model.config.extractor
        raw = extract_raw_features(AdSample("a", "stub://a", "some text"), cfg, suite)
        blocks, mask = collate_raw([raw], cfg)
        full_model.eval()
        with torch.no_grad():
            bundle = full_model.bundle_from_raw(blocks, mask)
            enc = full_model.encode(bundle)
        assert tuple(bundle.shape) == (1, 114, 256)
        assert tuple(enc.shape) == (1, 114, 256)

    def test_finite_at_init_on_constant_rows(self, full_model):
        bundle = torch.ones(114, 256)
        full_model.eval()
        with torch.no_grad():
            enc = full_model.encode(bundle)
        assert torch.isfinite(enc).all()

    def test_eval_mode_deterministic(self, full_model):
        bundle = torch.randn(114, 256, generator=torch.Generator().manual_seed(5))
        full_model.eval()
        with torch.no_grad():
            a = full_model.encode(bundle)
            b = full_model.encode(bundle)
        assert torch.equal(a, b)

    def test_wrong_shape_rejected(self, full_model):
        with pytest.raises(ShapeError):
            full_model.encode(torch.zeros(100, 256))


class TestPoolSelfAttention:
    def test_identical_rows_return_that_row(self):
        v = torch.randn(16, generator=torch.Generator().manual_seed(1))
        enc = v.expand(10, 16).clone()
        w = torch.randn(16, 1, generator=torch.Generator().manual_seed(2))
        out = pool_self_attention(enc, w)
        assert torch.allclose(out, v, atol=1e-6)

    def test_zero_scores_give_row_mean(self):
        enc = torch.randn(114, 256, generator=torch.Generator().manual_seed(3))
        out = pool_self_attention(enc, torch.zeros(256, 1))
        assert torch.allclose(out, enc.mean(dim=0), atol=1e-6)

    def test_saturated_softmax_selects_row(self):
        # one row's score exceeds the rest by ~50: softmax weight ~ 1
        d = 8
        w = torch.zeros(d, 1)
        w[0, 0] = 1.0
        enc = torch.randn(20, d, generator=torch.Generator().manual_seed(4))
        enc[:, 0] = 0.0
        enc[7, 0] = 50.0
        out = pool_self_attention(enc.double(), w.double())
        # direct computation of the softmax-weighted combination
        scores = (enc.double() @ w.double()).squeeze(1)
        weights = torch.exp(scores - scores.max())
        weights = weights / weights.sum()
        direct = (weights.unsqueeze(1) * enc.double()).sum(dim=0)
        assert torch.allclose(out, direct, atol=1e-12)
        assert torch.allclose(out, enc[7].double(), atol=1e-6)

    def test_weights_sum_to_one(self):
        enc = torch.randn(30, 12, generator=torch.Generator().manual_seed(6))
        w = torch.randn(12, 1, generator=torch.Generator().manual_seed(7))
        scores = enc @ w
        weights = torch.softmax(scores, dim=-2)
        assert float(weights.sum()) == pytest.approx(1.0, abs=1e-6)

    def test_output_in_convex_hull(self):
        rng = torch.Generator().manual_seed(8)
        for _ in range(20):
            enc = torch.randn(15, 6, generator=rng)
            w = torch.randn(6, 1, generator=rng)
            out = pool_self_attention(enc, w)
            assert (out >= enc.min(dim=0).values - 1e-6).all()
            assert (out <= enc.max(dim=0).values + 1e-6).all()


class TestPredict:
    def test_zero_logits_give_half(self):
        probs = torch.sigmoid(torch.zeros(5))
        assert torch.allclose(probs, torch.full((5,), 0.5))

    def test_sigmoid_values(self):
        logits = torch.tensor([4.0, -4.0, 0.0])
        probs = torch.sigmoid(logits)
        expected = [1 / (1 + math.exp(-4)), 1 / (1 + math.exp(4)), 0.5]
        assert np.allclose(probs.numpy(), expected, atol=1e-6)
        assert probs[0] == pytest.approx(0.982, abs=1e-3)
        assert probs[1] == pytest.approx(0.018, abs=1e-3)

    def test_topk_tie_break_lower_index_first(self):
        pred = make_prediction(np.array([0.9, 0.9, 0.1]), np.zeros(4), ["a", "b", "c"])
        assert pred.topk[:2] == ("a", "b")

    def test_probs_do_not_sum_to_one(self, full_model):
        pooled = torch.randn(3, 256, generator=torch.Generator().manual_seed(9))
        with torch.no_grad():
            probs = full_model.class_probs(pooled)
        sums = probs.sum(dim=1)
        assert ((probs >= 0) & (probs <= 1)).all()
        assert not torch.allclose(sums, torch.ones_like(sums), atol=0.01)

    def test_head_permutation_equivariance(self, full_model):
        pooled = torch.randn(256, generator=torch.Generator().manual_seed(10))
        with torch.no_grad():
            probs = full_model.class_probs(pooled).numpy()
        perm = np.random.default_rng(0).permutation(full_model.config.num_classes)
        permuted = FusionModel(full_model.config)
        with torch.no_grad():
            permuted.load_state_dict(full_model.state_dict())
            permuted.head.weight.copy_(full_model.head.weight[perm])
            permuted.head.bias.copy_(full_model.head.bias[perm])
            probs_perm = permuted.class_probs(pooled).numpy()
        assert np.allclose(probs_perm, probs[perm], atol=1e-7)


class TestStrategyLoss:
    def test_perfect_prediction_near_zero(self):
        y = torch.tensor([1.0, 0.0, 1.0, 0.0])
        loss = strategy_loss(y.clone(), y)
        assert 0.0 <= float(loss) <= 1.5e-7

    def test_half_probability_is_ln2(self):
        loss = strategy_loss(
            torch.tensor([0.5], dtype=torch.float64), torch.tensor([1.0], dtype=torch.float64)
        )
        assert float(loss) == pytest.approx(math.log(2), abs=1e-9)

    def test_ln2_independent_of_targets(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            y = torch.tensor(rng.integers(0, 2, size=8), dtype=torch.float32)
            loss = strategy_loss(torch.full((8,), 0.5), y)
            assert float(loss) == pytest.approx(math.log(2), abs=1e-7)

    def test_nonnegative_random(self):
        rng = torch.Generator().manual_seed(12)
        for _ in range(50):
            p = torch.rand(10, generator=rng)
            y = (torch.rand(10, generator=rng) > 0.5).float()
            assert float(strategy_loss(p, y)) >= 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            strategy_loss(torch.zeros(3), torch.zeros(4))


class TestMultitaskLoss:
    def test_lambda_zero_reduces_to_strategy_loss(self):
        l_s, l_gen = torch.tensor(0.7), torch.tensor(9.9)
        assert float(multitask_loss(l_s, l_gen, 0.0)) == pytest.approx(0.7)

    def test_arithmetic(self):
        assert float(
            multitask_loss(torch.tensor(0.5), torch.tensor(1.0), 1.0)
        ) == pytest.approx(1.5)

    def test_half_lambda_halves_contribution(self):
        l_s, l_gen = torch.tensor(0.5), torch.tensor(1.0)
        full = float(multitask_loss(l_s, l_gen, 1.0)) - 0.5
        half = float(multitask_loss(l_s, l_gen, 0.5)) - 0.5
        assert half == pytest.approx(full / 2)


@pytest.fixture(scope="module")
def model():
    cfg = FusionConfig(
        extractor=SMALL_EX,
        num_classes=4,
        n_heads=2,
        ff_width=32,
        vocab_size=12,
        max_decode_len=10,
    )
    m = FusionModel.build(cfg, seed=1)
    m.eval()
    return m


class TestDecoder:
    def test_begin_only_target_shape(self, model):
        enc = torch.randn(
            SMALL_EX.total_rows, 32, generator=torch.Generator().manual_seed(13)
        )
        with torch.no_grad():
            logits = model.decode_action_reason(enc, torch.tensor([BOS]))
        assert tuple(logits.shape) == (1, 12)

    def test_causal_mask_property(self, model):
        enc = torch.randn(
            SMALL_EX.total_rows, 32, generator=torch.Generator().manual_seed(14)
        )
        t1 = torch.tensor([BOS, 5, 6, 7, 8])
        t2 = torch.tensor([BOS, 5, 6, 9, 10])  # differs from position 3 on
        with torch.no_grad():
            l1 = model.decode_action_reason(enc, t1)
            l2 = model.decode_action_reason(enc, t2)
        assert torch.allclose(l1[:3], l2[:3], atol=1e-6)
        assert not torch.allclose(l1[3:], l2[3:], atol=1e-4)

    def test_out_of_vocab_rejected(self, model):
        enc = torch.zeros(SMALL_EX.total_rows, 32)
        with pytest.raises(VocabError):
            model.decode_action_reason(enc, torch.tensor([BOS, 99]))

    def test_must_begin_with_bos(self, model):
        enc = torch.zeros(SMALL_EX.total_rows, 32)
        with pytest.raises(ValidationError):
            model.decode_action_reason(enc, torch.tensor([5, 6]))


class TestVocabulary:
    def test_min_freq_cutoff(self):
        v = Vocabulary.build(["buy now buy", "now and then"], min_freq=2)
        assert "buy" in v.tokens and "now" in v.tokens
        assert "then" not in v.tokens

    def test_encode_decode_round_trip(self):
        v = Vocabulary.build(["i should buy this because it is great"] * 2, min_freq=2)
        ids = v.encode("i should buy this")
        assert ids[0] == BOS and ids[-1] == EOS
        assert v.decode(ids) == "i should buy this"

    def test_unknown_maps_to_unk(self):
        v = Vocabulary.build(["a a"], min_freq=2)
        ids = v.encode("a zebra")
        assert v.tokens[ids[2]] == "<unk>"


class TestTraining:
    def test_planted_signal_loss_drops_after_first_epoch(self, suite):
        samples = make_synthetic_corpus(50, TAXONOMY, SMALL_EX, suite, rule_seed=7)
        trained = train(
            samples, TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config(epochs=3)
        )
        losses = [h["l_s"] for h in trained.history]
        assert losses[1] < losses[0]
        assert losses[2] < losses[0]

    def test_seeded_runs_identical(self, suite):
        samples = make_synthetic_corpus(16, TAXONOMY, SMALL_EX, suite, rule_seed=7)
        a = train(samples, TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config(seed=5))
        b = train(samples, TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config(seed=5))
        assert a.history[0]["l_s"] == b.history[0]["l_s"]
        assert a.history == b.history

    def test_lambda_zero_matches_no_sentence_run(self, suite):
        # with no gold sentences the generation branch never runs, so the
        # trajectory is identical whatever lambda_gen is
        samples = make_synthetic_corpus(16, TAXONOMY, SMALL_EX, suite, rule_seed=3)
        a = train(
            samples, TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config(lambda_gen=0.0)
        )
        b = train(
            samples, TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config(lambda_gen=1.0)
        )
        assert [h["l_s"] for h in a.history] == [h["l_s"] for h in b.history]

    def test_empty_corpus_rejected(self, suite):
        with pytest.raises(EmptyCorpusError):
            train([], TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config())

    def test_missing_gold_labels_rejected(self, suite):
        s = AdSample("x", "stub://x")
        with pytest.raises(ValidationError):
            train([s], TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config())

    def test_divergence_carries_last_good_state(self, suite):
        samples = make_synthetic_corpus(8, TAXONOMY, SMALL_EX, suite, rule_seed=1)
        with pytest.raises(DivergenceError) as err:
            train(
                samples,
                TAXONOMY,
                suite,
                arch=SMALL_ARCH,
                cfg=small_train_config(learning_rate=1e12, epochs=30),
            )
        assert err.value.last_good_state is not None

    def test_warm_start_continues(self, suite):
        samples = make_synthetic_corpus(12, TAXONOMY, SMALL_EX, suite, rule_seed=2)
        first = train(samples, TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config())
        more = train(
            samples, TAXONOMY, suite, cfg=small_train_config(epochs=1), warm_start=first
        )
        assert more is first
        assert len(more.history) == 3


class TestGradientCheck:
    def test_pooling_head_bce_gradients_match_finite_differences(self):
        # reduced instance: d_model=8, 6 rows, 4 classes
        ex = ExtractorConfig(
            d_model=8, ocr_max_tokens=2, n_roi=1, n_cap=1, backbone_dim=16, symbol_classes=4
        )
        assert ex.total_rows == 6
        arch = FusionConfig(
            extractor=ex, num_classes=4, n_heads=2, ff_width=16, dropout=0.0
        )
        model = FusionModel.build(arch, seed=3).double()
        rng = np.random.default_rng(17)
        enc = torch.tensor(rng.standard_normal((6, 8)))
        y = torch.tensor([1.0, 0.0, 1.0, 0.0], dtype=torch.float64)

        def loss_value():
            pooled = pool_self_attention(enc, model.pool_vector)
            probs = torch.sigmoid(model.head(pooled))
            return strategy_loss(probs, y)

        loss = loss_value()
        model.zero_grad()
        loss.backward()

        params = {
            "w_pool": model.pool_vector,
            "w_out": model.head.weight,
            "b_out": model.head.bias,
        }
        h = 1e-6
        worst = 0.0
        for name, p in params.items():
            analytic = p.grad.detach().clone()
            flat = p.data.view(-1)
            fd = torch.zeros_like(flat)
            with torch.no_grad():
                for i in range(flat.numel()):
                    orig = float(flat[i])
                    flat[i] = orig + h
                    up = float(loss_value())
                    flat[i] = orig - h
                    down = float(loss_value())
                    flat[i] = orig
                    fd[i] = (up - down) / (2 * h)
            fd = fd.view_as(analytic)
            denom = torch.maximum(
                torch.maximum(analytic.abs(), fd.abs()), torch.tensor(1e-8)
            )
            rel = ((analytic - fd).abs() / denom).max()
            worst = max(worst, float(rel))
        assert worst < 1e-4


class TestCheckpoint:
    def test_round_trip(self, tmp_path, suite):
        samples = make_synthetic_corpus(10, TAXONOMY, SMALL_EX, suite, rule_seed=4)
        trained = train(samples, TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config())
        path = tmp_path / "model.pt"
        digest = save_checkpoint(trained, path)
        assert len(digest) == 64
        restored = load_checkpoint(path, TAXONOMY)
        preds_a = trained.predict(samples[:3], suite)
        preds_b = restored.predict(samples[:3], suite)
        for a, b in zip(preds_a, preds_b):
            np.testing.assert_allclose(a.probs, b.probs, atol=1e-7)
        assert restored.vocab.tokens == trained.vocab.tokens

    def test_taxonomy_mismatch_rejected(self, tmp_path, suite):
        samples = make_synthetic_corpus(6, TAXONOMY, SMALL_EX, suite, rule_seed=5)
        trained = train(samples, TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config())
        path = tmp_path / "model.pt"
        save_checkpoint(trained, path)
        other = load_taxonomy(include_markers=False)
        with pytest.raises(ValidationError, match="taxonomy"):
            load_checkpoint(path, other)


class TestEvaluate:
    def test_report_fields(self, suite):
        samples = make_synthetic_corpus(20, TAXONOMY, SMALL_EX, suite, rule_seed=6)
        trained = train(samples, TAXONOMY, suite, arch=SMALL_ARCH, cfg=small_train_config())
        report = trained.evaluate(samples, suite)
        assert report.n_samples == 20
        assert 0.0 <= report.top1 <= report.top3 <= 1.0
        assert report.corpus_hash is not None
