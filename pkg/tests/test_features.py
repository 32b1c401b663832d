"""Feature pipeline tests: geometry, padding, stub determinism, cache."""

import numpy as np
import pytest

from persuasionkit.corpus import AdSample
from persuasionkit.errors import ShapeError, ValidationError
from persuasionkit.features import (
    ExtractorConfig,
    FeatureCache,
    ModalityProjector,
    StubCaptioner,
    StubObjectDetector,
    StubSymbolClassifier,
    assemble_bundle,
    extract_bundle,
    extract_image,
    extract_ocr,
    extract_raw_features,
    extract_rois,
    extract_symbols,
    split_bundle,
    stub_suite,
)
from persuasionkit.features.pipeline import project_raw


@pytest.fixture(scope="module")
def cfg():
    return ExtractorConfig()


@pytest.fixture(scope="module")
def suite():
    return stub_suite()


@pytest.fixture(scope="module")
def projector(cfg):
    return ModalityProjector.seeded(cfg, seed=0)


def sample(sid="a1", ocr=""):
    return AdSample(sample_id=sid, image_ref=f"stub://{sid}", ocr_text=ocr)


class TestConfig:
    def test_default_totals_114(self, cfg):
        assert cfg.total_rows == 114
        assert cfg.d_model == 256

    def test_row_arithmetic(self):
        c = ExtractorConfig(n_roi=0, n_cap=0, ocr_max_tokens=100)
        assert c.total_rows == 102

    def test_offsets_partition_rows(self, cfg):
        offsets = cfg.block_offsets()
        spans = sorted(offsets.values())
        assert spans[0][0] == 0
        assert spans[-1][1] == cfg.total_rows
        for (_, stop), (start, _) in zip(spans, spans[1:]):
            assert stop == start

    def test_invalid_config_rejected(self):
        with pytest.raises(ValidationError):
            ExtractorConfig(d_model=0)
        with pytest.raises(ValidationError):
            ExtractorConfig(n_roi=-1)

    def test_hash_changes_with_fields(self, cfg):
        assert cfg.content_hash() != ExtractorConfig(n_roi=5).content_hash()


class TestExtractImage:
    def test_shape_and_finite(self, cfg, suite, projector):
        row = extract_image(sample(), cfg, suite, projector)
        assert row.shape == (1, 256)
        assert np.all(np.isfinite(row))

    def test_deterministic(self, cfg, suite, projector):
        a = extract_image(sample("a1"), cfg, suite, projector)
        b = extract_image(sample("a1"), cfg, suite, projector)
        np.testing.assert_array_equal(a, b)

    def test_distinct_samples_distinct_vectors(self, cfg, suite, projector):
        a = extract_image(sample("a1"), cfg, suite, projector)
        b = extract_image(sample("a2"), cfg, suite, projector)
        assert not np.array_equal(a, b)

    def test_no_collisions_over_corpus(self, cfg, suite, projector):
        rows = [
            extract_image(sample(f"ad-{i:03d}"), cfg, suite, projector) for i in range(100)
        ]
        flat = np.vstack(rows)
        # pairwise distinct first coordinates are enough to rule out collisions
        assert len(np.unique(flat[:, 0])) == 100


class TestExtractOcr:
    def test_empty_text_all_zero(self, cfg, suite, projector):
        block = extract_ocr("", cfg, suite, projector)
        assert block.shape == (100, 256)
        assert np.all(block == 0.0)

    def test_truncation_to_100_words(self, cfg, suite, projector):
        text = " ".join(f"w{i}" for i in range(150))
        block = extract_ocr(text, cfg, suite, projector)
        nonzero_rows = np.flatnonzero(np.abs(block).sum(axis=1))
        assert len(nonzero_rows) == 100

    def test_pad_region_zero(self, cfg, suite, projector):
        block = extract_ocr("buy this now", cfg, suite, projector)
        assert np.all(block[3:] == 0.0)
        assert np.all(np.abs(block[:3]).sum(axis=1) > 0)

    def test_same_word_same_row(self, cfg, suite, projector):
        block = extract_ocr("sale sale", cfg, suite, projector)
        np.testing.assert_array_equal(block[0], block[1])


class TestExtractRois:
    def test_no_detections_all_zero(self, cfg, projector):
        suite = stub_suite(detector=StubObjectDetector(max_detections=0))
        block = extract_rois(sample("blank"), cfg, suite, projector)
        assert block.shape == (10, 256)
        assert np.all(block == 0.0)

    def test_truncates_to_highest_confidence(self, cfg, projector):
        detector = StubObjectDetector(max_detections=15)
        suite = stub_suite(detector=detector)
        # find a sample that actually yields >10 detections
        sid = next(
            f"s{i}"
            for i in range(200)
            if len(detector.detect(sample(f"s{i}"), cfg)) > 10
        )
        detections = detector.detect(sample(sid), cfg)
        kept = sorted(detections, key=lambda d: -d.confidence)[:10]
        block = extract_rois(sample(sid), cfg, suite, projector)
        expected = projector.project("rois", np.stack([d.embedding for d in kept]), 10)
        np.testing.assert_allclose(block, expected)

    def test_two_detections_pad_rest(self, cfg, projector):
        detector = StubObjectDetector(max_detections=2)
        suite = stub_suite(detector=detector)
        sid = next(
            f"s{i}"
            for i in range(200)
            if len(detector.detect(sample(f"s{i}"), cfg)) == 2
        )
        block = extract_rois(sample(sid), cfg, suite, projector)
        assert np.all(block[2:] == 0.0)


class TestExtractSymbols:
    def test_distribution_sums_to_one(self, cfg, suite):
        dist = suite.symbols.distribution(sample(), cfg)
        assert dist.sum() == pytest.approx(1.0, abs=1e-9)

    def test_bad_distribution_rejected(self, cfg, projector):
        class BadSymbols:
            version = "bad/1"
            thread_safe = True
            num_classes = 64

            def distribution(self, s, c):
                return np.full(64, 0.5)

        suite = stub_suite(symbols=BadSymbols())
        with pytest.raises(ValidationError):
            extract_symbols(sample(), cfg, suite, projector)

    def test_deterministic(self, cfg, suite, projector):
        a = extract_symbols(sample("a1"), cfg, suite, projector)
        b = extract_symbols(sample("a1"), cfg, suite, projector)
        np.testing.assert_array_equal(a, b)


class TestAssembleBundle:
    def test_default_shape_114x256(self, cfg, suite, projector):
        b = extract_bundle(sample(), cfg, suite, projector)
        matrix = assemble_bundle(b.e_img, b.e_roi, b.e_ocr, b.e_cap, b.e_sym, cfg)
        assert matrix.shape == (114, 256)

    def test_reduced_budget_shape(self, suite):
        cfg = ExtractorConfig(n_roi=0, n_cap=0, ocr_max_tokens=100)
        suite = stub_suite(captioner=StubCaptioner(0), detector=StubObjectDetector(0))
        projector = ModalityProjector.seeded(cfg, seed=0)
        b = extract_bundle(sample(), cfg, suite, projector)
        matrix = assemble_bundle(b.e_img, b.e_roi, b.e_ocr, b.e_cap, b.e_sym, cfg)
        assert matrix.shape == (102, 256)

    def test_wrong_block_named(self, cfg, suite, projector):
        b = extract_bundle(sample(), cfg, suite, projector)
        with pytest.raises(ShapeError, match="ocr"):
            assemble_bundle(b.e_img, b.e_roi, b.e_ocr[:99], b.e_cap, b.e_sym, cfg)

    def test_split_recovers_blocks(self, cfg, suite, projector):
        b = extract_bundle(sample("roundtrip"), cfg, suite, projector)
        matrix = assemble_bundle(b.e_img, b.e_roi, b.e_ocr, b.e_cap, b.e_sym, cfg)
        back = split_bundle(matrix, cfg, sample_id="roundtrip")
        for name, block in b.blocks().items():
            np.testing.assert_array_equal(back.blocks()[name], block)

    def test_no_nan_inf_stress(self, cfg, suite, projector):
        rng = np.random.default_rng(0)
        for i in range(20):
            text = " ".join(rng.choice(["sale", "now", "new", "free"], size=rng.integers(0, 30)))
            b = extract_bundle(sample(f"stress-{i}", ocr=text), cfg, suite, projector)
            matrix = assemble_bundle(b.e_img, b.e_roi, b.e_ocr, b.e_cap, b.e_sym, cfg)
            assert np.all(np.isfinite(matrix))


class TestDeterminismAndCache:
    def test_repeated_extraction_byte_identical(self, cfg, suite, projector):
        ads = [sample(f"corpus-{i}", ocr=f"word{i} thing") for i in range(100)]
        first = [extract_bundle(a, cfg, suite, projector) for a in ads]
        second = [extract_bundle(a, cfg, suite, projector) for a in ads]
        for x, y in zip(first, second):
            matrix_x = assemble_bundle(x.e_img, x.e_roi, x.e_ocr, x.e_cap, x.e_sym, cfg)
            matrix_y = assemble_bundle(y.e_img, y.e_roi, y.e_ocr, y.e_cap, y.e_sym, cfg)
            assert matrix_x.tobytes() == matrix_y.tobytes()

    def test_cache_round_trip(self, tmp_path, cfg, suite):
        cache = FeatureCache(tmp_path)
        ad = sample("cached", ocr="limited offer")
        raw1 = cache.get_or_extract(ad, cfg, suite)
        raw2 = cache.get_or_extract(ad, cfg, suite)
        assert cache.misses == 1 and cache.hits == 1
        np.testing.assert_array_equal(raw1.ocr, raw2.ocr)
        np.testing.assert_array_equal(raw1.symbols, raw2.symbols)
        assert raw1.n_ocr_tokens == raw2.n_ocr_tokens == 2

    def test_cache_invalidated_by_config_change(self, tmp_path, suite):
        cache = FeatureCache(tmp_path)
        ad = sample("inv")
        cache.get_or_extract(ad, ExtractorConfig(), suite)
        cache.get_or_extract(ad, ExtractorConfig(n_roi=5), suite)
        assert cache.misses == 2

    def test_content_mask_counts(self, cfg, suite):
        ad = sample("mask", ocr="three word text")
        raw = extract_raw_features(ad, cfg, suite)
        mask = raw.content_mask(cfg)
        assert mask.shape == (114,)
        assert mask.sum() == 1 + raw.n_rois + 3 + raw.n_captions + 1

    def test_projected_padding_stays_zero(self, cfg, suite, projector):
        ad = sample("padzero", ocr="one two")
        raw = extract_raw_features(ad, cfg, suite)
        bundle = project_raw(raw, cfg, projector)
        assert np.all(bundle.e_ocr[raw.n_ocr_tokens :] == 0.0)
        assert np.all(bundle.e_roi[raw.n_rois :] == 0.0)
