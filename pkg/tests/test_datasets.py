import json

import numpy as np
import numpy.testing as npt
import pytest

from unimatte import synthetic
from unimatte.data import (
    AugmentConfig,
    Background,
    CorpusSampler,
    Foreground,
    Manifest,
    SampleRecord,
    apply_affine,
    build_composites,
    build_unified_testset,
    fc_group_batches,
    merged_alpha,
)
from unimatte.imaging import composite, load_alpha, load_image
from unimatte.taxonomy import CategoryTag


def make_pools(rng, n_so, n_st, n_bg, size=64, prefix=""):
    so = [
        Foreground(f"{prefix}so{i}", *synthetic.make_foreground(rng, size, size, False))
        for i in range(n_so)
    ]
    st = [
        Foreground(f"{prefix}st{i}", *synthetic.make_foreground(rng, size, size, True))
        for i in range(n_st)
    ]
    bg = [Background(f"{prefix}bg{i}", synthetic.make_texture(rng, size, size)) for i in range(n_bg)]
    return so, st, bg


class TestBuildComposites:
    def test_single_pair_obeys_blend_equation(self, tmp_path):
        rng = np.random.default_rng(0)
        so, _, bg = make_pools(rng, 1, 0, 1)
        manifest = build_composites(so, bg, per_fg=1, seed=0, out_root=tmp_path)
        assert len(manifest) == 1
        rec = manifest.records[0]
        comp = load_image(tmp_path / rec.composite_path)
        alpha = load_alpha(tmp_path / rec.alpha_path)
        fg_img = load_image(tmp_path / "fg" / f"{rec.target_fg_id}.png")
        bg_img = load_image(tmp_path / "bg" / f"{rec.bg_id}.png")
        expected = composite(fg_img, bg_img, alpha)
        npt.assert_allclose(comp, expected, atol=1.01 / 255)  # 8-bit quantization only

    def test_desk_scale_counts_and_recount(self, tmp_path):
        rng = np.random.default_rng(1)
        so, st, bg = make_pools(rng, 5, 3, 6)
        manifest = build_composites(so + st, bg, per_fg=4, seed=0, out_root=tmp_path)
        assert len(manifest) == 32
        # independent recount from the manifest file on disk
        lines = (tmp_path / "manifest.jsonl").read_text().strip().splitlines()
        assert len(lines) == 32
        recount = {}
        for line in lines:
            tag = json.loads(line)["category"]
            recount[tag] = recount.get(tag, 0) + 1
        assert recount == {k: v for k, v in manifest.category_counts().items() if v}
        assert recount["SO"] == 20 and recount["ST"] == 12

    def test_insufficient_backgrounds_rejected(self, tmp_path):
        rng = np.random.default_rng(2)
        so, _, bg = make_pools(rng, 1, 0, 2)
        with pytest.raises(ValueError):
            build_composites(so, bg, per_fg=3, seed=0, out_root=tmp_path)

    def test_deterministic_manifest(self, tmp_path):
        rng = np.random.default_rng(3)
        so, _, bg = make_pools(rng, 2, 0, 4)
        m1 = build_composites(so, bg, per_fg=2, seed=9, out_root=tmp_path / "a")
        m2 = build_composites(so, bg, per_fg=2, seed=9, out_root=tmp_path / "b")
        assert [r.sample_id for r in m1.records] == [r.sample_id for r in m2.records]

    def test_all_composites_match_equation_within_quantization(self, desk_corpus):
        root, manifest = desk_corpus
        for rec in manifest.records[:8]:
            comp = load_image(root / rec.composite_path)
            alpha = load_alpha(root / rec.alpha_path)
            fg_img = load_image(root / "fg" / f"{rec.target_fg_id}.png")
            bg_img = load_image(root / "bg" / f"{rec.bg_id}.png")
            npt.assert_allclose(comp, composite(fg_img, bg_img, alpha), atol=1.01 / 255)


class TestBuildUnified:
    def test_desk_scale_ratio(self, tmp_path):
        rng = np.random.default_rng(4)
        so, st, bg = make_pools(rng, 4, 3, 6)
        manifest = build_unified_testset(so, st, bg[:3], bg[3:], (62, 28, 56, 15), 0, tmp_path)
        assert len(manifest) == 161
        counts = manifest.category_counts()
        assert (counts["SO"], counts["ST"], counts["NSO"], counts["NST"]) == (62, 28, 56, 15)
        for rec in manifest.records:
            if rec.category in (CategoryTag.NSO, CategoryTag.NST):
                assert rec.object_count >= 2

    def test_multi_object_composites_rebuild_from_sources(self, tmp_path):
        rng = np.random.default_rng(9)
        so, st, bg = make_pools(rng, 4, 3, 6)
        manifest = build_unified_testset(so, st, bg[:3], bg[3:], (62, 28, 56, 15), 1, tmp_path)
        multi = [r for r in manifest.records if r.object_count >= 2][:5]
        assert multi
        for rec in multi:
            base = load_image(tmp_path / "bg" / f"{rec.bg_id}.png")
            for fg_id in rec.fg_ids[1:]:
                d_img = load_image(tmp_path / "fg" / f"{fg_id}.png")
                d_alpha = load_alpha(tmp_path / "fg" / f"{fg_id}.alpha.png")
                base = composite(d_img, base, d_alpha)
            t_img = load_image(tmp_path / "fg" / f"{rec.target_fg_id}.png")
            t_alpha = load_alpha(tmp_path / rec.alpha_path)
            expected = composite(t_img, base, t_alpha)
            stored = load_image(tmp_path / rec.composite_path)
            # quantization error compounds once per stacked layer
            tolerance = (len(rec.fg_ids) + 0.01) / 255
            npt.assert_allclose(stored, expected, atol=tolerance)

    def test_ratio_violation_rejected(self, tmp_path):
        rng = np.random.default_rng(5)
        so, st, bg = make_pools(rng, 2, 2, 4)
        with pytest.raises(ValueError):
            build_unified_testset(so, st, bg[:2], bg[2:], (62, 28, 56, 16), 0, tmp_path)

    def test_full_scale_counts_accepted_by_ratio_check(self):
        from unimatte.data import _check_unified_ratio

        _check_unified_ratio((310, 140, 280, 75))
        _check_unified_ratio((62, 28, 56, 15))
        with pytest.raises(ValueError):
            _check_unified_ratio((310, 140, 280, 76))


class TestAugment:
    def test_identity_affine_is_exact(self):
        rng = np.random.default_rng(6)
        image, alpha = synthetic.make_foreground(rng, 32, 32, False)
        out_img, out_alpha = apply_affine(image, alpha, 0.0, 1.0, 0.0)
        npt.assert_array_equal(out_img, image)
        npt.assert_array_equal(out_alpha, alpha)

    def test_same_seed_bit_identical(self, desk_corpus):
        root, manifest = desk_corpus
        sampler = CorpusSampler(root, manifest, AugmentConfig(crop=48))
        rec = manifest.records[0]
        img1, a1 = sampler.sample(rec, seed=77)
        img2, a2 = sampler.sample(rec, seed=77)
        npt.assert_array_equal(img1, img2)
        npt.assert_array_equal(a1, a2)

    def test_alpha_stays_in_range(self, desk_corpus):
        root, manifest = desk_corpus
        sampler = CorpusSampler(root, manifest, AugmentConfig(crop=48))
        for seed in range(10):
            _, alpha = sampler.sample(manifest.records[seed % len(manifest)], seed)
            assert alpha.min() >= 0.0 and alpha.max() <= 1.0

    def test_combined_foreground_matches_two_step_compositing(self, desk_corpus):
        root, manifest = desk_corpus
        cfg = AugmentConfig(
            crop=64, p_combine=1.0, max_rotate_deg=0.0, scale_range=(1.0, 1.0),
            max_shear_deg=0.0, jitter=0.0,
        )
        sampler = CorpusSampler(root, manifest, cfg)
        rec = manifest.records[0]
        # find a seed whose partner draw is a different record
        for seed in range(50):
            rng = np.random.default_rng(seed)
            if rng.uniform() >= cfg.p_combine:
                continue
            other = manifest.records[int(rng.integers(0, len(manifest)))]
            if other.sample_id != rec.sample_id:
                break
        image, alpha = sampler.sample(rec, seed)
        # oracle: two sequential blends straight from the stored sources
        a1 = load_alpha(root / rec.alpha_path)
        f1 = load_image(root / "fg" / f"{rec.target_fg_id}.png")
        a2 = load_alpha(root / other.alpha_path)
        f2 = load_image(root / "fg" / f"{other.target_fg_id}.png")
        bg = load_image(root / "bg" / f"{rec.bg_id}.png")
        step1 = composite(f2, bg, a2)
        expected_img = composite(f1, step1, a1)
        expected_alpha = a1 + a2 * (1.0 - a1)
        npt.assert_array_equal(alpha, expected_alpha)
        npt.assert_allclose(image, expected_img, atol=1e-7)  # hsv round-trip noise

    def test_crop_upscales_small_images(self):
        rng = np.random.default_rng(7)
        from unimatte.data import random_crop

        image, alpha = synthetic.make_foreground(rng, 32, 32, False)
        out_img, out_alpha = random_crop(image, alpha, 48, rng)
        assert out_img.shape == (48, 48, 3)
        assert out_alpha.shape == (48, 48)

    def test_merged_alpha_formula(self):
        rng = np.random.default_rng(8)
        a1 = rng.uniform(0, 1, (8, 8))
        a2 = rng.uniform(0, 1, (8, 8))
        out = merged_alpha(a1, a2)
        npt.assert_allclose(out, a1 + a2 * (1 - a1))
        assert out.min() >= 0.0 and out.max() <= 1.0


def fake_manifest(n_fg: int, per_fg: int) -> Manifest:
    records = []
    for i in range(n_fg):
        for j in range(per_fg):
            records.append(
                SampleRecord(
                    sample_id=f"fg{i}_s{j}",
                    fg_ids=[f"fg{i}"],
                    bg_id=f"bg{j}",
                    alpha_path="x",
                    composite_path="y",
                    category=CategoryTag.SO,
                    object_count=1,
                )
            )
    return Manifest(records=records)


class TestFcGroupBatches:
    def test_pairs_share_foreground(self):
        manifest = fake_manifest(3, 4)
        batches = fc_group_batches(manifest, group_size=2, batch_groups=1, seed=0)
        by_id = {r.sample_id: r for r in manifest.records}
        for batch in batches:
            assert len(batch) == 1
            group = batch[0]
            assert len(group) == 2
            fgs = {by_id[sid].target_fg_id for sid in group}
            assert len(fgs) == 1

    def test_full_scale_batch_arithmetic(self):
        manifest = fake_manifest(431, 100)
        batches = fc_group_batches(manifest, group_size=2, batch_groups=80, seed=0)
        sizes = {sum(len(g) for g in batch) for batch in batches}
        assert sizes == {160}
        assert len(batches) == (431 * 50) // 80

    def test_each_record_at_most_once(self):
        manifest = fake_manifest(4, 5)
        batches = fc_group_batches(manifest, group_size=2, batch_groups=2, seed=1)
        seen = [sid for batch in batches for group in batch for sid in group]
        assert len(seen) == len(set(seen))

    def test_group_size_one_rejected(self):
        with pytest.raises(ValueError):
            fc_group_batches(fake_manifest(2, 4), group_size=1, batch_groups=1, seed=0)

    def test_shortage_rejected(self):
        manifest = fake_manifest(2, 1)
        with pytest.raises(ValueError):
            fc_group_batches(manifest, group_size=2, batch_groups=1, seed=0)

    def test_deterministic(self):
        manifest = fake_manifest(5, 6)
        assert fc_group_batches(manifest, 2, 2, 3) == fc_group_batches(manifest, 2, 2, 3)


class TestManifest:
    def test_round_trip(self, tmp_path, desk_corpus):
        _, manifest = desk_corpus
        manifest.save(tmp_path / "m.jsonl")
        loaded = Manifest.load(tmp_path / "m.jsonl")
        assert [r.sample_id for r in loaded.records] == [r.sample_id for r in manifest.records]
        assert loaded.category_counts() == manifest.category_counts()

    def test_duplicate_ids_rejected(self):
        rec = SampleRecord("a", ["f"], "b", "x", "y", CategoryTag.SO, 1)
        with pytest.raises(ValueError):
            Manifest(records=[rec, rec])
