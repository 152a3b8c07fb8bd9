import os

import numpy as np
import pytest

from dbar_eit import binfmt
from dbar_eit import dataset as ds
from dbar_eit import phantom as ph


class TestSampleMeta:
    def test_standard_pairing(self):
        assert ds.standard_meta(0, "kit4", 0.0).r_lowpass == 6.0
        assert ds.standard_meta(0, "kit4", 0.001).r_lowpass == 5.0
        assert ds.standard_meta(0, "kit4", 0.0075).r_lowpass == 4.0

    def test_unknown_delta_rejected(self):
        with pytest.raises(ValueError):
            ds.standard_meta(0, "kit4", 0.5)

    def test_radii_must_ascend(self):
        with pytest.raises(ValueError):
            ds.SampleMeta(seed=0, style="kit4", delta=0.0, r_lowpass=6.0,
                          radii=(6.0, 6.0, 7.0))

    def test_lowpass_must_not_exceed_first_radius(self):
        with pytest.raises(ValueError):
            ds.SampleMeta(seed=0, style="kit4", delta=0.0, r_lowpass=7.0,
                          radii=(6.0, 7.0))

    def test_paper_scale_counts(self):
        assert ds.TRAIN_COUNTS == {"kit4": 3280, "act4": 3200}
        assert ds.VALIDATION_COUNTS == {"kit4": 820, "act4": 800}


class TestDownsample:
    def test_identity_at_zero_levels(self):
        img = np.random.default_rng(0).standard_normal((16, 16))
        np.testing.assert_array_equal(ds.downsample(img, 0), img)

    def test_constant_preserved(self):
        img = np.full((32, 32), 3.7)
        for lv in (1, 2, 3):
            np.testing.assert_allclose(ds.downsample(img, lv), 3.7)

    def test_checkerboard_average(self):
        img = np.zeros((4, 4))
        img[::2, 1::2] = 2.0
        img[1::2, ::2] = 2.0
        np.testing.assert_array_equal(ds.downsample(img, 1), np.ones((2, 2)))

    def test_commutes_with_constant_shift(self):
        img = np.random.default_rng(1).standard_normal((16, 16))
        np.testing.assert_allclose(ds.downsample(img + 2.5, 2),
                                   ds.downsample(img, 2) + 2.5, atol=1e-12)

    def test_indivisible_rejected(self):
        with pytest.raises(ValueError):
            ds.downsample(np.zeros((6, 6)), 2)


@pytest.fixture(scope="module")
def small_sample():
    meta = ds.standard_meta(5, "kit4", 0.0075, radii=(6.0, 7.0, 8.0), l=6,
                            width=32, height=32, mesh_level=2)
    phantom = ds.generate_phantom(meta)
    return ds.make_sample(phantom, meta), meta, phantom


class TestMakeSample:
    def test_homogeneous_chain_near_unity(self):
        empty = ph.Phantom(inclusions=(), style="kit4", seed=0)
        meta = ds.SampleMeta(seed=0, style="kit4", delta=0.0, r_lowpass=6.0,
                             radii=(), l=6, width=32, height=32)
        sample = ds.make_sample(empty, meta)
        assert np.abs(sample.lowpass - 1.0).max() < 1e-2

    def test_enhanced_sequence_length(self, small_sample):
        sample, meta, _ = small_sample
        assert len(sample.enhanced) == 3
        for img in sample.all_images():
            assert img.shape == (32, 32)
            assert img.dtype == np.float32

    def test_deterministic(self, small_sample):
        sample, meta, phantom = small_sample
        again = ds.make_sample(phantom, meta)
        for a, b in zip(sample.all_images(), again.all_images()):
            np.testing.assert_array_equal(a, b)

    def test_stage_tagged_errors(self):
        meta = ds.SampleMeta(seed=0, style="kit4", delta=-1.0, r_lowpass=6.0,
                             radii=(), l=6, width=32, height=32)
        empty = ph.Phantom(inclusions=(), style="kit4", seed=0)
        with pytest.raises(ds.PipelineError, match=r"\[noise\]"):
            ds.make_sample(empty, meta)


class TestDatasetIO:
    def test_round_trip_bit_exact(self, small_sample, tmp_path):
        sample, meta, _ = small_sample
        ds.write_dataset([sample] * 3, tmp_path)
        back = list(ds.read_dataset(tmp_path))
        assert len(back) == 3
        for s in back:
            assert s.meta == meta
            for a, b in zip(s.all_images(), sample.all_images()):
                np.testing.assert_array_equal(a, b)

    def test_corrupted_payload_detected(self, small_sample, tmp_path):
        sample, _, _ = small_sample
        ds.write_dataset([sample], tmp_path)
        target = tmp_path / ds.sample_filename(0)
        raw = bytearray(target.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        target.write_bytes(bytes(raw))
        with pytest.raises(binfmt.ChecksumError, match="sample_000000"):
            list(ds.read_dataset(tmp_path))
        with pytest.raises(binfmt.ChecksumError, match="sample_000000"):
            binfmt.read_arrays(str(target))

    def test_truncated_file_detected(self, small_sample, tmp_path):
        sample, _, _ = small_sample
        path = tmp_path / "x.dbar"
        binfmt.write_arrays(path, [sample.ground_truth])
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(binfmt.TruncatedError):
            binfmt.read_arrays(str(path))

    def test_version_mismatch_detected(self, tmp_path):
        path = tmp_path / "v.dbar"
        record = bytearray(binfmt._pack_array(np.zeros((2, 2), np.float32)))
        record[4] = 99   # bump the version field
        path.write_bytes(bytes(record))
        with pytest.raises(binfmt.VersionError):
            binfmt.read_arrays(str(path))

    def test_manifest_counts_match_disk(self, small_sample, tmp_path):
        sample, _, _ = small_sample
        n = ds.write_dataset([sample, sample], tmp_path)
        records = binfmt.read_manifest(tmp_path)
        files = [f for f in os.listdir(tmp_path) if f.endswith(".dbar")]
        assert n == len(records) == len(files) == 2

    def test_complex_array_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        arr = (rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7)))
        arr = arr.astype(np.complex64)
        path = tmp_path / "c.dbar"
        binfmt.write_arrays(path, [arr])
        back = binfmt.read_arrays(str(path))[0]
        np.testing.assert_array_equal(back, arr)
        assert back.dtype == np.complex64


def brute_force_metrics(pred, gt):
    """Definitional reimplementation: explicit loops over interior windows."""
    rng = gt.max() - gt.min()
    mse = np.mean((pred - gt) ** 2)
    psnr = 99.0 if mse == 0 else min(99.0, 10 * np.log10(rng**2 / mse))
    size, sigma = 11, 1.5
    ax = np.arange(size) - 5.0
    w = np.exp(-0.5 * (np.add.outer(ax**2, ax**2)) / sigma**2)
    w = w / w.sum()
    c1, c2 = (0.01 * rng) ** 2, (0.03 * rng) ** 2
    vals = []
    for i in range(gt.shape[0] - size + 1):
        for j in range(gt.shape[1] - size + 1):
            p = pred[i:i + size, j:j + size]
            g = gt[i:i + size, j:j + size]
            mp, mg = (w * p).sum(), (w * g).sum()
            vp = (w * p * p).sum() - mp**2
            vg = (w * g * g).sum() - mg**2
            cov = (w * p * g).sum() - mp * mg
            vals.append((2 * mp * mg + c1) * (2 * cov + c2)
                        / ((mp**2 + mg**2 + c1) * (vp + vg + c2)))
    rmse = np.linalg.norm(pred - gt) / np.linalg.norm(gt)
    return psnr, float(np.mean(vals)), float(rmse)


class TestMetrics:
    def test_identity(self):
        gt = np.random.default_rng(0).uniform(0.3, 2.5, (32, 32))
        rep = ds.metrics(gt, gt)
        assert rep.psnr == 99.0 and rep.rmse == 0.0
        assert abs(rep.ssim - 1.0) < 1e-12

    def test_constant_shift_closed_form(self):
        gt = np.zeros((24, 24))
        gt[8:16, 8:16] = 1.0            # range exactly 1
        c = 0.05
        rep = ds.metrics(gt + c, gt)
        assert abs(rep.psnr - (-20.0 * np.log10(c))) < 1e-9

    def test_matches_brute_force_reimplementation(self):
        rng = np.random.default_rng(3)
        gt = rng.uniform(0.3, 2.5, (32, 32))
        pred = gt + 0.1 * rng.standard_normal((32, 32))
        rep = ds.metrics(pred, gt)
        psnr, ssim, rmse = brute_force_metrics(pred, gt)
        assert abs(rep.psnr - psnr) < 1e-10
        assert abs(rep.ssim - ssim) < 1e-10
        assert abs(rep.rmse - rmse) < 1e-12

    def test_zero_range_rejected(self):
        with pytest.raises(ValueError):
            ds.metrics(np.ones((8, 8)), np.ones((8, 8)))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ds.metrics(np.ones((8, 8)), np.ones((8, 9)))
