import numpy as np
import pytest
import torch

from dualnet import (BaselineNet, CalibNet, Checkpoint, FreqNet, TrainConfig,
                     predict)


def make_pyramid(scales, size=64, batch=1, seed=0):
    g = torch.Generator().manual_seed(seed)
    return [torch.randn(batch, 1, size >> j, size >> j, generator=g)
            for j in range(scales)]


class TestShapes:
    def test_freqnet_pyramid_shapes(self):
        net = FreqNet(3).eval()
        outs = net(torch.zeros(1, 1, 128, 128))
        assert [tuple(o.shape[-2:]) for o in outs] == [(128, 128), (64, 64),
                                                       (32, 32)]

    def test_calibnet_output_matches_input_resolution(self):
        net = CalibNet(3).eval()
        out = net(make_pyramid(3, size=128))
        assert tuple(out.shape) == (1, 1, 128, 128)

    def test_calibnet_validates_pyramid(self):
        net = CalibNet(3).eval()
        with pytest.raises(ValueError):
            net(make_pyramid(2, size=64))
        bad = make_pyramid(3, size=64)
        bad[2] = torch.zeros(1, 1, 64, 64)
        with pytest.raises(ValueError):
            net(bad)

    def test_scale_bounds(self):
        with pytest.raises(ValueError):
            FreqNet(0)
        with pytest.raises(ValueError):
            FreqNet(5)


class TestWiring:
    def test_every_side_input_is_connected(self):
        # zeroing side input j must change the calibration output
        torch.manual_seed(1)
        net = CalibNet(3).eval()
        pyramid = make_pyramid(3, size=32, seed=3)
        with torch.no_grad():
            ref = net(pyramid)
            for j in range(1, 3):
                patched = list(pyramid)
                patched[j] = torch.zeros_like(pyramid[j])
                changed = net(patched)
                assert (changed - ref).abs().max().item() > 1e-6

    def test_inference_deterministic(self):
        net = FreqNet(2).eval()
        x = torch.randn(1, 1, 32, 32, generator=torch.Generator().manual_seed(5))
        with torch.no_grad():
            a = net(x)
            b = net(x)
        for u, v in zip(a, b):
            assert torch.equal(u, v)


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        torch.manual_seed(7)
        freq, calib = FreqNet(2).eval(), CalibNet(2).eval()
        ckpt = Checkpoint(config=TrainConfig(scales=2, mode="multi_scale"),
                          freq_state=freq.state_dict(),
                          calib_state=calib.state_dict(),
                          baseline_state=None, history=[{"epoch": 0}])
        path = str(tmp_path / "ck.pt")
        ckpt.save(path)
        loaded = Checkpoint.load(path)
        assert loaded.config == ckpt.config
        assert loaded.history == ckpt.history

        rng = np.random.default_rng(0)
        lowpass = rng.uniform(0.5, 1.5, (32, 32)).astype(np.float32)
        enh_a, final_a = predict(ckpt, lowpass)
        enh_b, final_b = predict(loaded, lowpass)
        assert np.array_equal(final_a, final_b)
        for u, v in zip(enh_a, enh_b):
            assert np.array_equal(u, v)

    def test_predict_shapes(self):
        torch.manual_seed(9)
        freq, calib = FreqNet(3).eval(), CalibNet(3).eval()
        ckpt = Checkpoint(config=TrainConfig(scales=3), freq_state=freq.state_dict(),
                          calib_state=calib.state_dict(), baseline_state=None)
        lowpass = np.ones((64, 64), dtype=np.float32)
        enhanced, final = predict(ckpt, lowpass)
        assert final.shape == (64, 64)
        assert [e.shape for e in enhanced] == [(64, 64), (32, 32), (16, 16)]

    def test_baseline_checkpoint(self, tmp_path):
        torch.manual_seed(11)
        base = BaselineNet().eval()
        ckpt = Checkpoint(config=TrainConfig(mode="baseline_single_unet"),
                          freq_state=None, calib_state=None,
                          baseline_state=base.state_dict())
        path = str(tmp_path / "b.pt")
        ckpt.save(path)
        loaded = Checkpoint.load(path)
        lowpass = np.full((32, 32), 1.2, dtype=np.float32)
        enhanced, final = predict(loaded, lowpass)
        assert enhanced == [] and final.shape == (32, 32)


class TestConfig:
    def test_single_scale_forces_one_scale(self):
        cfg = TrainConfig(mode="single_scale", scales=3)
        assert cfg.scales == 1

    def test_invalid_mode_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(mode="bogus")

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(alpha=-1.0)
