import os

import numpy as np
import pytest

from dbar_eit import binfmt
from dbar_eit import cli
from dbar_eit import dataset as ds


def run(argv):
    return cli.main(argv)


class TestSimulate:
    def test_writes_33x33_dtn(self, tmp_path):
        out = str(tmp_path / "dtn.dbar")
        assert run(["simulate", "--style", "kit4", "--seed", "1",
                    "--noise", "0.0075", "--mesh-level", "1",
                    "--out", out]) == 0
        L = binfmt.read_arrays(out)[0]
        assert L.shape == (33, 33)
        assert np.all(L[16, :] == 0) and np.all(L[:, 16] == 0)

    def test_noiseless_run_reproducible(self, tmp_path):
        a, b = str(tmp_path / "a.dbar"), str(tmp_path / "b.dbar")
        for out in (a, b):
            assert run(["simulate", "--seed", "3", "--noise", "0",
                        "--mesh-level", "1", "--out", out]) == 0
        with open(a, "rb") as fa, open(b, "rb") as fb:
            assert fa.read() == fb.read()

    def test_missing_seed_and_phantom_is_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as info:
            run(["simulate", "--out", str(tmp_path / "x.dbar")])
        assert info.value.code == cli.EXIT_USAGE


@pytest.fixture(scope="module")
def homogeneous_dtn_file(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("dtn") / "h.dbar")
    assert run(["simulate", "--seed", "0", "--noise", "0",
                "--style", "kit4", "--mesh-level", "2", "--out", out]) == 0
    # seed 0 generates inclusions; overwrite with an identity-conductivity run
    from dbar_eit import forward, phantom
    empty = phantom.Phantom(inclusions=(), style="kit4", seed=0)
    mesh = forward.build_disk_mesh(2)
    L = forward.ntd_to_dtn(forward.compute_ntd(mesh, empty, 16))
    binfmt.write_arrays(out, [L])
    return out


class TestReconstruct:
    def test_homogeneous_gives_unit_image(self, homogeneous_dtn_file, tmp_path):
        out = str(tmp_path / "sigma.dbar")
        assert run(["reconstruct", homogeneous_dtn_file, "--Rdelta", "2.0",
                    "--l", "5", "--zgrid", "16", "--out", out]) == 0
        sigma = binfmt.read_arrays(out)[0]
        assert sigma.shape == (16, 16)
        assert np.abs(sigma - 1.0).max() < 0.05

    def test_default_iteration_count_is_five(self):
        parser = cli.build_parser()
        args = parser.parse_args(["reconstruct", "x.dbar"])
        assert args.iters == 5 and args.l == 7 and args.s == 2.1

    def test_direct_solver_resource_guard(self, homogeneous_dtn_file, tmp_path):
        code = run(["reconstruct", homogeneous_dtn_file, "--Rdelta", "2.0",
                    "--l", "7", "--zgrid", "8", "--solver", "direct",
                    "--out", str(tmp_path / "x.dbar")])
        assert code == cli.EXIT_RUNTIME

    def test_png_export(self, homogeneous_dtn_file, tmp_path):
        out = str(tmp_path / "sigma.dbar")
        png = str(tmp_path / "sigma.png")
        assert run(["reconstruct", homogeneous_dtn_file, "--Rdelta", "2.0",
                    "--l", "5", "--zgrid", "16", "--out", out,
                    "--png", png]) == 0
        assert os.path.getsize(png) > 0


DATASET_ARGS = ["dataset", "--noise", "0.0075", "--radii", "5.0",
                "--l", "5", "--zgrid", "16", "--mesh-level", "1",
                "--threads", "1"]


class TestDataset:
    def test_zero_count_gives_empty_manifest(self, tmp_path):
        out = str(tmp_path / "empty")
        assert run(DATASET_ARGS + ["--count", "0", "--out", out]) == 0
        assert binfmt.read_manifest(out) == []

    def test_generate_and_resume_idempotent(self, tmp_path):
        out = str(tmp_path / "mini")
        assert run(DATASET_ARGS + ["--count", "2", "--out", out]) == 0
        first = {f: (tmp_path / "mini" / f).read_bytes()
                 for f in os.listdir(out)}
        assert run(DATASET_ARGS + ["--count", "2", "--out", out,
                                   "--resume"]) == 0
        second = {f: (tmp_path / "mini" / f).read_bytes()
                  for f in os.listdir(out)}
        assert first == second
        samples = list(ds.read_dataset(out))
        assert len(samples) == 2
        assert samples[0].meta.seed == 0 and samples[1].meta.seed == 1

    def test_default_count_matches_paper_scale(self):
        parser = cli.build_parser()
        args = parser.parse_args(["dataset"])
        assert args.count is None   # resolved per style
        assert ds.TRAIN_COUNTS[args.style] == 3280


class TestEval:
    def _write_images(self, directory, images):
        os.makedirs(directory, exist_ok=True)
        for i, img in enumerate(images):
            binfmt.write_arrays(os.path.join(directory, f"img_{i:03d}.dbar"),
                                [img])

    def test_identical_dirs_zero_rmse(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        imgs = [rng.uniform(0.3, 2.5, (16, 16)).astype(np.float32)
                for _ in range(3)]
        d = str(tmp_path / "d")
        self._write_images(d, imgs)
        csv_path = str(tmp_path / "m.csv")
        assert run(["eval", "--pred", d, "--gt", d, "--csv", csv_path]) == 0
        lines = [l for l in capsys.readouterr().out.splitlines()
                 if l.startswith("img_") or l.startswith("mean")]
        assert len(lines) == 4   # 3 files + mean row
        for line in lines:
            assert line.split()[-1] == "0.0000"

    def test_means_match_recomputation(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        gts = [rng.uniform(0.3, 2.5, (16, 16)).astype(np.float32)
               for _ in range(3)]
        preds = [g + 0.05 * rng.standard_normal((16, 16)).astype(np.float32)
                 for g in gts]
        pred_dir, gt_dir = str(tmp_path / "p"), str(tmp_path / "g")
        self._write_images(pred_dir, preds)
        self._write_images(gt_dir, gts)
        csv_path = str(tmp_path / "m.csv")
        assert run(["eval", "--pred", pred_dir, "--gt", gt_dir,
                    "--csv", csv_path]) == 0
        rows = np.genfromtxt(csv_path, delimiter=",", skip_header=1,
                             usecols=(1, 2, 3))
        np.testing.assert_allclose(rows[-1], rows[:-1].mean(axis=0), atol=1e-9)


class TestBench:
    def test_report_contains_both_solvers(self, capsys):
        assert run(["bench", "--l", "4,5"]) == 0
        out = capsys.readouterr().out
        assert "richardson" in out and "direct" in out

    def test_accepts_paper_grid_sizes(self, capsys):
        assert run(["bench", "--l", "7,8,9"]) == 0
        out = capsys.readouterr().out
        assert "skipped" in out   # direct guarded beyond l = 6

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            run(["bench", "--bogus"])
        assert info.value.code == cli.EXIT_USAGE
