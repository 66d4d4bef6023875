import json
import sys
from pathlib import Path

import numpy as np
import pytest

from dicect import Image, Sinogram
from dicect.cli import cli_main, load_config
from dicect.errors import FormatError
from dicect.fileio import read_json, read_raster


def run(*args):
    return cli_main([str(a) for a in args])


def tree_bytes(root: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """phantom -> project -> mask chain shared by several tests."""
    root = tmp_path_factory.mktemp("pipe")
    assert run("phantom", "--kind", "shepp-logan", "--n", "64", "-o", root / "p") == 0
    assert (
        run(
            "project",
            "--image",
            root / "p" / "phantom.json",
            "--n-angles",
            "120",
            "-o",
            root / "s",
        )
        == 0
    )
    assert (
        run(
            "mask",
            "--sino",
            root / "s" / "sinogram.json",
            "--observed-deg",
            "0:90",
            "-o",
            root / "m",
        )
        == 0
    )
    return root


class TestPipeline:
    def test_phantom_project_fbp_metrics(self, tmp_path):
        assert run("phantom", "--kind", "shepp-logan", "--n", "128", "-o", tmp_path / "p") == 0
        assert (
            run(
                "project",
                "--image",
                tmp_path / "p" / "phantom.json",
                "--n-angles",
                "360",
                "-o",
                tmp_path / "s",
            )
            == 0
        )
        assert (
            run(
                "fbp",
                "--sino",
                tmp_path / "s" / "sinogram.json",
                "--image-size",
                "128",
                "-o",
                tmp_path / "r",
            )
            == 0
        )
        assert (
            run(
                "metrics",
                "--image",
                tmp_path / "r" / "fbp.json",
                "--ref",
                tmp_path / "p" / "phantom.json",
                "-o",
                tmp_path / "q",
            )
            == 0
        )
        result = read_json(tmp_path / "q" / "metrics.json")
        ref = read_raster(tmp_path / "p" / "phantom.json")
        rng_ref = ref.values.max() - ref.values.min()
        assert result["rmse"] <= 0.05 * rng_ref
        assert result["rmse_hu"] == pytest.approx(result["rmse"] * 1000.0)
        assert 0.0 < result["ssim"] <= 1.0

    def test_mask_rows(self, pipeline_dir):
        masked = read_raster(pipeline_dir / "m" / "masked.json")
        assert isinstance(masked, Sinogram)
        assert not masked.values[60:].any()
        assert masked.values[:60].any()
        info = read_json(pipeline_dir / "m" / "mask.json")
        assert sum(info["observed"]) == 60

    def test_mask_720_case(self, tmp_path):
        assert run("phantom", "--n", "32", "-o", tmp_path / "p") == 0
        assert (
            run(
                "project",
                "--image",
                tmp_path / "p" / "phantom.json",
                "--n-angles",
                "720",
                "-o",
                tmp_path / "s",
            )
            == 0
        )
        assert (
            run(
                "mask",
                "--sino",
                tmp_path / "s" / "sinogram.json",
                "--observed-deg",
                "0:90",
                "-o",
                tmp_path / "m",
            )
            == 0
        )
        manifest = read_json(tmp_path / "m" / "mask_manifest.json")
        assert manifest["observed_views"] == 360

    def test_complete_enforce(self, pipeline_dir, tmp_path):
        out = tmp_path / "c"
        assert (
            run(
                "complete",
                "--sino",
                pipeline_dir / "m" / "masked.json",
                "--observed-deg",
                "0:90",
                "--completer",
                "angular-interpolation",
                "--enforce",
                "--config",
                _config_file(tmp_path, {"geometry": {"image_size": [64, 64]}}),
                "-o",
                out,
            )
            == 0
        )
        completed = read_raster(out / "completed.json")
        masked = read_raster(pipeline_dir / "m" / "masked.json")
        assert np.array_equal(completed.values[:60], masked.values[:60])
        assert completed.values[60:].any()
        assert (out / "consistent.json").exists()
        assert (out / "cycle_image.json").exists()


def _config_file(tmp_path, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestReconstruct:
    @pytest.mark.parametrize("method", ["fbp", "fbp-pp-style", "dc-fbp", "dice", "data-only"])
    def test_methods_produce_images(self, pipeline_dir, tmp_path, method):
        out = tmp_path / method
        cfg = _config_file(
            tmp_path,
            {
                "geometry": {"image_size": [64, 64]},
                "image_agent": {"kind": "tv-denoiser", "lambda_tv": 0.05, "inner_iters": 15},
                "ce": {"cg_iters": 5},
            },
        )
        assert (
            run(
                "reconstruct",
                "--sino",
                pipeline_dir / "m" / "masked.json",
                "--method",
                method,
                "--observed-deg",
                "0:90",
                "--config",
                cfg,
                "-o",
                out,
            )
            == 0
        )
        recon = read_raster(out / "recon.json")
        assert isinstance(recon, Image)
        assert recon.values.shape == (64, 64)
        manifest = read_json(out / "reconstruct_manifest.json")
        assert manifest["method"] == method
        if method in ("dice", "data-only"):
            trace = read_json(out / "trace.json")
            assert len(trace["mann_residuals"]) == 4

    def test_manifest_records_defaults(self, pipeline_dir, tmp_path):
        out = tmp_path / "defaults"
        cfg = _config_file(tmp_path, {"geometry": {"image_size": [64, 64]}, "ce": {"cg_iters": 3}})
        assert (
            run(
                "reconstruct",
                "--sino",
                pipeline_dir / "m" / "masked.json",
                "--method",
                "dice",
                "--config",
                cfg,
                "-o",
                out,
            )
            == 0
        )
        manifest = read_json(out / "reconstruct_manifest.json")
        ce = manifest["config"]["ce"]
        assert ce["rho"] == 0.25
        assert ce["mu"] == [0.6, 0.4]
        assert ce["sigma2"] == 1e-8
        assert ce["outer_iters"] == 4
        assert manifest["config"]["ce"]["cg_iters"] == 3
        assert manifest["version"].startswith("dicect-")

    def test_dice_beats_fbp_through_cli(self, pipeline_dir, tmp_path):
        cfg = _config_file(tmp_path, {"geometry": {"image_size": [64, 64]}})
        for method in ("fbp", "dice"):
            assert (
                run(
                    "reconstruct",
                    "--sino",
                    pipeline_dir / "m" / "masked.json",
                    "--method",
                    method,
                    "--config",
                    cfg,
                    "-o",
                    tmp_path / method,
                )
                == 0
            )
        ref = read_raster(pipeline_dir / "p" / "phantom.json")
        err = {
            m: float(
                np.sqrt(
                    np.mean((read_raster(tmp_path / m / "recon.json").values - ref.values) ** 2)
                )
            )
            for m in ("fbp", "dice")
        }
        assert err["dice"] < err["fbp"]


class TestDeterminism:
    def test_identical_runs_bitwise(self, tmp_path, monkeypatch):
        # same commands with the same relative paths, two fresh workdirs
        cfg = {"geometry": {"image_size": [48, 48]}, "ce": {"cg_iters": 4}}
        outs = []
        for tag in ("one", "two"):
            base = tmp_path / tag
            base.mkdir()
            monkeypatch.chdir(base)
            _config_file(base, cfg)
            assert (
                run("phantom", "--kind", "random-ellipses", "--n", "48", "--seed", "11", "-o", "p")
                == 0
            )
            assert run("project", "--image", "p/phantom.json", "--n-angles", "90", "-o", "s") == 0
            assert run("mask", "--sino", "s/sinogram.json", "--observed-deg", "0:90", "-o", "m") == 0
            assert (
                run(
                    "reconstruct",
                    "--sino",
                    "m/masked.json",
                    "--method",
                    "dice",
                    "--seed",
                    "11",
                    "--config",
                    "cfg.json",
                    "-o",
                    "r",
                )
                == 0
            )
            outs.append(
                {
                    **tree_bytes(base / "p"),
                    **tree_bytes(base / "s"),
                    **tree_bytes(base / "m"),
                    **tree_bytes(base / "r"),
                }
            )
        assert outs[0].keys() == outs[1].keys()
        for name in outs[0]:
            assert outs[0][name] == outs[1][name], name


class TestErrorsAndConfig:
    def test_usage_error_exit_1(self):
        assert run("reconstruct") == 1
        assert run("mask", "--sino", "x.json", "--observed-deg", "banana", "-o", "y") == 1

    def test_missing_file_exit_2(self, tmp_path):
        assert run("fbp", "--sino", tmp_path / "no.json", "--image-size", "32", "-o", tmp_path) == 2

    def test_invalid_config_rejected_before_compute(self, tmp_path):
        bad = _config_file(tmp_path, {"ce": {"rho": 2.0}})
        with pytest.raises(FormatError):
            load_config(str(bad))

    def test_unknown_config_key_rejected(self, tmp_path):
        bad = _config_file(tmp_path, {"turbo": True})
        with pytest.raises(FormatError):
            load_config(str(bad))

    def test_config_merge(self, tmp_path):
        cfg = load_config(
            str(_config_file(tmp_path, {"ce": {"rho": 0.5}})), {"ce": {"outer_iters": 2}}
        )
        assert cfg["ce"]["rho"] == 0.5
        assert cfg["ce"]["outer_iters"] == 2
        assert cfg["ce"]["mu"] == [0.6, 0.4]

    def test_console_entry_point(self, tmp_path):
        import subprocess

        proc = subprocess.run(
            [sys.executable, "-m", "dicect", "--version"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "dicect-" in proc.stdout


class TestNumericalExit:
    def test_constant_ref_metrics_exit_3(self, tmp_path):
        from dicect.fileio import write_raster

        flat = e = Image.from_values(np.zeros((8, 8)))
        write_raster(tmp_path / "a.json", flat)
        write_raster(tmp_path / "b.json", e)
        assert (
            run(
                "metrics",
                "--image",
                tmp_path / "a.json",
                "--ref",
                tmp_path / "b.json",
                "-o",
                tmp_path / "q",
            )
            == 3
        )


class TestThreadCap:
    def test_results_identical_under_thread_cap(self, tmp_path):
        # outputs are partitioned per thread, so capping workers must not
        # change a single bit
        import os
        import subprocess

        script = tmp_path / "probe.py"
        script.write_text(
            "import numpy as np\n"
            "from dicect import Geometry, Image, forward_project, back_project, Sinogram\n"
            "geom = Geometry.uniform(48, n_angles=60)\n"
            "rng = np.random.default_rng(3)\n"
            "img = Image.from_values(rng.random((48, 48)))\n"
            "sino = forward_project(img, geom)\n"
            "back = back_project(sino, geom)\n"
            "np.save('sino.npy', sino.values)\n"
            "np.save('back.npy', back.values)\n"
        )
        results = {}
        for cap in ("1", "2"):
            env = dict(os.environ, DICE_NUM_THREADS=cap)
            subprocess.run(
                [sys.executable, str(script)], cwd=tmp_path, env=env, check=True
            )
            results[cap] = (
                np.load(tmp_path / "sino.npy").tobytes(),
                np.load(tmp_path / "back.npy").tobytes(),
            )
        assert results["1"] == results["2"]
