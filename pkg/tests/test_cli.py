"""Synthetic data generation and the command-line surface."""

import numpy as np
import pytest

from mscv.cli import (
    ConfigError,
    config_from_args,
    generate_synthetic_pair,
    main,
    parse_plan,
    traditional_match,
)
from mscv.imagekit import read_image, read_pfm
from mscv.metrics import epe
from mscv.network import init_weights, save_weights


class TestPlanParsing:
    def test_single_disparity_covers_width(self):
        assert parse_plan("8", 100) == [(0, 100, 8)]

    def test_region_list(self):
        assert parse_plan("0:40:4,40:100:16", 100) == [(0, 40, 4), (40, 100, 16)]

    def test_gap_rejected(self):
        with pytest.raises(ConfigError):
            parse_plan("0:40:4,50:100:16", 100)

    def test_short_coverage_rejected(self):
        with pytest.raises(ConfigError):
            parse_plan("0:40:4", 100)


class TestGenerateSyntheticPair:
    def test_zero_disparity_plan(self):
        left, right, gt = generate_synthetic_pair(3, 64, 16, [(0, 64, 0)])
        np.testing.assert_array_equal(left.data, right.data)
        np.testing.assert_array_equal(gt.values, 0.0)

    def test_constant_plan_shift_construction(self):
        d = 8
        left, right, gt = generate_synthetic_pair(5, 64, 16, [(0, 64, d)])
        np.testing.assert_array_equal(gt.values[:, d:], d)
        np.testing.assert_array_equal(
            left.data[:, :, d:], right.data[:, :, : 64 - d]
        )
        assert not gt.valid[:, :d].any()  # out of range on the left edge

    def test_occlusion_at_disparity_increase(self):
        # d jumps 0 -> 8 at x=32: warped coords drop, pixels occluded.
        _, _, gt = generate_synthetic_pair(1, 64, 4, [(0, 32, 0), (32, 64, 8)])
        assert not gt.valid[:, 32:40].any()
        assert gt.valid[:, 40:].all()

    def test_deterministic_per_seed(self):
        a = generate_synthetic_pair(9, 32, 8, [(0, 32, 4)])
        b = generate_synthetic_pair(9, 32, 8, [(0, 32, 4)])
        for x, y in zip(a[:2], b[:2]):
            np.testing.assert_array_equal(x.data, y.data)
        np.testing.assert_array_equal(a[2].values, b[2].values)

    def test_infeasible_plan_rejected(self):
        with pytest.raises(ConfigError):
            generate_synthetic_pair(0, 64, 8, [(0, 64, 200)])
        with pytest.raises(ConfigError):
            generate_synthetic_pair(0, 64, 8, [(0, 32, 40), (32, 64, 0)])


class TestConfigResolution:
    def test_defaults(self):
        cfg = config_from_args(["describe"])
        assert cfg.max_disp == 192 and cfg.tau == 1.0 and cfg.lam == 0.5
        assert cfg.epsilon == 3.0 and cfg.threads == 1

    def test_flag_overrides_config_file(self, tmp_path):
        cfile = tmp_path / "run.cfg"
        cfile.write_text("epsilon = 7\nseed = 4\n# comment\n")
        cfg = config_from_args(
            ["describe", "--config", str(cfile), "--epsilon", "2.5"]
        )
        assert cfg.epsilon == 2.5  # flag wins
        assert cfg.seed == 4  # config file beats default

    def test_bad_config_line_rejected(self, tmp_path):
        cfile = tmp_path / "bad.cfg"
        cfile.write_text("epsilon 7\n")
        with pytest.raises(ConfigError):
            config_from_args(["describe", "--config", str(cfile)])


class TestDispatch:
    def test_synth_trad_match_eval_chain(self, tmp_path, capsys):
        out = tmp_path / "data"
        assert main([
            "synth", "--out", str(out), "--seed", "2",
            "--width", "128", "--height", "32", "--plan", "8",
        ]) == 0
        pfm = tmp_path / "pred.pfm"
        assert main([
            "trad-match", "--left", str(out / "left.ppm"),
            "--right", str(out / "right.ppm"), "--out", str(pfm),
        ]) == 0
        assert pfm.exists() and (tmp_path / "pred.pfm.pgm").exists()
        # Constant-disparity plan: zero error on non-occluded interior.
        pred = read_pfm(pfm)
        gt = read_pfm(out / "gt.pfm")
        interior = np.zeros_like(gt.valid)
        interior[6:-6, 30:-6] = True
        gt_interior = read_pfm(out / "gt.pfm")
        gt_interior.valid &= interior
        assert epe(pred, gt_interior) == 0.0
        assert main([
            "eval", "--pred", str(pfm), "--gt", str(out / "gt.pfm"),
        ]) == 0
        assert "epe=" in capsys.readouterr().out

    def test_infer_output_dims(self, tmp_path, rng):
        out = tmp_path / "data"
        main(["synth", "--out", str(out), "--width", "64", "--height", "24"])
        wpath = tmp_path / "w.bin"
        assert main(["init-weights", "--out", str(wpath), "--seed", "1"]) == 0
        dpath = tmp_path / "d.pfm"
        assert main([
            "infer", "--left", str(out / "left.ppm"),
            "--right", str(out / "right.ppm"),
            "--weights", str(wpath), "--out", str(dpath),
        ]) == 0
        dmap = read_pfm(dpath)
        assert (dmap.height, dmap.width) == (24, 64)

    def test_mask_and_loss_commands(self, tmp_path, capsys):
        out = tmp_path / "data"
        main(["synth", "--out", str(out), "--width", "96", "--height", "16",
              "--plan", "0:48:0,48:96:8"])
        mpath = tmp_path / "m.pgm"
        assert main(["mask", "--gt", str(out / "gt.pfm"),
                     "--out", str(mpath)]) == 0
        img = read_image(mpath)
        assert set(np.unique(img.data)) <= {0.0, 1.0}
        assert main(["loss", "--pred", str(out / "gt.pfm"),
                     "--gt", str(out / "gt.pfm")]) == 0
        assert "loss=1.000000" in capsys.readouterr().out

    def test_bench_prints_timing_line(self, capsys):
        assert main(["bench", "--stage", "census", "--repeat", "2",
                     "--width", "64", "--height", "32"]) == 0
        out = capsys.readouterr().out
        assert "bench stage=census" in out and "mean=" in out and "min=" in out

    def test_unknown_command_nonzero_exit(self, capsys):
        assert main(["frobnicate"]) != 0

    def test_missing_file_nonzero_exit(self, capsys):
        assert main(["eval", "--pred", "/nonexistent.pfm",
                     "--gt", "/nonexistent.pfm"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_malformed_input_no_crash(self, tmp_path, capsys):
        bad = tmp_path / "bad.pfm"
        bad.write_bytes(b"garbage")
        assert main(["mask", "--gt", str(bad), "--out",
                     str(tmp_path / "m.pgm")]) == 2

    def test_describe_emits_table(self, capsys):
        assert main(["describe"]) == 0
        out = capsys.readouterr().out
        assert "head.conv.w" in out and "total" in out

    def test_trad_match_deterministic(self, rng):
        from mscv.imagekit import Image

        left = Image(rng.random((3, 24, 48)))
        right = Image(rng.random((3, 24, 48)))
        a = traditional_match(left, right)
        b = traditional_match(left, right)
        np.testing.assert_array_equal(a.values, b.values)
