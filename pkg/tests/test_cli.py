import json
import struct

import numpy as np
import pytest

from vitiq import QualityConfig, preprocess, read_ppm, score_image, write_model, write_ppm
from vitiq.cli import main
from vitiq.evaluation import edc_curve, join_qualities, read_pairs, read_qualities
from conftest import TINY, make_zero_block_model, random_image

from vitiq import random_model


@pytest.fixture()
def workspace(tmp_path):
    """Model file plus a handful of images sized for it."""
    model = random_model(TINY, seed=0)
    model_path = tmp_path / "model.vwtf"
    write_model(model, model_path)
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    paths = []
    for i in range(4):
        p = img_dir / f"img{i}.ppm"
        write_ppm(random_image(seed=i), p)
        paths.append(p)
    return {"dir": tmp_path, "model": model, "model_path": model_path,
            "images": paths, "img_dir": img_dir}


def run(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestScore:
    def test_scores_match_library(self, workspace, capsys):
        code, out, err = run(
            ["score", "--model", workspace["model_path"], *workspace["images"]], capsys)
        assert code == 0
        lines = [l for l in out.splitlines() if not l.startswith("#")]
        assert len(lines) == 4
        cfg = QualityConfig.default_for(TINY.num_blocks)
        for line, path in zip(lines, workspace["images"]):
            got_path, got_q = line.split("\t")
            assert got_path == str(path)
            want = score_image(preprocess(read_ppm(path)), workspace["model"], cfg)
            assert abs(float(got_q) - want.image_score) < 1e-8

    def test_zero_weight_model_scores_one(self, workspace, capsys, tmp_path):
        zpath = tmp_path / "zero.vwtf"
        write_model(make_zero_block_model(), zpath)
        code, out, _ = run(["score", "--model", zpath, *workspace["images"]], capsys)
        assert code == 0
        for line in out.splitlines():
            if line.startswith("#"):
                continue
            assert line.split("\t")[1] == "1.00000000"

    def test_same_invocation_twice_is_byte_identical(self, workspace, capsys, tmp_path):
        out1, out2 = tmp_path / "a.tsv", tmp_path / "b.tsv"
        argv = ["score", "--model", workspace["model_path"], *workspace["images"]]
        assert main([str(a) for a in argv + ["--out", out1]]) == 0
        assert main([str(a) for a in argv + ["--out", out2]]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        m1 = json.loads((tmp_path / "a.tsv.manifest.json").read_text())
        m2 = json.loads((tmp_path / "b.tsv.manifest.json").read_text())
        assert m1 == m2

    def test_jobs_do_not_change_output(self, workspace, capsys, tmp_path):
        seq, par = tmp_path / "seq.tsv", tmp_path / "par.tsv"
        base = ["score", "--model", workspace["model_path"], *workspace["images"]]
        assert main([str(a) for a in base + ["--out", seq]]) == 0
        assert main([str(a) for a in base + ["--jobs", "4", "--out", par]]) == 0
        assert seq.read_bytes() == par.read_bytes()

    def test_per_patch_sidecar(self, workspace, capsys, tmp_path):
        out = tmp_path / "scores.tsv"
        code, _, _ = run(["score", "--model", workspace["model_path"],
                          workspace["images"][0], "--per-patch", "--out", out], capsys)
        assert code == 0
        rows = (tmp_path / "scores.tsv.patches.tsv").read_text().splitlines()
        assert len(rows) == TINY.num_patches
        for ix, row in enumerate(rows):
            path, patch_ix, d_bar, q = row.split("\t")
            assert int(patch_ix) == ix
            assert 0.0 <= float(d_bar) <= 2.0
            assert 0.0 < float(q) <= 1.0

    def test_per_patch_needs_out(self, workspace, capsys):
        code, _, err = run(["score", "--model", workspace["model_path"],
                            workspace["images"][0], "--per-patch"], capsys)
        assert code == 1
        assert "per-patch" in err

    def test_unreadable_image_is_per_file_error(self, workspace, capsys, tmp_path):
        bad = tmp_path / "broken.ppm"
        bad.write_bytes(b"P6\n8 8\n255\nshort")
        code, out, err = run(["score", "--model", workspace["model_path"],
                              workspace["images"][0], bad], capsys)
        assert code == 0  # one success is enough
        assert str(bad) in err
        data_lines = [l for l in out.splitlines() if not l.startswith("#")]
        assert len(data_lines) == 1

    def test_all_failures_exit_nonzero(self, workspace, capsys, tmp_path):
        bad = tmp_path / "broken.ppm"
        bad.write_bytes(b"nonsense")
        code, out, err = run(["score", "--model", workspace["model_path"], bad], capsys)
        assert code == 1
        assert "broken.ppm" in err

    def test_missing_image_does_not_abort_batch(self, workspace, capsys, tmp_path):
        ghost = tmp_path / "gone.ppm"
        code, out, err = run(["score", "--model", workspace["model_path"],
                              workspace["images"][0], ghost], capsys)
        assert code == 0
        assert str(ghost) in err
        manifest = json.loads(out.splitlines()[-1][len("# manifest "):])
        assert manifest["input_digests"][str(ghost)] is None

    def test_manifest_carries_digests_and_config(self, workspace, capsys):
        code, out, _ = run(["score", "--model", workspace["model_path"],
                            workspace["images"][0]], capsys)
        manifest_line = [l for l in out.splitlines() if l.startswith("# manifest ")][0]
        manifest = json.loads(manifest_line[len("# manifest "):])
        assert manifest["command"] == "score"
        assert manifest["config"]["block_set"] == [0, 1]
        assert str(workspace["model_path"]) in manifest["input_digests"]
        assert len(manifest["input_digests"]) == 2

    def test_blocks_flag(self, workspace, capsys):
        code, out, _ = run(["score", "--model", workspace["model_path"],
                            workspace["images"][0], "--blocks", "0..1"], capsys)
        assert code == 0
        code, _, err = run(["score", "--model", workspace["model_path"],
                            workspace["images"][0], "--blocks", "1..0"], capsys)
        assert code == 1
        code, _, err = run(["score", "--model", workspace["model_path"],
                            workspace["images"][0], "--blocks", "0..5"], capsys)
        assert code == 1  # block 5 beyond a 2-block model

    def test_agg_flag_changes_scores(self, workspace, capsys):
        img = workspace["images"][0]
        _, out_u, _ = run(["score", "--model", workspace["model_path"], img,
                           "--agg", "uniform"], capsys)
        _, out_a, _ = run(["score", "--model", workspace["model_path"], img,
                           "--agg", "attn-last"], capsys)
        q_u = float(out_u.splitlines()[0].split("\t")[1])
        q_a = float(out_a.splitlines()[0].split("\t")[1])
        assert q_u != q_a

    def test_eps_norm_env_override(self, workspace, capsys, monkeypatch):
        monkeypatch.setenv("VITNT_EPS_NORM", "1e-9")
        _, out, _ = run(["score", "--model", workspace["model_path"],
                         workspace["images"][0]], capsys)
        manifest = json.loads(out.splitlines()[-1][len("# manifest "):])
        assert manifest["config"]["eps_norm"] == 1e-9

    def test_eps_norm_env_invalid(self, workspace, capsys, monkeypatch):
        monkeypatch.setenv("VITNT_EPS_NORM", "tiny")
        code, _, err = run(["score", "--model", workspace["model_path"],
                            workspace["images"][0]], capsys)
        assert code == 1
        assert "VITNT_EPS_NORM" in err


@pytest.fixture()
def edc_files(tmp_path):
    pairs_path = tmp_path / "pairs.tsv"
    quals_path = tmp_path / "quals.tsv"
    rows, quals = [], {}
    # 6 genuine (2 below threshold), 4 impostor
    sims_g = [0.9, 0.85, 0.8, 0.75, 0.2, 0.1]
    for i, s in enumerate(sims_g):
        rows.append(f"g{i}a\tg{i}b\t{s}\t1")
        quals[f"g{i}a"] = 0.5 + 0.05 * i if s > 0.5 else 0.01 * (i + 1)
        quals[f"g{i}b"] = 0.9
    for i, s in enumerate([0.40, 0.35, 0.30, 0.25]):
        rows.append(f"i{i}a\ti{i}b\t{s}\t0")
        quals[f"i{i}a"] = 0.3 + 0.05 * i
        quals[f"i{i}b"] = 0.95
    pairs_path.write_text("\n".join(rows) + "\n")
    quals_path.write_text("".join(f"{k}\t{v}\n" for k, v in sorted(quals.items())))
    return pairs_path, quals_path


class TestEvalEdc:
    def test_two_targets_two_files(self, edc_files, capsys, tmp_path):
        pairs_path, quals_path = edc_files
        out_dir = tmp_path / "curves"
        code, out, _ = run(["eval-edc", "--pairs", pairs_path, "--qualities", quals_path,
                            "--fmr", "0.25", "0.5", "--out-dir", out_dir], capsys)
        assert code == 0
        assert (out_dir / "edc_fmr0.25.tsv").exists()
        assert (out_dir / "edc_fmr0.5.tsv").exists()
        assert (out_dir / "edc_fmr0.25.tsv.manifest.json").exists()

    def test_summary_matches_library(self, edc_files, capsys, tmp_path):
        pairs_path, quals_path = edc_files
        code, out, _ = run(["eval-edc", "--pairs", pairs_path, "--qualities", quals_path,
                            "--fmr", "0.25", "--grid", "21", "--out-dir", tmp_path], capsys)
        assert code == 0
        row = [l for l in out.splitlines() if l.startswith("0.25\t")][0]
        _, threshold, area, pauc25, _ = row.split("\t")

        pairs = join_qualities(read_pairs(pairs_path), read_qualities(quals_path))
        grid = [i / 20 for i in range(21)]
        want = edc_curve(pairs, 0.25, grid)
        assert float(threshold) == want.threshold
        assert float(area) == want.auc
        assert float(pauc25) == want.pauc25

    def test_missing_quality_id_is_hard_error(self, edc_files, capsys, tmp_path):
        pairs_path, quals_path = edc_files
        quals_path.write_text("g0a\t0.5\n")
        code, _, err = run(["eval-edc", "--pairs", pairs_path, "--qualities", quals_path,
                            "--fmr", "0.25", "--out-dir", tmp_path], capsys)
        assert code == 1
        assert "g0b" in err

    def test_no_genuine_rows_is_clear_error(self, capsys, tmp_path):
        pairs_path = tmp_path / "pairs.tsv"
        pairs_path.write_text("a\tb\t0.5\t0\n")
        quals_path = tmp_path / "q.tsv"
        quals_path.write_text("a\t0.5\nb\t0.5\n")
        code, _, err = run(["eval-edc", "--pairs", pairs_path, "--qualities", quals_path,
                            "--fmr", "0.25", "--out-dir", tmp_path], capsys)
        assert code == 1
        assert "genuine" in err


class TestValidateGradient:
    def test_zero_weight_model_flags_undefined_spearman(self, workspace, capsys, tmp_path):
        zpath = tmp_path / "zero.vwtf"
        write_model(make_zero_block_model(), zpath)
        code, out, _ = run(["validate-gradient", "--model", zpath,
                            "--images", workspace["img_dir"], "--kinds", "gaussian_noise",
                            "--seed", "3"], capsys)
        assert code == 0  # exit code never depends on the correlation
        assert "spearman\tundefined" in out
        # 11 level rows + header + spearman + manifest
        level_rows = [l for l in out.splitlines() if l and l[0].isdigit()]
        assert len(level_rows) == 11

    def test_fixed_seed_is_reproducible(self, workspace, capsys):
        argv = ["validate-gradient", "--model", workspace["model_path"],
                "--images", workspace["img_dir"], "--kinds", "gaussian_noise",
                "--seed", "11"]
        _, out1, _ = run(argv, capsys)
        _, out2, _ = run(argv, capsys)
        assert out1 == out2

    def test_reports_finite_spearman_for_random_model(self, workspace, capsys):
        code, out, _ = run(["validate-gradient", "--model", workspace["model_path"],
                            "--images", workspace["img_dir"], "--kinds", "down_up"], capsys)
        assert code == 0
        line = [l for l in out.splitlines() if l.startswith("spearman\t")][0]
        value = line.split("\t")[1]
        if value != "undefined":
            assert -1.0 <= float(value) <= 1.0

    def test_empty_dir_is_error(self, workspace, capsys, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        code, _, err = run(["validate-gradient", "--model", workspace["model_path"],
                            "--images", empty], capsys)
        assert code == 1
        assert "no .ppm images" in err


class TestInspectModel:
    def test_clean_model(self, workspace, capsys):
        code, out, _ = run(["inspect-model", "--model", workspace["model_path"]], capsys)
        assert code == 0
        assert "violations\t0" in out
        assert "config\t" in out
        assert "tensor\tblock0.qkv.weight\t24x8" in out

    def test_output_stable_across_runs(self, workspace, capsys):
        _, out1, _ = run(["inspect-model", "--model", workspace["model_path"]], capsys)
        _, out2, _ = run(["inspect-model", "--model", workspace["model_path"]], capsys)
        assert out1 == out2

    def test_bad_inventory_exits_nonzero(self, capsys, tmp_path):
        # header promises the tiny config but carries a single tensor
        path = tmp_path / "bad.vwtf"
        header = TINY.to_json().encode()
        name = b"patch_embed.bias"
        payload = np.zeros(8, dtype="<f4").tobytes()
        with open(path, "wb") as fh:
            fh.write(b"VWTF" + struct.pack("<II", 1, len(header)) + header)
            fh.write(struct.pack("<I", 1))
            fh.write(struct.pack("<I", len(name)) + name)
            fh.write(struct.pack("<I", 1) + struct.pack("<Q", 8) + payload)
        code, out, _ = run(["inspect-model", "--model", path], capsys)
        assert code == 1
        assert "violation\tblock0.attn_out.bias" in out

    def test_format_error_surfaces(self, capsys, tmp_path):
        path = tmp_path / "junk.vwtf"
        path.write_bytes(b"not a model")
        code, _, err = run(["inspect-model", "--model", path], capsys)
        assert code == 1
        assert "magic" in err


class TestTopLevel:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0

    def test_missing_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit):
            main([])

    def test_jobs_must_be_positive(self, workspace, capsys):
        code, _, err = run(["score", "--model", workspace["model_path"],
                            workspace["images"][0], "--jobs", "0"], capsys)
        assert code == 1
