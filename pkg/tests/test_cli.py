import json

import numpy as np
import pytest

from dtspr.cli import main
from dtspr.frames import load_dataset


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def synth_args(out_dir, videos=2, seed=11, domain="A", extra=()):
    return ["synth", "--out", str(out_dir), "--videos", str(videos),
            "--frames-min", "21", "--frames-max", "28", "--size", "24x24",
            "--domain", domain, "--seed", str(seed), *extra]


def test_synth_writes_dataset_and_provenance(tmp_path, capsys):
    code, out, err = run(capsys, *synth_args(tmp_path / "d"))
    assert code == 0
    assert "config synth.videos=2" in out
    assert (tmp_path / "d" / "manifest.tsv").exists()
    assert (tmp_path / "d" / "provenance.txt").exists()
    prov = (tmp_path / "d" / "provenance.txt").read_text()
    assert "timestamp:" in prov and "flag seed=11" in prov
    assert len(load_dataset(tmp_path / "d")) == 2


def test_synth_determinism_modulo_provenance(tmp_path, capsys):
    run(capsys, *synth_args(tmp_path / "a"))
    run(capsys, *synth_args(tmp_path / "b"))
    for f in sorted((tmp_path / "a").iterdir()):
        if f.name == "provenance.txt":
            continue
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_corrupt_identity_byte_identical_except_provenance(tmp_path, capsys):
    run(capsys, *synth_args(tmp_path / "clean"))
    code, out, _ = run(capsys, "corrupt", "--in", str(tmp_path / "clean"),
                       "--out", str(tmp_path / "copy"),
                       "--hue", "0", "--brightness", "0", "--contrast", "0")
    assert code == 0
    for f in sorted((tmp_path / "clean").iterdir()):
        if f.name == "provenance.txt":
            continue
        assert f.read_bytes() == (tmp_path / "copy" / f.name).read_bytes()


def test_corrupt_changes_rgb_only(tmp_path, capsys):
    run(capsys, *synth_args(tmp_path / "clean"))
    code, *_ = run(capsys, "corrupt", "--in", str(tmp_path / "clean"),
                   "--out", str(tmp_path / "bad"),
                   "--hue", "3", "--brightness", "3", "--contrast", "3")
    assert code == 0
    clean = load_dataset(tmp_path / "clean")
    bad = load_dataset(tmp_path / "bad")
    for a, b in zip(clean, bad):
        assert not np.array_equal(a.rgb, b.rgb)
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa.mask_tokens, fb.mask_tokens)


def test_train_eval_report_pipeline(tmp_path, capsys):
    run(capsys, *synth_args(tmp_path / "train", videos=2, seed=21))
    run(capsys, *synth_args(tmp_path / "test", videos=1, seed=22))
    ckpt = tmp_path / "m.dtck"
    code, out, err = run(capsys, "train", "--data", str(tmp_path / "train"),
                         "--variant", "dt", "--epochs", "1", "--batch", "8",
                         "--lr", "0.0005", "--preset", "small",
                         "--seed", "5", "--out", str(ckpt))
    assert code == 0, err
    assert ckpt.exists() and ckpt.with_suffix(".dtck.json").exists()
    assert (tmp_path / "m.dtck.log").read_text().count("\n") == 1

    rep = tmp_path / "r.json"
    code, out, err = run(capsys, "eval", "--ckpt", str(ckpt), "--data",
                         str(tmp_path / "test"), "--tag", "clean", "--out", str(rep))
    assert code == 0, err
    payload = json.loads(rep.read_text())
    assert payload["variant"] == "dt" and payload["dataset"] == "clean"
    assert 0.0 <= payload["accuracy"] <= 100.0

    code, out, err = run(capsys, "report", "--inputs", str(rep), "--format", "tsv")
    assert code == 0
    assert out.splitlines()[-1].startswith("dt\tclean\t")

    code, out, err = run(capsys, "report", "--inputs", str(rep), "--format", "txt")
    assert code == 0
    assert "clean" in out and "Acc" in out


def test_train_rejects_missing_rgb_variant(tmp_path, capsys):
    # corrupting needs rgb; build a dataset, strip rgb by regenerating with raw
    # variant on dt-only data is not constructible via cli, so check eval-side
    # mismatch instead: checkpoint digest guard
    run(capsys, *synth_args(tmp_path / "d", videos=1, seed=31))
    ckpt = tmp_path / "m.dtck"
    run(capsys, "train", "--data", str(tmp_path / "d"), "--variant", "dt",
        "--epochs", "1", "--preset", "small", "--seed", "1", "--out", str(ckpt))
    # tamper with the sidecar so the digest no longer matches
    sidecar = tmp_path / "m.dtck.json"
    cfg = json.loads(sidecar.read_text())
    cfg["heads"] = 2
    sidecar.write_text(json.dumps(cfg))
    code, out, err = run(capsys, "eval", "--ckpt", str(ckpt), "--data",
                         str(tmp_path / "d"), "--tag", "x", "--out", str(tmp_path / "r.json"))
    assert code == 1
    assert err.startswith("error: CheckpointError:")
    assert "\n" not in err.strip()


def test_gradcheck_cli_passes(tmp_path, capsys):
    code, out, err = run(capsys, "gradcheck", "--variant", "depth",
                         "--preset", "tiny", "--samples", "1")
    assert code == 0
    assert "PASS" in out and "max_rel_err" in out


def pipeline(root, monkeypatch, capsys, seed):
    """synth -> corrupt -> train -> eval x2 -> report, all from one seed.

    Runs with relative paths from inside ``root`` so two runs see byte-equal
    flags and must produce byte-equal outputs.
    """
    root.mkdir(parents=True, exist_ok=True)
    monkeypatch.chdir(root)
    assert run(capsys, *synth_args("train", videos=2, seed=seed))[0] == 0
    assert run(capsys, *synth_args("test", videos=1, seed=seed + 1))[0] == 0
    assert run(capsys, "corrupt", "--in", "test", "--out", "test_c",
               "--hue", "3", "--brightness", "3", "--contrast", "3")[0] == 0
    assert run(capsys, "train", "--data", "train", "--variant", "dt",
               "--epochs", "2", "--preset", "small", "--seed", str(seed),
               "--out", "dt.dtck")[0] == 0
    for tag, data in (("clean", "test"), ("corrupt", "test_c")):
        assert run(capsys, "eval", "--ckpt", "dt.dtck", "--data", data,
                   "--tag", tag, "--out", f"{tag}.json")[0] == 0
    assert run(capsys, "report", "--inputs", "clean.json", "corrupt.json",
               "--format", "tsv", "--out", "report.tsv")[0] == 0


def test_full_pipeline_end_to_end_determinism(tmp_path, monkeypatch, capsys):
    pipeline(tmp_path / "r1", monkeypatch, capsys, seed=50)
    pipeline(tmp_path / "r2", monkeypatch, capsys, seed=50)
    compared = 0
    for f in sorted((tmp_path / "r1").rglob("*")):
        if f.is_dir() or "provenance" in f.name:
            continue
        other = tmp_path / "r2" / f.relative_to(tmp_path / "r1")
        assert f.read_bytes() == other.read_bytes(), f.name
        compared += 1
    assert compared >= 10
    # dt variant reads no RGB: clean and corrupted evals agree exactly
    clean = json.loads((tmp_path / "r1" / "clean.json").read_text())
    corrupt = json.loads((tmp_path / "r1" / "corrupt.json").read_text())
    assert clean["accuracy"] == corrupt["accuracy"]
    assert clean["video_accuracies"] == corrupt["video_accuracies"]


def test_unknown_flag_fails(tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["synth", "--bogus", "x"])


def test_error_is_single_line(tmp_path, capsys):
    code, out, err = run(capsys, "eval", "--ckpt", str(tmp_path / "none.dtck"),
                         "--data", str(tmp_path), "--tag", "x",
                         "--out", str(tmp_path / "r.json"))
    assert code == 1
    assert err.startswith("error: FileNotFoundError:")
    assert len(err.strip().splitlines()) == 1
