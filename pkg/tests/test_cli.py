import csv
import math
from pathlib import Path

import pytest

from suredip import cli
from suredip.config import ConfigError, load_config, parse_config

ROOT = Path(__file__).resolve().parents[1]

TINY = """
[phantom]
height = 32
width = 32

[mask]
calib = 4

[noise]
sigma = 0.01

[model]
arch = "{arch}"
width = 4
unet_channels = [4, 4, 8]
unrolls = 2

[loss]
kind = "{loss}"

[train]
epochs = {epochs}
seeds = [0]
lr = 0.01

[baselines]
iters = 5
tv_grid = [0.01, 0.03]
wavelet_grid = [0.01]

[compare]
methods = {methods}
"""


def write_cfg(tmp_path, name="c.toml", arch="unet", loss="gsure", epochs=3, methods='["tv", "wavelet"]', extra=""):
    p = tmp_path / name
    p.write_text(TINY.format(arch=arch, loss=loss, epochs=epochs, methods=methods) + extra)
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_recon_single_epoch(tmp_path):
    cfg = write_cfg(tmp_path, epochs=1)
    assert cli.main(["--quiet", "recon", str(cfg), "--out-dir", str(tmp_path / "out")]) == 0
    lines = (tmp_path / "out/sure-unet/seed0/metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,data_term,divergence,psnr"
    assert len(lines) == 2
    for name in ("best.pgm", "final.pgm", "final.sdt", "checkpoint.sdt", "checkpoint.json"):
        assert (tmp_path / "out/sure-unet/seed0" / name).exists()


def test_missing_sigma_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[noise]\nseed = 3\n")
    assert cli.main(["recon", str(p)]) == 2
    err = capsys.readouterr().err
    assert "sigma" in err and "bad.toml:1" in err


def test_missing_noise_section(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[train]\nepochs = 2\n")
    assert cli.main(["recon", str(p)]) == 2
    assert "sigma" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text,needle",
    [
        ("[noise]\nsigma = 0.01\n\n[model]\nwidht = 3\n", "c.toml:5: [model] widht"),
        ("[noise]\nsigma = 'loud'\n", "c.toml:2: [noise] sigma"),
        ("[noise]\nsigma = 0.01\n[train]\nepochs = 0\n", "c.toml:4: [train] epochs"),
        ("[noise]\nsigma = 0.01\n[mask]\nkind = 'radial'\n", "[mask]"),
        ("[noise]\nsigma = 0.01\n[extras]\nx = 1\n", "c.toml:3: [extras]"),
        ("[noise]\nsigma = = 1\n", "c.toml:2: TOML syntax error"),
        ("[noise]\nsigma = 0.01\n[compare]\nmethods = ['dip-vit']\n", "[compare] methods"),
    ],
)
def test_malformed_config_diagnostics(tmp_path, capsys, text, needle):
    p = tmp_path / "c.toml"
    p.write_text(text)
    assert cli.main(["recon", str(p)]) == 2
    assert needle in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    assert cli.main(["recon", str(tmp_path / "nope.toml")]) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        cli.main(["train", "x.toml"])
    assert err.value.code == 2


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, arch="unrolled", epochs=3)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["--quiet", "recon", str(cfg), "--out-dir", str(out)]) == 0
        outs.append(out)
    for name in ("summary.csv", "sure-unrolled/seed0/metrics.csv", "sure-unrolled/seed0/final.sdt", "sure-unrolled/seed0/checkpoint.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_compare_baselines_only(tmp_path):
    cfg = write_cfg(tmp_path)
    assert cli.main(["--quiet", "compare", str(cfg), "--out-dir", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o/summary.csv")
    assert [r["method"] for r in rows] == ["tv", "wavelet"]
    assert (tmp_path / "o/tv/seed0/tuning.csv").read_text().count("\n") == 3


def test_compare_all_six_consistent_with_recon(tmp_path):
    methods = '["dip-unet", "sure-unet", "dip-unrolled", "sure-unrolled", "tv", "wavelet"]'
    cfg = write_cfg(tmp_path, epochs=2, methods=methods)
    assert cli.main(["--quiet", "compare", str(cfg), "--out-dir", str(tmp_path / "cmp")]) == 0
    rows = {r["method"]: r for r in read_rows(tmp_path / "cmp/summary.csv")}
    assert len(rows) == 6
    assert all(math.isfinite(float(r["final_psnr"])) for r in rows.values())
    for arch in ("unet", "unrolled"):
        for loss, tag in (("dip", "dip"), ("gsure", "sure")):
            single = write_cfg(tmp_path, f"{tag}-{arch}.toml", arch=arch, loss=loss, epochs=2)
            out = tmp_path / f"{tag}-{arch}"
            assert cli.main(["--quiet", "recon", str(single), "--out-dir", str(out)]) == 0
            (r,) = read_rows(out / "summary.csv")
            assert r == rows[f"{tag}-{arch}"]


def test_seed_override_and_flag_positions(tmp_path):
    cfg = write_cfg(tmp_path, epochs=1)
    assert cli.main(["--quiet", "--seed-override", "5", "recon", str(cfg), "--out-dir", str(tmp_path / "a")]) == 0
    assert cli.main(["recon", str(cfg), "--quiet", "--seed-override", "5", "--out-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/summary.csv").read_bytes() == (tmp_path / "b/summary.csv").read_bytes()
    assert read_rows(tmp_path / "a/summary.csv")[0]["seed"] == "5"


def test_output_dir_from_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_cfg(tmp_path, epochs=1, extra='\n[output]\ndir = "from_cfg"\n')
    assert cli.main(["--quiet", "recon", str(cfg)]) == 0
    assert (tmp_path / "from_cfg/summary.csv").exists()


def test_sure_check_pass_and_negative_control(tmp_path, capsys):
    base = "[noise]\nsigma = 0.01\n[sure_check]\nsize = 16\nprobes = 400\nmaps = 2\ndraws = 400\n"
    good = tmp_path / "good.toml"
    good.write_text(base)
    assert cli.main(["--quiet", "sure-check", str(good), "--out-dir", str(tmp_path / "g")]) == 0
    assert all(r["passed"] == "1" for r in read_rows(tmp_path / "g/sure_check.csv"))
    bad = tmp_path / "bad.toml"
    bad.write_text(base + "divergence_weight = 0.0\n")
    assert cli.main(["--quiet", "sure-check", str(bad), "--out-dir", str(tmp_path / "b")]) == 1
    err = capsys.readouterr().err
    assert "unbiased-denoising" in err and "unbiased-masked" in err


def test_preflight_rejects_geometry(tmp_path, capsys):
    cfg = write_cfg(tmp_path, extra="")
    text = cfg.read_text().replace("height = 32\nwidth = 32", "height = 24\nwidth = 24")
    cfg.write_text(text)
    assert cli.main(["--quiet", "compare", str(cfg), "--out-dir", str(tmp_path / "x")]) == 2
    assert "power-of-two" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


# -- config parsing ---


def test_example_config_parses():
    cfg = load_config(ROOT / "configs" / "example.toml")
    assert cfg.noise.sigma == 0.01
    assert cfg.train.seeds == (0, 1, 2)
    assert cfg.arch_config("unrolled").unrolls == 10


def test_defaults_and_views():
    cfg = parse_config("[noise]\nsigma = 0.02\n[loss]\nweight_mode = 'literal'\n")
    assert cfg.gsure_config().weight == 2.0
    assert cfg.gsure_config().sigma == 0.02
    assert cfg.mask_spec().acceleration == 4.0
    assert cfg.lr_for("unrolled") == cfg.train.lr


def test_integer_accepted_for_float_field():
    assert parse_config("[noise]\nsigma = 0\n").noise.sigma == 0.0


def test_bool_rejected_for_int():
    with pytest.raises(ConfigError):
        parse_config("[noise]\nsigma = 0.1\n[train]\nepochs = true\n")
