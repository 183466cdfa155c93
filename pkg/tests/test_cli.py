"""End-to-end CLI exercise on a tiny synthetic dataset: match, warp, train,
sr, and eval subcommands via cli.main()."""

import numpy as np
import pytest

from frfsr import cli
from frfsr.config import SHUFFLE_LEVELS
from frfsr.correspondence import FlowField
from frfsr.data import synthetic_dataset
from frfsr.tensor import Tensor

TINY_CONFIG = """\
# tiny run for the CLI smoke test
hr_size=32
trunk_channels=8
sife_channels=8
offset_mid_channels=8
n_drb_units=1
batch_size=1
n_pairs=2
steps_stage1=2
steps_stage2=2
augment=false
shuffle_level=none
seed=0
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Small dataset on disk plus trained checkpoints, shared by all tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    data.mkdir()
    for pair in synthetic_dataset(2, 32, seed=0):
        cli.write_png(pair.hr, data / f"{pair.name}_hr.png")
        cli.write_png(pair.ref, data / f"{pair.name}_ref.png")
        cli.write_png(pair.lr, data / f"{pair.name}_lr.png")
    cfg_path = root / "tiny.cfg"
    cfg_path.write_text(TINY_CONFIG)
    out_dir = root / "run"
    rc = cli.main(["train", "--config", str(cfg_path), "--out-dir", str(out_dir)])
    assert rc == 0
    return root


def test_png_roundtrip(tmp_path, rng):
    img = Tensor(rng.uniform(size=(1, 3, 16, 16)).astype(np.float32))
    path = tmp_path / "x.png"
    cli.write_png(img, path)
    back = cli.read_png(path)
    assert back.shape == (1, 3, 16, 16)
    # 8-bit quantization only
    assert np.abs(back.data - img.data).max() <= 0.5 / 255 + 1e-7


def test_match_writes_loadable_flow(workdir):
    name = sorted(p.name[:-7] for p in (workdir / "data").glob("*_hr.png"))[0]
    flow_path = workdir / "flow.flo"
    rc = cli.main(["match", "--lr", str(workdir / f"data/{name}_lr.png"),
                   "--ref", str(workdir / f"data/{name}_ref.png"),
                   "--out", str(flow_path)])
    assert rc == 0
    flow = FlowField.load(flow_path)
    assert (flow.height, flow.width) == (8, 8)


def test_warp_produces_image(workdir):
    name = sorted(p.name[:-7] for p in (workdir / "data").glob("*_hr.png"))[0]
    flow_path = workdir / "flow.flo"
    if not flow_path.exists():
        cli.main(["match", "--lr", str(workdir / f"data/{name}_lr.png"),
                  "--ref", str(workdir / f"data/{name}_ref.png"),
                  "--out", str(flow_path)])
    out = workdir / "warped.png"
    rc = cli.main(["warp", "--ref", str(workdir / f"data/{name}_ref.png"),
                   "--flow", str(flow_path), "--scale", "4", "--out", str(out)])
    assert rc == 0
    img = cli.read_png(out)
    assert img.shape == (1, 3, 32, 32)


def test_train_outputs(workdir, capsys):
    run = workdir / "run"
    assert (run / "ckpt_rec.frf").exists()
    assert (run / "ckpt_all.frf").exists()
    log = (run / "loss_log.txt").read_text().strip().splitlines()
    assert len(log) == 4  # 2 stage-1 + 2 stage-2 entries
    assert log[0].startswith("step=0")


@pytest.mark.parametrize("stage,ckpt", [("rec", "ckpt_rec.frf"),
                                        ("all", "ckpt_all.frf")])
def test_sr_both_stages(workdir, stage, ckpt):
    name = sorted(p.name[:-7] for p in (workdir / "data").glob("*_hr.png"))[0]
    out = workdir / f"sr_{stage}.png"
    rc = cli.main(["sr", "--lr", str(workdir / f"data/{name}_lr.png"),
                   "--ref", str(workdir / f"data/{name}_ref.png"),
                   "--ckpt", str(workdir / f"run/{ckpt}"),
                   "--config", str(workdir / "tiny.cfg"),
                   "--stage", stage, "--out", str(out)])
    assert rc == 0
    assert cli.read_png(out).shape == (1, 3, 32, 32)


def test_sr_stage_all_on_rec_checkpoint_fails(workdir):
    name = sorted(p.name[:-7] for p in (workdir / "data").glob("*_hr.png"))[0]
    with pytest.raises(SystemExit, match="no stage-2"):
        cli.main(["sr", "--lr", str(workdir / f"data/{name}_lr.png"),
                  "--ref", str(workdir / f"data/{name}_ref.png"),
                  "--ckpt", str(workdir / "run/ckpt_rec.frf"),
                  "--config", str(workdir / "tiny.cfg"),
                  "--stage", "all", "--out", str(workdir / "nope.png")])


def test_sr_fingerprint_mismatch_fails(workdir):
    name = sorted(p.name[:-7] for p in (workdir / "data").glob("*_hr.png"))[0]
    # default config (no --config) has different widths than the checkpoint
    with pytest.raises(SystemExit, match="fingerprint"):
        cli.main(["sr", "--lr", str(workdir / f"data/{name}_lr.png"),
                  "--ref", str(workdir / f"data/{name}_ref.png"),
                  "--ckpt", str(workdir / "run/ckpt_rec.frf"),
                  "--out", str(workdir / "nope.png")])


def test_eval_prints_per_level_table(workdir, capsys):
    rc = cli.main(["eval", "--data", str(workdir / "data"),
                   "--ckpt", str(workdir / "run/ckpt_rec.frf"),
                   "--config", str(workdir / "tiny.cfg"),
                   "--shuffle-level", "medium"])
    assert rc == 0
    out = capsys.readouterr().out.strip().splitlines()
    # a summary row exists for every shuffle level
    tail = out[out.index("level\tpsnr\tssim") + 1:]
    assert [line.split("\t")[0] for line in tail] == list(SHUFFLE_LEVELS)
    for line in tail:
        _, p, s = line.split("\t")
        assert np.isfinite(float(p)) and 0.0 <= float(s) <= 1.0
