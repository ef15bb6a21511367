"""Secondary acceptance: render real ftdr-lab output, driving the primary
component only through its command line and file format."""

import hashlib
import shutil
import subprocess

import pytest

from plotviz.cli import main

GYRE_CONFIG = """
[system]
name = double_gyre
A = 1.0
eps = 0.25
omega = 2.0

[time]
t0 = 0.0
tau = 8.0
dt = 0.01
scheme = rk4

[grid]
torus = 2.0 1.0
nx = 64
ny = 32

[sampling]
samples_per_box = 4
master_seed = 7

[diagnostic]
kind = ftdr
divergence = kl
"""


@pytest.fixture(scope="module")
def gyre_field(tmp_path_factory):
    exe = shutil.which("ftdr-lab")
    if exe is None:
        pytest.skip("ftdr-lab CLI not installed")
    tmp = tmp_path_factory.mktemp("gyre")
    cfg = tmp / "run.ini"
    cfg.write_text(GYRE_CONFIG)
    out = tmp / "gyre_ftdr.fgrid"
    proc = subprocess.run([exe, "field", "--config", str(cfg),
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    ftle = tmp / "gyre_ftle.fgrid"
    cfg2 = tmp / "run_ftle.ini"
    cfg2.write_text(GYRE_CONFIG.replace("kind = ftdr", "kind = ftle_max"))
    proc = subprocess.run([exe, "field", "--config", str(cfg2),
                           "--out", str(ftle)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return tmp, out, ftle


def test_render_scaled_double_gyre(gyre_field, tmp_path):
    _, fgrid, _ = gyre_field
    out = tmp_path / "gyre.png"
    assert main(["render", str(fgrid), str(out)]) == 0
    assert out.stat().st_size > 10_000  # a real heatmap, not a stub


def test_overlay_ftle_contours_on_ftdr(gyre_field, tmp_path):
    _, fgrid, ftle = gyre_field
    out = tmp_path / "composite.png"
    assert main(["render", str(fgrid), str(out), "--overlay", str(ftle)]) == 0
    assert out.exists()


def test_batch_processes_directory(gyre_field):
    tmp, fgrid, ftle = gyre_field
    assert main(["batch", str(tmp)]) == 0
    assert fgrid.with_suffix(".png").exists()
    assert ftle.with_suffix(".png").exists()


def test_round_trip_determinism_by_hash(gyre_field, tmp_path):
    _, fgrid, _ = gyre_field
    digests = []
    for name in ("r1.png", "r2.png"):
        out = tmp_path / name
        assert main(["render", str(fgrid), str(out)]) == 0
        digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
    assert digests[0] == digests[1]
