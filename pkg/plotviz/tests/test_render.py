import hashlib
import math

import numpy as np
import pytest

from plotviz import FieldGridError, batch, read_field, render
from plotviz.cli import main


def make_fgrid(path, values, counts=(4, 2), kind="torus", tag="ftdr:kl",
               tau=8.0):
    dim = len(counts)
    lines = ["FGRID 1", " ".join(str(v) for v in (dim, *counts))]
    if kind == "torus":
        lines.append("torus " + " ".join("1.0" for _ in counts))
    else:
        lines.append("box " + " ".join("0.0 1.0" for _ in counts))
    lines.append(f"0.0 {tau!r} 7")
    lines.append(tag)
    for v in values:
        lines.append("nan" if (isinstance(v, float) and math.isnan(v)) else repr(float(v)))
    path.write_text("\n".join(lines) + "\n")
    return path


def test_read_field_header_and_shape(tmp_path):
    p = make_fgrid(tmp_path / "a.fgrid", [1, 2, 3, 4, 5, 6, 7, 8])
    f = read_field(p)
    assert f.counts == (4, 2)
    assert f.values.shape == (2, 4)
    assert f.values[0, 1] == 2.0
    assert f.tag == "ftdr:kl"


def test_render_constant_field_uniform_image(tmp_path):
    p = make_fgrid(tmp_path / "c.fgrid", [3.5] * 8)
    out = tmp_path / "c.png"
    render(p, out)
    assert out.exists() and out.stat().st_size > 1000


def test_render_with_nan_and_overlay(tmp_path):
    vals = [1.0, 2.0, float("nan"), 4.0, 5.0, 6.0, 7.0, 8.0]
    base = make_fgrid(tmp_path / "b.fgrid", vals)
    over = make_fgrid(tmp_path / "o.fgrid", list(range(8)))
    out = tmp_path / "b.png"
    render(base, out, overlay=over)
    assert out.exists()


def test_overlay_grid_mismatch_rejected(tmp_path):
    base = make_fgrid(tmp_path / "b.fgrid", [1.0] * 8)
    over = make_fgrid(tmp_path / "o.fgrid", [1.0] * 4, counts=(2, 2))
    with pytest.raises(FieldGridError):
        render(base, tmp_path / "x.png", overlay=over)


def test_render_3d_slice_panels(tmp_path):
    vals = np.arange(2 * 2 * 3, dtype=float)
    p = make_fgrid(tmp_path / "v.fgrid", vals, counts=(2, 2, 3), kind="box")
    out = tmp_path / "v.png"
    render(p, out)
    assert out.exists()


def test_render_deterministic_hash(tmp_path):
    rng = np.random.default_rng(0)
    p = make_fgrid(tmp_path / "d.fgrid", rng.normal(size=8))
    h = []
    for name in ("one.png", "two.png"):
        out = tmp_path / name
        render(p, out)
        h.append(hashlib.sha256(out.read_bytes()).hexdigest())
    assert h[0] == h[1]


def test_malformed_file_nonzero_exit(tmp_path, capsys):
    bad = tmp_path / "bad.fgrid"
    bad.write_text("hello\n")
    rc = main(["render", str(bad), str(tmp_path / "x.png")])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_batch_empty_directory(tmp_path, capsys):
    rc = main(["batch", str(tmp_path)])
    assert rc == 0
    assert "rendered 0" in capsys.readouterr().out


def test_batch_mixed_files(tmp_path, capsys):
    make_fgrid(tmp_path / "good1.fgrid", [1.0] * 8)
    make_fgrid(tmp_path / "good2.fgrid", list(range(8)))
    (tmp_path / "broken.fgrid").write_text("FGRID 1\nnope\n")
    rc = main(["batch", str(tmp_path)])
    captured = capsys.readouterr()
    assert rc == 1
    assert (tmp_path / "good1.png").exists()
    assert (tmp_path / "good2.png").exists()
    assert "rendered 2" in captured.out
    assert "broken.fgrid" in captured.err


def test_batch_shared_scale_and_determinism(tmp_path):
    make_fgrid(tmp_path / "a.fgrid", [0.0] * 8)
    make_fgrid(tmp_path / "b.fgrid", [10.0] * 8)
    rendered, failures = batch(tmp_path, shared_scale=True)
    assert not failures and len(rendered) == 2
    first = [(p, hashlib.sha256(p.read_bytes()).hexdigest()) for p in rendered]
    rendered2, _ = batch(tmp_path, shared_scale=True)
    second = [(p, hashlib.sha256(p.read_bytes()).hexdigest()) for p in rendered2]
    assert first == second


def test_batch_does_not_mutate_inputs(tmp_path):
    p = make_fgrid(tmp_path / "a.fgrid", [1.0] * 8)
    before = p.read_bytes()
    batch(tmp_path)
    assert p.read_bytes() == before
