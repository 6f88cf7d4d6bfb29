import numpy as np
import pytest

from msgm.metrics import score_field
from msgm.mixture import toy_mixture
from msgm.plots import loss_curve_svg, quiver_svg, scatter_svg
from msgm.rng import Rng
from msgm.sde import SdeSpec
from msgm.training import LossCurve


def test_scatter_svg_emits_points(tmp_path):
    pts = Rng(0).normal((50, 2))
    path = tmp_path / "s.svg"
    scatter_svg(pts, path, title="demo")
    text = path.read_text()
    assert text.startswith("<svg")
    assert text.rstrip().endswith("</svg>")
    assert text.count("<circle") == 50
    assert "demo" in text


def test_scatter_svg_clips_out_of_bounds(tmp_path):
    pts = np.array([[0.0, 0.0], [99.0, 99.0]])
    path = tmp_path / "s.svg"
    scatter_svg(pts, path, bounds=(-1, 1, -1, 1))
    assert path.read_text().count("<circle") == 1


def test_quiver_svg(tmp_path):
    fld = score_field(toy_mixture(), 0.08, resolution=5, sde=SdeSpec(kind="ve"))
    path = tmp_path / "q.svg"
    quiver_svg(fld, path)
    text = path.read_text()
    # 5x5 lattice minus the exact center, where the symmetric field is zero
    assert text.count("<line") == 24


def test_quiver_overlay_draws_both(tmp_path):
    fld = score_field(toy_mixture(), 0.08, resolution=4, sde=SdeSpec(kind="ve"))
    path = tmp_path / "q2.svg"
    quiver_svg(fld, path, second=fld)
    assert path.read_text().count("<line") == 32


def test_loss_curve_svg(tmp_path):
    curve = LossCurve()
    for i in range(200):
        curve.append(i, 2.0 * np.exp(-i / 50.0) + 0.5, None, 0.0)
    path = tmp_path / "l.svg"
    loss_curve_svg(curve, path, title="loss")
    assert "<polyline" in path.read_text()


def test_loss_curve_requires_data(tmp_path):
    with pytest.raises(ValueError):
        loss_curve_svg(LossCurve(), tmp_path / "x.svg")


def test_svg_outputs_are_deterministic(tmp_path):
    pts = Rng(1).normal((30, 2))
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    scatter_svg(pts, a)
    scatter_svg(pts, b)
    assert a.read_bytes() == b.read_bytes()
