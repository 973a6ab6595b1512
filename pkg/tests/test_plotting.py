import numpy as np
import pytest

from firesale_mfg import io
from firesale_mfg.plotting import boundary_polyline, render_run


def test_boundary_polyline_keeps_kink():
    q = np.linspace(-3.5, 11.5, 11)
    bq, bx = boundary_polyline(q, 3.0, 5.0)
    assert 0.0 in bq
    assert bx[bq == 0.0][0] == 5.0
    np.testing.assert_allclose(bx, 3 * np.abs(bq) + 5)
    bq, bx = boundary_polyline(q, 3.0, 5.0, x_max=20.0)
    assert bx.max() <= 20.0


def test_render_needs_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        render_run(tmp_path)


def test_render_refuses_failed_run(tmp_path):
    io.write_json(tmp_path / io.MANIFEST_NAME, {"status": "blow_up", "layout": {"report": "report.json"}})
    with pytest.raises(FileNotFoundError, match="no solution"):
        render_run(tmp_path)
