"""Backend selection via MVTRACK3D_BACKEND and numpy/numba equivalence."""

import os
import subprocess
import sys

import pytest

import mvtrack3d
from mvtrack3d import SceneConfig, generate


def run_python(code, backend):
    env = dict(os.environ, MVTRACK3D_BACKEND=backend)
    return subprocess.run([sys.executable, "-c", code],
                          capture_output=True, text=True, env=env)


def test_backend_name_is_exposed():
    assert mvtrack3d.BACKEND in ("numba", "numpy")
    assert mvtrack3d.NUMBA_ENABLED == (mvtrack3d.BACKEND == "numba")


def test_unknown_backend_is_rejected_at_import():
    proc = run_python("import mvtrack3d", "bogus")
    assert proc.returncode != 0
    assert "MVTRACK3D_BACKEND" in proc.stderr
    assert "bogus" in proc.stderr


@pytest.mark.parametrize("backend", ["numpy", "auto"])
def test_explicit_backend_import_succeeds(backend):
    proc = run_python(
        "import mvtrack3d; print(mvtrack3d.BACKEND)", backend)
    assert proc.returncode == 0, proc.stderr
    name = proc.stdout.strip()
    assert name == "numpy" if backend == "numpy" else name in ("numba", "numpy")


def test_backends_produce_identical_tracks(tmp_path):
    scene = generate(SceneConfig(
        seed=21, n_cameras=3, n_actors=2, n_frames=40, noise_px=1.0,
        outlier_rate=0.08, outlier_px=90.0, occlusion_rate=0.1))
    scene.export(str(tmp_path))
    outputs = {}
    for backend in ("numpy", "numba"):
        out = tmp_path / f"tracks_{backend}.jsonl"
        proc = subprocess.run(
            [sys.executable, "-m", "mvtrack3d", "track",
             "--calib", str(tmp_path / "calibration.jsonl"),
             "--detections", str(tmp_path / "detections.jsonl"),
             "--out", str(out)],
            capture_output=True, text=True,
            env=dict(os.environ, MVTRACK3D_BACKEND=backend))
        assert proc.returncode == 0, proc.stderr
        outputs[backend] = out.read_bytes()
    assert outputs["numpy"] == outputs["numba"]
    assert len(outputs["numpy"]) > 0
