import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bridge_servers.mixd import MdnHandler, load_xy_csv, train_mdn

DATA = Path(__file__).parent / "data"
ECHO_CMD = [sys.executable, "-m", "bridge_servers.echo"]


def spawn(cmd):
    return subprocess.Popen(
        cmd,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        bufsize=1,
    )


def roundtrip(proc, line):
    proc.stdin.write(line + "\n")
    proc.stdin.flush()
    return proc.stdout.readline().rstrip("\n")


def test_echo_transcript_replays_byte_identically():
    lines = (DATA / "echo_transcript.txt").read_text().splitlines()
    pairs = [
        (lines[i][2:], lines[i + 1][2:]) for i in range(0, len(lines), 2)
    ]
    proc = spawn(ECHO_CMD)
    try:
        for request, expected in pairs:
            assert roundtrip(proc, request) == expected
        proc.stdin.close()
        assert proc.wait(timeout=10) == 0
    finally:
        proc.kill()


def test_echo_handshake_reports_dimensions():
    proc = spawn(ECHO_CMD + ["--p", "3"])
    try:
        reply = json.loads(roundtrip(proc, '{"op":"hello","version":1}'))
        assert reply == {"ok": True, "has_density": False, "p": 3, "d": 1}
    finally:
        proc.kill()


def test_echo_same_seed_identical_replies():
    proc = spawn(ECHO_CMD)
    try:
        roundtrip(proc, '{"op":"hello","version":1}')
        req = '{"op":"sample","x":[1.25],"k":4,"seed":3}'
        assert roundtrip(proc, req) == roundtrip(proc, req)
    finally:
        proc.kill()


def test_echo_survives_errors_and_keeps_serving():
    proc = spawn(ECHO_CMD)
    try:
        bad = json.loads(roundtrip(proc, '{"op":"sample"}'))
        assert bad["ok"] is False
        good = json.loads(roundtrip(proc, '{"op":"sample","x":[1.0],"k":1,"seed":0}'))
        assert good == {"samples": [[1.0]]}
    finally:
        proc.kill()


def test_echo_scores_closed_form_through_parent():
    # the parent-side minimum-distance score against an echo model is
    # exactly |y - x0|
    from pcp.backbones import BridgeBackbone
    from pcp.calibrate import score

    with BridgeBackbone(ECHO_CMD) as backbone:
        assert backbone.has_density is False
        for x0, y in ((0.5, 2.0), (-1.5, -1.0), (3.0, 3.0)):
            batch = backbone.sample(np.array([x0]), 5, seed=0)
            assert score(np.array([y]), batch) == pytest.approx(abs(y - x0))


def mdn_training_data(n=800, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 1))
    modes = np.where(rng.random(n) < 0.5, -3.0, 3.0)
    y = (x[:, 0] + modes + 0.2 * rng.standard_normal(n))[:, None]
    return x, y


def test_mdn_sampling_deterministic_and_dense():
    x, y = mdn_training_data()
    net, scaler = train_mdn(x, y, seed=0, epochs=30)
    handler = MdnHandler(net, scaler)
    s1, d1 = handler.sample([0.0], 6, seed=11)
    s2, d2 = handler.sample([0.0], 6, seed=11)
    assert s1 == s2 and d1 == d2
    assert len(s1) == 6 and len(d1) == 6
    assert all(v > 0 for v in d1)
    s3, _ = handler.sample([0.0], 6, seed=12)
    assert s3 != s1


def test_mdn_learns_two_modes():
    x, y = mdn_training_data(n=1500, seed=1)
    net, scaler = train_mdn(x, y, seed=0, epochs=80)
    handler = MdnHandler(net, scaler)
    samples, _ = handler.sample([0.0], 400, seed=5)
    vals = np.asarray(samples)[:, 0]
    lo = np.mean(vals < 0)
    assert 0.2 < lo < 0.8
    assert abs(np.mean(vals[vals < 0]) + 3.0) < 1.0
    assert abs(np.mean(vals[vals >= 0]) - 3.0) < 1.0


def test_mdn_densities_integrate_reasonably():
    # density of the standardized mixture mapped to original units should
    # average close to the sampling density itself (importance identity:
    # E_q[1] = integral q = 1 checked by a coarse Riemann sum on a grid)
    x, y = mdn_training_data()
    net, scaler = train_mdn(x, y, seed=0, epochs=30)
    handler = MdnHandler(net, scaler)
    grid = np.linspace(-12, 12, 2001)
    pi, mu, sigma = handler._conditional([0.0])
    y_loc, y_scale = handler.y_loc[0], handler.y_scale[0]
    z = (grid - y_loc) / y_scale
    dens = np.zeros_like(grid)
    for w, m, s in zip(pi, mu[:, 0], sigma[:, 0]):
        dens += w * np.exp(-0.5 * ((z - m) / s) ** 2) / (s * np.sqrt(2 * np.pi))
    dens /= y_scale
    total = np.trapezoid(dens, grid)
    assert total == pytest.approx(1.0, abs=0.02)


def test_load_xy_csv_roundtrip(tmp_path):
    from pcp.core import save_csv

    x = np.random.default_rng(0).standard_normal((10, 2))
    y = np.random.default_rng(1).standard_normal((10, 1))
    path = tmp_path / "d.csv"
    save_csv(path, x, y)
    x2, y2 = load_xy_csv(str(path))
    assert np.array_equal(x, x2) and np.array_equal(y, y2)


def test_load_xy_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_xy_csv(str(path))
