import csv
import io
import json
import struct
from pathlib import Path

import numpy as np
import pytest

from mvns import io as mio
from mvns.config import ConfigError, RunConfig
from mvns.spectral import random_velocity, single_mode, space

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_snapshot_layout(tmp_path):
    sp = space(8)
    u = single_mode(sp, (1, 1), (1.0, -1.0), "cos")
    p = tmp_path / "u.snap"
    mio.write_snapshot(p, u, 0.5, 1.25, step=3)
    raw = p.read_bytes()
    head, body = raw.split(b"\n", 1)
    header = json.loads(head)
    assert header["N"] == 8 and header["nu"] == 0.5 and header["time"] == 1.25
    assert header["normalization"] == "sqrt2_over_N2" and header["step"] == 3
    assert len(body) == 8 * 8 * 4 * 8
    # first block entry is mode (-4, -4); mode (1, 1) sits at row 5, column 5
    vals = struct.unpack("<" + "d" * (8 * 8 * 4), body)
    at = lambda i, j: vals[4 * (8 * i + j):4 * (8 * i + j) + 4]
    c = u.coeffs
    assert at(5, 5) == (c[0, 1, 1].real, c[0, 1, 1].imag, c[1, 1, 1].real, c[1, 1, 1].imag)
    assert at(0, 0) == (0.0, 0.0, 0.0, 0.0)
    hdr, v = mio.load_snapshot(p)
    assert np.abs(v.dofs - u.dofs).max() < 1e-15


def test_concatenated_snapshots(rng):
    sp = space(16)
    us = [random_velocity(sp, rng) for _ in range(3)]
    blob = b"".join(mio.snapshot_bytes(u, 1.0, float(i)) for i, u in enumerate(us))
    back = mio.read_snapshots(blob)
    assert [h["time"] for h, _ in back] == [0.0, 1.0, 2.0]
    for u, (_, v) in zip(us, back):
        assert np.abs(u.dofs - v.dofs).max() < 1e-15


def test_snapshot_rejects_other_normalization():
    sp = space(8)
    blob = mio.snapshot_bytes(sp.zeros(), 1.0, 0.0).replace(b"sqrt2_over_N2", b"unitary_fft__")
    with pytest.raises(ValueError, match="normalization"):
        mio.read_snapshots(blob)


def test_csv_format():
    text = mio.csv_text(("k", "v", "s"), [(0.1, 1 / 3, "a,b")], "abc", "none")
    lines = text.split("\r\n")
    assert lines[0] == "# config_sha256=abc constants_sha256=none"
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    assert rows[0] == ["k", "v", "s"]
    assert rows[1] == ["0.10000000000000001", "0.33333333333333331", "a,b"]
    assert float(rows[1][1]) == 1 / 3


def test_atomic_write(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    mio.atomic_write(p, "one")
    mio.atomic_write(p, b"two")
    assert p.read_text() == "two"
    assert [x.name for x in p.parent.iterdir()] == ["f.txt"]


def test_shipped_configs_validate():
    lam = RunConfig.load(CONFIGS / "laminar.json")
    assert lam.N == 16 and lam.nu == 1.0 and lam.ladder == (0.2, 0.1, 0.05, 0.025)
    assert lam.k_ref == 1e-3
    f = lam.forcing()
    assert f.space.h_norm(f.dofs) == pytest.approx(0.1)
    kol = RunConfig.load(CONFIGS / "kolmogorov.json")
    assert kol.N == 32
    one = RunConfig.load(CONFIGS / "single_mode.json")
    assert one.initial().space.h_norm(one.initial().dofs) == pytest.approx(1.0)


def base():
    return {"schema_version": 1,
            "physical": {"nu": 1.0, "forcing": [{"mode": [0, 1], "amplitude": [0.1, 0.0]}]},
            "discretization": {"N": 16, "ladder": [0.2, 0.1, 0.05]}}


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d["discretization"].update(ladder=[0.1, 0.2, 0.05]), "strictly decreasing"),
    (lambda d: d["discretization"].update(N=24), "N"),
    (lambda d: d["physical"].update(nu=-1), "nu"),
    (lambda d: d["physical"]["forcing"][0].update(amplitude=[0.0, 1.0]), "perpendicular"),
    (lambda d: d["physical"]["forcing"][0].update(mode=[0, 9]), "truncated"),
    (lambda d: d.update(extra=1), "extra"),
])
def test_config_rejections(mutate, msg):
    d = base()
    mutate(d)
    with pytest.raises(ConfigError, match=msg):
        RunConfig.from_dict(d)


def test_config_hash_and_overrides():
    a = RunConfig.from_dict(base())
    b = RunConfig.from_dict(json.loads(json.dumps(base(), indent=4)))
    assert a.sha256() == b.sha256()
    c = a.with_overrides(seed=5, ladder=[0.1, 0.05, 0.025])
    assert c.seed == 5 and c.ladder == (0.1, 0.05, 0.025)
    assert c.sha256() != a.sha256()
    assert c.calibration_plan().seed == 5
    assert c.step_config().starts[0] == "w"
