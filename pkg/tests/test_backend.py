"""The pure-numpy fallback must agree with the numba kernels."""
import json
import os
import subprocess
import sys

import pytest

PROBE = r"""
import json
import numpy as np
from fsd.geomatch import BACKEND, CandidateIndex, ScanMatcher
from fsd.geomatch.model import CandidateLocation, Question
from fsd.geomatch.pipeline import GeoConfig

rng = np.random.default_rng(5)
idx, scan, cfg = CandidateIndex(), ScanMatcher(), GeoConfig()
for i in range(3000):
    lon = float(rng.uniform(179, 181))
    c = CandidateLocation(f"c{i}", float(rng.uniform(-1, 1)), lon - 360 if lon > 180 else lon, 0)
    idx.upsert(c)
    scan.update(c)
out = []
for j in range(200):
    q = Question(f"q{j}", float(rng.uniform(-1, 1)), float(rng.uniform(-180, 180) if j % 4 == 0 else 179.9),
                 float(rng.uniform(500, 50000)), 0, 10**6)
    a, b = idx.match(q, cfg.edge_band(q)).ids(), scan.match(q, cfg.edge_band(q)).ids()
    assert a == b, (j, a, b)
    out.append(a)
print(json.dumps({"backend": BACKEND, "matches": out}))
"""


def run_probe(disable):
    env = dict(os.environ, FSD_DISABLE_NUMBA=disable)
    proc = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout)


@pytest.fixture(scope="module")
def both():
    return run_probe("0"), run_probe("1")


def test_flag_selects_backend(both):
    fast, slow = both
    assert fast["backend"] == "numba" and slow["backend"] == "python"


def test_backends_agree(both):
    fast, slow = both
    assert fast["matches"] == slow["matches"]
    assert sum(len(m[0]) + len(m[1]) for m in fast["matches"]) > 0
