import json
import os
import subprocess
import sys

import numpy as np
import pytest

from polyagg import _kernels

SNIPPET = r"""
import json
import numpy as np
from polyagg import _kernels

poly = np.array([[0.1, 0.0], [2.0, -0.3], [2.4, 1.7], [1.0, 2.2], [-0.4, 1.1]])
scores = _kernels.quality_scores(poly, 1e-9, 1e-14)
flow, mask = _kernels.maxflow(
    np.array([5, 2, 9], dtype=np.int64),
    np.array([3, 4, 1], dtype=np.int64),
    np.array([0, 1], dtype=np.int64),
    np.array([1, 2], dtype=np.int64),
    np.array([4, 2], dtype=np.int64),
)
print(json.dumps({
    "numba": _kernels.NUMBA_ENABLED,
    "scores": list(scores),
    "flow": int(flow),
    "mask": [bool(b) for b in mask],
}))
"""


def _run_lane(disable_numba):
    env = dict(os.environ, POLYAGG_NO_NUMBA="1" if disable_numba else "0")
    proc = subprocess.run(
        [sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


def test_fallback_lane_matches_numba_lane():
    fast = _run_lane(disable_numba=False)
    slow = _run_lane(disable_numba=True)
    assert slow["numba"] is False
    assert fast["scores"] == slow["scores"]
    assert fast["flow"] == slow["flow"]
    assert fast["mask"] == slow["mask"]


def test_pure_functions_alias_when_disabled():
    # within this process the compiled alias and the _py source must agree
    poly = np.array([[0, 0], [3, 0], [3, 2], [0, 2]], dtype=float)
    assert _kernels.signed_area(poly) == _kernels.signed_area_py(poly)
    assert _kernels.quality_scores(poly, 1e-9, 1e-14) == pytest.approx(
        _kernels.quality_scores_py(poly, 1e-9, 1e-14)
    )


def test_maxflow_int64_saturation_safe():
    big = np.int64(1) << 40
    flow, mask = _kernels.maxflow(
        np.array([big], dtype=np.int64),
        np.array([big + 5], dtype=np.int64),
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64),
    )
    assert flow == big
    assert mask.tolist() == [False]
