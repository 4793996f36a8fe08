"""Shared heavy runs, computed once per session and timed."""
import time

import numpy as np
import pytest

from critdecoh.decoherence import run_quench
from critdecoh.quench import ModeGrid, QuenchSchedule

TAU = 250.0
DELTA = 0.01

# fields where sin^2(4 t delta) is close to one in three separate lobes (N=2000 run)
KM_FIELDS = (0.53, 0.21, -0.10)
SNAPSHOT_FIELDS = (2.0, 0.0, -1.85, -2.0) + KM_FIELDS


def _timed_run(*args, **kwargs):
    start = time.perf_counter()
    trace, snaps = run_quench(*args, **kwargs)
    trace.metadata["elapsed_s"] = time.perf_counter() - start
    return trace, snaps


@pytest.fixture(scope="session")
def schedule():
    return QuenchSchedule(TAU)


@pytest.fixture(scope="session")
def revival(schedule):
    """N=1000, delta=0.01 sampled every dg=2.5e-3, plus the N=1000 snapshot at g=2."""
    trace, snaps = _timed_run(schedule, DELTA, ModeGrid(1000), snapshot_g=(2.0,))
    return trace, snaps[0]


@pytest.fixture(scope="session")
def revival_run(revival):
    return revival[0]


@pytest.fixture(scope="session")
def zero_coupling_run(schedule):
    return _timed_run(schedule, 0.0, ModeGrid(1000))[0]


@pytest.fixture(scope="session")
def weak_run(schedule):
    """N=1000, delta=4e-4: below the revival threshold."""
    return _timed_run(schedule, 4e-4, ModeGrid(1000))[0]


@pytest.fixture(scope="session")
def snapshots(schedule):
    """N=2000 snapshots keyed by field."""
    _, snaps = run_quench(schedule, DELTA, ModeGrid(2000),
                          sample_times=np.array([schedule.t_start]),
                          snapshot_g=SNAPSHOT_FIELDS)
    return dict(zip(SNAPSHOT_FIELDS, snaps))
