import numpy as np
import pytest
from hypothesis import settings

from bopf.core import ClusterConfig, JobSpec, QueueKind, QueueSpec, StageSpec

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def vec(*xs):
    return np.array(xs, dtype=np.float64)


def one_task_job(job_id="j0", demand=(1.0, 1.0), duration=10.0, tasks=1):
    return JobSpec(job_id, (StageSpec(tasks, vec(*demand), duration),))


def periodic_lq(qid, demand, period, window, n=3, start=0.0, **kw):
    d = np.tile(np.asarray(demand, dtype=np.float64), (n, 1))
    return QueueSpec(
        qid,
        QueueKind.LQ,
        arrivals=start + period * np.arange(n, dtype=np.float64),
        windows=np.full(n, float(window)),
        demands=d,
        period=float(period),
        **kw,
    )


@pytest.fixture
def c10():
    return ClusterConfig(vec(10.0, 10.0), ("cpu", "mem"), n_min=2)
