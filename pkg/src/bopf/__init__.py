"""BoPF: bounded-priority fair multi-resource scheduling, with DRF, SP, M-BVT and N-BoPF baselines."""
from .admission import AdmissionState, QueueClass, admit, admit_lq, admit_tq
from .allocation import POLICIES, ShareLevels, bopf_allocate, drf_fill, strict_priority
from .core import (
    ClusterConfig,
    DemandDistribution,
    InvalidConfigError,
    JobSpec,
    MalformedSpecError,
    QueueKind,
    QueueSpec,
    StageSpec,
    StructuralError,
)
from .engine import EventLog, SimConfig, fluid_oracle, run

__all__ = [
    "AdmissionState", "QueueClass", "admit", "admit_lq", "admit_tq",
    "POLICIES", "ShareLevels", "bopf_allocate", "drf_fill", "strict_priority",
    "ClusterConfig", "DemandDistribution", "InvalidConfigError", "JobSpec", "MalformedSpecError",
    "QueueKind", "QueueSpec", "StageSpec", "StructuralError",
    "EventLog", "SimConfig", "fluid_oracle", "run",
]
__version__ = "0.1.0"
