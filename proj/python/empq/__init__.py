from ._core import (
    Error,
    InvariantViolation,
    Queue,
    generate_workload,
    layer_plan,
    phi,
    run_workload,
)

__all__ = [
    "Error",
    "InvariantViolation",
    "Queue",
    "generate_workload",
    "layer_plan",
    "phi",
    "run_workload",
]
