"""mtesim: a deterministic simulator of an MTE-style tagged-memory machine.

The package models 4-bit memory tags over 16-byte granules, a hardened
size-class allocator with random tagging, retag-at-free, and odd-even
tagging, plus byte-granular heap-overflow detection for short granules via
sampled tripwires and a delegation/escalation/revocation fault-recovery
protocol.  A trace-program machine drives it all; a statistical harness
reproduces the stack's probabilistic detection guarantees.
"""

from .allocator import (
    AllocationRecord,
    Allocator,
    AllocatorConfig,
    ShortGranuleMetadata,
    TagMismatch,
    TripwireState,
    generate_tag,
    size_class,
)
from .cpu import (
    AccessDescriptor,
    Fault,
    Instruction,
    Machine,
    Mode,
    Opcode,
    TrapUnavailable,
)
from .detector import (
    BugKind,
    BugReport,
    Detector,
    DetectorConfig,
    check_access,
)
from .experiments import (
    ExperimentResult,
    exp_collision_rate,
    exp_detection_rate,
    exp_recovery_transparency,
    exp_vulnerable_fraction,
    uniform_sizes,
    wilson_95_ci,
)
from .memory import TaggedMemory, TaggedPointer, tag_storage_overhead
from .runner import ALWAYS_ARM, RunReport, SimConfig, Simulation, run_program, substream
from .sampler import TripwireSampler
from .trace import (
    Program,
    TraceParseError,
    WorkloadSpec,
    check_program_bounds,
    generate_workload,
    parse_program,
    render_program,
)

__version__ = "0.1.0"

__all__ = [
    "ALWAYS_ARM",
    "AccessDescriptor",
    "AllocationRecord",
    "Allocator",
    "AllocatorConfig",
    "BugKind",
    "BugReport",
    "Detector",
    "DetectorConfig",
    "ExperimentResult",
    "Fault",
    "Instruction",
    "Machine",
    "Mode",
    "Opcode",
    "Program",
    "RunReport",
    "ShortGranuleMetadata",
    "SimConfig",
    "Simulation",
    "TagMismatch",
    "TaggedMemory",
    "TaggedPointer",
    "TraceParseError",
    "TrapUnavailable",
    "TripwireSampler",
    "TripwireState",
    "WorkloadSpec",
    "check_access",
    "check_program_bounds",
    "exp_collision_rate",
    "exp_detection_rate",
    "exp_recovery_transparency",
    "exp_vulnerable_fraction",
    "generate_tag",
    "generate_workload",
    "parse_program",
    "render_program",
    "run_program",
    "size_class",
    "substream",
    "tag_storage_overhead",
    "uniform_sizes",
    "wilson_95_ci",
]
