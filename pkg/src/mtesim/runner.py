"""Wires memory, allocator, sampler, machine, and detector into a run.

All randomness in a run flows from one seed through named substreams
("allocator", "sampler"), so allocation tags are identical across check
modes and arming decisions never perturb tag draws.  Tripwires require
precise faults, so arming happens only in sync mode with tripwires on.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Optional

from .allocator import Allocator, AllocatorConfig
from .cpu import Machine, Mode, RunEnd
from .detector import BugReport, Detector, DetectorConfig
from .memory import TaggedMemory
from .sampler import TripwireSampler
from .trace import Program

# alloc_threshold value meaning "arm every short granule, forever"
ALWAYS_ARM = 1 << 62


def substream(seed, name: str) -> random.Random:
    """Deterministic named RNG substream of a run seed."""
    return random.Random(f"{seed}/{name}")


@dataclass(frozen=True)
class SimConfig:
    mode: str = "sync"                 # off | async | sync
    seed: "int | str" = 0              # substream derivations may pass strings
    sampling_rate: int = 1000
    alloc_threshold: int = 1000
    access_threshold: int = 64
    tripwires: bool = True
    overread_skip: bool = False
    odd_even: bool = True
    large_threshold: int = 65536
    include_zero_tag: bool = False

    def __post_init__(self):
        if self.mode not in ("off", "async", "sync"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def echo(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "sampling_rate": self.sampling_rate,
            "alloc_threshold": self.alloc_threshold,
            "access_threshold": self.access_threshold,
            "tripwires": self.tripwires,
            "overread_skip": self.overread_skip,
            "odd_even": self.odd_even,
            "large_threshold": self.large_threshold,
            "include_zero_tag": self.include_zero_tag,
        }


@dataclass
class RunReport:
    outcome: str                       # "CleanHalt" | "BugReported"
    bug: Optional[BugReport]
    counters: dict
    config_echo: dict

    @property
    def exit_code(self) -> int:
        return 1 if self.outcome == "BugReported" else 0

    def to_json_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "bug": self.bug.to_json_dict() if self.bug is not None else None,
            "counters": self.counters,
            "config_echo": self.config_echo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


class Simulation:
    """One program on one fresh machine; exposes internals for inspection."""

    def __init__(self, program: Program, config: Optional[SimConfig] = None):
        self.config = config or SimConfig()
        self.program = program
        self.mem = TaggedMemory()
        mode = Mode(self.config.mode)
        arming = self.config.tripwires and mode is Mode.SYNC
        sampler = None
        if arming:
            sampler = TripwireSampler(
                substream(self.config.seed, "sampler"),
                alloc_threshold=self.config.alloc_threshold,
                sampling_rate=self.config.sampling_rate,
            )
        self.allocator = Allocator(
            self.mem,
            substream(self.config.seed, "allocator"),
            AllocatorConfig(
                large_threshold=self.config.large_threshold,
                odd_even=self.config.odd_even,
                include_zero_tag=self.config.include_zero_tag,
            ),
            sampler,
        )
        self.detector = Detector(DetectorConfig(
            access_threshold=self.config.access_threshold,
            tripwires_enabled=self.config.tripwires,
            overread_skip=self.config.overread_skip,
        ))
        self.machine = Machine(program, mode)

    def run(self, max_steps: int = 10_000_000) -> RunReport:
        end: Optional[RunEnd] = None
        for _ in range(max_steps):
            end = self.machine.step(self.mem, self.allocator, self.detector)
            if end is not None:
                break
        if end is None:
            raise RuntimeError(f"program did not halt within {max_steps} steps")
        outcome = "BugReported" if end.outcome == "bug" else "CleanHalt"
        return RunReport(
            outcome=outcome,
            bug=end.report,
            counters=self.counters(),
            config_echo=self.config.echo(),
        )

    def counters(self) -> dict:
        m, a, d = self.machine.counters, self.allocator.stats, self.detector.stats
        return {
            "instructions_executed": m.instructions_executed,
            "faults_delivered": m.faults_delivered,
            "traps_delivered": m.traps_delivered,
            "tripwires_armed": a.tripwires_armed,
            "tripwires_removed_by_threshold": d.tripwires_removed_by_threshold,
            "tripwires_removed_by_ret_edge": d.tripwires_removed_by_ret_edge,
            "allocations": a.allocations,
            "frees": a.frees,
        }

    def protocol_quiescent(self) -> bool:
        """No open delegation and no armed trap; holds at any clean halt."""
        return self.detector.quiescent() and not self.machine.traps


def run_program(program: Program, config: Optional[SimConfig] = None) -> RunReport:
    return Simulation(program, config).run()
