import json

from mtesim import (
    ALWAYS_ARM,
    SimConfig,
    Simulation,
    WorkloadSpec,
    generate_workload,
    parse_program,
    run_program,
)
from mtesim.detector import Detector
from mtesim.experiments import exp_recovery_transparency

INTRA = "alloc r0 40\nst r1 [r0, #36] w8 p1\nhalt\n"
BENIGN = "alloc r0 40\nst r1 [r0, #32] w8 p1\nld r2 [r0, #0] w8 p1\nhalt\n"


def test_counter_invariants():
    programs = generate_workload(WorkloadSpec(kind="benign", count=50, seed=6))
    for i, p in enumerate(programs):
        r = run_program(p, SimConfig(seed=i, alloc_threshold=ALWAYS_ARM))
        c = r.counters
        assert c["traps_delivered"] <= c["faults_delivered"]
        removed = (c["tripwires_removed_by_threshold"]
                   + c["tripwires_removed_by_ret_edge"])
        assert removed <= c["tripwires_armed"]
        assert c["frees"] <= c["allocations"]


def test_bug_exit_code_and_echo():
    r = run_program(parse_program(INTRA), SimConfig(seed=1, alloc_threshold=ALWAYS_ARM))
    assert r.outcome == "BugReported" and r.exit_code == 1
    assert r.config_echo["mode"] == "sync"
    assert r.config_echo["seed"] == 1


def test_run_report_json_field_order():
    r = run_program(parse_program(BENIGN), SimConfig(seed=1, alloc_threshold=ALWAYS_ARM))
    d = r.to_json_dict()
    assert list(d) == ["outcome", "bug", "counters", "config_echo"]
    assert list(d["counters"]) == [
        "instructions_executed", "faults_delivered", "traps_delivered",
        "tripwires_armed", "tripwires_removed_by_threshold",
        "tripwires_removed_by_ret_edge", "allocations", "frees",
    ]
    json.loads(r.to_json())  # valid JSON


def test_report_bit_stable_under_fixed_seed():
    a = run_program(parse_program(INTRA), SimConfig(seed=5, alloc_threshold=ALWAYS_ARM))
    b = run_program(parse_program(INTRA), SimConfig(seed=5, alloc_threshold=ALWAYS_ARM))
    assert a.to_json() == b.to_json()


def test_modes_share_allocation_tags():
    # named substreams: arming decisions must not perturb tag draws
    tags = {}
    for mode, tripwires in (("off", False), ("sync", True), ("async", False)):
        sim = Simulation(parse_program(BENIGN),
                         SimConfig(mode=mode, tripwires=tripwires, seed=9,
                                   alloc_threshold=ALWAYS_ARM))
        sim.run()
        tags[mode] = [r.tag for r in sim.allocator.records]
    assert tags["off"] == tags["sync"] == tags["async"]


def test_async_mode_never_arms():
    sim = Simulation(parse_program(BENIGN),
                     SimConfig(mode="async", seed=9, alloc_threshold=ALWAYS_ARM))
    r = sim.run()
    assert r.counters["tripwires_armed"] == 0


class TestTransparency:
    def test_equivalence_off_vs_sync(self):
        programs = generate_workload(WorkloadSpec(kind="benign", count=60, seed=21))
        result = exp_recovery_transparency(programs, SimConfig(seed=0), 33)
        assert result.passed, result.diffs

    def test_empty_corpus_vacuous_pass_with_warning(self):
        result = exp_recovery_transparency([], SimConfig(seed=0), 33)
        assert result.passed and result.warning is not None

    def test_skipped_revocation_is_detected(self, monkeypatch):
        # a detector that never swaps back nor releases its trap leaves the
        # sync run non-quiescent; the harness must fail it
        def skip_revocation(self, machine, mem, allocator):
            self.delegations.pop(machine.pc, None)

        monkeypatch.setattr(Detector, "handle_trap", skip_revocation)
        programs = generate_workload(WorkloadSpec(kind="benign", count=40, seed=22))
        result = exp_recovery_transparency(programs, SimConfig(seed=0), 34)
        assert not result.passed
        assert any("delegation or armed trap" in d for d in result.diffs)

    def test_mutated_detector_loses_repeat_detection(self, monkeypatch):
        # G3: after revocation an identical access faults again; skipping the
        # swap-back forfeits that and a later overflow goes unseen
        trace = (
            "alloc r0 40\n"
            "ld r1 [r0, #32] w8 p1\n"
            "mov r9 0\n"
            "st r2 [r0, #36] w8 p1\n"  # intra overflow
            "halt"
        )
        baseline = run_program(parse_program(trace),
                               SimConfig(seed=4, alloc_threshold=ALWAYS_ARM))
        assert baseline.outcome == "BugReported"

        def skip_swap(self, machine, mem, allocator):
            self.delegations.pop(machine.pc, None)
            machine.clear_trap(machine.pc)

        monkeypatch.setattr(Detector, "handle_trap", skip_swap)
        mutated = run_program(parse_program(trace),
                              SimConfig(seed=4, alloc_threshold=ALWAYS_ARM))
        assert mutated.outcome == "CleanHalt"  # the overflow is missed
