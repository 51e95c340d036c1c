"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with `pytest tests/test_acceptance.py -v -s`.  Every tolerance is fixed
here; statistical criteria run under pinned seeds and check that the
analytic value lies inside the Wilson 95% interval of the observed rate.
"""

import math
import time
from dataclasses import replace

from mtesim import (
    ALWAYS_ARM,
    SimConfig,
    TripwireSampler,
    WorkloadSpec,
    check_access,
    exp_detection_rate,
    exp_recovery_transparency,
    exp_vulnerable_fraction,
    run_program,
    tag_storage_overhead,
    uniform_sizes,
    wilson_95_ci,
)
from mtesim.runner import substream
from mtesim.trace import generate_program, generate_workload, parse_program

BASE = SimConfig(seed=0, alloc_threshold=ALWAYS_ARM)
GBASE = 0x1000


def _verdict(num, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_01_byte_check_matches_enumeration_oracle():
    """check_access agrees with a byte-set oracle on the full input grid."""
    sizes = (1, 2, 4, 8, 16, 32)
    t0 = time.time()
    cases = mismatches = 0
    for off in range(16):
        start = GBASE + off
        for size in sizes:
            accessed = frozenset(b for b in range(start, start + size) if b >= GBASE)
            for addrtag in range(16):
                for memtag in range(16):
                    # bytes the granule makes addressable for a matching pointer
                    addressable = (frozenset(range(GBASE, GBASE + memtag))
                                   if memtag != 0 and addrtag != 0 else frozenset())
                    for metadata in range(16):
                        oracle = metadata == addrtag and accessed <= addressable
                        got = check_access(start, start, size, addrtag, memtag, metadata)
                        cases += 1
                        if oracle != got:
                            mismatches += 1
    elapsed = time.time() - t0
    _verdict(1, cases == 393_216 and mismatches == 0 and elapsed < 1.0,
             f"{cases} cases, {mismatches} mismatches, {elapsed:.2f}s")


def test_criterion_02_intra_granule_detection():
    t0 = time.time()
    armed = exp_detection_rate("intra", BASE, 1000, seed=101)
    blind = exp_detection_rate("intra", replace(BASE, tripwires=False), 1000, seed=102)
    elapsed = time.time() - t0
    ok = armed.rate == 1.0 and blind.rate == 0.0 and elapsed < 30
    _verdict(2, ok, f"armed rate {armed.rate}, no-tripwires rate {blind.rate}, {elapsed:.1f}s")


def test_criterion_03_adjacent_overflow_deterministic():
    r = exp_detection_rate("cross", BASE, 1000, seed=103,
                           spec=WorkloadSpec(kind="cross", adjacent=True))
    _verdict(3, r.rate == 1.0, f"adjacent cross rate {r.rate} with odd-even tagging")


def test_criterion_04_probabilistic_overflow_detection():
    spec = WorkloadSpec(kind="cross", adjacent=False)
    r15 = exp_detection_rate("cross", replace(BASE, odd_even=False), 10_000,
                             seed=104, spec=spec)
    r16 = exp_detection_rate("cross", replace(BASE, odd_even=False, include_zero_tag=True),
                             10_000, seed=105, spec=spec)
    ok = r15.contains(14 / 15) and r16.contains(15 / 16)
    _verdict(4, ok, f"15-tag rate {r15.rate:.4f} (CI holds 14/15: {r15.contains(14/15)}), "
                    f"16-tag rate {r16.rate:.4f} (CI holds 15/16: {r16.contains(15/16)})")


def test_criterion_05_temporal_bugs():
    uaf = exp_detection_rate("uaf", BASE, 1000, seed=106)
    dfree = exp_detection_rate("double_free", BASE, 1000, seed=107)
    reuse = exp_detection_rate("uaf", BASE, 1000, seed=108,
                               spec=WorkloadSpec(kind="uaf", reuse_cycles=1))
    ok = uaf.rate == 1.0 and dfree.rate == 1.0 and reuse.contains(13 / 14)
    _verdict(5, ok, f"immediate uaf {uaf.rate}, double free {dfree.rate}, "
                    f"one-reuse uaf {reuse.rate:.4f} (CI holds 13/14: {reuse.contains(13/14)})")


def test_criterion_06_recovery_transparency():
    programs = generate_workload(WorkloadSpec(kind="benign", count=1000, seed=109,
                                              accesses=10))
    result = exp_recovery_transparency(programs, SimConfig(seed=0), seed=110)
    _verdict(6, result.passed and result.programs_checked == 1000,
             f"{result.programs_checked} benign programs, diffs: {result.diffs[:2]}")


def test_criterion_07_tripwire_retirement():
    lines = ["alloc r0 40"] + ["ld r1 [r0, #32] w8 p1"] * 100 + ["halt"]
    r64 = run_program(parse_program("\n".join(lines)),
                      replace(BASE, seed=111, access_threshold=64))
    lines = ["alloc r0 47"] + ["ld r1 [r0, #32] w8 p1"] * 100 + ["halt"]
    r15 = run_program(parse_program("\n".join(lines)),
                      replace(BASE, seed=112, access_threshold=64))
    ok = (r64.outcome == "CleanHalt" and r64.counters["faults_delivered"] == 64
          and r64.counters["tripwires_removed_by_threshold"] == 1
          and r15.outcome == "CleanHalt" and r15.counters["faults_delivered"] == 15)
    _verdict(7, ok, f"threshold-64 faults {r64.counters['faults_delivered']}, "
                    f"4-bit-counter faults {r15.counters['faults_delivered']}")


def test_criterion_08_ret_edge_false_negative():
    trace = (
        "alloc r0 23\n"
        "ld r1 [r0, #16] w4 p1\n"   # benign tripwire hit, next slot is ret
        "ret\n"
        "st r2 [r0, #17] w8 p1\n"   # overflow through the same granule: missed
        "halt"
    )
    r = run_program(parse_program(trace), replace(BASE, seed=113))
    ok = (r.outcome == "CleanHalt" and r.bug is None
          and r.counters["tripwires_removed_by_ret_edge"] == 1
          and r.counters["faults_delivered"] == 1)
    _verdict(8, ok, f"outcome {r.outcome}, ret-edge removals "
                    f"{r.counters['tripwires_removed_by_ret_edge']}, "
                    f"faults {r.counters['faults_delivered']}")


def test_criterion_09_no_false_positives():
    configs = {
        "sync+tripwires": BASE,
        "sync-no-tripwires": replace(BASE, tripwires=False),
        "async": replace(BASE, mode="async"),
        "off": replace(BASE, mode="off"),
    }
    total = bugs = 0
    for name, config in configs.items():
        spec = WorkloadSpec(kind="benign", count=1, seed=114)
        for i in range(2500):
            program = generate_program(spec, i)
            r = run_program(program, replace(config, seed=f"114/{name}/{i}"))
            total += 1
            bugs += r.outcome == "BugReported"
    _verdict(9, total == 10_000 and bugs == 0, f"{total} benign runs, {bugs} bug reports")


def test_criterion_10_sampling_statistics():
    details = []
    ok = True
    for rate in (10, 100, 1000):
        sampler = TripwireSampler(substream(115, f"rate/{rate}"),
                                  alloc_threshold=0, sampling_rate=rate)
        n = 100_000
        arms = sum(sampler.should_arm() for _ in range(n))
        p = 2 / (1 + 2 * rate)
        sigma = math.sqrt(p * (1 - p) / n)
        dev = abs(arms / n - p) / sigma
        details.append(f"R={rate}: {dev:.2f} sigma")
        ok = ok and dev <= 3
    _verdict(10, ok, ", ".join(details))


def test_criterion_11_overhead_constants():
    from fractions import Fraction
    overhead = tag_storage_overhead()
    frac = exp_vulnerable_fraction(uniform_sizes(1, 256), 100_000, seed=116)
    lo, hi = wilson_95_ci(round(frac * 100_000), 100_000)
    ok = overhead == Fraction(1, 33) and lo <= 15 / 16 <= hi
    _verdict(11, ok, f"tag storage overhead {overhead}, "
                     f"vulnerable fraction {frac:.4f} (CI holds 15/16: {lo <= 15/16 <= hi})")
