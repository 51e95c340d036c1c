"""The bug class plain tag checks cannot see, and how tripwires catch it.

A 40-byte allocation spans three granules; the last one has only 8
addressable bytes.  An access at offset 36 reaching byte 44 stays inside
that granule, so the granule tag matches and hardware-style checking says
nothing.  Arming the short granule as a tripwire (memory tag = addressable
byte count, real tag stashed in the padding) forces a fault, and the
byte-granular check in the handler turns it into a report.
"""

from mtesim import ALWAYS_ARM, SimConfig, parse_program, run_program

TRACE = """\
alloc r0 40            # three granules, the last one short: 8 of 16 bytes used
mov r1 1234
st r1 [r0, #36] w8 p1  # [36, 44) ends past byte 40: overflow inside the granule
halt
"""

program = parse_program(TRACE)

print("== plain tag checking (tripwires off) ==")
report = run_program(program, SimConfig(seed=7, tripwires=False))
print(f"outcome: {report.outcome}   (the overflow never crosses a tag boundary)")

print()
print("== with the short granule armed ==")
report = run_program(program, SimConfig(seed=7, alloc_threshold=ALWAYS_ARM))
print(f"outcome: {report.outcome}")
bug = report.bug
print(f"kind:              {bug.kind.value}")
print(f"fault address:     {bug.fault_address:#x}")
print(f"pointer tag:       {bug.addrtag:#x}")
print(f"granule tag:       {bug.memtag:#x}  (doubles as the addressable byte count)")
print(f"addressable bytes: {bug.addressable_bytes}")
print(f"access reached:    byte {bug.accessed_bytes_in_granule} of the granule")

print()
print("full report JSON:")
print(bug.to_json())
