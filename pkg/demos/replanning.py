"""Two worlds that disagree with the plan: a screw in the wrong hole, and a glued tile.

The misplaced screw is reversible, so it is taken out and the original plan
resumes. The glued tile cannot be undone, so the mission is replanned around it.
"""

from asmforge import bundled_mission, initial_state, parse_mission, run_mission

spec = parse_mission(bundled_mission("screw_tiles"))

for title, done in (("screw already in a2", ["a2"]), ("a0 glued in place", ["a0"])):
    report = run_mission(spec, world_state=initial_state(spec, done=done))
    print(f"{title}: {report.status}, {report.ticks} ticks")
    for line in report.log:
        print("   ", line)
    for plan in report.replans:
        print("    new mission order:", plan)
