"""Plan the bundled four-part mission, compile it and tick it to completion.

Run with ``python3 demos/walkthrough.py``.
"""

from asmforge import bundled_mission, compile_plan, parse_mission, plan_mission, plan_tasks, run_mission
from asmforge.bt_core import walk

spec = parse_mission(bundled_mission("screw_tiles"))
mission_plan = plan_mission(spec)
print("mission order:", " -> ".join(str(s) for s in mission_plan.steps))

task_plan = plan_tasks(spec, mission_plan)
print(f"\n{len(task_plan)} primitives:")
print(task_plan.to_text(), end="")

tree = compile_plan(task_plan)
print(f"\ncompiled tree has {sum(1 for _ in walk(tree))} nodes")

report = run_mission(spec, mission_name="screw_tiles")
print()
print(report.to_text(), end="")
