"""Assembly mission planning and reactive execution.

Pipeline: ``parse_mission`` -> ``plan_mission`` -> ``plan_tasks`` ->
``compile_plan`` -> ``run_mission`` (tick, classify, recover).
"""

from importlib import resources

from .bt_compiler import compile_plan, compile_primitive, stitch_repair
from .bt_core import Status, parse_tree, serialize_tree, tick
from .contingency import classify, select_recovery
from .executor import RunReport, run_mission
from .htn_domain import plan_tasks, repair_precondition, reverse_plan
from .mission_planner import CycleDetected, plan_mission, replan_mission
from .mission_spec import MissionSpec, parse_mission, validate
from .sim_world import FaultSchedule, SimWorld, initial_state, parse_fault_schedule

__version__ = "0.1.0"


def bundled_mission(name: str) -> str:
    """Text of a mission shipped with the package, e.g. ``"screw_tiles"``."""
    return resources.files(__package__).joinpath("missions", f"{name}.mission").read_text(encoding="utf-8")


def bundled_missions() -> list[str]:
    return sorted(p.name[:-len(".mission")] for p in resources.files(__package__).joinpath("missions").iterdir()
                  if p.name.endswith(".mission"))
