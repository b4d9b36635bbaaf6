"""Inject one scripted fault at a time and show how each is classified and recovered."""

from asmforge import bundled_mission, parse_fault_schedule, parse_mission, run_mission

SCENARIOS = {
    "wrong part configuration": "fault target=Detect.Object part=pB mode=wrong_config:base-up",
    "station moved": "fault target=at_station part=pB mode=fail_n:1",
    "part slipped from the hand": "fault target=in_hand part=pB mode=fail_n:1",
    "alignment lost": "fault target=is_aligned part=pB mode=fail_n:1",
    "bad lighting": "fault target=Detect.Object part=pB mode=fail_n:1",
    "grasp fails twice": "fault target=Grasp part=pB mode=fail_n:2",
    "driver drops out": "fault target=Move.Transport mode=drop_driver:10",
    "noisy detection": "fault target=Detect.Object part=pB mode=noise:0.01,0.002,0.03",
    "jammed screw": "fault target=ScrewPrim mode=fail_perm",
}

spec = parse_mission(bundled_mission("screw_tiles"))
for title, fault in SCENARIOS.items():
    report = run_mission(spec, parse_fault_schedule(fault))
    print(f"{title}: {report.status} after {report.ticks} ticks")
    for line in report.log:
        fields = dict(item.split("=", 1) for item in line.split())
        print(f"    {fields['level']}/{fields['order']} {fields['cause']} -> {fields['action']} ({fields['result']})")
