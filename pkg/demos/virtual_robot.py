"""Compile an experiment to G-code and run it on the virtual robot.

Shows the full controller path: formulation -> lab operations -> G-code
text -> parse -> execute, with liquid accounting checked before and after
the dish cleaning cycle.
"""

from dropevo.formulation import normalize
from dropevo.gcode import (
    VirtualRobot,
    compile_cleaning_cycle,
    compile_experiment,
    default_layout,
)

f = normalize([4, 3, 2, 1])
layout = default_layout()
program = compile_experiment(f, layout)

print("experiment program (first 12 lines):")
for line in program.splitlines()[:12]:
    print(f"  {line}")
print(f"  ... {len(program.splitlines())} lines total\n")

robot = VirtualRobot(layout)
before = robot.state.total_liquid_ul()
robot.execute(program)

dish = robot.state.vessels["dish"]
print("dish after the experiment:")
for liquid, ul in sorted(dish.items()):
    print(f"  {liquid}: {ul:.2f} uL")
print(f"waste: {sum(robot.state.vessels['waste'].values()):.1f} uL "
      f"(the 60 uL leftover)\n")

robot.execute(compile_cleaning_cycle(layout))
dish = robot.state.vessels["dish"]
print("dish after acetone + aqueous washes and drains:")
for liquid, ul in sorted(dish.items()):
    print(f"  {liquid}: {ul:.2f} uL   # only the retained dead volume")

drift = robot.state.total_liquid_ul() - before
print(f"\ntotal liquid drift over the whole session: {drift:+.2e} uL")
print(f"elapsed robot time: {robot.state.time_ms / 1000:.1f} s, "
      f"{len(robot.events)} logged events")
