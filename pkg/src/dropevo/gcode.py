"""Robot controller layer: lab operations -> G-code, the pump instruction
dialect, and a virtual firmware that executes programs against modeled
pumps, syringes and vessels.

Dialect (one instruction per line, '#' starts a comment):

    G1 X<mm> Y<mm>            carriage move, coordinates quantized to 0.1 mm
    M10 S<id> / M11 S<id>     lower / raise carriage syringe <id>
    M12 S<id> V<uL>           actuate syringe plunger: aspirate V
    M13 S<id> V<uL>           actuate syringe plunger: dispense V
    M15 / M16                 stirrer on / off
    P<p> M<m> D<d> S<a> E<b>  pump dialect: pump p in [0..6], motor m in
                              {0 plunger, 1 valve}, direction d in {0, 1},
                              a ms between steps, b steps, b <= 50000

The M-codes above are conventions of this virtual robot, documented here;
the pump dialect is the controller's native instruction format. Pump
calibration is 1 step = 0.1 uL for 5 mL syringes and 0.02 uL for 1 mL
syringes, so 50000 steps is one full barrel either way.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

from .formulation import DEFAULT_OIL_ORDER, Formulation, well_volumes

PUMP_MAX_STEPS = 50000
COORD_STEP_MM = 0.1
CARRIAGE_MS_PER_MM = 10.0
SERVO_ACTION_MS = 300.0
SYRINGE_CAPACITY_UL = 100.0       # carriage servo syringe (Hamilton 100 uL)
APPARATUS_TOLERANCE_MM = 0.5
VALVE_TURN_STEPS = 100
VALVE_SPEED_MS = 5
DEFAULT_PUMP_SPEED_MS = 2

EXPERIMENT_ASPIRATE_UL = 80.0
DROPLET_UL = 5.0
ACETONE_WASHES_ML = (4.0, 4.0, 3.0)
AQUEOUS_WASHES_ML = (1.5, 1.5, 1.0)
NEEDLE_DIP_UL = 50.0
DRAIN_DISPLACEMENT_ML = 4.6       # per drain stroke; covers wash + residue
DISH_AQUEOUS_RETAINED_UL = 100.0  # drain dead volume, aqueous phase only


class GcodeError(Exception):
    pass


class PumpSyntaxError(GcodeError):
    def __init__(self, message, line_no=None):
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{message}")
        self.line_no = line_no


class PumpRangeError(GcodeError):
    def __init__(self, fld, value, message, line_no=None):
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{fld}={value}: {message}")
        self.field = fld
        self.value = value
        self.line_no = line_no


class OutOfBounds(GcodeError):
    pass


class UnknownApparatus(GcodeError):
    pass


class StateFault(GcodeError):
    def __init__(self, message, pc):
        super().__init__(f"instruction {pc}: {message}")
        self.pc = pc


# ---------------------------------------------------------------------------
# Pump dialect

@dataclass(frozen=True)
class PumpInstruction:
    pump: int        # X in [0..6]
    motor: int       # Y in {0 plunger, 1 valve}
    direction: int   # Z in {0, 1}
    speed_ms: int    # A, ms between steps
    steps: int       # B in [0..50000]

    def __post_init__(self):
        checks = [
            ("X", self.pump, 0 <= self.pump <= 6, "valid pumps are 0..6"),
            ("Y", self.motor, self.motor in (0, 1), "motor select is 0 or 1"),
            ("Z", self.direction, self.direction in (0, 1), "direction is 0 or 1"),
            ("A", self.speed_ms, self.speed_ms > 0, "speed must be > 0 ms"),
            ("B", self.steps, 0 <= self.steps <= PUMP_MAX_STEPS,
             f"steps limited to {PUMP_MAX_STEPS}"),
        ]
        for fld, value, ok, msg in checks:
            if not ok:
                raise PumpRangeError(fld, value, msg)

    def serialize(self) -> str:
        return f"P{self.pump} M{self.motor} D{self.direction} S{self.speed_ms} E{self.steps}"


_PUMP_RE = re.compile(r"^P(-?\d+) M(-?\d+) D(-?\d+) S(-?\d+) E(-?\d+)$")


def parse_pump_line(line: str, line_no: int | None = None) -> PumpInstruction:
    """Parse one 'PX MY DZ SA EB' line; tokens are required, in order."""
    m = _PUMP_RE.match(line.strip())
    if not m:
        raise PumpSyntaxError(
            f"expected 'PX MY DZ SA EB', got {line.strip()!r}", line_no)
    try:
        return PumpInstruction(*(int(g) for g in m.groups()))
    except PumpRangeError as exc:
        raise PumpRangeError(exc.field, exc.value, "out of range", line_no) from exc


# ---------------------------------------------------------------------------
# Stage layout

@dataclass(frozen=True)
class StageLayout:
    """Geometry and plumbing of the virtual robot.

    locations: named XY points in mm. location_vessel maps each location to
    the vessel a lowered needle reaches there. apparatus_offsets shift the
    carriage so a given tool ends up over the target. pump_ports gives, per
    pump, what each valve port connects to ('carriage' means the tubing
    outlet on the X-Y carriage).
    """

    bounds_mm: tuple = (500.0, 400.0)
    locations: dict = field(default_factory=dict)
    location_vessel: dict = field(default_factory=dict)
    apparatus_offsets: dict = field(default_factory=dict)
    pump_ports: dict = field(default_factory=dict)      # pump -> {0: ..., 1: ...}
    pump_syringe_ml: dict = field(default_factory=dict)
    vessel_initial_ul: dict = field(default_factory=dict)  # vessel -> {liquid: uL}
    vessel_retained_ul: dict = field(default_factory=dict)  # vessel -> {liquid: uL}

    def pump_calibration_ul_per_step(self, pump: int) -> float:
        barrel_ml = self.pump_syringe_ml[pump]
        return barrel_ml * 1000.0 / PUMP_MAX_STEPS

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["pump_ports"] = {str(k): v for k, v in d["pump_ports"].items()}
        d["pump_syringe_ml"] = {str(k): v for k, v in d["pump_syringe_ml"].items()}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "StageLayout":
        d = json.loads(text)
        d["bounds_mm"] = tuple(d["bounds_mm"])
        d["locations"] = {k: tuple(v) for k, v in d["locations"].items()}
        d["apparatus_offsets"] = {k: tuple(v) for k, v in d["apparatus_offsets"].items()}
        d["pump_ports"] = {int(k): {int(p): n for p, n in v.items()}
                           for k, v in d["pump_ports"].items()}
        d["pump_syringe_ml"] = {int(k): v for k, v in d["pump_syringe_ml"].items()}
        return cls(**d)


def default_layout(oil_order=DEFAULT_OIL_ORDER) -> StageLayout:
    """Standard stage: mixing well at centre, dish with the four droplet
    points, waste dish, and seven pumps (0-3 oils, 4 aqueous, 5 acetone in,
    6 acetone out)."""
    oil_liquids = [f"oil:{name}" for name in oil_order]
    locations = {
        "mixing_well": (250.0, 200.0),
        "dish_center": (120.0, 200.0),
        "drop_1": (105.0, 185.0),
        "drop_2": (135.0, 185.0),
        "drop_3": (105.0, 215.0),
        "drop_4": (135.0, 215.0),
        "waste": (400.0, 200.0),
    }
    location_vessel = {
        "mixing_well": "well",
        "dish_center": "dish",
        "drop_1": "dish", "drop_2": "dish", "drop_3": "dish", "drop_4": "dish",
        "waste": "waste",
    }
    pump_ports = {i: {0: f"bottle:{oil_liquids[i]}", 1: "carriage"} for i in range(4)}
    pump_ports[4] = {0: "bottle:aqueous", 1: "carriage"}
    pump_ports[5] = {0: "bottle:acetone", 1: "carriage"}
    pump_ports[6] = {0: "dish", 1: "waste"}
    vessels = {
        "well": {},
        "dish": {"aqueous": 3000.0},   # standing aqueous sub-phase
        "waste": {},
    }
    for liq in oil_liquids:
        vessels[f"bottle:{liq}"] = {liq: 200000.0}
    vessels["bottle:acetone"] = {"acetone": 500000.0}
    vessels["bottle:aqueous"] = {"aqueous": 500000.0}
    return StageLayout(
        locations=locations,
        location_vessel=location_vessel,
        apparatus_offsets={"syringe": (0.0, 0.0), "needle": (15.0, 0.0),
                           "pump_tube": (-20.0, 0.0)},
        pump_ports=pump_ports,
        pump_syringe_ml={0: 1.0, 1: 1.0, 2: 1.0, 3: 1.0, 4: 5.0, 5: 5.0, 6: 5.0},
        vessel_initial_ul=vessels,
        vessel_retained_ul={"dish": {"aqueous": DISH_AQUEOUS_RETAINED_UL}},
    )


# ---------------------------------------------------------------------------
# Lab operations and compilation

@dataclass(frozen=True)
class MoveTo:
    x: float
    y: float
    apparatus: str = "syringe"


@dataclass(frozen=True)
class Aspirate:
    syringe: int
    volume_ul: float


@dataclass(frozen=True)
class Dispense:
    syringe: int
    volume_ul: float


@dataclass(frozen=True)
class LowerSyringe:
    syringe: int


@dataclass(frozen=True)
class RaiseSyringe:
    syringe: int


@dataclass(frozen=True)
class PumpTransfer:
    pump: int
    volume_ml: float
    direction: int          # 0 draw through current port, 1 expel
    speed_ms: int = DEFAULT_PUMP_SPEED_MS


@dataclass(frozen=True)
class Valve:
    pump: int
    port: int


@dataclass(frozen=True)
class Stir:
    on: bool


def _quantize(v: float) -> float:
    return round(v / COORD_STEP_MM) * COORD_STEP_MM


def compile_ops(ops, layout: StageLayout) -> str:
    """Compile a lab-operation sequence to G-code text."""
    lines = []
    for op in ops:
        if isinstance(op, MoveTo):
            if op.apparatus not in layout.apparatus_offsets:
                raise UnknownApparatus(op.apparatus)
            ox, oy = layout.apparatus_offsets[op.apparatus]
            x, y = _quantize(op.x - ox), _quantize(op.y - oy)
            if not (0.0 <= x <= layout.bounds_mm[0] and 0.0 <= y <= layout.bounds_mm[1]):
                raise OutOfBounds(f"carriage target ({x:.1f}, {y:.1f}) mm "
                                  f"outside stage {layout.bounds_mm}")
            lines.append(f"G1 X{x:.1f} Y{y:.1f}")
        elif isinstance(op, LowerSyringe):
            lines.append(f"M10 S{op.syringe}")
        elif isinstance(op, RaiseSyringe):
            lines.append(f"M11 S{op.syringe}")
        elif isinstance(op, Aspirate):
            if op.volume_ul < 0:
                raise GcodeError("aspirate volume must be >= 0")
            if op.volume_ul > 0:
                lines.append(f"M12 S{op.syringe} V{op.volume_ul:.1f}")
        elif isinstance(op, Dispense):
            if op.volume_ul < 0:
                raise GcodeError("dispense volume must be >= 0")
            if op.volume_ul > 0:
                lines.append(f"M13 S{op.syringe} V{op.volume_ul:.1f}")
        elif isinstance(op, Stir):
            lines.append("M15" if op.on else "M16")
        elif isinstance(op, Valve):
            lines.append(PumpInstruction(op.pump, 1, op.port, VALVE_SPEED_MS,
                                         VALVE_TURN_STEPS).serialize())
        elif isinstance(op, PumpTransfer):
            cal = layout.pump_calibration_ul_per_step(op.pump)
            steps = int(round(op.volume_ml * 1000.0 / cal))
            if steps > PUMP_MAX_STEPS:
                raise PumpRangeError("E", steps,
                                     f"{op.volume_ml} mL exceeds one barrel stroke")
            if steps > 0:
                lines.append(PumpInstruction(op.pump, 0, op.direction,
                                             op.speed_ms, steps).serialize())
        else:
            raise GcodeError(f"unknown lab operation {op!r}")
    return "".join(line + "\n" for line in lines)


def compile_experiment(f: Formulation, layout: StageLayout | None = None,
                       total_ul: float = 360.0) -> str:
    """Mix one well per the formulation, stir, draw 80 uL and place four
    5 uL droplets, raising the syringe after each; leftover goes to waste."""
    if layout is None:
        layout = default_layout()
    ops = [MoveTo(*layout.locations["mixing_well"], apparatus="pump_tube")]
    for pump, vol in enumerate(well_volumes(f, total_ul)):
        if vol <= 0:
            continue
        ops += [Valve(pump, 0), PumpTransfer(pump, vol / 1000.0, 0),
                Valve(pump, 1), PumpTransfer(pump, vol / 1000.0, 1)]
    ops += [Stir(True), Stir(False)]
    ops += [MoveTo(*layout.locations["mixing_well"]), LowerSyringe(0),
            Aspirate(0, EXPERIMENT_ASPIRATE_UL), RaiseSyringe(0)]
    for k in range(1, 5):
        ops += [MoveTo(*layout.locations[f"drop_{k}"]), LowerSyringe(0),
                Dispense(0, DROPLET_UL), RaiseSyringe(0)]
    leftover = EXPERIMENT_ASPIRATE_UL - 4 * DROPLET_UL
    ops += [MoveTo(*layout.locations["waste"]), LowerSyringe(0),
            Dispense(0, leftover), RaiseSyringe(0)]
    return compile_ops(ops, layout)


def _wash(pump: int, volume_ml: float, layout: StageLayout) -> list:
    return [MoveTo(*layout.locations["dish_center"], apparatus="pump_tube"),
            Valve(pump, 0), PumpTransfer(pump, volume_ml, 0),
            Valve(pump, 1), PumpTransfer(pump, volume_ml, 1)]


def _drain(layout: StageLayout) -> list:
    return [Valve(6, 0), PumpTransfer(6, DRAIN_DISPLACEMENT_ML, 0),
            Valve(6, 1), PumpTransfer(6, DRAIN_DISPLACEMENT_ML, 1)]


def _needle_dip(layout: StageLayout) -> list:
    return [MoveTo(*layout.locations["dish_center"]), LowerSyringe(0),
            Aspirate(0, NEEDLE_DIP_UL), Dispense(0, NEEDLE_DIP_UL),
            RaiseSyringe(0)]


def compile_cleaning_cycle(layout: StageLayout | None = None) -> str:
    """Acetone washes of 4, 4 and 3 mL (with a needle dip-and-actuate between
    washes 1-2 and 2-3), then aqueous washes of 1.5, 1.5 and 1 mL; the dish
    is drained to waste after every wash."""
    if layout is None:
        layout = default_layout()
    ops = []
    for k, vol in enumerate(ACETONE_WASHES_ML):
        ops += _wash(5, vol, layout)
        if k < 2:
            ops += _needle_dip(layout)
        ops += _drain(layout)
    for vol in AQUEOUS_WASHES_ML:
        ops += _wash(4, vol, layout)
        ops += _drain(layout)
    return compile_ops(ops, layout)


# ---------------------------------------------------------------------------
# Parsing full programs

_G1_RE = re.compile(r"^G1 X(-?\d+(?:\.\d+)?) Y(-?\d+(?:\.\d+)?)$")
_SERVO_RE = re.compile(r"^M1([0-3]) S(\d+)(?: V(\d+(?:\.\d+)?))?$")


@dataclass(frozen=True)
class ParsedLine:
    line_no: int
    kind: str        # 'move' | 'lower' | 'raise' | 'aspirate' | 'dispense'
                     # | 'stir_on' | 'stir_off' | 'pump'
    args: tuple = ()


def parse_line(line: str, line_no: int = 0) -> ParsedLine | None:
    """Parse one program line; None for blanks and comments."""
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    if body.startswith("P"):
        return ParsedLine(line_no, "pump", (parse_pump_line(body, line_no),))
    if body == "M15":
        return ParsedLine(line_no, "stir_on")
    if body == "M16":
        return ParsedLine(line_no, "stir_off")
    m = _G1_RE.match(body)
    if m:
        return ParsedLine(line_no, "move", (float(m.group(1)), float(m.group(2))))
    m = _SERVO_RE.match(body)
    if m:
        code, syringe = m.group(1), int(m.group(2))
        kind = {"0": "lower", "1": "raise", "2": "aspirate", "3": "dispense"}[code]
        if kind in ("aspirate", "dispense"):
            if m.group(3) is None:
                raise PumpSyntaxError(f"M1{code} requires a V volume", line_no)
            return ParsedLine(line_no, kind, (syringe, float(m.group(3))))
        if m.group(3) is not None:
            raise PumpSyntaxError(f"M1{code} takes no V argument", line_no)
        return ParsedLine(line_no, kind, (syringe,))
    raise PumpSyntaxError(f"unrecognized instruction {body!r}", line_no)


def parse_program(text: str) -> list[ParsedLine]:
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        parsed = parse_line(line, line_no)
        if parsed is not None:
            out.append(parsed)
    return out


def check_program(text: str) -> list[str]:
    """Parser totality helper: list of positioned error strings, no raising."""
    errors = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        try:
            parse_line(line, line_no)
        except GcodeError as exc:
            errors.append(str(exc))
    return errors


# ---------------------------------------------------------------------------
# Virtual firmware

@dataclass
class SyringeState:
    contents: dict = field(default_factory=dict)   # liquid -> uL
    lowered: bool = False
    capacity_ul: float = SYRINGE_CAPACITY_UL

    @property
    def volume_ul(self) -> float:
        return sum(self.contents.values())


@dataclass
class PumpState:
    position_steps: int = 0     # plunger travel = barrel displacement
    valve_port: int = 0
    contents: dict = field(default_factory=dict)


@dataclass
class VirtualState:
    carriage: tuple = (0.0, 0.0)
    syringes: dict = field(default_factory=lambda: {0: SyringeState()})
    pumps: dict = field(default_factory=lambda: {i: PumpState() for i in range(7)})
    vessels: dict = field(default_factory=dict)
    stirring: bool = False
    time_ms: float = 0.0

    @classmethod
    def initial(cls, layout: StageLayout) -> "VirtualState":
        return cls(vessels={name: dict(contents)
                            for name, contents in layout.vessel_initial_ul.items()})

    def total_liquid_ul(self) -> float:
        total = sum(sum(c.values()) for c in self.vessels.values())
        total += sum(s.volume_ul for s in self.syringes.values())
        total += sum(sum(p.contents.values()) for p in self.pumps.values())
        return total

    def to_json(self) -> str:
        payload = {
            "carriage": list(self.carriage),
            "time_ms": self.time_ms,
            "stirring": self.stirring,
            "syringes": {str(k): {"contents": s.contents, "lowered": s.lowered}
                         for k, s in self.syringes.items()},
            "pumps": {str(k): {"position_steps": p.position_steps,
                               "valve_port": p.valve_port, "contents": p.contents}
                      for k, p in self.pumps.items()},
            "vessels": self.vessels,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _mix_out(contents: dict, volume: float) -> dict:
    """Remove `volume` from a mixture proportionally; returns what was taken."""
    total = sum(contents.values())
    taken = {}
    if total <= 0 or volume <= 0:
        return taken
    frac = min(1.0, volume / total)
    for liq in list(contents):
        amount = contents[liq] * frac
        contents[liq] -= amount
        if contents[liq] <= 1e-12:
            del contents[liq]
        taken[liq] = amount
    return taken


def _mix_in(contents: dict, added: dict) -> None:
    for liq, amount in added.items():
        contents[liq] = contents.get(liq, 0.0) + amount


class VirtualRobot:
    """Deterministic interpreter for compiled programs."""

    def __init__(self, layout: StageLayout | None = None,
                 state: VirtualState | None = None):
        self.layout = layout if layout is not None else default_layout()
        self.state = state if state is not None else VirtualState.initial(self.layout)
        self.events: list[tuple] = []

    # -- helpers ------------------------------------------------------------

    def _vessel_at_carriage(self, pc: int) -> str:
        cx, cy = self.state.carriage
        for name, (lx, ly) in self.layout.locations.items():
            for ox, oy in self.layout.apparatus_offsets.values():
                if math.hypot(cx + ox - lx, cy + oy - ly) <= APPARATUS_TOLERANCE_MM:
                    return self.layout.location_vessel[name]
        raise StateFault(f"no vessel at carriage position ({cx}, {cy})", pc)

    def _log(self, pc, event, vessel, delta_ul):
        self.events.append((self.state.time_ms, pc, event, vessel, delta_ul))

    def _drawable(self, vessel: str) -> float:
        contents = self.state.vessels[vessel]
        retained = self.layout.vessel_retained_ul.get(vessel, {})
        free = 0.0
        for liq, amount in contents.items():
            free += max(0.0, amount - retained.get(liq, 0.0))
        return free

    def _draw_from_vessel(self, vessel: str, volume: float, pc: int) -> dict:
        contents = self.state.vessels[vessel]
        retained = self.layout.vessel_retained_ul.get(vessel, {})
        if sum(contents.values()) <= 0:
            raise StateFault(f"aspirating from empty vessel {vessel!r}", pc)
        if not retained:
            return _mix_out(contents, volume)
        # Liquids with a retained dead volume (the standing aqueous phase)
        # are drawn last and never below their dead volume; everything else
        # (solvated oil and solvent) comes out first.
        loose_keys = [liq for liq in contents if liq not in retained]
        loose = {liq: contents[liq] for liq in loose_keys}
        taken = _mix_out(loose, volume)
        for liq in loose_keys:
            if loose.get(liq, 0.0) <= 1e-12:
                del contents[liq]
            else:
                contents[liq] = loose[liq]
        remaining = volume - sum(taken.values())
        if remaining > 1e-12:
            for liq, dead in retained.items():
                avail = max(0.0, contents.get(liq, 0.0) - dead)
                amount = min(avail, remaining)
                if amount > 0:
                    contents[liq] -= amount
                    taken[liq] = taken.get(liq, 0.0) + amount
                    remaining -= amount
        return taken

    # -- instruction semantics ----------------------------------------------

    def _exec_move(self, pc, x, y):
        cx, cy = self.state.carriage
        self.state.time_ms += math.hypot(x - cx, y - cy) * CARRIAGE_MS_PER_MM
        self.state.carriage = (x, y)
        self._log(pc, "move", "", 0.0)

    def _exec_servo(self, pc, kind, args):
        syringe = self.state.syringes.setdefault(args[0], SyringeState())
        self.state.time_ms += SERVO_ACTION_MS
        if kind == "lower":
            syringe.lowered = True
            self._log(pc, "lower", "", 0.0)
        elif kind == "raise":
            syringe.lowered = False
            self._log(pc, "raise", "", 0.0)
        elif kind == "aspirate":
            volume = args[1]
            if not syringe.lowered:
                raise StateFault("aspirate with syringe raised", pc)
            if syringe.volume_ul + volume > syringe.capacity_ul + 1e-9:
                raise StateFault("syringe plunger over-travel", pc)
            vessel = self._vessel_at_carriage(pc)
            taken = self._draw_from_vessel(vessel, volume, pc)
            _mix_in(syringe.contents, taken)
            self._log(pc, "aspirate", vessel, -sum(taken.values()))
        elif kind == "dispense":
            volume = args[1]
            if not syringe.lowered:
                raise StateFault("dispense with syringe raised", pc)
            if syringe.volume_ul + 1e-9 < volume:
                raise StateFault("dispensing more than the syringe holds", pc)
            vessel = self._vessel_at_carriage(pc)
            given = _mix_out(syringe.contents, volume)
            _mix_in(self.state.vessels[vessel], given)
            self._log(pc, "dispense", vessel, sum(given.values()))

    def _port_vessel(self, pump: int, pc: int) -> str:
        target = self.layout.pump_ports[pump][self.state.pumps[pump].valve_port]
        return self._vessel_at_carriage(pc) if target == "carriage" else target

    def _exec_pump(self, pc, instr: PumpInstruction):
        pump = self.state.pumps[instr.pump]
        self.state.time_ms += instr.steps * instr.speed_ms
        if instr.motor == 1:
            pump.valve_port = instr.direction
            self._log(pc, "valve", "", 0.0)
            return
        cal = self.layout.pump_calibration_ul_per_step(instr.pump)
        vessel = self._port_vessel(instr.pump, pc)
        if instr.direction == 0:
            if pump.position_steps + instr.steps > PUMP_MAX_STEPS:
                raise StateFault(f"pump {instr.pump} plunger over-travel", pc)
            pump.position_steps += instr.steps
            taken = self._draw_from_vessel(vessel, instr.steps * cal, pc)
            _mix_in(pump.contents, taken)
            self._log(pc, "pump_draw", vessel, -sum(taken.values()))
        else:
            if pump.position_steps - instr.steps < 0:
                raise StateFault(f"pump {instr.pump} plunger over-travel", pc)
            pump.position_steps -= instr.steps
            given = _mix_out(pump.contents, instr.steps * cal)
            _mix_in(self.state.vessels[vessel], given)
            self._log(pc, "pump_push", vessel, sum(given.values()))

    # -- program execution ---------------------------------------------------

    def execute(self, program: str) -> VirtualState:
        for pc, parsed in enumerate(parse_program(program)):
            if parsed.kind == "move":
                self._exec_move(pc, *parsed.args)
            elif parsed.kind in ("lower", "raise", "aspirate", "dispense"):
                self._exec_servo(pc, parsed.kind, parsed.args)
            elif parsed.kind == "stir_on":
                self.state.stirring = True
                self._log(pc, "stir_on", "", 0.0)
            elif parsed.kind == "stir_off":
                self.state.stirring = False
                self._log(pc, "stir_off", "", 0.0)
            elif parsed.kind == "pump":
                self._exec_pump(pc, parsed.args[0])
        return self.state

    def events_csv(self) -> str:
        lines = ["time_ms,instruction_index,event,vessel,delta_ul"]
        lines += [f"{t!r},{pc},{event},{vessel},{delta!r}"
                  for t, pc, event, vessel, delta in self.events]
        return "".join(line + "\n" for line in lines)


def execute(program: str, layout: StageLayout | None = None,
            state: VirtualState | None = None) -> tuple[VirtualState, list]:
    """Run a program on a fresh (or supplied) virtual robot."""
    robot = VirtualRobot(layout=layout, state=state)
    robot.execute(program)
    return robot.state, robot.events


def execute_ops(ops, layout: StageLayout | None = None,
                state: VirtualState | None = None) -> tuple[VirtualState, list]:
    """Direct execution of a lab-operation list (compiles internally, so the
    0.1 mm quantization applies identically)."""
    if layout is None:
        layout = default_layout()
    return execute(compile_ops(ops, layout), layout=layout, state=state)
