"""6T SRAM cell, its test bench, and the conventional-vs-adiabatic experiments.

The bench drives the cell through ideal sources:

* ``VDD``: the cell supply rail (DC, or a ramped/sinusoidal "AC" supply);
* ``WL``: the wordline, pulsed to vdd in the middle of a phase;
* ``BLD``/``BLBD``: bitline drivers behind a series resistance and an NMOS
  column switch (gate ``SEL``, boosted above vdd so it passes a full
  level). Opening the switch floats the bitline on a 10 Mohm tie, which is
  how a read releases the precharged bitlines.

Time is divided into phases of one supply period each: ``ramp`` rising,
``hold`` at full amplitude, ``ramp`` falling. Wordline pulses and switch
windows sit inside the full-amplitude part, so the logical stimulus is the
same under both supplies. Every run starts with an unmeasured preamble
phase that writes the initial bit; with an adiabatic supply the rail starts
at 0 V and the cell has no state until something is written.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .devices import DC, NMOS_180, PMOS_180, PWL, ModelCard, Ramp
from .engine import SimConfig, Waveform, transient
from .errors import ReadUpset, WriteFailed
from .measure import PowerReport, power_report
from .netlist import Capacitor, Mosfet, Netlist, Resistor, VoltageSource

ACCESS = ("MN3", "MN4")
SENSE_THRESHOLD = 0.1  # V, bitline differential the sense amplifier resolves


@dataclass(frozen=True)
class SramCellParams:
    nmos: ModelCard = NMOS_180
    pmos: ModelCard = PMOS_180
    driver_wl: float = 4.0
    access_wl: float = 2.0
    load_wl: float = 2.0
    length: float = 180e-9
    vdd: float = 1.8
    c_bitline: float = 10e-15
    r_driver: float = 1e3
    switch_wl: float = 8.0
    switch_gate: float = 3.3
    r_release: float = 10e6

    def __post_init__(self):
        for name in ("driver_wl", "access_wl", "load_wl", "length", "vdd",
                     "c_bitline", "r_driver", "switch_wl", "switch_gate", "r_release"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SramCellParams.{name} must be > 0")

    @property
    def cell_ratio(self) -> float:
        return self.driver_wl / self.access_wl

    def with_cell_ratio(self, ratio: float) -> "SramCellParams":
        """Same cell with the driver resized to give ``ratio``."""
        return replace(self, driver_wl=ratio * self.access_wl)

    def estimated_rc(self) -> float:
        """Bitline time constant: driver resistance plus the column switch
        on-resistance when passing vdd, times the bitline capacitance."""
        vov = self.switch_gate - self.vdd - self.nmos.vt0
        r_switch = 1.0 / (self.nmos.kp * self.switch_wl * max(vov, 0.1))
        return (self.r_driver + r_switch) * self.c_bitline


def build_6t_cell(p: SramCellParams) -> Netlist:
    """The bare cell: cross-coupled inverters, two access NMOS, bitline caps.

    Device names follow the usual figure labels: MP1/MN1 drive node A,
    MP2/MN2 drive node B, MN3/MN4 are the access transistors.
    """
    L = p.length
    n, pm = p.nmos.name, p.pmos.name
    devices = [
        Mosfet("MP1", "A", "B", "VDD", "VDD", pm, p.load_wl * L, L),
        Mosfet("MN1", "A", "B", "0", "0", n, p.driver_wl * L, L),
        Mosfet("MP2", "B", "A", "VDD", "VDD", pm, p.load_wl * L, L),
        Mosfet("MN2", "B", "A", "0", "0", n, p.driver_wl * L, L),
        Mosfet("MN3", "BL", "WL", "A", "0", n, p.access_wl * L, L),
        Mosfet("MN4", "BLB", "WL", "B", "0", n, p.access_wl * L, L),
        Capacitor("CBL", "BL", "0", p.c_bitline),
        Capacitor("CBLB", "BLB", "0", p.c_bitline),
    ]
    return Netlist("6T SRAM cell", devices, [p.nmos, p.pmos])


def switch_card(p: SramCellParams) -> ModelCard:
    """Column-switch card: the cell's NMOS without gate capacitance or
    leakage, so releasing a bitline does not kick it through gate
    feedthrough and the switch adds no energy of its own."""
    return replace(p.nmos, name="nswitch", cgs_per_area=0.0, cgd_per_area=0.0, leak_i0=0.0)


# -- supplies and timing --------------------------------------------------

class SupplyKind(str, enum.Enum):
    CONVENTIONAL = "conventional"
    ADIABATIC = "adiabatic"


@dataclass(frozen=True)
class Supply:
    """How the rail and bitline drivers are powered.

    ``shape`` is ``"ramp"`` (trapezoid) or ``"sine"`` (``vdd*sin^2``) for the
    adiabatic kind. ``targets`` is ``"rail+bitlines"`` or ``"rail"``; with
    ``"rail"`` the bitline drivers keep conventional edges.
    """

    kind: SupplyKind = SupplyKind.CONVENTIONAL
    shape: str = "ramp"
    targets: str = "rail+bitlines"

    def __post_init__(self):
        object.__setattr__(self, "kind", SupplyKind(self.kind))
        if self.shape not in ("ramp", "sine"):
            raise ValueError(f"unknown supply shape {self.shape!r}")
        if self.targets not in ("rail+bitlines", "rail"):
            raise ValueError(f"unknown supply targets {self.targets!r}")

    @property
    def adiabatic(self) -> bool:
        return self.kind is SupplyKind.ADIABATIC


CONVENTIONAL = Supply()
ADIABATIC = Supply(SupplyKind.ADIABATIC)


@dataclass(frozen=True)
class Timing:
    """Phase timing. ``ramp`` is the adiabatic rise/fall time; conventional
    edges take ``edge``. Wordline and switch events are placed as fractions
    of the full-amplitude ``hold`` segment."""

    ramp: float = 1e-9
    hold: float = 1e-9
    edge: float = 50e-12
    dt: float | None = None
    wl_on: float = 0.2
    wl_off: float = 0.8
    sel_off: float = 0.1
    sel_on: float = 0.9

    def __post_init__(self):
        if not (self.ramp > 0 and self.hold > 0 and self.edge > 0):
            raise ValueError("ramp, hold and edge must be > 0")
        if not 0 < self.sel_off < self.wl_on < self.wl_off < self.sel_on < 1:
            raise ValueError("need 0 < sel_off < wl_on < wl_off < sel_on < 1")
        if self.edge >= (self.wl_off - self.wl_on) * self.hold:
            raise ValueError("edge must be shorter than the wordline pulse")

    @property
    def period(self) -> float:
        return 2 * self.ramp + self.hold

    @property
    def step(self) -> float:
        return self.dt if self.dt is not None else self.edge / 5

    def at(self, frac: float) -> float:
        """Offset into a phase of a fraction of the hold segment."""
        return self.ramp + frac * self.hold


# -- sequences ------------------------------------------------------------

OPS = ("write0", "write1", "read", "hold")


@dataclass(frozen=True)
class Phase:
    op: str
    t0: float
    t1: float
    wordline: bool
    measured: bool = True

    @property
    def bl_levels(self) -> tuple:
        if self.op == "write0":
            return (0, 1)
        if self.op == "write1":
            return (1, 0)
        return (1, 1)


@dataclass(frozen=True)
class Sequence:
    netlist: Netlist
    phases: tuple
    params: SramCellParams
    supply: Supply
    timing: Timing
    initial_bit: int

    @property
    def tstop(self) -> float:
        return self.phases[-1].t1

    @property
    def window(self) -> tuple:
        """Measurement window: every phase after the preamble."""
        measured = [ph for ph in self.phases if ph.measured]
        return (measured[0].t0, measured[-1].t1)

    @property
    def nodeset(self) -> dict:
        v = self.params.vdd
        return {"A": v * self.initial_bit, "B": v * (1 - self.initial_bit)}

    def phase_windows(self, op: str) -> list:
        return [(ph.t0, ph.t1) for ph in self.phases if ph.op == op and ph.measured]

    def off_windows(self) -> list:
        """Measured intervals with the wordline low, where the access
        transistors only leak: whole hold phases if there are any,
        otherwise the parts of each phase outside the wordline pulse."""
        holds = self.phase_windows("hold")
        if holds:
            return holds
        t = self.timing
        out = []
        for ph in self.phases:
            if not ph.measured:
                continue
            if ph.wordline:
                out += [(ph.t0, ph.t0 + t.at(t.wl_on)),
                        (ph.t0 + t.at(t.wl_off) + t.edge, ph.t1)]
            else:
                out.append((ph.t0, ph.t1))
        return out

    def check_time(self, ph: Phase) -> float:
        """End of the full-amplitude segment of a phase."""
        return ph.t0 + self.timing.ramp + self.timing.hold


def _step_pwl(levels, starts, edge, v, tstop):
    pts = [(0.0, levels[0] * v)]
    for prev, new, t in zip(levels, levels[1:], starts[1:]):
        if new != prev:
            pts += [(t, prev * v), (t + edge, new * v)]
    pts.append((tstop, levels[-1] * v))
    return PWL(_dedupe(pts))


def _pulse_pwl(windows, edge, low, high, tstop):
    pts = [(0.0, low)]
    for on, off in windows:
        pts += [(on, low), (on + edge, high), (off, high), (off + edge, low)]
    pts.append((tstop, low))
    return PWL(_dedupe(pts))


def _dedupe(pts):
    out = []
    for t, v in pts:
        if out and t <= out[-1][0] + 1e-18:
            out[-1] = (out[-1][0], v) if abs(t - out[-1][0]) <= 1e-18 else out[-1]
            continue
        out.append((t, v))
    return tuple(out)


def _shape_points(t0, timing, vdd, shape, samples=48):
    if shape == "ramp":
        return [(t0, 0.0), (t0 + timing.ramp, vdd),
                (t0 + timing.ramp + timing.hold, vdd), (t0 + timing.period, 0.0)]
    ts = np.linspace(0.0, timing.period, samples + 1)
    return [(t0 + t, vdd * math.sin(math.pi * t / timing.period) ** 2) for t in ts]


def _gated_pwl(levels, starts, timing, vdd, shape, tstop):
    pts = []
    for level, t0 in zip(levels, starts):
        if level:
            pts += _shape_points(t0, timing, vdd, shape)
        else:
            pts += [(t0, 0.0), (t0 + timing.period, 0.0)]
    pts.append((tstop, 0.0))
    return PWL(_dedupe(pts))


def build_sequence(p: SramCellParams, ops, supply: Supply = CONVENTIONAL,
                   timing: Timing = Timing(), *, initial_bit: int = 1,
                   wordline: bool = True) -> Sequence:
    """Bench netlist for a list of operations, after a preamble write.

    ``wordline=False`` keeps WL low in the measured phases (fault injection).
    """
    for op in ops:
        if op not in OPS:
            raise ValueError(f"unknown SRAM operation {op!r}; expected one of {OPS}")
    P = timing.period
    all_ops = [f"write{initial_bit}"] + list(ops)
    phases = tuple(
        Phase(op, k * P, (k + 1) * P,
              wordline=(k == 0 or (wordline and op != "hold")), measured=k > 0)
        for k, op in enumerate(all_ops))
    tstop = phases[-1].t1
    starts = [ph.t0 for ph in phases]
    vdd, e = p.vdd, timing.edge

    wl = _pulse_pwl([(ph.t0 + timing.at(timing.wl_on), ph.t0 + timing.at(timing.wl_off))
                     for ph in phases if ph.wordline], e, 0.0, vdd, tstop)
    sel = _pulse_pwl([(ph.t0 + timing.at(timing.sel_off), ph.t0 + timing.at(timing.sel_on))
                      for ph in phases if ph.op == "read"], e, p.switch_gate, 0.0, tstop)
    bl = [ph.bl_levels[0] for ph in phases]
    blb = [ph.bl_levels[1] for ph in phases]
    if supply.adiabatic:
        if supply.shape == "ramp":
            rail = Ramp(0.0, vdd, 0.0, timing.ramp, timing.hold, timing.ramp, P)
        else:
            rail = PWL(_dedupe([pt for t0 in starts
                                for pt in _shape_points(t0, timing, vdd, "sine")]))
    else:
        rail = DC(vdd)
    if supply.adiabatic and supply.targets == "rail+bitlines":
        vbl = _gated_pwl(bl, starts, timing, vdd, supply.shape, tstop)
        vblb = _gated_pwl(blb, starts, timing, vdd, supply.shape, tstop)
    else:
        vbl = _step_pwl(bl, starts, e, vdd, tstop)
        vblb = _step_pwl(blb, starts, e, vdd, tstop)

    L = p.length
    cell = build_6t_cell(p)
    sw = switch_card(p)
    bench = [
        VoltageSource("VVDD", "VDD", "0", rail),
        VoltageSource("VWL", "WL", "0", wl),
        VoltageSource("VBL", "BLD", "0", vbl),
        VoltageSource("VBLB", "BLBD", "0", vblb),
        VoltageSource("VSEL", "SEL", "0", sel),
        Resistor("RBL", "BLD", "BLS", p.r_driver),
        Resistor("RBLB", "BLBD", "BLBS", p.r_driver),
        Mosfet("MSW1", "BL", "SEL", "BLS", "0", sw.name, p.switch_wl * L, L),
        Mosfet("MSW2", "BLB", "SEL", "BLBS", "0", sw.name, p.switch_wl * L, L),
        Resistor("RTBL", "BL", "VDD", p.r_release),
        Resistor("RTBLB", "BLB", "VDD", p.r_release),
    ]
    title = f"6T SRAM bench: {' '.join(ops)} ({supply.kind.value})"
    netlist = Netlist(title, cell.devices + tuple(bench), [p.nmos, p.pmos, sw])
    return Sequence(netlist, phases, p, supply, timing, initial_bit)


def write_sequence(p: SramCellParams, bit: int, supply: Supply = CONVENTIONAL,
                   timing: Timing = Timing(), *, initial_bit: int | None = None,
                   wordline: bool = True) -> Sequence:
    """Write ``bit`` into a cell that holds ``initial_bit`` (default: the
    opposite value, so the write must flip the cell)."""
    if initial_bit is None:
        initial_bit = 1 - bit
    return build_sequence(p, [f"write{bit}"], supply, timing,
                          initial_bit=initial_bit, wordline=wordline)


def read_sequence(p: SramCellParams, supply: Supply = CONVENTIONAL,
                  timing: Timing = Timing(), *, stored: int = 1,
                  wordline: bool = True) -> Sequence:
    return build_sequence(p, ["read"], supply, timing, initial_bit=stored, wordline=wordline)


def hold_sequence(p: SramCellParams, supply: Supply = CONVENTIONAL,
                  timing: Timing = Timing(), *, stored: int = 1, phases: int = 1) -> Sequence:
    return build_sequence(p, ["hold"] * phases, supply, timing, initial_bit=stored)


# -- running --------------------------------------------------------------

@dataclass
class PhaseOutcome:
    op: str
    t0: float
    t1: float
    stored_before: int
    stored_after: int
    v_a: float
    v_b: float
    differential: float | None = None
    read_bit: int | None = None
    ok: bool = True


@dataclass
class SequenceRun:
    sequence: Sequence
    waveform: Waveform
    outcomes: list

    @property
    def final_bit(self) -> int:
        return self.outcomes[-1].stored_after

    def outcome(self, op: str) -> PhaseOutcome:
        return next(o for o in self.outcomes if o.op == op)


def _stored(w, t):
    return int(w.at("v(A)", t) > w.at("v(B)", t))


def simulate(seq: Sequence, cfg: SimConfig | None = None, *, check: bool = True) -> SequenceRun:
    """Run the bench transient and grade every measured phase.

    With ``check`` a failed write raises :class:`WriteFailed` and a read
    that flips the cell issues a :class:`ReadUpset` warning.
    """
    w = transient(seq.netlist, cfg, seq.timing.step, seq.tstop, nodeset=seq.nodeset)
    t = seq.timing
    vdd = seq.params.vdd
    outcomes = []
    before = seq.initial_bit
    for ph in seq.phases:
        tc = seq.check_time(ph)
        va, vb = w.at("v(A)", tc), w.at("v(B)", tc)
        after = int(va > vb)
        out = PhaseOutcome(ph.op, ph.t0, ph.t1, before, after, va, vb)
        if ph.op.startswith("write"):
            bit = int(ph.op[-1])
            dest = va if bit else vb
            out.ok = dest > vdd / 2
            if check and not out.ok and ph.measured:
                raise WriteFailed(ph.op, "A" if bit else "B", dest, vdd / 2)
        elif ph.op == "read":
            ts = ph.t0 + t.at(t.wl_off)
            diff = w.at("v(BL)", ts) - w.at("v(BLB)", ts)
            out.differential = diff
            out.read_bit = int(diff > 0) if abs(diff) >= SENSE_THRESHOLD else None
            out.ok = after == before
            if check and not out.ok:
                warnings.warn(ReadUpset(
                    f"cell flipped from {before} to {after} during read at t={ph.t0:.3g} s "
                    f"(cell ratio {seq.params.cell_ratio:.3g})"), stacklevel=2)
        else:
            out.ok = after == before
        if ph.measured:
            outcomes.append(out)
        before = after
    return SequenceRun(seq, w, outcomes)


# -- experiments ----------------------------------------------------------

class Mode(str, enum.Enum):
    WRITE0_WRITE1 = "write01"
    WRITE_HOLD = "write-hold"
    WRITE_READ = "write-read"


MODE_OPS = {
    Mode.WRITE0_WRITE1: ("write0", "write1"),
    Mode.WRITE_HOLD: ("write0", "hold", "write1", "hold"),
    Mode.WRITE_READ: ("write0", "read", "write1", "read"),
}


@dataclass(frozen=True)
class ExperimentPlan:
    mode: Mode = Mode.WRITE0_WRITE1
    supply: Supply = ADIABATIC
    baseline: Supply = CONVENTIONAL
    timing: Timing = Timing()
    initial_bit: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    conventional: PowerReport
    adiabatic: PowerReport
    reduction: float
    runs: dict = field(default_factory=dict)

    @property
    def reduction_percent(self) -> float:
        return 100.0 * self.reduction


def measure_run(run: SequenceRun, label: str) -> PowerReport:
    seq = run.sequence
    t0, t1 = seq.window
    return power_report(run.waveform, t0, t1, label=label,
                        leak_devices=ACCESS, leak_windows=seq.off_windows())


def run_experiment(plan: ExperimentPlan, p: SramCellParams = SramCellParams(),
                   cfg: SimConfig | None = None) -> ExperimentResult:
    """Run the same stimulus under the baseline and the test supply.

    ``reduction`` is the fractional drop in average dissipated power,
    ``(P_baseline - P_test) / P_baseline``.
    """
    ops = MODE_OPS[plan.mode]
    runs, reports = {}, {}
    for arm, supply in (("conventional", plan.baseline), ("adiabatic", plan.supply)):
        seq = build_sequence(p, ops, supply, plan.timing, initial_bit=plan.initial_bit)
        run = simulate(seq, cfg)
        runs[arm] = run
        reports[arm] = measure_run(run, arm)
    p_conv = reports["conventional"].average_power
    p_adia = reports["adiabatic"].average_power
    return ExperimentResult(plan, reports["conventional"], reports["adiabatic"],
                            (p_conv - p_adia) / p_conv, runs)
