"""Single RC charging fixtures: a source charging C through R.

These are the reference circuits for the charging-energy laws. The ramp
fixture charges C from a linear ramp of duration ``t_ramp`` and then waits
for the capacitor to settle; the step fixture switches the source in one
short edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .devices import PWL
from .engine import SimConfig, Waveform, transient
from .measure import (ChargingLaw, dissipated_energy, resistive_dissipation,
                      supply_energy)
from .netlist import Capacitor, Netlist, Resistor, VoltageSource

SETTLE = 15  # time constants waited after the source stops moving


def rc_netlist(r: float, c: float, spec) -> Netlist:
    return Netlist("rc charge", [
        VoltageSource("V1", "in", "0", spec),
        Resistor("R1", "in", "out", r),
        Capacitor("C1", "out", "0", c),
    ])


def linear_ramp_dissipation(law: ChargingLaw) -> float:
    """Exact loss for a linear ramp of finite duration, settle included.

    With ``x = RC/T``: ``C V^2 x (1 - x (1 - exp(-1/x)))``. Tends to the
    ``(RC/T) C V^2`` law for T >> RC and to ``C V^2 / 2`` as T -> 0.
    """
    x = law.r * law.c / law.t_ramp
    return law.c * law.vdd ** 2 * x * (1.0 - x * (1.0 - math.exp(-1.0 / x)))


@dataclass
class ChargeResult:
    waveform: Waveform
    supply: float
    dissipated: float
    resistive: float
    stored: float


def _result(w, c):
    vend = w.v("out")[-1]
    return ChargeResult(w, supply_energy(w, "V1", w.t0, w.t_end), dissipated_energy(w),
                        resistive_dissipation(w), 0.5 * c * vend * vend)


def ramp_charge(law: ChargingLaw, cfg: SimConfig | None = None, *,
                dt: float | None = None) -> ChargeResult:
    """Charge through a 0 -> vdd ramp lasting ``law.t_ramp``."""
    rc = law.r * law.c
    dt = dt if dt is not None else min(rc / 10, law.t_ramp / 100)
    n = rc_netlist(law.r, law.c, PWL(((0.0, 0.0), (law.t_ramp, law.vdd))))
    return _result(transient(n, cfg, dt, law.t_ramp + SETTLE * rc), law.c)


def step_charge(r: float, c: float, vdd: float, cfg: SimConfig | None = None, *,
                edge: float = 1e-12, dt: float | None = None,
                settle: float = 30) -> ChargeResult:
    """Charge through a source that jumps to vdd in ``edge`` seconds."""
    rc = r * c
    dt = dt if dt is not None else rc / 100
    n = rc_netlist(r, c, PWL(((0.0, 0.0), (edge, vdd))))
    return _result(transient(n, cfg, dt, settle * rc), c)
