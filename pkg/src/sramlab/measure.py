"""Energy and power metrics computed from transient waveforms.

Sign conventions: supply energy is positive when a source delivers energy
to the circuit and negative when the circuit returns energy to it, so a
ramped supply that takes charge back during its falling edge is credited
for the recovery. Dissipated energy is supply energy minus the increase in
capacitively stored energy over the window.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import CapElement, Waveform, capacitances
from .errors import UnknownSignal, WindowOutOfRange
from .netlist import Resistor, VoltageSource


def _segment(w: Waveform, y: np.ndarray, t0: float, t1: float):
    """Samples of ``y`` on [t0, t1], with interpolated end points."""
    eps = 1e-9 * w.dt
    if t1 < t0 or t0 < w.t0 - eps or t1 > w.t_end + eps:
        raise WindowOutOfRange(
            f"window [{t0:.6g}, {t1:.6g}] not inside waveform span [{w.t0:.6g}, {w.t_end:.6g}]")
    t = w.time
    inner = (t > t0 + eps) & (t < t1 - eps)
    tt = np.concatenate([[t0], t[inner], [t1]])
    yy = np.concatenate([[np.interp(t0, t, y)], y[inner], [np.interp(t1, t, y)]])
    return tt, yy


def _integrate(w, y, t0, t1):
    tt, yy = _segment(w, y, t0, t1)
    return float(np.trapezoid(yy, tt))


def _source(w: Waveform, name: str) -> VoltageSource:
    if w.netlist is None:
        raise UnknownSignal(name)
    for src in w.netlist.of_type(VoltageSource):
        if src.name == name:
            return src
    raise UnknownSignal(name)


def source_power(w: Waveform, source: str) -> np.ndarray:
    """Instantaneous power delivered by ``source`` (W, positive = outflow)."""
    src = _source(w, source)
    v = w.v(src.npos) - w.v(src.nneg)
    return -v * w.i(source)


def supply_energy(w: Waveform, source: str, t0: float, t1: float) -> float:
    """Net energy (J) delivered by one source over [t0, t1]."""
    return _integrate(w, source_power(w, source), t0, t1)


def gross_supply_energy(w: Waveform, source: str, t0: float, t1: float) -> float:
    """Energy drawn from the source, ignoring what flows back into it."""
    return _integrate(w, np.maximum(source_power(w, source), 0.0), t0, t1)


def stored_energy(w: Waveform, caps, t: float) -> float:
    total = 0.0
    for c in caps:
        v = w.at(f"v({c.n1})", t) if c.n1 != "0" else 0.0
        v -= w.at(f"v({c.n2})", t) if c.n2 != "0" else 0.0
        total += 0.5 * c.value * v * v
    return total


def dissipated_energy(w: Waveform, sources=None, caps=None, t0=None, t1=None) -> float:
    """Supply energy minus the change in stored capacitive energy.

    ``sources`` defaults to every voltage source of the waveform's netlist
    and ``caps`` to every capacitance the engine integrated.
    """
    t0 = w.t0 if t0 is None else t0
    t1 = w.t_end if t1 is None else t1
    if sources is None:
        sources = [s.name for s in w.netlist.of_type(VoltageSource)]
    if caps is None:
        caps = capacitances(w.netlist)
    supplied = sum(supply_energy(w, s, t0, t1) for s in sources)
    return supplied - (stored_energy(w, caps, t1) - stored_energy(w, caps, t0))


def resistive_dissipation(w: Waveform, t0=None, t1=None) -> float:
    """Independent cross-check: sum of the integral of v^2/R over resistors."""
    t0 = w.t0 if t0 is None else t0
    t1 = w.t_end if t1 is None else t1
    total = 0.0
    for r in w.netlist.of_type(Resistor):
        v = w.v(r.n1) - w.v(r.n2)
        total += _integrate(w, v * v / r.value, t0, t1)
    return total


def leakage_currents(w: Waveform, devices, t0: float, t1: float) -> dict:
    """Time-averaged channel current magnitude of each named MOSFET."""
    out = {}
    for name in devices:
        out[name] = _integrate(w, np.abs(w[f"id({name})"]), t0, t1) / (t1 - t0)
    return out


@dataclass(frozen=True)
class ChargingLaw:
    r: float
    c: float
    vdd: float
    t_ramp: float

    def __post_init__(self):
        if not (self.r > 0 and self.c > 0 and self.vdd > 0 and self.t_ramp > 0):
            raise ValueError("ChargingLaw parameters must all be > 0")


def adiabatic_energy_law(law: ChargingLaw) -> float:
    """Energy lost charging C to vdd through R with a linear ramp of duration T.

    Valid for T >> RC: ``(RC/T) * C * vdd**2``.
    """
    return law.r * law.c / law.t_ramp * law.c * law.vdd ** 2


def conventional_charge_energy(c: float, vdd: float) -> tuple:
    """(energy drawn from a step supply, energy dissipated) for one charge."""
    return c * vdd ** 2, 0.5 * c * vdd ** 2


@dataclass
class PowerReport:
    label: str
    window: tuple
    source_energy: dict
    supply_energy: float
    gross_supply_energy: float
    stored_energy_delta: float
    dissipated_energy: float
    average_power: float
    leakage: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def power_report(w: Waveform, t0: float, t1: float, *, label: str = "",
                 sources=None, caps=None, leak_devices=(), leak_windows=None) -> PowerReport:
    """Energy bookkeeping for one window.

    ``leak_windows`` lists the sub-windows over which leakage is averaged
    (default: the report window itself).
    """
    if sources is None:
        sources = [s.name for s in w.netlist.of_type(VoltageSource)]
    if caps is None:
        caps = capacitances(w.netlist)
    per = {s: supply_energy(w, s, t0, t1) for s in sources}
    gross = sum(gross_supply_energy(w, s, t0, t1) for s in sources)
    total = sum(per.values())
    d_stored = stored_energy(w, caps, t1) - stored_energy(w, caps, t0)
    dissipated = total - d_stored
    leakage = {}
    if leak_devices:
        windows = leak_windows or [(t0, t1)]
        span = sum(b - a for a, b in windows)
        for name in leak_devices:
            acc = sum(leakage_currents(w, [name], a, b)[name] * (b - a) for a, b in windows)
            leakage[name] = acc / span
    return PowerReport(label, (t0, t1), per, total, gross, d_stored, dissipated,
                       dissipated / (t1 - t0), leakage)


__all__ = ["CapElement", "ChargingLaw", "PowerReport", "adiabatic_energy_law",
           "conventional_charge_energy", "dissipated_energy", "gross_supply_energy",
           "leakage_currents", "power_report", "resistive_dissipation", "source_power",
           "stored_energy", "supply_energy"]
