"""Device constitutive relations.

Level-1 (Shichman-Hodges) MOSFET with channel-length modulation and an
optional exponential subthreshold term, plus the independent voltage
source waveforms (DC, PWL, periodic trapezoid RAMP, SINE).

The MOSFET core is written on numpy arrays so the engine can evaluate all
transistors of a circuit in one call; the scalar helpers wrap it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidValue

THERMAL_VOLTAGE = 0.02585


@dataclass(frozen=True)
class ModelCard:
    """Level-1 MOSFET parameters.

    ``vt0`` is stored as a positive magnitude for both polarities. The
    capacitances are per unit gate area and are treated as constant.
    ``leak_i0`` is the subthreshold current per square at ``vgs == vt0``;
    the default of 0 gives the pure square-law model.
    """

    name: str
    kind: str  # "NMOS" | "PMOS"
    vt0: float
    kp: float
    lambda_: float = 0.0
    cgs_per_area: float = 0.0
    cgd_per_area: float = 0.0
    leak_i0: float = 0.0
    leak_n: float = 1.5
    temp_vt: float = THERMAL_VOLTAGE

    def __post_init__(self):
        object.__setattr__(self, "name", self.name.lower())
        if self.kind not in ("NMOS", "PMOS"):
            raise InvalidValue(f"model {self.name}: kind must be NMOS or PMOS, got {self.kind!r}")
        if not self.vt0 > 0:
            raise InvalidValue(f"model {self.name}: vt0 must be a positive magnitude")
        if not self.kp > 0:
            raise InvalidValue(f"model {self.name}: kp must be > 0")
        if self.lambda_ < 0 or self.leak_i0 < 0:
            raise InvalidValue(f"model {self.name}: lambda and leak_i0 must be >= 0")
        if self.leak_n < 1:
            raise InvalidValue(f"model {self.name}: leak_n must be >= 1")
        if self.cgs_per_area < 0 or self.cgd_per_area < 0:
            raise InvalidValue(f"model {self.name}: capacitances must be >= 0")
        if not self.temp_vt > 0:
            raise InvalidValue(f"model {self.name}: temp_vt must be > 0")

    @property
    def polarity(self) -> int:
        return 1 if self.kind == "NMOS" else -1


# Representative 180 nm-class cards. These are not foundry data: they are
# round numbers chosen so a 1.8 V 6T cell is bistable, writable and
# read-stable at the default sizing.
COX_180 = 8.6e-3  # F/m^2, ~4 nm oxide

NMOS_180 = ModelCard(
    name="nmos180", kind="NMOS", vt0=0.45, kp=170e-6, lambda_=0.05,
    cgs_per_area=COX_180 / 2, cgd_per_area=COX_180 / 2,
    leak_i0=3e-7, leak_n=1.5)

PMOS_180 = ModelCard(
    name="pmos180", kind="PMOS", vt0=0.45, kp=60e-6, lambda_=0.05,
    cgs_per_area=COX_180 / 2, cgd_per_area=COX_180 / 2,
    leak_i0=1e-7, leak_n=1.5)

VDD_180 = 1.8


def square_law(vgs, vds, beta, vt0, lam, leak, nvt, vt):
    """Normalized channel current and its partials, for ``vds >= 0``.

    All arguments broadcast. ``beta`` is ``kp*W/L`` and ``leak`` is
    ``leak_i0*W/L``. Returns ``(ids, gm, gds)``.

    The subthreshold term is clamped at its threshold value above vt0 so
    the total current stays continuous when ``leak > 0``.
    """
    vgs = np.asarray(vgs, dtype=float)
    vds = np.asarray(vds, dtype=float)
    vov = vgs - vt0
    on = vov > 0
    triode = on & (vds < vov)
    sat = on & ~triode

    clm = 1.0 + lam * vds
    vovp = np.where(on, vov, 0.0)

    i_tri = beta * (vovp * vds - 0.5 * vds * vds)
    i_sat = 0.5 * beta * vovp * vovp
    ids = np.where(triode, i_tri * clm, np.where(sat, i_sat * clm, 0.0))
    gm = np.where(triode, beta * vds * clm, np.where(sat, beta * vovp * clm, 0.0))
    gds = np.where(triode, beta * (vovp - vds) * clm + lam * i_tri,
                   np.where(sat, lam * i_sat, 0.0))

    # exponential below threshold, pinned at its threshold value above it
    ex = np.exp(np.minimum(vov, 0.0) / nvt)
    ed = np.exp(-vds / vt)
    sub = leak * ex
    ids = ids + sub * (1.0 - ed)
    gm = gm + np.where(on, 0.0, sub * (1.0 - ed) / nvt)
    gds = gds + sub * ed / vt
    return ids, gm, gds


def terminal_currents(polarity, vd, vg, vs, beta, vt0, lam, leak, nvt, vt):
    """Drain current and its partials with respect to the terminal voltages.

    Handles PMOS by polarity reflection and ``vds < 0`` by swapping the
    roles of drain and source. Returns ``(id, did_dvd, did_dvg, did_dvs)``
    where ``id`` is the current flowing into the drain terminal.
    """
    p = np.asarray(polarity, dtype=float)
    vgs = p * (np.asarray(vg) - vs)
    vds = p * (np.asarray(vd) - vs)
    rev = vds < 0
    vgs_n = np.where(rev, vgs - vds, vgs)
    vds_n = np.abs(vds)
    i, gm, gds = square_law(vgs_n, vds_n, beta, vt0, lam, leak, nvt, vt)
    idr = np.where(rev, -p * i, p * i)
    dvg = np.where(rev, -gm, gm)
    dvd = np.where(rev, gm + gds, gds)
    dvs = np.where(rev, -gds, -gm - gds)
    return idr, dvd, dvg, dvs


def _geometry(card: ModelCard, w: float, l: float):
    if not (w > 0 and l > 0):
        raise InvalidValue("MOSFET W and L must be > 0")
    ratio = w / l
    return (card.kp * ratio, card.vt0, card.lambda_, card.leak_i0 * ratio,
            card.leak_n * card.temp_vt, card.temp_vt)


def mosfet_ids(card: ModelCard, w: float, l: float, vgs: float, vds: float) -> float:
    """Drain current (A, into the drain) for terminal voltages vgs, vds.

    >>> card = ModelCard("n", "NMOS", vt0=0.5, kp=100e-6)
    >>> round(mosfet_ids(card, 2e-6, 1e-6, 1.5, 2.0), 12)
    0.0001
    """
    params = _geometry(card, w, l)
    i, *_ = terminal_currents(card.polarity, vds, vgs, 0.0, *params)
    return float(i)


@dataclass(frozen=True)
class DeviceEval:
    """Linearized MOSFET at one operating point.

    ``currents`` are per terminal (d, g, s, b), positive into the device.
    ``conductances`` holds gm, gds (normalized-frame partials) and the
    terminal Jacobian row ``did_dvd``, ``did_dvg``, ``did_dvs``.
    ``ieq`` is the companion current source making the linear model exact
    at the evaluation point: ``id = did_dvd*vd + did_dvg*vg + did_dvs*vs + ieq``.
    """

    currents: dict
    conductances: dict
    capacitances: dict
    ieq: float


def mosfet_stamp(card: ModelCard, w: float, l: float,
                 vd: float, vg: float, vs: float, vb: float = 0.0) -> DeviceEval:
    params = _geometry(card, w, l)
    i, dvd, dvg, dvs = (float(x) for x in terminal_currents(card.polarity, vd, vg, vs, *params))
    # normalized-frame partials for reporting
    p = card.polarity
    vgs, vds = p * (vg - vs), p * (vd - vs)
    if vds < 0:
        vgs, vds = vgs - vds, -vds
    _, gm, gds = square_law(vgs, vds, *params)
    area = w * l
    return DeviceEval(
        currents={"d": i, "g": 0.0, "s": -i, "b": 0.0},
        conductances={"gm": float(gm), "gds": float(gds),
                      "did_dvd": dvd, "did_dvg": dvg, "did_dvs": dvs},
        capacitances={"cgs": card.cgs_per_area * area, "cgd": card.cgd_per_area * area},
        ieq=i - dvd * vd - dvg * vg - dvs * vs,
    )


# -- independent source waveforms -----------------------------------------

@dataclass(frozen=True)
class DC:
    volts: float

    def value(self, t):
        if np.ndim(t):
            return np.full(np.shape(t), float(self.volts))
        return float(self.volts)


@dataclass(frozen=True)
class PWL:
    points: tuple  # ((t, v), ...), strictly increasing t

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise InvalidValue("PWL needs at least one point")
        ts = [t for t, _ in pts]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidValue("PWL times must be strictly increasing")

    def value(self, t):
        ts = np.array([p[0] for p in self.points])
        vs = np.array([p[1] for p in self.points])
        out = np.interp(t, ts, vs)
        return out if np.ndim(t) else float(out)


@dataclass(frozen=True)
class Ramp:
    """Periodic trapezoid: ``v_start`` until ``delay``, then rise to
    ``v_end`` over ``rise``, hold, fall back over ``fall``, rest at
    ``v_start`` until the period ends, repeat."""

    v_start: float
    v_end: float
    delay: float
    rise: float
    hold: float
    fall: float
    period: float

    def __post_init__(self):
        if not (self.rise > 0 and self.fall > 0):
            raise InvalidValue("RAMP rise and fall must be > 0")
        if self.delay < 0 or self.hold < 0:
            raise InvalidValue("RAMP delay and hold must be >= 0")
        if self.period < self.rise + self.hold + self.fall * (1 - 1e-12):
            raise InvalidValue("RAMP period must cover rise + hold + fall")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        tau = np.mod(np.maximum(t - self.delay, 0.0), self.period)
        dv = self.v_end - self.v_start
        r, h, f = self.rise, self.hold, self.fall
        frac = np.where(tau < r, tau / r,
               np.where(tau < r + h, 1.0,
               np.where(tau < r + h + f, 1.0 - (tau - r - h) / f, 0.0)))
        out = np.where(t < self.delay, self.v_start, self.v_start + dv * frac)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Sine:
    offset: float
    amplitude: float
    frequency: float
    delay: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise InvalidValue("SINE frequency must be > 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.delay, self.offset,
                       self.offset + self.amplitude
                       * np.sin(2 * math.pi * self.frequency * (t - self.delay)))
        return out if out.ndim else float(out)


SourceSpec = Union[DC, PWL, Ramp, Sine]


def source_value(spec: SourceSpec, t):
    """Source voltage at time ``t`` (scalar or array)."""
    return spec.value(t)
