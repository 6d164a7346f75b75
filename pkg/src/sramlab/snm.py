"""Butterfly curves and static noise margins.

The two half-cell transfer curves are plotted in one frame: curve 1 as
``y = f1(x)`` and curve 2 mirrored across ``y = x`` (the points
``(f2(s), s)``). The largest axis-aligned square that fits in a lobe of
this butterfly is found by rotating the frame by 45 degrees:
``u = (x + y)/sqrt(2)``, ``v = (y - x)/sqrt(2)``. Both curves are
monotone in ``v``, and for a pair of decreasing curves a square fits iff
its lower-left and upper-right corners do. Those corners share the same
``v``, so the largest diagonal in a lobe is the largest ``u`` gap between
the curves at equal ``v``, and the side is that gap over sqrt(2).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .devices import DC
from .engine import SimConfig, dc_sweep
from .errors import DegenerateLobes, NoUnityGainPoint
from .netlist import Mosfet, Netlist, VoltageSource

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class Curve:
    """Ordered (x, y) samples.

    Transfer curves from a sweep have strictly increasing x. A mirrored
    curve keeps the order of the original sweep and is only required to be
    finite.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("curve x and y must be 1-D arrays of equal length")
        if len(x) < 2:
            raise ValueError("a curve needs at least 2 points")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("curve samples must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.x)

    def __repr__(self):
        return (f"Curve({len(self.x)} points, x {self.x[0]:.4g}..{self.x[-1]:.4g}, "
                f"y {self.y[0]:.4g}..{self.y[-1]:.4g})")

    def __eq__(self, other):
        return (isinstance(other, Curve) and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y))

    @property
    def increasing(self) -> bool:
        return bool(np.all(np.diff(self.x) > 0))

    def mirrored(self) -> "Curve":
        """Reflection across y = x."""
        return Curve(self.y, self.x)

    def scaled(self, k: float) -> "Curve":
        return Curve(self.x * k, self.y * k)

    def __call__(self, xq):
        """Linear interpolation of y at ``xq`` (requires increasing x)."""
        return np.interp(xq, self.x, self.y)


@dataclass(frozen=True)
class NoiseMargins:
    v_oh: float
    v_ol: float
    v_ih: float
    v_il: float
    nm_h: float
    nm_l: float


def _unity_crossings(x, slope):
    """x positions where the slope crosses -1, linearly interpolated."""
    s = slope + 1.0
    out = []
    for k in range(len(s) - 1):
        a, b = s[k], s[k + 1]
        if a == 0.0:
            out.append(x[k])
        elif a * b < 0.0:
            out.append(x[k] + (x[k + 1] - x[k]) * a / (a - b))
    if s[-1] == 0.0:
        out.append(x[-1])
    return out


def noise_margins(c: Curve) -> NoiseMargins:
    """Noise margins of a transfer curve from its unity-gain points.

    ``v_il`` is the first and ``v_ih`` the last input where the centered
    finite-difference slope crosses -1. A curve whose slope never reaches
    -1 (a wire, a constant) raises :class:`NoUnityGainPoint`.
    """
    if not c.increasing:
        raise ValueError("noise_margins needs a transfer curve with increasing x")
    slope = np.gradient(c.y, c.x)
    xs = _unity_crossings(c.x, slope)
    if not xs:
        raise NoUnityGainPoint("transfer curve never reaches unity gain (|dy/dx| = 1)")
    v_il, v_ih = xs[0], xs[-1]
    v_oh, v_ol = float(c(v_il)), float(c(v_ih))
    return NoiseMargins(v_oh, v_ol, v_ih, v_il, v_oh - v_ih, v_il - v_ol)


# -- maximum square -------------------------------------------------------

@dataclass(frozen=True)
class Square:
    """Axis-aligned square given by its lower-left corner and side."""

    x: float
    y: float
    side: float

    @property
    def corners(self) -> tuple:
        x, y, s = self.x, self.y, self.side
        return ((x, y), (x + s, y), (x + s, y + s), (x, y + s))


@dataclass(frozen=True, eq=False)
class SnmResult:
    curve_fwd: Curve
    curve_mir: Curve
    snm_lobe_high: float
    snm_lobe_low: float
    snm: float
    anchors: dict = field(default_factory=dict)
    diagnostic: str | None = None
    mode: str | None = None
    supply: float | None = None

    def __eq__(self, other):
        return (isinstance(other, SnmResult)
                and self.curve_fwd == other.curve_fwd and self.curve_mir == other.curve_mir
                and (self.snm_lobe_high, self.snm_lobe_low, self.snm, self.anchors,
                     self.diagnostic, self.mode, self.supply)
                == (other.snm_lobe_high, other.snm_lobe_low, other.snm, other.anchors,
                    other.diagnostic, other.mode, other.supply))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "supply": self.supply,
            "snm": self.snm,
            "snm_lobe_high": self.snm_lobe_high,
            "snm_lobe_low": self.snm_lobe_low,
            "anchors": {k: [list(c) for c in sq.corners] for k, sq in self.anchors.items()},
            "diagnostic": self.diagnostic,
        }


def _rotated(c: Curve):
    u = (c.x + c.y) / SQRT2
    v = (c.y - c.x) / SQRT2
    order = np.argsort(v, kind="stable")
    return v[order], u[order]


def _runs(sign):
    """Maximal index runs of constant nonzero sign: (start, stop, sign)."""
    runs, k, n = [], 0, len(sign)
    while k < n:
        if sign[k] == 0:
            k += 1
            continue
        j = k
        while j + 1 < n and sign[j + 1] == sign[k]:
            j += 1
        runs.append((k, j + 1, int(sign[k])))
        k = j + 1
    return runs


def max_square_snm(c1: Curve, c2_mirrored: Curve, *, strict: bool = False,
                   closure_tol: float | None = None) -> SnmResult:
    """Largest square in each butterfly lobe, by the 45-degree rotation.

    Lobes are the runs where the ``u`` gap keeps one sign. A run counts as a
    lobe only if it is closed on both ends: by a crossing of the curves, or
    by the end of the common range with a gap below ``closure_tol`` (the
    stable points sit at the rails, where sampled curves just touch).
    With fewer than two lobes the SNM is 0 and ``diagnostic`` says why;
    ``strict=True`` raises :class:`DegenerateLobes` instead.
    """
    v1, u1 = _rotated(c1)
    v2, u2 = _rotated(c2_mirrored)
    lo, hi = max(v1[0], v2[0]), min(v1[-1], v2[-1])
    span = max(np.ptp(c1.x), np.ptp(c1.y), np.ptp(c2_mirrored.x), np.ptp(c2_mirrored.y))
    tol = 0.02 * span if closure_tol is None else closure_tol
    if not hi > lo:
        return _degenerate(c1, c2_mirrored, "curves share no diagonal range", strict)
    v = np.union1d(v1[(v1 >= lo) & (v1 <= hi)], v2[(v2 >= lo) & (v2 <= hi)])
    v = np.union1d(v, [lo, hi])
    d = np.interp(v, v1, u1) - np.interp(v, v2, u2)
    # gaps far below the curves' own resolution count as touching
    eps = 1e-9 * span
    sign = np.where(d > eps, 1, np.where(d < -eps, -1, 0))
    lobes = {}
    for a, b, s in _runs(sign):
        left_closed = a > 0 or abs(d[a]) <= tol
        right_closed = b < len(v) or abs(d[b - 1]) <= tol
        if not (left_closed and right_closed):
            continue
        k = a + int(np.argmax(np.abs(d[a:b])))
        side = abs(d[k]) / SQRT2
        ua, ub = sorted((np.interp(v[k], v1, u1), np.interp(v[k], v2, u2)))
        corner = Square((ua - v[k]) / SQRT2, (ua + v[k]) / SQRT2, side)
        key = "high" if v[k] > 0 else "low"
        if key not in lobes or side > lobes[key].side:
            lobes[key] = corner
    if len(lobes) < 2:
        found = ", ".join(sorted(lobes)) or "none"
        return _degenerate(c1, c2_mirrored, f"fewer than two closed lobes (found: {found})",
                           strict, lobes)
    high, low = lobes["high"].side, lobes["low"].side
    return SnmResult(c1, c2_mirrored, high, low, min(high, low), lobes)


def _degenerate(c1, c2, why, strict, lobes=None):
    if strict:
        raise DegenerateLobes(why)
    lobes = lobes or {}
    high = lobes["high"].side if "high" in lobes else 0.0
    low = lobes["low"].side if "low" in lobes else 0.0
    return SnmResult(c1, c2, high, low, 0.0, lobes, diagnostic=why)


def brute_force_snm(c1: Curve, c2_mirrored: Curve, grid: float = 5e-3) -> tuple:
    """Reference SNM by exhaustive search on a square grid.

    Marks every grid point lying strictly inside each lobe, then finds the
    largest block of marked points by dynamic programming. Returns
    ``(snm, side_high, side_low)``. Slow and only accurate to the grid; it
    exists to validate :func:`max_square_snm`.
    """
    f2 = c2_mirrored.mirrored()
    order1, order2 = np.argsort(c1.x), np.argsort(f2.x)
    x1, y1 = c1.x[order1], c1.y[order1]
    x2, y2 = f2.x[order2], f2.y[order2]
    lo = min(c1.x.min(), c1.y.min(), f2.x.min(), f2.y.min())
    hi = max(c1.x.max(), c1.y.max(), f2.x.max(), f2.y.max())
    g = np.arange(lo, hi + grid / 2, grid)
    X, Y = np.meshgrid(g, g, indexing="xy")  # rows are y, columns are x
    below1 = Y < np.interp(X, x1, y1)
    right2 = X > np.interp(Y, x2, y2)
    high = _largest_block(below1 & right2) * grid
    low = _largest_block(~below1 & ~right2 & (Y > np.interp(X, x1, y1))
                         & (X < np.interp(Y, x2, y2))) * grid
    return min(high, low), high, low


def _largest_block(mask: np.ndarray) -> int:
    """Side, in grid steps, of the largest all-true square block of points."""
    rows, cols = mask.shape
    best = 0
    prev = np.zeros(cols + 1, dtype=np.int64)
    for r in range(rows):
        cur = np.zeros(cols + 1, dtype=np.int64)
        m = mask[r]
        for c in range(cols):
            if m[c]:
                cur[c + 1] = 1 + min(prev[c + 1], prev[c], cur[c])
        best = max(best, int(cur.max()))
        prev = cur
    return max(best - 1, 0)


# -- half-cell transfer curves -------------------------------------------

class SnmMode(str, enum.Enum):
    HOLD = "hold"
    READ = "read"


def half_cell_netlist(p, mode: SnmMode, side: str = "A") -> Netlist:
    """One inverter of the cell with the loop broken at its input.

    Source ``VIN`` replaces the opposite storage node. In read mode the
    wordline and the bitline sit at vdd, which loads the output through
    the access transistor; in hold mode the wordline is grounded.
    """
    mode = SnmMode(mode)
    L = p.length
    if side not in ("A", "B"):
        raise ValueError("side must be 'A' or 'B'")
    k = "1" if side == "A" else "2"
    acc = "MN3" if side == "A" else "MN4"
    bl = "BL" if side == "A" else "BLB"
    out = side
    devices = [
        VoltageSource("VVDD", "VDD", "0", DC(p.vdd)),
        VoltageSource("VWL", "WL", "0", DC(p.vdd if mode is SnmMode.READ else 0.0)),
        VoltageSource(f"V{bl}", bl, "0", DC(p.vdd)),
        VoltageSource("VIN", "IN", "0", DC(0.0)),
        Mosfet(f"MP{k}", out, "IN", "VDD", "VDD", p.pmos.name, p.load_wl * L, L),
        Mosfet(f"MN{k}", out, "IN", "0", "0", p.nmos.name, p.driver_wl * L, L),
        Mosfet(acc, bl, "WL", out, "0", p.nmos.name, p.access_wl * L, L),
    ]
    return Netlist(f"half cell {side} ({mode.value})", devices, [p.nmos, p.pmos])


def half_cell_vtc(p, mode: SnmMode = SnmMode.HOLD, side: str = "A",
                  cfg: SimConfig | None = None, *, step: float = 5e-3,
                  reverse: bool = False) -> Curve:
    """Transfer curve of one half cell, input swept over [0, vdd]."""
    n = half_cell_netlist(p, mode, side)
    npts = int(round(p.vdd / step))
    if reverse:
        res = dc_sweep(n, "VIN", p.vdd, 0.0, -p.vdd / npts, cfg)
        return Curve(res.values[::-1], res.v(side)[::-1])
    res = dc_sweep(n, "VIN", 0.0, p.vdd, p.vdd / npts, cfg)
    return Curve(res.values, res.v(side))


def butterfly(p, mode: SnmMode = SnmMode.HOLD, cfg: SimConfig | None = None,
              *, step: float = 5e-3) -> tuple:
    """(curve 1, curve 2 mirrored): V(A) against V(B) in one frame."""
    c1 = half_cell_vtc(p, mode, "A", cfg, step=step)
    c2 = half_cell_vtc(p, mode, "B", cfg, step=step)
    return c1, c2.mirrored()


def snm_experiment(p, mode: SnmMode = SnmMode.HOLD, supply_sample: float | None = None,
                   cfg: SimConfig | None = None, *, step: float = 5e-3,
                   strict: bool = False) -> SnmResult:
    """SNM of the cell with its supply held at ``supply_sample`` volts.

    An adiabatic supply never sits still, so its SNM is taken at a sampled
    supply level (the default is the full vdd, i.e. the conventional case).
    """
    level = p.vdd if supply_sample is None else float(supply_sample)
    if not 0.0 < level <= p.vdd:
        raise ValueError(f"supply_sample must be in (0, {p.vdd}], got {level}")
    q = replace(p, vdd=level)
    c1, c2m = butterfly(q, mode, cfg, step=step)
    res = max_square_snm(c1, c2m, strict=strict)
    return replace(res, mode=SnmMode(mode).value, supply=level)


def butterfly_table(res: SnmResult) -> np.ndarray:
    """Rows (x, y_curve1, y_curve2_mirrored) on curve 1's x grid.

    The mirrored curve is resampled as y of x by inverting curve 2; its
    flat rail segments make that inverse steep, not multivalued, because
    sampled transfer curves keep a small nonzero slope.
    """
    x = res.curve_fwd.x
    y1 = res.curve_fwd.y
    xm, ym = res.curve_mir.x, res.curve_mir.y
    order = np.argsort(xm, kind="stable")
    y2 = np.interp(x, xm[order], ym[order])
    return np.column_stack([x, y1, y2])
