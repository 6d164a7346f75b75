"""Modified nodal analysis: operating point, DC sweep and transient.

Unknowns are the non-ground node voltages followed by one branch current
per voltage source. The branch current of source ``V`` flows from its
positive terminal through the source to its negative terminal (the SPICE
convention), so a source delivering power reports a negative current.

The nonlinear system ``F(x) = G x + f_mos(x) - b = 0`` is solved with
Newton-Raphson and a dense LU solve. Capacitors (explicit ones and the
constant MOSFET gate capacitances) enter transient analysis through
trapezoidal or backward-Euler companion models at a fixed step.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from ._kernels import assemble, build_rhs
from ._kernels import newton as kernel_newton
from .devices import terminal_currents
from .errors import NonConvergence, SingularMatrix, WindowOutOfRange, UnknownSignal
from .netlist import Capacitor, DcSweep, Mosfet, Netlist, Resistor, VoltageSource

log = logging.getLogger(__name__)


class Integrator(str, enum.Enum):
    TRAPEZOIDAL = "trap"
    BACKWARD_EULER = "be"


@dataclass(frozen=True)
class SimConfig:
    reltol: float = 1e-3
    vntol: float = 1e-6
    abstol: float = 1e-12
    gmin: float = 1e-12
    max_newton_iters: int = 100
    source_steps: int = 10
    integrator: Integrator = Integrator.TRAPEZOIDAL
    # largest node-voltage change accepted in one Newton update
    max_step_v: float = 0.5
    # conductance used to pin nodeset voltages before release
    nodeset_g: float = 1e-2
    # guard against runaway transients (a mistyped time unit, say)
    max_time_points: int = 20_000_000

    def __post_init__(self):
        object.__setattr__(self, "integrator", Integrator(self.integrator))
        for name in ("reltol", "vntol", "abstol", "gmin", "max_step_v", "nodeset_g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SimConfig.{name} must be > 0")
        if self.max_newton_iters < 1 or self.source_steps < 1:
            raise ValueError("max_newton_iters and source_steps must be >= 1")
        if self.max_time_points < 2:
            raise ValueError("max_time_points must be >= 2")


@dataclass(frozen=True)
class CapElement:
    """A linear capacitor as seen by the engine (explicit or MOSFET gate)."""

    label: str
    n1: str
    n2: str
    value: float


def capacitances(n: Netlist) -> list:
    """Every capacitance the engine integrates, MOSFET gate caps included."""
    caps = [CapElement(c.name, c.n1, c.n2, c.value) for c in n.of_type(Capacitor)]
    for m in n.of_type(Mosfet):
        card = n.models[m.model]
        area = m.w * m.l
        if card.cgs_per_area > 0:
            caps.append(CapElement(f"{m.name}.cgs", m.g, m.s, card.cgs_per_area * area))
        if card.cgd_per_area > 0:
            caps.append(CapElement(f"{m.name}.cgd", m.g, m.d, card.cgd_per_area * area))
    return caps


@dataclass
class Solution:
    node_voltages: dict
    source_currents: dict
    device_currents: dict = field(default_factory=dict)
    iterations: int = 0
    residual: float = 0.0

    def v(self, node: str) -> float:
        return self.node_voltages[node]

    def i(self, source: str) -> float:
        return self.source_currents[source]


@dataclass
class SweepResult:
    source: str
    values: np.ndarray
    node_voltages: dict
    source_currents: dict

    def v(self, node: str) -> np.ndarray:
        return self.node_voltages[node]


@dataclass
class Waveform:
    """Uniformly sampled signals: ``v(node)``, ``i(source)``, ``id(mosfet)``."""

    t0: float
    dt: float
    signals: dict
    netlist: Netlist | None = None

    def __post_init__(self):
        lengths = {len(a) for a in self.signals.values()}
        if len(lengths) > 1:
            raise ValueError("all signals must have the same length")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")

    def __len__(self):
        return len(next(iter(self.signals.values()))) if self.signals else 0

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.signals[name]
        except KeyError:
            raise UnknownSignal(name) from None

    def __contains__(self, name):
        return name in self.signals

    @property
    def time(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self) - 1)

    def v(self, node: str) -> np.ndarray:
        if node == "0":
            return np.zeros(len(self))
        return self[f"v({node})"]

    def i(self, source: str) -> np.ndarray:
        return self[f"i({source})"]

    def at(self, name: str, t: float) -> float:
        if not (self.t0 - 1e-6 * self.dt <= t <= self.t_end + 1e-6 * self.dt):
            raise WindowOutOfRange(f"t={t} outside waveform span [{self.t0}, {self.t_end}]")
        return float(np.interp(t, self.time, self[name]))


class _System:
    """Index maps and precomputed stamps for one netlist.

    Node unknowns come first, then source branch currents. Ground maps to
    the padding slot ``N`` of the extended vector ``ve = [x, 0]`` so
    terminal lookups need no special case.
    """

    def __init__(self, n: Netlist, cfg: SimConfig):
        self.netlist = n
        self.cfg = cfg
        self.node_names = list(n.nodes[1:])
        self.sources = n.of_type(VoltageSource)
        nn, ns = len(self.node_names), len(self.sources)
        N = nn + ns
        self.nn, self.N = nn, N
        idx = {name: k for k, name in enumerate(self.node_names)}
        idx["0"] = N
        self.idx = idx
        self.src_index = {s.name: k for k, s in enumerate(self.sources)}
        self.unknown_names = ([f"v({m})" for m in self.node_names]
                              + [f"i({s.name})" for s in self.sources])

        G = np.zeros((N + 1, N + 1))
        res = n.of_type(Resistor)
        self.r_a = np.array([idx[r.n1] for r in res], dtype=int)
        self.r_b = np.array([idx[r.n2] for r in res], dtype=int)
        self.r_g = np.array([1.0 / r.value for r in res])
        for a, b, g in zip(self.r_a, self.r_b, self.r_g):
            _stamp_g(G, a, b, g)
        self.src_p = np.array([idx[s.npos] for s in self.sources], dtype=int)
        self.src_n = np.array([idx[s.nneg] for s in self.sources], dtype=int)
        for k, (p, q) in enumerate(zip(self.src_p, self.src_n)):
            row = nn + k
            G[p, row] += 1.0
            G[q, row] -= 1.0
            G[row, p] += 1.0
            G[row, q] -= 1.0
        self.G_lin = G[:N, :N].copy()
        self.G_lin[np.arange(nn), np.arange(nn)] += cfg.gmin

        caps = capacitances(n)
        self.c_a = np.array([idx[c.n1] for c in caps], dtype=int)
        self.c_b = np.array([idx[c.n2] for c in caps], dtype=int)
        self.c_val = np.array([c.value for c in caps])

        mos = n.of_type(Mosfet)
        self.mosfets = mos
        self.m_d = np.array([idx[m.d] for m in mos], dtype=int)
        self.m_g = np.array([idx[m.g] for m in mos], dtype=int)
        self.m_s = np.array([idx[m.s] for m in mos], dtype=int)
        cards = [n.models[m.model] for m in mos]
        ratio = np.array([m.w / m.l for m in mos])
        self.m_par = (
            np.array([c.polarity for c in cards], dtype=float),
            np.array([c.kp for c in cards]) * ratio,
            np.array([c.vt0 for c in cards]),
            np.array([c.lambda_ for c in cards]),
            np.array([c.leak_i0 for c in cards]) * ratio,
            np.array([c.leak_n * c.temp_vt for c in cards]),
            np.array([c.temp_vt for c in cards]),
        )
        self._no_caps = np.zeros(0)
        self._no_idx = np.zeros(0, dtype=int)

    def cap_matrix(self, scale: float) -> np.ndarray:
        G = np.zeros((self.N + 1, self.N + 1))
        for a, b, c in zip(self.c_a, self.c_b, self.c_val):
            _stamp_g(G, a, b, c * scale)
        return G[:self.N, :self.N]

    def source_values(self, t, scale=1.0, overrides=None):
        vals = np.array([s.spec.value(t) for s in self.sources], dtype=float)
        if overrides:
            for name, v in overrides.items():
                vals[self.src_index[name]] = v
        return vals * scale

    def source_table(self, times) -> np.ndarray:
        """Source values at every time in ``times``: shape (len(times), ns)."""
        cols = [np.broadcast_to(np.asarray(s.spec.value(times), dtype=float), times.shape)
                for s in self.sources]
        return np.column_stack(cols) if cols else np.zeros((len(times), 0))

    def rhs(self, vsrc, cap_hist=None):
        if cap_hist is None or not len(cap_hist):
            cap_hist, c_a, c_b = self._no_caps, self._no_idx, self._no_idx
        else:
            c_a, c_b = self.c_a, self.c_b
        return build_rhs(self.N, self.nn, np.asarray(vsrc, dtype=float), c_a, c_b, cap_hist)

    @staticmethod
    def ext(x):
        return np.append(x, 0.0)

    def mos_eval(self, ve):
        p, beta, vt0, lam, leak, nvt, vt = self.m_par
        return terminal_currents(p, ve[self.m_d], ve[self.m_g], ve[self.m_s],
                                 beta, vt0, lam, leak, nvt, vt)

    def newton(self, x0, G, b, cap_hist=None, geq=None, context=None):
        """Solve F(x) = 0 from x0. Returns (x, ids, iterations, residual).

        Converged when the last update is within vntol/reltol and the KCL
        residual at the updated point is within abstol + reltol * (incident
        current). ``cap_hist``/``geq`` let the tolerance see capacitor
        currents during transient steps.
        """
        cfg = self.cfg
        use_caps = geq is not None and len(self.c_val) > 0
        if not use_caps:
            geq = cap_hist = self._no_caps
        x, ids, it, res, status, worst = kernel_newton(
            np.asarray(x0, dtype=float), G, b, self.m_d, self.m_g, self.m_s, *self.m_par,
            self.r_a, self.r_b, self.r_g, self.c_a, self.c_b, geq, cap_hist, use_caps,
            self.src_p, self.src_n, self.nn, cfg.gmin, cfg.vntol, cfg.reltol, cfg.abstol,
            cfg.max_newton_iters, cfg.max_step_v)
        if status == 0:
            return x, ids, it, res
        if status == 2:
            J = assemble(x, G, b, self.m_d, self.m_g, self.m_s, *self.m_par,
                         self.r_a, self.r_b, self.r_g, self.c_a, self.c_b, geq, cap_hist,
                         use_caps, self.src_p, self.src_n, self.nn, cfg.gmin)[1]
            raise SingularMatrix(_null_unknown(J, self.unknown_names))
        raise NonConvergence(cfg.max_newton_iters, self.unknown_names[worst], **(context or {}))

    def x_from(self, initial) -> np.ndarray:
        x = np.zeros(self.N)
        if initial is None:
            return x
        if isinstance(initial, Solution):
            nv, sc = initial.node_voltages, initial.source_currents
        else:
            nv, sc = initial, {}
        for k, name in enumerate(self.node_names):
            if name in nv:
                x[k] = nv[name]
        for k, s in enumerate(self.sources):
            if s.name in sc:
                x[self.nn + k] = sc[s.name]
        return x

    def solution(self, x, ids, iterations=0, residual=0.0) -> Solution:
        nv = {"0": 0.0}
        nv.update({name: float(x[k]) for k, name in enumerate(self.node_names)})
        sc = {s.name: float(x[self.nn + k]) for k, s in enumerate(self.sources)}
        dc = {m.name: float(i) for m, i in zip(self.mosfets, ids)}
        return Solution(nv, sc, dc, iterations, residual)


def _stamp_g(G, a, b, g):
    G[a, a] += g
    G[b, b] += g
    G[a, b] -= g
    G[b, a] -= g


def _null_unknown(J, names):
    _, _, vt = np.linalg.svd(J)
    return names[int(np.argmax(np.abs(vt[-1])))]


def _system(n: Netlist, cfg: SimConfig) -> _System:
    return _System(n, cfg)


def _solve_dc(sys: _System, x0, t, overrides=None, nodeset=None, context=None):
    """Newton at time t with source stepping as the fallback."""
    cfg = sys.cfg
    G = sys.G_lin
    vsrc = sys.source_values(t, overrides=overrides)
    x = x0
    if nodeset:
        Gf = G.copy()
        bf = sys.rhs(vsrc)
        for node, v in nodeset.items():
            k = sys.idx[node]
            if k == sys.N:
                continue
            Gf[k, k] += cfg.nodeset_g
            bf[k] += cfg.nodeset_g * v
            x[k] = v
        try:
            x, _, _, _ = sys.newton(x, Gf, bf, context=context)
        except NonConvergence:
            log.debug("nodeset pre-solve failed; continuing from the seeded guess")
    try:
        return sys.newton(x, G, sys.rhs(vsrc), context=context)
    except NonConvergence:
        log.debug("Newton failed at t=%g; trying source stepping", t)
    x = np.zeros(sys.N)
    result = None
    for k in range(1, cfg.source_steps + 1):
        result = sys.newton(x, G, sys.rhs(vsrc * k / cfg.source_steps), context=context)
        x = result[0]
    return result


def dc_operating_point(n: Netlist, cfg: SimConfig | None = None, *, t: float = 0.0,
                       initial=None, nodeset: dict | None = None) -> Solution:
    """DC operating point with sources evaluated at time ``t``.

    ``initial`` (a Solution or a node->volts dict) seeds Newton. ``nodeset``
    pins the listed nodes through ``cfg.nodeset_g`` for a first solve, then
    releases them; this selects a state of a bistable circuit.
    """
    cfg = cfg or SimConfig()
    sys = _system(n, cfg)
    x0 = sys.x_from(initial)
    x, ids, it, res = _solve_dc(sys, x0, t, nodeset=nodeset)
    return sys.solution(x, ids, it, res)


def dc_sweep(n: Netlist, source: str, start: float, stop: float, step: float,
             cfg: SimConfig | None = None, *, initial=None, nodeset=None) -> SweepResult:
    """Sweep a voltage source, using each solution to seed the next point."""
    cfg = cfg or SimConfig()
    directive = DcSweep(source, start, stop, step)  # validates before any solve
    sys = _system(n, cfg)
    names = {s.name.lower(): s.name for s in sys.sources}
    if source.lower() not in names:
        raise KeyError(f"no voltage source named {source!r}")
    source = names[source.lower()]
    values = np.array(directive.values())
    xs = np.zeros((len(values), sys.N))
    x, _, _, _ = _solve_dc(sys, sys.x_from(initial), 0.0, {source: values[0]}, nodeset,
                           context={"sweep_value": float(values[0])})
    xs[0] = x
    for k in range(1, len(values)):
        x = _continue(sys, x, source, values[k - 1], values[k])
        xs[k] = x
    nv = {"0": np.zeros(len(values))}
    nv.update({name: xs[:, j].copy() for j, name in enumerate(sys.node_names)})
    sc = {s.name: xs[:, sys.nn + j].copy() for j, s in enumerate(sys.sources)}
    return SweepResult(source, values, nv, sc)


def _continue(sys, x, source, v_from, v_to, depth=0):
    G = sys.G_lin
    b = sys.rhs(sys.source_values(0.0, overrides={source: v_to}))
    try:
        return sys.newton(x, G, b, context={"sweep_value": float(v_to)})[0]
    except NonConvergence:
        if depth >= 6:
            raise
    mid = 0.5 * (v_from + v_to)
    x = _continue(sys, x, source, v_from, mid, depth + 1)
    return _continue(sys, x, source, mid, v_to, depth + 1)


def transient(n: Netlist, cfg: SimConfig | None = None, dt: float = 1e-12,
              tstop: float = 1e-9, initial: Solution | None = None, *,
              nodeset: dict | None = None) -> Waveform:
    """Fixed-step transient analysis from t = 0 to ``tstop``.

    Without ``initial`` a DC operating point at t = 0 (honouring
    ``nodeset``) starts the run. Capacitor currents start at zero.
    """
    cfg = cfg or SimConfig()
    if not dt > 0 or tstop < dt:
        raise ValueError("transient needs dt > 0 and tstop >= dt")
    nsteps = int(round(tstop / dt))
    if nsteps + 1 > cfg.max_time_points:
        raise ValueError(f"transient would store {nsteps + 1} time points (limit "
                         f"{cfg.max_time_points}); check dt = {dt:g} and tstop = {tstop:g}")
    sys = _system(n, cfg)
    if initial is None:
        initial = dc_operating_point(n, cfg, nodeset=nodeset)
    x = sys.x_from(initial)
    trap = cfg.integrator is Integrator.TRAPEZOIDAL

    ids0 = sys.mos_eval(sys.ext(x))[0] if sys.mosfets else np.zeros(0)
    out = np.empty((nsteps + 1, sys.N))
    out_id = np.empty((nsteps + 1, len(sys.mosfets)))
    out[0] = x
    out_id[0] = ids0

    ve = sys.ext(x)
    vc = ve[sys.c_a] - ve[sys.c_b]
    ic = np.zeros_like(vc)
    mats = {}

    times = dt * np.arange(nsteps + 1)
    vs_table = sys.source_table(times)

    def step(x, vc, ic, t_new, h, guess, vsrc=None):
        if h not in mats:
            k = (2.0 if trap else 1.0) / h
            mats[h] = (sys.G_lin + sys.cap_matrix(k), k * sys.c_val)
        G, geq = mats[h]
        hist = geq * vc + ic if trap else geq * vc
        b = sys.rhs(sys.source_values(t_new) if vsrc is None else vsrc, hist)
        x_new, ids, _, _ = sys.newton(guess, G, b, hist, geq, context={"time": t_new})
        ve = sys.ext(x_new)
        vc_new = ve[sys.c_a] - ve[sys.c_b]
        ic_new = geq * vc_new - hist
        return x_new, vc_new, ic_new, ids

    x_prev = None
    for k in range(1, nsteps + 1):
        t_new = k * dt
        guess = x if x_prev is None else 2 * x - x_prev
        try:
            x_new, vc_new, ic_new, ids = step(x, vc, ic, t_new, dt, guess, vs_table[k])
        except NonConvergence:
            x_new, vc_new, ic_new, ids = _substep(step, x, vc, ic, t_new - dt, dt)
        x_prev, x, vc, ic = x, x_new, vc_new, ic_new
        out[k] = x
        out_id[k] = ids

    signals = {f"v({name})": out[:, j].copy() for j, name in enumerate(sys.node_names)}
    for j, s in enumerate(sys.sources):
        signals[f"i({s.name})"] = out[:, sys.nn + j].copy()
    for j, m in enumerate(sys.mosfets):
        signals[f"id({m.name})"] = out_id[:, j].copy()
    return Waveform(0.0, dt, signals, n)


def _substep(step, x, vc, ic, t0, h, depth=1):
    """Cover one failed step with 2**depth internal sub-steps."""
    parts = 2 ** depth
    hs = h / parts
    try:
        for j in range(1, parts + 1):
            x, vc, ic, ids = step(x, vc, ic, t0 + j * hs, hs, x)
        return x, vc, ic, ids
    except NonConvergence:
        if depth >= 5:
            raise
        return _substep(step, x, vc, ic, t0, h, depth + 1)
