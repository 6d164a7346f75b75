"""Circuit data model and a small SPICE-like netlist dialect.

Grammar (case-insensitive keywords, one element or directive per line)::

    <title line>
    * comment
    Rname n1 n2 <value>
    Cname n1 n2 <value>
    Vname n+ n- [DC] <value>
    Vname n+ n- PWL(t1 v1 t2 v2 ...)
    Vname n+ n- RAMP(v_start v_end delay rise hold fall period)
    Vname n+ n- SIN(offset amplitude frequency [delay])
    Mname d g s b <model> W=<value> L=<value>
    .model <name> NMOS|PMOS vt0=<v> kp=<v> [lambda= leak_i0= leak_n= cgs= cgd= temp_vt=]
    .op
    .dc <source> <start> <stop> <step>
    .tran <dt> <tstop>
    + continuation of the previous line
    .end

Numbers accept the SPICE scale suffixes f p n u m k meg g t; trailing
letters after the suffix are ignored ("10fF", "1.8V"). Node ``gnd`` is an
alias for ground ``0``. Model names are case-insensitive and stored in
lower case.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from .devices import DC, PWL, ModelCard, Ramp, Sine, SourceSpec
from .errors import (DuplicateDeviceName, InvalidValue, MalformedNumber, MissingEnd,
                     NetlistError, NetlistSyntaxError, UndefinedModel, UnknownDevicePrefix)

GROUND = "0"

_SUFFIX = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3,
           "k": 1e3, "meg": 1e6, "g": 1e9, "t": 1e12}
_NUMBER = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:e[+-]?\d+)?)(meg|[fpnumkgt])?[a-z]*$", re.IGNORECASE)


def parse_number(token: str, line: int | None = None) -> float:
    """Decode a SPICE number with an optional scale suffix.

    >>> parse_number("1k"), parse_number("100f"), parse_number("1meg")
    (1000.0, 1e-13, 1000000.0)
    """
    m = _NUMBER.match(token)
    if not m:
        raise MalformedNumber(f"malformed number {token!r}", line)
    value = float(m.group(1))
    if m.group(2):
        value *= _SUFFIX[m.group(2).lower()]
    return value


def format_number(value: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(value))


def _node(name: str) -> str:
    return GROUND if name.lower() == "gnd" else name


# -- devices --------------------------------------------------------------

@dataclass(frozen=True)
class Resistor:
    name: str
    n1: str
    n2: str
    value: float

    def __post_init__(self):
        object.__setattr__(self, "n1", _node(self.n1))
        object.__setattr__(self, "n2", _node(self.n2))
        if not self.value > 0:
            raise InvalidValue(f"{self.name}: resistance must be > 0")

    @property
    def terminals(self):
        return (self.n1, self.n2)


@dataclass(frozen=True)
class Capacitor:
    name: str
    n1: str
    n2: str
    value: float

    def __post_init__(self):
        object.__setattr__(self, "n1", _node(self.n1))
        object.__setattr__(self, "n2", _node(self.n2))
        if not self.value > 0:
            raise InvalidValue(f"{self.name}: capacitance must be > 0")

    @property
    def terminals(self):
        return (self.n1, self.n2)


@dataclass(frozen=True)
class VoltageSource:
    name: str
    npos: str
    nneg: str
    spec: SourceSpec

    def __post_init__(self):
        object.__setattr__(self, "npos", _node(self.npos))
        object.__setattr__(self, "nneg", _node(self.nneg))

    @property
    def terminals(self):
        return (self.npos, self.nneg)


@dataclass(frozen=True)
class Mosfet:
    name: str
    d: str
    g: str
    s: str
    b: str
    model: str
    w: float
    l: float

    def __post_init__(self):
        for attr in ("d", "g", "s", "b"):
            object.__setattr__(self, attr, _node(getattr(self, attr)))
        object.__setattr__(self, "model", self.model.lower())
        if not (self.w > 0 and self.l > 0):
            raise InvalidValue(f"{self.name}: W and L must be > 0")

    @property
    def terminals(self):
        return (self.d, self.g, self.s, self.b)


Device = Union[Resistor, Capacitor, VoltageSource, Mosfet]


# -- analyses -------------------------------------------------------------

@dataclass(frozen=True)
class Op:
    pass


@dataclass(frozen=True)
class DcSweep:
    source: str
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if self.step == 0:
            raise InvalidValue(".dc step must be non-zero")
        if self.stop != self.start and (self.stop - self.start) * self.step < 0:
            raise InvalidValue(".dc step sign does not match stop - start")

    def values(self):
        n = int(round((self.stop - self.start) / self.step))
        return [self.start + k * self.step for k in range(n + 1)]


@dataclass(frozen=True)
class Tran:
    dt: float
    tstop: float

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidValue(".tran dt must be > 0")
        if self.tstop < self.dt:
            raise InvalidValue(".tran tstop must be >= dt")


AnalysisDirective = Union[Op, DcSweep, Tran]


@dataclass(frozen=True)
class Netlist:
    """Immutable circuit description.

    ``nodes`` is derived: ground first, then every other node in order of
    first appearance among the device terminals.
    """

    title: str
    devices: tuple = ()
    models: dict = field(default_factory=dict)
    analyses: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "analyses", tuple(self.analyses))
        models = self.models.values() if isinstance(self.models, dict) else self.models
        object.__setattr__(self, "models", {card.name: card for card in models})
        self._validate()

    def _validate(self):
        seen = set()
        for dev in self.devices:
            key = dev.name.lower()
            if key in seen:
                err = DuplicateDeviceName(f"duplicate device name {dev.name!r}")
                err.subject = dev.name
                raise err
            seen.add(key)
            if isinstance(dev, Mosfet) and dev.model not in self.models:
                err = UndefinedModel(f"{dev.name}: undefined model {dev.model!r}")
                err.subject = dev.name
                raise err
        sources = {d.name.lower() for d in self.devices if isinstance(d, VoltageSource)}
        for k, a in enumerate(self.analyses):
            if isinstance(a, DcSweep) and a.source.lower() not in sources:
                err = InvalidValue(f".dc references unknown source {a.source!r}")
                err.subject = k
                raise err

    @property
    def nodes(self) -> tuple:
        order = {GROUND: None}
        for dev in self.devices:
            for n in dev.terminals:
                order.setdefault(n, None)
        return tuple(order)

    def device(self, name: str) -> Device:
        key = name.lower()
        for dev in self.devices:
            if dev.name.lower() == key:
                return dev
        raise KeyError(name)

    def of_type(self, cls) -> list:
        return [d for d in self.devices if isinstance(d, cls)]

    def replace(self, **changes) -> "Netlist":
        fields = dict(title=self.title, devices=self.devices,
                      models=self.models, analyses=self.analyses)
        fields.update(changes)
        return Netlist(**fields)


# -- parser ---------------------------------------------------------------

_MODEL_KEYS = {"vt0": "vt0", "kp": "kp", "lambda": "lambda_", "cgs": "cgs_per_area",
               "cgd": "cgd_per_area", "leak_i0": "leak_i0", "leak_n": "leak_n",
               "temp_vt": "temp_vt"}


def _tokens(text: str) -> list:
    text = re.sub(r"\s*=\s*", "=", text)
    return re.sub(r"[(),]", " ", text).split()


def _logical_lines(text: str):
    """Yield (line number, content) with comments dropped and '+' lines joined."""
    pending = None
    for num, raw in enumerate(text.splitlines()[1:], start=2):
        line = raw.split(";", 1)[0].strip()
        if not line or line.startswith("*"):
            continue
        if line.startswith("+"):
            if pending is None:
                raise NetlistSyntaxError("continuation line with nothing to continue", num)
            pending = (pending[0], pending[1] + " " + line[1:])
            continue
        if pending is not None:
            yield pending
        pending = (num, line)
    if pending is not None:
        yield pending


def _keyvals(tokens, line):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise NetlistSyntaxError(f"expected key=value, got {tok!r}", line)
        key, val = tok.split("=", 1)
        out[key.lower()] = parse_number(val, line)
    return out


def _source_spec(tokens, line) -> SourceSpec:
    if not tokens:
        raise NetlistSyntaxError("voltage source needs a value", line)
    kind = tokens[0].upper()
    args = tokens[1:]
    if kind == "DC":
        if len(args) != 1:
            raise NetlistSyntaxError("DC takes one value", line)
        return DC(parse_number(args[0], line))
    if kind == "PWL":
        vals = [parse_number(a, line) for a in args]
        if not vals or len(vals) % 2:
            raise NetlistSyntaxError("PWL needs time/value pairs", line)
        return PWL(tuple(zip(vals[::2], vals[1::2])))
    if kind == "RAMP":
        if len(args) != 7:
            raise NetlistSyntaxError(
                "RAMP takes v_start v_end delay rise hold fall period", line)
        return Ramp(*(parse_number(a, line) for a in args))
    if kind in ("SIN", "SINE"):
        if len(args) not in (3, 4):
            raise NetlistSyntaxError("SIN takes offset amplitude frequency [delay]", line)
        return Sine(*(parse_number(a, line) for a in args))
    if len(tokens) == 1:
        return DC(parse_number(tokens[0], line))
    raise NetlistSyntaxError(f"unknown source type {tokens[0]!r}", line)


def _parse_element(tokens, line) -> Device:
    name = tokens[0]
    prefix = name[0].upper()
    if prefix in "RC":
        if len(tokens) != 4:
            raise NetlistSyntaxError(f"{name}: expected '{prefix}name n1 n2 value'", line)
        cls = Resistor if prefix == "R" else Capacitor
        return cls(name, tokens[1], tokens[2], parse_number(tokens[3], line))
    if prefix == "V":
        if len(tokens) < 4:
            raise NetlistSyntaxError(f"{name}: expected 'Vname n+ n- spec'", line)
        return VoltageSource(name, tokens[1], tokens[2], _source_spec(tokens[3:], line))
    if prefix == "M":
        if len(tokens) != 8:
            raise NetlistSyntaxError(f"{name}: expected 'Mname d g s b model W= L='", line)
        kv = _keyvals(tokens[6:], line)
        if set(kv) != {"w", "l"}:
            raise NetlistSyntaxError(f"{name}: MOSFET needs exactly W= and L=", line)
        return Mosfet(name, *tokens[1:5], tokens[5], kv["w"], kv["l"])
    raise UnknownDevicePrefix(f"unknown device prefix {name[0]!r} in {name!r}", line)


def _parse_model(tokens, line) -> ModelCard:
    if len(tokens) < 3:
        raise NetlistSyntaxError(".model needs a name and a type", line)
    kind = tokens[2].upper()
    if kind not in ("NMOS", "PMOS"):
        raise NetlistSyntaxError(f".model type must be NMOS or PMOS, got {tokens[2]!r}", line)
    kv = _keyvals(tokens[3:], line)
    unknown = set(kv) - set(_MODEL_KEYS)
    if unknown:
        raise NetlistSyntaxError(f".model: unknown parameter(s) {sorted(unknown)}", line)
    missing = {"vt0", "kp"} - set(kv)
    if missing:
        raise NetlistSyntaxError(f".model: missing {sorted(missing)}", line)
    return ModelCard(tokens[1], kind, **{_MODEL_KEYS[k]: v for k, v in kv.items()})


def _parse_directive(tokens, line):
    word = tokens[0].lower()
    args = tokens[1:]
    if word == ".op":
        if args:
            raise NetlistSyntaxError(".op takes no arguments", line)
        return Op()
    if word == ".dc":
        if len(args) != 4:
            raise NetlistSyntaxError(".dc takes source start stop step", line)
        return DcSweep(args[0], *(parse_number(a, line) for a in args[1:]))
    if word == ".tran":
        if len(args) != 2:
            raise NetlistSyntaxError(".tran takes dt tstop", line)
        return Tran(*(parse_number(a, line) for a in args))
    raise NetlistSyntaxError(f"unknown directive {tokens[0]!r}", line)


def parse_netlist(text: str) -> Netlist:
    """Parse netlist source text. Errors carry the offending line number."""
    lines = text.splitlines()
    title = lines[0].strip() if lines else ""
    devices, models, analyses = [], [], []
    where, analysis_lines = {}, []
    ended = False
    for num, content in _logical_lines(text):
        tokens = _tokens(content)
        if not tokens:
            continue
        try:
            if tokens[0].lower() == ".end":
                ended = True
                break
            if tokens[0].lower() == ".model":
                models.append(_parse_model(tokens, num))
            elif tokens[0].startswith("."):
                analyses.append(_parse_directive(tokens, num))
                analysis_lines.append(num)
            else:
                dev = _parse_element(tokens, num)
                if dev.name.lower() in where:
                    raise DuplicateDeviceName(f"duplicate device name {dev.name!r}", num)
                where[dev.name.lower()] = num
                devices.append(dev)
        except NetlistError as err:
            if err.line is None:
                raise type(err)(err.message, num) from None
            raise
    if not ended:
        raise MissingEnd("missing .end directive", len(lines) + 1)
    try:
        return Netlist(title, tuple(devices), models, tuple(analyses))
    except NetlistError as err:
        subject = getattr(err, "subject", None)
        if isinstance(subject, int):
            line = analysis_lines[subject]
        else:
            line = where.get(subject.lower()) if subject else None
        raise type(err)(err.message, line) from None


def _format_spec(spec: SourceSpec) -> str:
    f = format_number
    if isinstance(spec, DC):
        return f"DC {f(spec.volts)}"
    if isinstance(spec, PWL):
        return "PWL(" + " ".join(f"{f(t)} {f(v)}" for t, v in spec.points) + ")"
    if isinstance(spec, Ramp):
        vals = (spec.v_start, spec.v_end, spec.delay, spec.rise, spec.hold, spec.fall, spec.period)
        return "RAMP(" + " ".join(map(f, vals)) + ")"
    if isinstance(spec, Sine):
        vals = (spec.offset, spec.amplitude, spec.frequency, spec.delay)
        return "SIN(" + " ".join(map(f, vals)) + ")"
    raise TypeError(f"unknown source spec {spec!r}")


def _format_device(dev: Device) -> str:
    f = format_number
    if isinstance(dev, (Resistor, Capacitor)):
        return f"{dev.name} {dev.n1} {dev.n2} {f(dev.value)}"
    if isinstance(dev, VoltageSource):
        return f"{dev.name} {dev.npos} {dev.nneg} {_format_spec(dev.spec)}"
    return (f"{dev.name} {dev.d} {dev.g} {dev.s} {dev.b} {dev.model} "
            f"W={f(dev.w)} L={f(dev.l)}")


def _format_model(card: ModelCard) -> str:
    params = " ".join(f"{key}={format_number(getattr(card, attr))}"
                      for key, attr in _MODEL_KEYS.items())
    return f".model {card.name} {card.kind} {params}"


def _format_analysis(a) -> str:
    f = format_number
    if isinstance(a, Op):
        return ".op"
    if isinstance(a, DcSweep):
        return f".dc {a.source} {f(a.start)} {f(a.stop)} {f(a.step)}"
    return f".tran {f(a.dt)} {f(a.tstop)}"


def serialize_netlist(n: Netlist) -> str:
    """Canonical text form; ``parse_netlist`` inverts it exactly."""
    out = [n.title]
    out += [_format_model(card) for card in n.models.values()]
    out += [_format_device(dev) for dev in n.devices]
    out += [_format_analysis(a) for a in n.analyses]
    out.append(".end")
    return "\n".join(out)
