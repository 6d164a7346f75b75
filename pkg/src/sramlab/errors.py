"""Exception types shared across the package."""


class SramLabError(Exception):
    """Base class for every error raised by sramlab."""


# -- netlist --------------------------------------------------------------

class NetlistError(SramLabError):
    """A netlist could not be parsed or failed validation.

    ``line`` is the 1-based source line, or ``None`` for netlists
    constructed programmatically.
    """

    def __init__(self, message, line=None):
        self.message = message
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class UnknownDevicePrefix(NetlistError):
    pass


class UndefinedModel(NetlistError):
    pass


class DuplicateDeviceName(NetlistError):
    pass


class MalformedNumber(NetlistError):
    pass


class MissingEnd(NetlistError):
    pass


class NetlistSyntaxError(NetlistError):
    """Wrong field count, unknown directive or keyword, bad source syntax."""


class InvalidValue(NetlistError):
    """A value violates a device or directive invariant (e.g. R <= 0)."""


# -- simulation -----------------------------------------------------------

class SimulationError(SramLabError):
    pass


class NonConvergence(SimulationError):
    def __init__(self, iterations, worst, time=None, sweep_value=None):
        self.iterations = iterations
        self.worst = worst
        self.time = time
        self.sweep_value = sweep_value
        ctx = ""
        if time is not None:
            ctx = f" at t={time:.6g} s"
        elif sweep_value is not None:
            ctx = f" at sweep value {sweep_value:.6g}"
        super().__init__(
            f"Newton iteration failed to converge after {iterations} "
            f"iterations{ctx}; worst unknown: {worst}")


class SingularMatrix(SimulationError):
    def __init__(self, unknown):
        self.unknown = unknown
        super().__init__(f"singular MNA matrix; check connectivity of {unknown}")


# -- measurement ----------------------------------------------------------

class UnknownSignal(SramLabError, KeyError):
    def __str__(self):
        return f"unknown signal {self.args[0]!r}"


class WindowOutOfRange(SramLabError, ValueError):
    pass


# -- sram / snm -----------------------------------------------------------

class WriteFailed(SramLabError):
    def __init__(self, phase, node, voltage, threshold):
        self.phase = phase
        self.node = node
        self.voltage = voltage
        super().__init__(
            f"write failed in phase {phase!r}: V({node}) = {voltage:.4g} V "
            f"did not cross {threshold:.4g} V")


class ReadUpset(UserWarning):
    """The cell flipped during a read access (destructive read).

    Issued as a warning: a read upset is an outcome under study, not a
    simulator failure.
    """


class NoUnityGainPoint(SramLabError, ValueError):
    pass


class DegenerateLobes(SramLabError, ValueError):
    pass
