"""Exception types shared across the simulator."""


class PowerTalkError(Exception):
    """Base class for every simulator-specific failure."""


class ValidationError(PowerTalkError, ValueError):
    """An input object violates one of its documented invariants."""


class ParseError(PowerTalkError, ValueError):
    """A scenario file could not be parsed."""


class NoSolution(PowerTalkError, ArithmeticError):
    """The power flow has no physical solution (e.g. constant-power load
    exceeds the power the network can deliver)."""


class NotConverged(PowerTalkError, ArithmeticError):
    """The power-flow iteration did not reach tolerance within the
    iteration budget."""


class SingularJacobian(PowerTalkError, ArithmeticError):
    """The linearization matrix around the operating point is singular."""


class AmplitudeTooLarge(PowerTalkError, ValueError):
    """A reference-voltage deviation violates the small-signal bound."""


class OutOfRange(PowerTalkError, ValueError):
    """A capacity value lies outside the quantizer's input range."""


class GroupTooLarge(PowerTalkError, ValueError):
    """A transmitter group exceeds the detector's enumeration cap."""


class ScheduleInfeasible(ValidationError):
    """The communication phase does not fit into the dispatch period."""
