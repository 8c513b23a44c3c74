from enum import Enum
from typing import Literal


class EventKind(str, Enum):
    """Kinds of accepted flow events"""

    BIRTH = "birth"
    DEATH = "death"

    @property
    def code(self) -> int:
        return 1 if self is EventKind.BIRTH else 0

    @classmethod
    def from_code(cls, code: int) -> "EventKind":
        return cls.BIRTH if int(code) == 1 else cls.DEATH


EVENT_KIND_VALUES = tuple(kind.value for kind in EventKind)
EVENT_KIND_TYPE = Literal[EVENT_KIND_VALUES]  # type: ignore


class Verdict(str, Enum):
    """Outcome of a check"""

    PASS = "PASS"
    FAIL = "FAIL"

    @classmethod
    def of(cls, ok: bool) -> "Verdict":
        return cls.PASS if ok else cls.FAIL


def all_pass(verdicts) -> Verdict:
    return Verdict.of(all(Verdict(v) is Verdict.PASS for v in verdicts))


class SubCommand(str, Enum):
    """Command-line subcommands"""

    MECH = "mech"
    SIMULATE = "simulate"
    FLOW = "flow"
    ODE = "ode"
    CONVERGE = "converge"
    VERIFY = "verify"


class SmoothKind(str, Enum):
    """Smooth test functions paired with a measure"""

    IDENTITY = "x"
    EXP_NEG = "exp(-x)"
    ONE = "1"
