"""Exception hierarchy shared by the goat_opt modules."""


class GoatOptError(Exception):
    """Base class for every error raised by this package."""


# linkage
class MalformedSpec(GoatOptError):
    pass


class DisconnectedFingertip(GoatOptError):
    pass


class WrongMobility(GoatOptError):
    pass


class NoAssembly(GoatOptError):
    pass


class SingularJacobian(GoatOptError):
    pass


class Unreachable(GoatOptError):
    pass


class BranchViolation(GoatOptError):
    pass


# statics
class SingularTransmission(GoatOptError):
    pass


class NoContact(GoatOptError):
    pass


# environment / gp
class TooFewRecords(GoatOptError):
    pass


class NonPositiveValue(GoatOptError):
    pass


class DegenerateVariance(GoatOptError):
    pass


class SingularGram(GoatOptError):
    pass


# optimizer
class InfeasibleProblem(GoatOptError):
    pass


class NumericalBreakdown(GoatOptError):
    pass


class AllStartsFailed(GoatOptError):
    pass
