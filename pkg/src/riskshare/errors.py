"""Exception hierarchy shared by every module."""


class RiskShareError(Exception):
    """Base class for all package errors."""


class ValidationError(RiskShareError, ValueError):
    """An input violates a documented invariant.

    ``invariant`` names the violated rule so callers (and the CLI) can
    report it without parsing the message.
    """

    invariant = "ValidationError"

    def __init__(self, message="", **context):
        super().__init__(message or self.invariant)
        self.context = context


class NonPositiveWeight(ValidationError):
    invariant = "NonPositiveWeight"


class WeightsNotNormalized(ValidationError):
    invariant = "WeightsNotNormalized"


class EmptyBlock(ValidationError):
    invariant = "EmptyBlock"


class BlockTooSmall(ValidationError):
    invariant = "BlockTooSmall"


class UnknownBlock(ValidationError):
    invariant = "UnknownBlock"


class NotBlockConstant(ValidationError):
    invariant = "NotBlockConstant"

    def __init__(self, belief_index, block):
        super().__init__(
            f"belief {belief_index} is not constant on block {block!r}",
            belief_index=belief_index,
            block=block,
        )
        self.belief_index = belief_index
        self.block = block


class InvalidDensity(ValidationError):
    invariant = "InvalidDensity"


class InvalidLevel(ValidationError):
    invariant = "InvalidLevel"


class SpaceMismatch(ValidationError):
    invariant = "SpaceMismatch"


class SupportMismatch(ValidationError):
    invariant = "SupportMismatch"


class NotConcordant(ValidationError):
    invariant = "NotConcordant"


class NotEquivalent(ValidationError):
    invariant = "NotEquivalent"


class NonConsistentAgent(ValidationError):
    invariant = "NonConsistentAgent"


class WrongAgentKinds(ValidationError):
    invariant = "WrongAgentKinds"


class TooLarge(ValidationError):
    invariant = "TooLarge"


class NotSupported(RiskShareError):
    """The requested operation has no implementation for this measure."""


class ConeOracleUnavailable(NotSupported):
    pass


class DomainNotPolyhedral(NotSupported):
    pass


class ImprovementVerificationFailed(RiskShareError):
    """Comonotone improvement produced a coordinate that is not cx-dominated."""

    def __init__(self, coordinate, gap, block=None):
        where = f" on block {block!r}" if block is not None else ""
        super().__init__(
            f"coordinate {coordinate} fails the convex-order check{where} (gap {gap:.3e})"
        )
        self.coordinate = coordinate
        self.gap = gap
        self.block = block


class AssumptionViolated(RiskShareError):
    """No common compatible pricing density exists for the regimes."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NoUnitPriceVector(RiskShareError):
    pass


class SolverFailure(RiskShareError):
    """An underlying numerical solver did not return a usable answer."""


class NoPositiveSecurity(ValidationError):
    invariant = "NoPositiveSecurity"


class RegimeNotFinite(ValidationError):
    invariant = "RegimeNotFinite"


class PriceMismatch(ValidationError):
    invariant = "PriceMismatch"


class UnknownBelief(ValidationError):
    invariant = "UnknownBelief"


class ParseError(RiskShareError):
    """A scenario document is malformed; ``line`` and ``field`` locate it."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field
