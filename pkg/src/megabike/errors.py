"""Exception hierarchy shared across the package."""


class MegabikeError(Exception):
    """Base class for all package errors."""


class RuleError(MegabikeError):
    pass


class DimensionMismatch(RuleError, ValueError):
    pass


class MissingConstantColumn(RuleError, ValueError):
    pass


class GetterUndefined(RuleError, LookupError):
    """An input binding does not apply to the entity it was asked about."""


class EmptyRuleList(RuleError, ValueError):
    pass


class ImmutableRule(RuleError):
    pass


class IndexOutOfRange(RuleError, IndexError):
    pass


class DuplicateRuleID(RuleError, KeyError):
    pass


class RulesetParseError(RuleError, ValueError):
    pass


class EmptyCandidates(MegabikeError, ValueError):
    pass


class NoOccupants(MegabikeError, ValueError):
    pass


class AlreadyConsumed(MegabikeError):
    pass


class ConfigInvalid(MegabikeError, ValueError):
    pass
