"""Exception hierarchy for rrldp."""


class RRError(ValueError):
    """Base class for all rrldp errors."""


class InvalidParameter(RRError):
    pass


class RealizedDistributionInvalid(RRError):
    """Largest-remainder rounding produced a deck that cannot be estimated from."""


class DeckExhausted(RRError):
    """More respondents than cards in an improved Christofides deck."""


class UnboundedBudget(RRError):
    """The mechanism does not satisfy epsilon-LDP for any finite epsilon."""


class InvalidAux(RRError):
    pass


class Unsupported(RRError):
    pass


class InstanceTooLarge(RRError):
    pass


class MissingColumn(RRError):
    pass


class UnknownCode(RRError):
    def __init__(self, row: int, value: str):
        super().__init__(f"unknown code {value!r} at data row {row}")
        self.row = row
        self.value = value


class EmptyDataset(RRError):
    pass
