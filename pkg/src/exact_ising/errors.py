"""Exception types shared across the package.

Every error carries a short machine-readable ``kind`` so the command line
front end can report it as JSON.
"""


class IsingError(Exception):
    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class NonPlanar(IsingError):
    kind = "NonPlanar"


class NonZeroField(IsingError):
    kind = "NonZeroField"


class NoPerfectMatching(IsingError):
    kind = "NoPerfectMatching"


class NumericalBreakdown(IsingError):
    kind = "NumericalBreakdown"


class DisconnectedConditionSet(IsingError):
    kind = "DisconnectedConditionSet"


class InvalidDecomposition(IsingError):
    kind = "InvalidDecomposition"


class NotBiconnected(IsingError):
    kind = "NotBiconnected"


class NotK33Free(IsingError):
    kind = "NotK33Free"


class NotK5Free(IsingError):
    kind = "NotK5Free"


class TooLarge(IsingError):
    kind = "TooLarge"


class InfeasibleFamily(IsingError):
    kind = "InfeasibleFamily"
