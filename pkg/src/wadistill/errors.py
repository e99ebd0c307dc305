"""Exception taxonomy shared by all modules.

Every error that can cross the CLI boundary carries a distinct exit code so
shell pipelines can branch on the failure family.
"""


class WadistillError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidInput(WadistillError):
    """Caller passed arguments outside an operation's domain."""

    exit_code = 2


class ParseError(WadistillError):
    """Malformed document or data file.

    ``offset`` is a byte offset where that is meaningful (serialized WA
    documents), ``line`` a 1-based line number for line-oriented formats.
    """

    exit_code = 3

    def __init__(self, message, *, offset=None, line=None):
        loc = ""
        if offset is not None:
            loc = f" (byte offset {offset})"
        elif line is not None:
            loc = f" (line {line})"
        super().__init__(message + loc)
        self.offset = offset
        self.line = line


class InvalidSymbol(InvalidInput):
    """Symbol id outside the alphabet range."""

    exit_code = 2


class OracleUnavailable(WadistillError):
    """Backend did not answer (timeout, dead process, connection refused).

    Retryable: the query itself is fine.
    """

    exit_code = 4


class ProtocolError(WadistillError):
    """Wire-protocol violation (bad handshake, malformed frame)."""

    exit_code = 5


class CapabilityError(WadistillError):
    """Operation requires a capability the oracle does not advertise."""

    exit_code = 6


class NonStochastic(WadistillError):
    """Scores that were claimed to form a probability vector do not."""

    exit_code = 7


class BasisExhausted(WadistillError):
    """Sampling could not produce enough unique prefixes/suffixes."""

    exit_code = 8

    def __init__(self, message, achieved_prefixes=0, achieved_suffixes=0):
        super().__init__(
            f"{message} (achieved {achieved_prefixes} prefixes, "
            f"{achieved_suffixes} suffixes)"
        )
        self.achieved_prefixes = achieved_prefixes
        self.achieved_suffixes = achieved_suffixes


class FillAborted(WadistillError):
    """Hankel fill could not complete; partial progress may be checkpointed."""

    exit_code = 9

    def __init__(self, message, checkpoint_path=None):
        if checkpoint_path is not None:
            message = f"{message} (partial progress checkpointed at {checkpoint_path})"
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class NumericalFailure(WadistillError):
    """Dense linear algebra did not converge."""

    exit_code = 10


class GenerationFailed(WadistillError):
    """Random machine generation kept producing degenerate draws."""

    exit_code = 11


class CorruptAnswer(WadistillError):
    """Backend returned NaN or an otherwise unusable value."""

    exit_code = 12


class SingularNormalizerWarning(UserWarning):
    """Terminal-vector normalizer was singular; least-squares fallback used."""
