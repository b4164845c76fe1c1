"""Exception hierarchy.

Every error carries an ``exit_code`` used by the CLI: 2 for bad input or
usage, 1 for failures during computation.
"""


class LorentzSeqError(Exception):
    exit_code = 1


class InputError(LorentzSeqError):
    """Malformed or inconsistent user input."""

    exit_code = 2


class EmptyInput(InputError):
    pass


class MalformedFasta(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateLabel(InputError):
    def __init__(self, seq_id):
        self.seq_id = seq_id
        super().__init__(f"duplicate label for id {seq_id!r}")


class MalformedRow(InputError):
    def __init__(self, line, text=""):
        self.line = line
        super().__init__(f"line {line}: expected 2 fields 'id,label', got {text!r}")


class MissingLabel(InputError):
    def __init__(self, seq_id):
        self.seq_id = seq_id
        super().__init__(f"no label for sequence {seq_id!r}")


class InvalidResidue(InputError):
    def __init__(self, seq_id, position, char):
        self.seq_id = seq_id
        self.position = position
        self.char = char
        super().__init__(
            f"sequence {seq_id!r}: residue {char!r} at position {position} is not in the alphabet"
        )


class InvalidKmer(InputError):
    pass


class ConfigError(InputError):
    pass


class InvalidVector(LorentzSeqError):
    pass


class DimensionMismatch(LorentzSeqError):
    pass


class DomainError(LorentzSeqError):
    """A Lorentzian inner product fell below 1 by more than rounding allows."""

    def __init__(self, message, pair=None):
        self.pair = pair
        if pair is not None:
            message = f"{message} (rows {pair[0]}, {pair[1]})"
        super().__init__(message)


class NumericalError(LorentzSeqError):
    pass


class AsymmetricMatrix(LorentzSeqError):
    pass


class EmptyMatrix(LorentzSeqError):
    pass


class InvalidComponents(InputError):
    pass


class SplitInfeasible(LorentzSeqError):
    pass


class NoTrainingData(LorentzSeqError):
    pass


class EmptyEvaluation(LorentzSeqError):
    pass


class DegenerateKernel(UserWarning):
    """No eigenvalue of the centered kernel exceeds the retention tolerance."""
