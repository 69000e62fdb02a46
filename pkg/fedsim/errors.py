"""
Error types shared by every fedsim module.

Each class name is what the CLI prints on failure, and ``exit_code`` is the
process status it exits with.
"""


class FedSimError(Exception):
    exit_code = 1


# Parameter store / aggregation

class InvalidParams(FedSimError, ValueError):
    """Parameter values are malformed or non-finite."""


class EmptyCohort(FedSimError, ValueError):
    """An operation that needs at least one collaborator received none."""


class ShapeMismatch(FedSimError, ValueError):
    """Operands are not congruent (group names, order or lengths differ)."""

    exit_code = 8


class NonFiniteResult(FedSimError, ArithmeticError):
    """Arithmetic overflowed to Inf or produced NaN."""


class DegenerateCohort(FedSimError, ValueError):
    """All similarity scores are zero and the uniform fallback is disabled."""


class KeyMismatch(FedSimError, ValueError):
    """Two weight sets or a weight set and a cohort cover different collaborators."""


class InvalidWeights(FedSimError, ValueError):
    """Aggregation weights are negative or do not sum to one."""


class CheckpointError(FedSimError):
    """A checkpoint file is unreadable or malformed."""


# Privacy

class InvalidBudget(FedSimError, ValueError):
    """epsilon <= 0 or delta outside (0, 1)."""


class InvalidCalibration(FedSimError, ValueError):
    """Noise scale or shape is not strictly positive."""


# Federation

class CohortsExhausted(FedSimError):
    """No unseen cohort remains for the requested round."""

    exit_code = 4


class TrainerFailure(FedSimError):
    """A collaborator's local trainer raised; the round is aborted."""

    exit_code = 5

    def __init__(self, collaborator_id: str, round_num: int, reason: str):
        super().__init__(f"collaborator {collaborator_id} failed in round {round_num}: {reason}")
        self.collaborator_id = collaborator_id
        self.round_num = round_num


# CLI / files

class ConfigParseError(FedSimError, ValueError):
    exit_code = 2


class InvalidConfig(ConfigParseError):
    """A config value parsed fine but violates an invariant."""


class OutputExists(FedSimError):
    exit_code = 3


class MissingRunData(FedSimError):
    exit_code = 6


class ManifestError(FedSimError):
    exit_code = 7


class SpacingMismatch(FedSimError, ValueError):
    exit_code = 8


class VolumeFormatError(FedSimError, ValueError):
    exit_code = 7
