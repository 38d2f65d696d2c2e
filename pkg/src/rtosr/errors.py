"""Exception types shared across the package."""


class RtosrError(Exception):
    """Base class for all package-specific failures."""


class MalformedSubmissionError(RtosrError):
    """A survey submission is structurally invalid (distinct from rejection)."""


class DegenerateBinningError(RtosrError):
    """Too few distinct RT values to form the requested number of bins."""


class SurveyGenerationError(RtosrError):
    """Survey set generation cannot proceed."""


class SurveyExhaustedError(RtosrError):
    """No survey is eligible for assignment to the requesting subject."""


class SequencingError(RtosrError):
    """A response arrived for a question other than the session's current one."""


class SessionNotFoundError(RtosrError):
    """Unknown session id."""


class CalibrationError(RtosrError):
    """Threshold calibration received an empty or unusable validation set."""


class TrainingDivergenceError(RtosrError):
    """Non-finite loss or gradient encountered during training."""


class ManifestError(RtosrError):
    """A dataset manifest violates its structural constraints."""


class ConfigError(RtosrError):
    """Bad experiment configuration value or file."""
