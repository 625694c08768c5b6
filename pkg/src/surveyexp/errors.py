"""Exception and warning types raised across the toolkit."""


class SurveyExpError(ValueError):
    """Base class for all validation and estimation errors."""

    category = "data"


class NonPositiveWeight(SurveyExpError):
    pass


class NonBinaryTreatment(SurveyExpError):
    pass


class MissingValue(SurveyExpError):
    pass


class DegenerateArm(SurveyExpError):
    """One treatment arm is empty, so the estimator is undefined."""


class EmptyInput(SurveyExpError):
    pass


class LengthMismatch(SurveyExpError):
    pass


class SampleTooLarge(SurveyExpError):
    pass


class TooManyStrata(SurveyExpError):
    pass


class EmptyStratumArm(SurveyExpError):
    pass


class ArmTooSmall(SurveyExpError):
    pass


class OracleDataMissing(SurveyExpError):
    pass


class InvalidInterval(SurveyExpError):
    pass


class ZeroVariance(SurveyExpError):
    pass


class TooFew(SurveyExpError):
    pass


class BootstrapFailure(SurveyExpError):
    """More than half of the bootstrap replicates were degenerate."""


class ConfigError(SurveyExpError):
    category = "usage"


class StrataMergeWarning(UserWarning):
    """A stratum lacking one arm was merged into a neighbour."""


class DegenerateArmWarning(UserWarning):
    pass
