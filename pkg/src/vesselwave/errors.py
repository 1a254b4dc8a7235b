"""Exception hierarchy shared by all modules.

Every exception carries a short machine-readable ``code`` so the CLI can
surface failures in JSON summaries without parsing messages.
"""


class VesselWaveError(Exception):
    code = "error"


class ConfigurationError(VesselWaveError, ValueError):
    code = "configuration"


class ModelValidityError(VesselWaveError, ValueError):
    code = "model_validity"


class RegimeError(VesselWaveError, ValueError):
    """Operation requested outside its coefficient regime (e.g. variable r0)."""

    code = "wrong_regime"


class HypothesisFailure(VesselWaveError):
    """The Neumann contraction condition failed: q >= 1."""

    code = "h4_failure"

    def __init__(self, message, q):
        super().__init__(message)
        self.q = q


class ConvergenceError(VesselWaveError, ArithmeticError):
    code = "nonconvergence"

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


class NumericFailure(VesselWaveError, ArithmeticError):
    code = "numeric_failure"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InsufficientDataError(VesselWaveError, ValueError):
    code = "insufficient_data"


class SubspaceError(VesselWaveError, ValueError):
    """Input has content on modes the operator is not defined on."""

    code = "subspace_violation"


class BranchPointError(ConvergenceError):
    """Newton Jacobian is numerically singular (fold or branch point)."""

    code = "branch_point"


class AssemblyError(VesselWaveError, AssertionError):
    code = "assembly"
