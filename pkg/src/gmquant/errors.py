"""Exception hierarchy.

Input problems (bad files, malformed objects) derive from :class:`InputError`;
numerical or geometric failures derive from :class:`MathError`. The CLI maps
the two families onto distinct exit codes.
"""


class GmquantError(Exception):
    """Base class for all package errors."""

    code = "error"


class InputError(GmquantError, ValueError):
    code = "input"


class MathError(GmquantError, ArithmeticError):
    code = "math"


class NonSymmetric(InputError):
    code = "non_symmetric"


class IndefiniteBeyondTolerance(InputError):
    code = "indefinite"


class DimensionMismatch(InputError):
    code = "dimension_mismatch"


class InvalidInterval(InputError):
    code = "invalid_interval"


class BudgetTooSmall(InputError):
    code = "budget_too_small"


class EmptyBudget(BudgetTooSmall):
    code = "empty_budget"


class InvalidK(InputError):
    code = "invalid_k"


class InvalidThresholds(InputError):
    code = "invalid_thresholds"


class IndexOutOfRange(InputError, IndexError):
    code = "index_out_of_range"


class EmptySchemeSet(InputError):
    code = "empty_scheme_set"


class CorruptTable(InputError):
    code = "corrupt_table"


class ParseError(InputError):
    code = "parse"


class SingularComponent(MathError):
    code = "singular_component"


class NotAligned(MathError):
    code = "not_aligned"


class OffSupport(MathError):
    code = "off_support"


class BudgetViolation(MathError):
    code = "budget_violation"


class NonConvergence(MathError):
    code = "non_convergence"
