"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2), numerical
failures from :class:`SolverError` (CLI exit code 1).
"""

from __future__ import annotations


class StfGridError(Exception):
    """Base class for all package errors."""


class InputError(StfGridError, ValueError):
    """Malformed or unsupported input data."""


class SolverError(StfGridError, RuntimeError):
    """A numerical procedure failed."""


class NotCascadable(InputError):
    """A two-port stamp has no transmission (ABCD) form."""


class DanglingPort(InputError):
    """An element port references a bus that does not exist."""


class NotReducible(InputError):
    """At least one element has a singular current block, so no Ybus exists."""

    def __init__(self, element_ids, reason: str = "singular current block"):
        self.element_ids = list(element_ids)
        super().__init__(f"network not Ybus-reducible ({reason}): {self.element_ids}")


class Unrepresentable(InputError):
    """Element kind has no textbook nodal (Ybus) stamp."""

    def __init__(self, element_ids):
        self.element_ids = list(element_ids)
        super().__init__(f"elements without a nodal stamp: {self.element_ids}")


class IslandedNetwork(InputError):
    """The network graph over closed elements is not connected."""

    def __init__(self, n_components: int):
        self.n_components = n_components
        super().__init__(f"network splits into {n_components} islands")


class MissingLimits(InputError):
    """A limit required by the OPF formulation is absent."""


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 path=None):
        self.line = line
        self.column = column
        self.path = path
        where = ""
        if line is not None:
            where = f" at line {line}" + (f", column {column}" if column is not None else "")
        if path is not None:
            where = f" in {path}" + where
        super().__init__(message + where)


class UnsupportedCostModel(InputError):
    """Only polynomial (model 2) costs of degree at most 2 are supported."""


class SchemaError(InputError):
    """A node-breaker document failed schema validation."""


class UnknownElementKind(InputError):
    """A node-breaker document names an element kind we do not know."""


class SingularTableau(SolverError):
    """The tableau matrix is (numerically) singular.

    ``index`` is the variable index of the offending pivot, when known; ``variable``
    is its human-readable label (for example ``"V[3]"`` for a floating bus).
    """

    def __init__(self, index: int | None = None, variable: str | None = None):
        self.index = index
        self.variable = variable
        msg = "singular tableau"
        if variable is not None:
            msg += f" (near-zero pivot at {variable})"
        elif index is not None:
            msg += f" (near-zero pivot at column {index})"
        super().__init__(msg)


class NonConvergence(SolverError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations "
                         f"(max residual {residual:.3e})")


class SingularJacobian(SolverError):
    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"singular Jacobian at iteration {iteration}")


class MaxIterations(SolverError):
    def __init__(self, iterations: int, kkt_error: float):
        self.iterations = iterations
        self.kkt_error = kkt_error
        super().__init__(f"interior point hit the iteration limit ({iterations}), "
                         f"KKT error {kkt_error:.3e}")


class Infeasible(SolverError):
    """The interior point method could not reduce primal infeasibility."""


class NumericalFailure(SolverError):
    """NaN/Inf or an unfactorizable KKT matrix."""
