"""Exception hierarchy.

Two families matter to callers: :class:`ConfigError` (bad input, exit code 2
from the CLI) and :class:`NumericalError` (a run that went wrong numerically,
exit code 3).
"""


class HybridSimError(Exception):
    """Base class for all package errors."""


class ConfigError(HybridSimError, ValueError):
    """Invalid input: matrices, configs, parameters."""


class NumericalError(HybridSimError, ArithmeticError):
    """A computation failed to produce a finite or converged result."""


class NonSquareError(ConfigError):
    def __init__(self, shape):
        self.shape = tuple(shape)
        super().__init__(f"transition matrix must be square, got shape {self.shape}")


class NegativeEntryError(ConfigError):
    def __init__(self, i, j, value):
        self.i, self.j, self.value = i, j, value
        super().__init__(f"negative transition probability Q[{i}][{j}] = {value!r}")


class RowSumError(ConfigError):
    def __init__(self, i, total):
        self.i, self.total = i, total
        super().__init__(f"row {i} of transition matrix sums to {total!r}, expected 1")


class IndexOutOfRangeError(ConfigError, IndexError):
    def __init__(self, index, size):
        self.index, self.size = index, size
        super().__init__(f"state index {index} out of range for {size} states")


class SizeMismatchError(ConfigError):
    pass


class SequenceTooShortError(ConfigError):
    pass


class NodeBudgetExceededError(ConfigError):
    def __init__(self, required, budget):
        self.required, self.budget = required, budget
        super().__init__(f"spider tree needs up to {required} nodes, budget is {budget}")


class GridMismatchError(ConfigError):
    pass


class DomainError(ConfigError):
    pass


class UnknownSystemError(ConfigError):
    def __init__(self, name, available):
        self.name, self.available = name, tuple(available)
        super().__init__(
            f"unknown system {name!r}; available: {', '.join(self.available)}"
        )


class SchemaViolationError(ConfigError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class NonFiniteStateError(NumericalError):
    pass


class NoConvergenceError(NumericalError):
    def __init__(self, max_iters, change):
        self.max_iters, self.change = max_iters, change
        super().__init__(
            f"no convergence after {max_iters} iterations (last L1 change {change:.3e})"
        )
