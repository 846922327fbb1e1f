"""Exception types shared across the toolkit."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class NumericOverflow(ArithmeticError):
    """A computation produced a non-finite value where one is not allowed."""


class ModelContractError(RuntimeError):
    """A sampled point violates a declared model regularity contract."""
