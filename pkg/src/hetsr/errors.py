class DegenerateSignalError(ArithmeticError):
    """Noise-subtracted variance in the fundamental mode is not positive."""


class ConvergenceError(RuntimeError):
    """An iterative refinement hit its iteration cap."""


class QuadratureError(RuntimeError):
    """Numerical integration failed or its integrand underflowed."""
