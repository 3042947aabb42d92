"""
Principal-branch Lambert W by Newton iteration, and the extra-bidder
estimate built on it.
"""

import math

from src.utils.exceptions import DomainError, SolverError

NEWTON_TOL = 1e-12
MAX_ITER = 100


def lambert_w(x: float, tol: float = NEWTON_TOL, max_iter: int = MAX_ITER) -> float:
    """
    W(x) with W(x)·e^{W(x)} = x, principal branch, x ≥ −1/e.

    Raises:
        DomainError: If x < −1/e
        SolverError: If Newton has not converged after ``max_iter`` steps

    Example:
        >>> abs(lambert_w(math.e) - 1.0) < 1e-12
        True
    """
    branch_point = -1.0 / math.e
    if x < branch_point - 1e-15:
        raise DomainError(f"W is real only for x ≥ −1/e, got {x}")
    if x == 0.0:
        return 0.0
    if abs(x - branch_point) < 1e-15:
        return -1.0

    if x < 1.0:
        # series about the branch point, good enough for Newton to take over
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        w = -1.0 + p - p * p / 3.0 if x < 0 else math.log1p(x)
    else:
        w = math.log(x)
        if x > 3.0:
            w -= math.log(w)

    step = math.inf
    for _ in range(max_iter):
        ew = math.exp(w)
        step = (w * ew - x) / (ew * (w + 1.0))
        w -= step
        if abs(step) <= tol * max(1.0, abs(w)):
            return w
    raise SolverError(f"Lambert W did not converge at x={x} after {max_iter} Newton steps (last step {step:.3g})")


def lambert_cc_estimate(n: int, m: int) -> float:
    """
    (m − 1)·W(n·e/(m − 1)) − n: the number of extra bidders at which per-stage
    second-price revenue catches up with (m − 1)·E[max of n Exp(1)].

    Tends to (e − 1)·n as m grows.

    Raises:
        DomainError: If n < 1 or m < 2
    """
    if n < 1 or m < 2:
        raise DomainError(f"estimate needs n ≥ 1 and m ≥ 2, got n={n}, m={m}")
    k = m - 1
    return k * lambert_w(n * math.e / k) - n
