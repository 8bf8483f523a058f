"""
Gradient-based minimization shared by the factorization solvers.

Two step rules are available: a fixed step that halves itself whenever the
objective goes up, and Polak-Ribiere+ nonlinear conjugate gradient with an
Armijo backtracking line search.
"""

import logging
from enum import Enum
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from mflab.services.exceptions import OptimizationDivergedError

logger = logging.getLogger(__name__)

FunGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]

ARMIJO_SLOPE = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_BACKTRACKS = 60


class StepRule(str, Enum):
    """How the next iterate is chosen."""
    FIXED = "fixed"
    CONJUGATE_GRADIENT = "cg"


class OptimizeResult(NamedTuple):
    """Outcome of a minimization run."""
    x: np.ndarray
    fun: float
    n_iter: int
    converged: bool
    history: List[float]
    message: str


class ParameterPacker:
    """Flattens named matrix blocks into one vector and back."""

    def __init__(self, shapes: Dict[str, Tuple[int, ...]]):
        self.shapes = dict(shapes)
        self._slices: Dict[str, slice] = {}
        offset = 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape))
            self._slices[name] = slice(offset, offset + size)
            offset += size
        self.size = offset

    def pack(self, **blocks: np.ndarray) -> np.ndarray:
        flat = np.empty(self.size, dtype=np.float64)
        for name, shape in self.shapes.items():
            flat[self._slices[name]] = np.asarray(blocks[name], dtype=np.float64).reshape(-1)
        return flat

    def unpack(self, flat: np.ndarray) -> Dict[str, np.ndarray]:
        return {
            name: flat[self._slices[name]].reshape(shape)
            for name, shape in self.shapes.items()
        }


def _relative_change(previous: float, current: float) -> float:
    return abs(previous - current) / max(1.0, abs(previous))


def _armijo(
    fun_grad: FunGrad,
    x: np.ndarray,
    f: float,
    g: np.ndarray,
    direction: np.ndarray,
    step: float,
) -> Optional[Tuple[float, np.ndarray, float, np.ndarray]]:
    """Backtrack from `step` until sufficient decrease; None when no step works."""
    slope = float(g @ direction)
    for _ in range(MAX_BACKTRACKS):
        candidate = x + step * direction
        f_new, g_new = fun_grad(candidate)
        if np.isfinite(f_new) and f_new <= f + ARMIJO_SLOPE * step * slope:
            return step, candidate, f_new, g_new
        step *= BACKTRACK_FACTOR
    return None


def minimize(
    fun_grad: FunGrad,
    x0: np.ndarray,
    step_rule: StepRule = StepRule.CONJUGATE_GRADIENT,
    step_size: float = 0.01,
    max_iters: int = 500,
    rel_tol: float = 1e-5,
    grad_tol: float = 1e-10,
    restart_every: Optional[int] = None,
    log_every: int = 50,
) -> OptimizeResult:
    """
    Minimize a smooth objective given as a function returning (value, gradient).

    Args:
        fun_grad: Objective and gradient at a flat parameter vector
        x0: Starting point
        step_rule: FIXED (accept-or-halve) or CONJUGATE_GRADIENT
        step_size: Initial step length c for the fixed rule
        max_iters: Iteration cap
        rel_tol: Stop when |f_t - f_{t-1}| / max(1, |f_{t-1}|) falls below this
        grad_tol: Stop when the gradient norm falls below this
        restart_every: Conjugate-gradient restart period (steepest descent step)
        log_every: DEBUG progress interval

    Returns:
        OptimizeResult with the final iterate and the objective history of
        accepted iterates

    Raises:
        OptimizationDivergedError: If the starting objective is not finite
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    f, g = fun_grad(x)
    if not np.isfinite(f):
        raise OptimizationDivergedError(0, f)

    history = [float(f)]
    restart_every = restart_every or max(1, x.size)
    direction = -g
    steepest = True
    step = step_size
    converged = False
    message = "iteration limit reached"

    for iteration in range(1, max_iters + 1):
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= grad_tol:
            converged = True
            message = "gradient norm below tolerance"
            break

        if step_rule == StepRule.FIXED:
            found = None
            while step > 1e-20:
                candidate = x - step * g
                f_new, g_new = fun_grad(candidate)
                if np.isfinite(f_new) and f_new <= f:
                    found = (step, candidate, f_new, g_new)
                    break
                step *= BACKTRACK_FACTOR
        else:
            if float(g @ direction) >= 0:
                direction, steepest = -g, True
            trial = min(1.0, 1.0 / grad_norm) if iteration == 1 else min(2.0 * step, 1e6)
            found = _armijo(fun_grad, x, f, g, direction, trial)
            if found is None and not steepest:
                direction, steepest = -g, True
                found = _armijo(fun_grad, x, f, g, direction, min(1.0, 1.0 / grad_norm))

        if found is None:
            converged = True
            message = "no decreasing step"
            break
        step, x_new, f_new, g_new = found

        if step_rule == StepRule.CONJUGATE_GRADIENT:
            # Polak-Ribiere+ with periodic restart
            if iteration % restart_every == 0:
                direction, steepest = -g_new, True
            else:
                beta = max(0.0, float(g_new @ (g_new - g)) / float(g @ g))
                direction, steepest = -g_new + beta * direction, beta == 0.0

        change = _relative_change(f, f_new)
        x, f, g = x_new, f_new, g_new
        history.append(float(f))

        if iteration % log_every == 0:
            logger.debug(f"iter {iteration}: objective={f:.6g}, |grad|={np.linalg.norm(g):.3g}")

        if change < rel_tol:
            converged = True
            message = "relative objective change below tolerance"
            break

    return OptimizeResult(
        x=x,
        fun=float(f),
        n_iter=len(history) - 1,
        converged=converged,
        history=history,
        message=message,
    )


def uniform_init(rng: np.random.Generator, shape: Sequence[int], latent_dim: int) -> np.ndarray:
    """Entries uniform in [-0.5, 0.5] scaled by 1/sqrt(d)."""
    return rng.uniform(-0.5, 0.5, size=tuple(shape)) / np.sqrt(latent_dim)
