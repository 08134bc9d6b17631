"""Sparse linear algebra, Newton iteration and adaptive time stepping.

The transient driver retries a rejected time step with half the step
size and grows the step by 1.4 (capped) after every accepted step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla


class SingularMatrix(Exception):
    """Raised when a direct solve fails or leaves a large residual."""


class NewtonFailure(Exception):
    """Newton did not converge; carries the number of iterations spent."""

    def __init__(self, message: str, iterations: int):
        super().__init__(message)
        self.iterations = iterations


class StepFloorReached(Exception):
    """The time step was halved below the configured floor."""


@dataclass
class SparseSystem:
    """Square sparse system ``matrix @ x = rhs``."""

    matrix: sps.spmatrix
    rhs: np.ndarray

    def __post_init__(self):
        n, m = self.matrix.shape
        if n != m or len(self.rhs) != n:
            raise ValueError("system must be square and match the rhs")

    @classmethod
    def from_triplets(cls, n, rows, cols, vals, rhs) -> "SparseSystem":
        """Assemble from COO triplets; duplicate entries are summed."""
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        if rows.size and (rows.min() < 0 or rows.max() >= n
                          or cols.min() < 0 or cols.max() >= n):
            raise ValueError("triplet index out of range")
        mat = sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return cls(mat, np.asarray(rhs, dtype=float))


@dataclass
class NewtonConfig:
    res_tol: float = 1e-10        # absolute l-inf residual tolerance
    step_tol: float = 1e-8        # relative l-inf update tolerance
    max_iter: int = 50
    positivity_damping: bool = True

    def __post_init__(self):
        if self.res_tol <= 0 or self.step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class TimeStepper:
    dt_ini: float
    dt_max: float
    dt: float = None  # type: ignore[assignment]
    growth: float = 1.4
    shrink: float = 0.5
    floor: float = 1e-12

    def __post_init__(self):
        if self.dt is None:
            object.__setattr__(self, "dt", self.dt_ini)
        if not 0 < self.dt_ini <= self.dt_max:
            raise ValueError("require 0 < dt_ini <= dt_max")
        if self.floor <= 0:
            raise ValueError("floor must be positive")


def solve_linear(system: SparseSystem) -> np.ndarray:
    """Direct sparse solve with one step of iterative refinement."""
    A = system.matrix.tocsc()
    b = system.rhs
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from None
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("direct solve produced non-finite values")
    tol = 1e-10 * (1.0 + float(np.linalg.norm(b)))
    res = b - A @ x
    if np.linalg.norm(res) > tol:
        x = x + lu.solve(res)
        res = b - A @ x
        if np.linalg.norm(res) > tol:
            raise SingularMatrix(
                f"linear residual {np.linalg.norm(res):.3e} exceeds {tol:.3e}"
            )
    return x


def positivity_step_fraction(x: np.ndarray, delta: np.ndarray,
                             mask: np.ndarray, floor_frac: float = 1e-12) -> float:
    """Largest theta in (0, 1] with x + theta*delta >= floor_frac*x on mask."""
    xm = x[mask]
    dm = delta[mask]
    shrinking = dm < 0.0
    if not np.any(shrinking):
        return 1.0
    allowed = (1.0 - floor_frac) * xm[shrinking] / (-dm[shrinking])
    return float(min(1.0, allowed.min()))


def newton(residual: Callable[[np.ndarray], np.ndarray],
           jacobian: Callable[[np.ndarray], sps.spmatrix],
           x0: np.ndarray,
           cfg: NewtonConfig,
           positive_mask: np.ndarray | None = None,
           solve: Callable[[SparseSystem], np.ndarray] = solve_linear,
           ) -> tuple[np.ndarray, int]:
    """Newton iteration; returns (solution, iterations) or raises
    :class:`NewtonFailure`.

    Convergence requires both a small residual and a small relative
    update. When ``positive_mask`` is given and damping is enabled, steps
    are scaled to keep the masked components strictly positive.
    """
    x = np.array(x0, dtype=float)
    try:
        f = residual(x)
    except ArithmeticError as exc:
        raise NewtonFailure(f"residual undefined at start: {exc}", 0) from None
    if not np.all(np.isfinite(f)):
        raise NewtonFailure("non-finite residual at start", 0)
    if float(np.abs(f).max(initial=0.0)) <= cfg.res_tol:
        return x, 0

    for it in range(1, cfg.max_iter + 1):
        try:
            jac = jacobian(x)
            delta = solve(SparseSystem(jac, -f))
        except (ArithmeticError, SingularMatrix) as exc:
            raise NewtonFailure(f"linearisation failed: {exc}", it) from None
        theta = 1.0
        if cfg.positivity_damping and positive_mask is not None:
            theta = positivity_step_fraction(x, delta, positive_mask)
        x = x + theta * delta
        try:
            f = residual(x)
        except ArithmeticError as exc:
            raise NewtonFailure(f"residual undefined: {exc}", it) from None
        if not np.all(np.isfinite(f)):
            raise NewtonFailure("non-finite residual", it)
        res_ok = float(np.abs(f).max(initial=0.0)) <= cfg.res_tol
        step_ok = theta * float(np.abs(delta).max(initial=0.0)) \
            <= cfg.step_tol * (1.0 + float(np.abs(x).max(initial=0.0)))
        if res_ok and step_ok:
            return x, it
    raise NewtonFailure(f"no convergence in {cfg.max_iter} iterations",
                        cfg.max_iter)


def step_control(stepper: TimeStepper, success: bool) -> TimeStepper:
    """Pure update of the step size: halve on failure (raising once the
    floor is crossed), grow by the capped growth factor on success."""
    if success:
        return replace(stepper, dt=min(stepper.growth * stepper.dt, stepper.dt_max))
    dt = stepper.shrink * stepper.dt
    if dt < stepper.floor:
        raise StepFloorReached(f"time step {dt:.3e} below floor {stepper.floor:.3e}")
    return replace(stepper, dt=dt)


@dataclass
class StepRecord:
    time: float
    dt: float
    newton_iterations: int
    state: np.ndarray


@dataclass
class TransientResult:
    records: list[StepRecord]
    rejections: int

    @property
    def final_state(self) -> np.ndarray:
        return self.records[-1].state


def run_transient(problem_factory: Callable[[np.ndarray, float], tuple],
                  x0: np.ndarray,
                  t_end: float,
                  stepper: TimeStepper,
                  cfg: NewtonConfig,
                  positive_mask: np.ndarray | None = None,
                  solve: Callable[[SparseSystem], np.ndarray] = solve_linear,
                  first_guess: np.ndarray | None = None,
                  ) -> TransientResult:
    """Backward-Euler time loop with adaptive step control.

    ``problem_factory(prev_state, dt)`` returns the pair
    ``(residual, jacobian)`` of the implicit step equations. The initial
    state is recorded as a step at time zero; integration proceeds until
    the accumulated time reaches ``t_end`` (the last step may overshoot).
    Newton starts from the previous accepted state; ``first_guess``, when
    given, replaces that start for every attempt of the first step.
    """
    records = [StepRecord(0.0, 0.0, 0, np.array(x0, dtype=float))]
    rejections = 0
    t = 0.0
    x = np.array(x0, dtype=float)
    while t < t_end:
        dt = stepper.dt
        residual, jacobian = problem_factory(x, dt)
        guess = first_guess if (first_guess is not None and len(records) == 1) else x
        try:
            x_new, iters = newton(residual, jacobian, guess, cfg,
                                  positive_mask=positive_mask, solve=solve)
        except NewtonFailure:
            rejections += 1
            stepper = step_control(stepper, success=False)
            continue
        t += dt
        x = x_new
        records.append(StepRecord(t, dt, iters, x.copy()))
        stepper = step_control(stepper, success=True)
    return TransientResult(records, rejections)
