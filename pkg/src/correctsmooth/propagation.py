"""Iterative propagation kernels over graph operators.

Two fixed-point iterations drive all post-processing in the pipeline:

* label spreading: M <- (1 - alpha) * init + alpha * S @ M, which in exact
  arithmetic converges to (1 - alpha) * (I - alpha S)^{-1} @ init for
  alpha < 1;
* fixed diffusion: rows in a pinned index set never change, every other
  row is repeatedly replaced by the average of its neighbors' current
  rows (the row-stochastic operator applied synchronously).

Updates are synchronous (Jacobi style) in both cases. Iteration stops when
the largest absolute entry change drops to the tolerance or the iteration
cap is reached; the result carries a `converged` flag rather than raising,
so callers decide how strict to be.

`dense_lp_oracle` solves both fixed points exactly by dense factorization
on small graphs and exists purely so the iterative kernels can be tested
against an independent route.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .graph import GraphOperator, spmm


@dataclass(frozen=True)
class SpreadParams:
    """Iteration controls.

    alpha is the retention weight of the spreading iteration and must stay
    below 1 for the map to contract; it corresponds to 1/(1 + mu) for the
    closeness weight mu of the underlying quadratic objective. Fixed
    diffusion has no alpha and ignores the field.
    """

    alpha: float = 0.9
    max_iters: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be positive, got {self.max_iters}")
        if self.tol < 0:
            raise ValidationError(f"tol must be non-negative, got {self.tol}")

    @property
    def mu(self) -> float:
        """Closeness weight implied by alpha (1/alpha - 1); for reports."""
        return 1.0 / self.alpha - 1.0 if self.alpha > 0 else float("inf")


@dataclass
class PropagationResult:
    matrix: np.ndarray
    iterations_run: int
    final_delta: float
    converged: bool


def _check_init(op: GraphOperator, init: np.ndarray) -> np.ndarray:
    init = np.asarray(init, dtype=np.float64)
    if init.ndim == 1:
        init = init[:, None]
    if init.shape[0] != op.n:
        raise ValidationError(
            f"init has {init.shape[0]} rows, operator expects {op.n}")
    return init


def label_spread(op: GraphOperator, init: np.ndarray, params: SpreadParams,
                 on_iterate=None) -> PropagationResult:
    """Run the spreading iteration M <- (1 - alpha) init + alpha op @ M.

    Intended for the symmetric normalized operator, whose spectral norm
    bound keeps every iterate's 2-norm at or below the initial one.
    With alpha = 0 the iteration degenerates to the identity and stops
    after one step. `on_iterate`, when given, is called with each new
    iterate (tests use it to observe the trajectory).
    """
    init = _check_init(op, init)
    current = init.copy()
    base = (1.0 - params.alpha) * init
    delta = np.inf
    iterations = 0
    for iterations in range(1, params.max_iters + 1):
        nxt = base + params.alpha * spmm(op, current)
        delta = float(np.max(np.abs(nxt - current))) if nxt.size else 0.0
        current = nxt
        if on_iterate is not None:
            on_iterate(current)
        if delta <= params.tol:
            return PropagationResult(current, iterations, delta, True)
    return PropagationResult(current, iterations, delta, False)


def fixed_diffusion(op: GraphOperator, init: np.ndarray, fixed,
                    params: SpreadParams, on_iterate=None) -> PropagationResult:
    """Neighbor averaging with a pinned row set.

    Rows listed in `fixed` keep their initial values exactly; all other
    rows are synchronously replaced by op @ M restricted to the free rows.
    Expects the row-stochastic operator, for which every free entry stays
    inside the envelope spanned by the fixed rows and the free starting
    values. params.alpha is ignored. A free connected component that
    touches no fixed node simply keeps averaging its own starting values
    (identically zero stays zero); this is documented behavior, not an
    error.
    """
    init = _check_init(op, init)
    fixed = np.asarray(fixed, dtype=np.int64)
    if fixed.size and (fixed.min() < 0 or fixed.max() >= op.n):
        raise ValidationError("fixed index outside [0, n)")
    mask = np.zeros(op.n, dtype=bool)
    mask[fixed] = True
    free = ~mask

    current = init.copy()
    delta = np.inf
    iterations = 0
    for iterations in range(1, params.max_iters + 1):
        averaged = spmm(op, current)
        diff = averaged[free] - current[free]
        delta = float(np.max(np.abs(diff))) if diff.size else 0.0
        current[free] = averaged[free]
        if on_iterate is not None:
            on_iterate(current)
        if delta <= params.tol:
            return PropagationResult(current, iterations, delta, True)
    return PropagationResult(current, iterations, delta, False)


def dense_lp_oracle(dense_op: np.ndarray, init: np.ndarray, *,
                    alpha: float | None = None, fixed=None,
                    max_n: int = 200) -> np.ndarray:
    """Exact fixed points via dense factorization; the test oracle.

    Exactly one of `alpha` (spreading) or `fixed` (pinned-row diffusion)
    must be given. The spreading solution is
    (1 - alpha) (I - alpha P)^{-1} init; the diffusion solution solves
    (I - P_ff) X_f = P_fc init_c for the free block, which requires every
    free component to reach a fixed node.

    Raises
    ------
    ValidationError
        If n exceeds max_n (this path is deliberately capped) or the
        alpha/fixed selector is ambiguous.
    """
    dense_op = np.asarray(dense_op, dtype=np.float64)
    init = np.asarray(init, dtype=np.float64)
    if init.ndim == 1:
        init = init[:, None]
    n = dense_op.shape[0]
    if dense_op.shape != (n, n) or init.shape[0] != n:
        raise ValidationError("operator/init shapes disagree")
    if n > max_n:
        raise ValidationError(f"dense oracle capped at n={max_n}, got {n}")
    if (alpha is None) == (fixed is None):
        raise ValidationError("give exactly one of alpha= or fixed=")

    if alpha is not None:
        if not 0.0 <= alpha < 1.0:
            raise ValidationError(f"alpha must lie in [0, 1), got {alpha}")
        return (1.0 - alpha) * np.linalg.solve(np.eye(n) - alpha * dense_op, init)

    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(fixed, dtype=np.int64)] = True
    free = ~mask
    out = init.copy()
    if free.any():
        P_ff = dense_op[np.ix_(free, free)]
        P_fc = dense_op[np.ix_(free, mask)]
        rhs = P_fc @ init[mask]
        out[free] = np.linalg.solve(np.eye(int(free.sum())) - P_ff, rhs)
    return out
