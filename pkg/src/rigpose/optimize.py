"""Levenberg-Marquardt minimization of nonlinear least-squares problems.

Parameters live in a flat ambient vector split into blocks. A block is
either plain Euclidean, or a rotation stored as 9 row-major matrix entries
and updated through local 3-vector increments R <- R @ exp(skew(delta)),
which keeps bundle adjustment away from any global parameterization
singularity. Jacobians are expressed in local coordinates (3 columns per
rotation block); when no analytic Jacobian is supplied, central differences
are used and flagged in the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure
from .geometry import project_to_rotation, rotvec_to_rotation


@dataclass(frozen=True)
class ParamBlock:
    kind: str  # "euclidean" | "rotation"
    size: int  # ambient size; rotations are always 9
    offset: int

    @property
    def local_size(self) -> int:
        return 3 if self.kind == "rotation" else self.size


def make_blocks(spec: list[tuple[str, int]]) -> list[ParamBlock]:
    """Build blocks from (kind, size) pairs; rotation sizes must be 9."""
    blocks = []
    offset = 0
    for kind, size in spec:
        if kind == "rotation" and size != 9:
            raise ValueError("rotation blocks store 9 ambient values")
        if kind not in ("euclidean", "rotation"):
            raise ValueError(f"unknown block kind {kind!r}")
        blocks.append(ParamBlock(kind, size, offset))
        offset += size
    return blocks


class LeastSquaresProblem:
    """Residual function over a blocked parameter vector.

    Args:
        x0: initial ambient parameter vector.
        blocks: (kind, size) pairs covering x0 exactly.
        residual_fn: maps ambient vector to residual vector.
        jacobian_fn: optional; maps ambient vector to an (m, local_dim)
            Jacobian in local coordinates, ordered block by block.
    """

    def __init__(self, x0, blocks, residual_fn, jacobian_fn=None):
        self.x0 = np.asarray(x0, dtype=float).copy()
        self.blocks = make_blocks(list(blocks))
        if sum(b.size for b in self.blocks) != self.x0.size:
            raise ValueError("blocks do not cover the parameter vector")
        self.residual_fn = residual_fn
        self.jacobian_fn = jacobian_fn
        self.local_dim = sum(b.local_size for b in self.blocks)

    def residual(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.residual_fn(x), dtype=float).ravel()

    def retract(self, x: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """Apply a local step; rotation blocks are re-orthonormalized."""
        out = np.array(x, dtype=float)
        pos = 0
        for b in self.blocks:
            d = delta[pos : pos + b.local_size]
            pos += b.local_size
            if b.kind == "euclidean":
                out[b.offset : b.offset + b.size] += d
            else:
                R = x[b.offset : b.offset + 9].reshape(3, 3)
                R_new = project_to_rotation(R @ rotvec_to_rotation(d))
                out[b.offset : b.offset + 9] = R_new.ravel()
        return out

    def local_reference(self, x: np.ndarray) -> np.ndarray:
        """Local coordinate magnitudes used for relative step sizing."""
        vals = []
        for b in self.blocks:
            if b.kind == "euclidean":
                vals.append(x[b.offset : b.offset + b.size])
            else:
                vals.append(np.zeros(3))
        return np.concatenate(vals) if vals else np.zeros(0)

    def jacobian_fd(self, x: np.ndarray) -> np.ndarray:
        ref = np.abs(self.local_reference(x))
        m = self.residual(x).size
        J = np.empty((m, self.local_dim))
        for i in range(self.local_dim):
            h = 1e-6 * (1.0 + ref[i])
            e = np.zeros(self.local_dim)
            e[i] = h
            J[:, i] = (self.residual(self.retract(x, e)) - self.residual(self.retract(x, -e))) / (2.0 * h)
        return J

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        if self.jacobian_fn is not None:
            return np.asarray(self.jacobian_fn(x), dtype=float)
        return self.jacobian_fd(x)


@dataclass(frozen=True)
class SolveConfig:
    gradient_tol: float = 1e-10
    step_tol: float = 1e-12
    cost_tol: float = 1e-12
    max_iterations: int = 200
    initial_lambda_scale: float = 1e-3


@dataclass
class SolveReport:
    initial_cost: float
    final_cost: float
    iterations: int
    reason: str  # "gradient" | "step" | "cost" | "max_iter"
    jacobian_source: str  # "analytic" | "finite_difference"
    cost_trace: list[float] = field(default_factory=list)


def minimize(problem: LeastSquaresProblem, config: SolveConfig = SolveConfig()):
    """Run LM until a tolerance fires. Accepted cost never increases.

    Returns:
        (x, SolveReport)

    Raises:
        NumericalFailure: non-finite residual/Jacobian at the start, or no
            finite progress is possible.
    """
    x = problem.x0.copy()
    r = problem.residual(x)
    if not np.all(np.isfinite(r)):
        raise NumericalFailure("residual not finite at the initial point")
    cost = float(r @ r)
    trace = [cost]
    lam = None
    reason = "max_iter"
    iterations = 0

    for iterations in range(1, config.max_iterations + 1):
        J = problem.jacobian(x)
        if not np.all(np.isfinite(J)):
            raise NumericalFailure("Jacobian not finite")
        grad = J.T @ r
        JtJ = J.T @ J
        if np.max(np.abs(grad)) < config.gradient_tol:
            reason = "gradient"
            iterations -= 1
            break
        if lam is None:
            lam = config.initial_lambda_scale * max(float(np.max(np.diag(JtJ))), 1e-12)

        accepted = False
        while lam < 1e30:
            try:
                delta = np.linalg.solve(JtJ + lam * np.eye(JtJ.shape[0]), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_try = problem.retract(x, delta)
            r_try = problem.residual(x_try)
            cost_try = float(r_try @ r_try) if np.all(np.isfinite(r_try)) else np.inf
            if cost_try < cost:
                step_norm = float(np.linalg.norm(delta))
                rel_drop = (cost - cost_try) / max(cost, 1e-300)
                x, r, cost = x_try, r_try, cost_try
                trace.append(cost)
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if step_norm < config.step_tol * (1.0 + float(np.linalg.norm(problem.local_reference(x)))):
                    reason = "step"
                elif rel_drop < config.cost_tol:
                    reason = "cost"
                break
            lam *= 10.0
        if not accepted:
            reason = "step"
            break
        if reason in ("step", "cost"):
            break

    report = SolveReport(
        initial_cost=trace[0],
        final_cost=cost,
        iterations=iterations,
        reason=reason,
        jacobian_source="analytic" if problem.jacobian_fn is not None else "finite_difference",
        cost_trace=trace,
    )
    return x, report


def check_jacobian(problem: LeastSquaresProblem, x: np.ndarray | None = None) -> float:
    """Max relative deviation between analytic and central-difference Jacobians."""
    if problem.jacobian_fn is None:
        raise ValueError("problem has no analytic Jacobian to check")
    x = problem.x0 if x is None else np.asarray(x, dtype=float)
    Ja = problem.jacobian(x)
    Jfd = problem.jacobian_fd(x)
    denom = np.maximum(1.0, np.maximum(np.abs(Ja), np.abs(Jfd)))
    return float(np.max(np.abs(Ja - Jfd) / denom))
