"""Absolute pose of a generalized camera from n >= 3 ray/point pairs.

Minimizes the sum of squared cross-product residuals |[f]x (R M + t - v)|^2
over all observations. The translation is eliminated in closed form, the
first-order stationarity conditions in the rotation become six quartic
polynomials in the three Cayley parameters after clearing the rational
denominator, and all real stationary rotations are recovered at once.

Two interchangeable root-finding backends:

- "action" (default): elimination template plus action-matrix eigenvalue
  method. The quotient basis (40 solutions, shift degree 8) lives in
  _gpnp_template.py and is regenerated by tools/generate_gpnp_template.py.
- "sampling": deterministic rotation-space seeding with batched
  Gauss-Newton on the six residuals; slower, no template.

Every returned root is Newton-polished and kept only if its normalized
stationarity residual is below 1e-6. Candidates are scored by the original
objective; ties within 1e-12 relative cost prefer more points at positive
ray depth.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _gpnp_template as _template
from .camera import GeneralizedObservation
from .errors import (
    DegenerateGeometry,
    NoRealRoots,
    RankDeficientB,
    TooFewPoints,
)
from .geometry import RigidTransform, cayley_to_rotation, rotation_to_cayley, skew
from .optimize import LeastSquaresProblem, SolveConfig, minimize

STATIONARITY_TOL = 1e-6
_ACTION_MIX = (0.6180339887498949, 0.5174320933024708, 0.3922195409328054)


# ---------------------------------------------------------------------------
# stacked linear system
# ---------------------------------------------------------------------------


@dataclass
class StackedSystem:
    """Rows [f]x Y, [f]x, [f]x v grouped in triples per observation.

    H and g are the reduced normal-equation blocks of the translation-
    eliminated objective: cost(R) = r^T H r - 2 g^T r + const with
    r = vec(R) row-major. The projector I - B B^+ is never materialized in
    the solve path; projector() builds it on demand for diagnostics.
    """

    A: np.ndarray  # (3n, 9)
    B: np.ndarray  # (3n, 3)
    D: np.ndarray  # (3n,)
    n: int
    B_pinv: np.ndarray  # (3, 3n)
    H: np.ndarray  # (9, 9)
    g: np.ndarray  # (9,)

    def projector(self) -> np.ndarray:
        """I - B B^+ materialized (3n x 3n)."""
        return np.eye(3 * self.n) - self.B @ self.B_pinv

    def projector_squared(self) -> np.ndarray:
        P = self.projector()
        return P.T @ P

    def apply_projector(self, e: np.ndarray) -> np.ndarray:
        return e - self.B @ (self.B_pinv @ e)

    def cost(self, rotation: np.ndarray, translation: np.ndarray) -> float:
        r = np.asarray(rotation, dtype=float).ravel()
        res = self.A @ r + self.B @ np.asarray(translation, dtype=float) - self.D
        return float(res @ res)

    def reduced_cost(self, rotation: np.ndarray) -> float:
        e = self.A @ np.asarray(rotation, dtype=float).ravel() - self.D
        pe = self.apply_projector(e)
        return float(pe @ pe)


def _stack_arrays(f: np.ndarray, v: np.ndarray, M: np.ndarray):
    n = f.shape[0]
    S = np.zeros((n, 3, 3))
    S[:, 0, 1] = -f[:, 2]
    S[:, 0, 2] = f[:, 1]
    S[:, 1, 0] = f[:, 2]
    S[:, 1, 2] = -f[:, 0]
    S[:, 2, 0] = -f[:, 1]
    S[:, 2, 1] = f[:, 0]
    A = np.einsum("nrc,nk->nrck", S, M).reshape(3 * n, 9)
    B = S.reshape(3 * n, 3)
    D = np.einsum("nrc,nc->nr", S, v).reshape(3 * n)
    return A, B, D


def _reduce_system(A: np.ndarray, B: np.ndarray, D: np.ndarray):
    BtB = B.T @ B
    sv = np.linalg.svd(B, compute_uv=False)
    if sv[-1] <= 1e-10 * max(sv[0], 1e-300):
        raise RankDeficientB("ray directions are all parallel")
    B_pinv = np.linalg.solve(BtB, B.T)
    AtB = A.T @ B
    H = A.T @ A - AtB @ (B_pinv @ A)
    g = A.T @ D - AtB @ (B_pinv @ D)
    return B_pinv, H, g


def build_system(observations: list[GeneralizedObservation]) -> StackedSystem:
    """Stack observation rows and reduce out the translation.

    Raises:
        TooFewPoints: fewer than 3 observations.
        RankDeficientB: all ray directions parallel.
    """
    n = len(observations)
    if n < 3:
        raise TooFewPoints(f"need at least 3 observations, got {n}")
    f = np.array([o.f for o in observations])
    v = np.array([o.v for o in observations])
    M = np.array([o.point for o in observations])
    A, B, D = _stack_arrays(f, v, M)
    B_pinv, H, g = _reduce_system(A, B, D)
    sys_ = StackedSystem(A=A, B=B, D=D, n=n, B_pinv=B_pinv, H=H, g=g)
    # the projector is idempotent and symmetric, so (I-BB+)^T(I-BB+) must
    # equal I-BB+ itself; verify the two forms agree on a probe vector
    probe = np.cos(np.arange(3 * n, dtype=float))
    once = sys_.apply_projector(probe)
    twice = sys_.apply_projector(once)
    if np.max(np.abs(twice - once)) > 1e-9 * max(1.0, float(np.max(np.abs(probe)))):
        raise RankDeficientB("translation projector is numerically inconsistent")
    return sys_


def solve_translation(system: StackedSystem, rotation: np.ndarray) -> np.ndarray:
    """Least-squares translation for a fixed rotation: t = -B^+ (A r - D)."""
    r = np.asarray(rotation, dtype=float).ravel()
    return -system.B_pinv @ (system.A @ r - system.D)


# ---------------------------------------------------------------------------
# stationarity polynomials
# ---------------------------------------------------------------------------


def _cayley_numerator(q: np.ndarray) -> np.ndarray:
    """(1 + |q|^2) times the rotation of q; polynomial in q."""
    q = np.asarray(q, dtype=float)
    s = float(q @ q)
    return (1.0 - s) * np.eye(3) + 2.0 * np.outer(q, q) + 2.0 * skew(q)


def _eval_cleared(H: np.ndarray, g: np.ndarray, q: np.ndarray) -> np.ndarray:
    """The six denominator-cleared stationarity values at q."""
    q = np.asarray(q, dtype=float)
    s = float(q @ q)
    Rt = _cayley_numerator(q)
    Mt = (H @ Rt.ravel() - (1.0 + s) * g).reshape(3, 3)
    E = Rt.T @ Mt - Mt.T @ Rt
    F = Mt @ Rt.T - Rt @ Mt.T
    return np.array([E[0, 1], E[0, 2], E[1, 2], F[0, 1], F[0, 2], F[1, 2]])


def optimality_polynomials(system: StackedSystem, q: np.ndarray) -> np.ndarray:
    """Denominator-cleared stationarity residuals (E12, E13, E23, F12, F13, F23).

    All six vanish exactly at stationary rotations of the reduced
    objective; they are polynomials of degree four in the Cayley vector.
    """
    return _eval_cleared(system.H, system.g, q)


# ---------------------------------------------------------------------------
# monomial bookkeeping for the action-matrix backend
# ---------------------------------------------------------------------------


def _grevlex_key(mono):
    return (sum(mono), tuple(-e for e in reversed(mono)))


def _monomials_up_to(deg: int):
    out = [
        (i, j, k)
        for i in range(deg + 1)
        for j in range(deg + 1)
        for k in range(deg + 1)
        if i + j + k <= deg
    ]
    out.sort(key=_grevlex_key, reverse=True)
    return out


def _poly_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            key = (ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2])
            out[key] = out.get(key, 0.0) + ca * cb
    return out


_RT_COEFFS = (
    {(0, 0, 0): 1.0, (2, 0, 0): 1.0, (0, 2, 0): -1.0, (0, 0, 2): -1.0},
    {(1, 1, 0): 2.0, (0, 0, 1): -2.0},
    {(0, 1, 0): 2.0, (1, 0, 1): 2.0},
    {(1, 1, 0): 2.0, (0, 0, 1): 2.0},
    {(0, 0, 0): 1.0, (2, 0, 0): -1.0, (0, 2, 0): 1.0, (0, 0, 2): -1.0},
    {(0, 1, 1): 2.0, (1, 0, 0): -2.0},
    {(1, 0, 1): 2.0, (0, 1, 0): -2.0},
    {(1, 0, 0): 2.0, (0, 1, 1): 2.0},
    {(0, 0, 0): 1.0, (2, 0, 0): -1.0, (0, 2, 0): -1.0, (0, 0, 2): 1.0},
)
_ONE_PLUS_S = {(0, 0, 0): 1.0, (2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0}


def _expand_polys_dict(H: np.ndarray, g: np.ndarray) -> list[dict]:
    """Coefficient dictionaries of the six cleared polynomials."""
    MT = []
    for j in range(9):
        entry: dict = {}
        for m in range(9):
            c = H[j, m]
            if c != 0.0:
                for mono, val in _RT_COEFFS[m].items():
                    entry[mono] = entry.get(mono, 0.0) + c * val
        if g[j] != 0.0:
            for mono, val in _ONE_PLUS_S.items():
                entry[mono] = entry.get(mono, 0.0) - g[j] * val
        MT.append(entry)

    def e_entry(a, b):
        out: dict = {}
        for c in range(3):
            for mono, val in _poly_mul(_RT_COEFFS[3 * c + a], MT[3 * c + b]).items():
                out[mono] = out.get(mono, 0.0) + val
            for mono, val in _poly_mul(MT[3 * c + a], _RT_COEFFS[3 * c + b]).items():
                out[mono] = out.get(mono, 0.0) - val
        return out

    def f_entry(a, b):
        out: dict = {}
        for c in range(3):
            for mono, val in _poly_mul(MT[3 * a + c], _RT_COEFFS[3 * b + c]).items():
                out[mono] = out.get(mono, 0.0) + val
            for mono, val in _poly_mul(_RT_COEFFS[3 * a + c], MT[3 * b + c]).items():
                out[mono] = out.get(mono, 0.0) - val
        return out

    return [e_entry(0, 1), e_entry(0, 2), e_entry(1, 2), f_entry(0, 1), f_entry(0, 2), f_entry(1, 2)]


class _SolverContext:
    """Precomputed tables shared by every action-backend solve."""

    def __init__(self):
        dmax = _template.SHIFT_MAX_DEGREE
        self.basis = [tuple(m) for m in _template.BASIS]
        basis_set = set(self.basis)
        self.mono4 = _monomials_up_to(4)
        self.mono4_idx = {m: i for i, m in enumerate(self.mono4)}
        all_monos = _monomials_up_to(dmax)
        self.nb = [m for m in all_monos if m not in basis_set]
        self.basis_cols = [m for m in all_monos if m in basis_set]
        cols = self.nb + self.basis_cols
        self.col_idx = {m: i for i, m in enumerate(cols)}
        self.n_nb = len(self.nb)
        self.n_basis = len(self.basis_cols)
        mults = _monomials_up_to(dmax - 4)
        self.mults = mults
        self.shift_cols = np.array(
            [
                [self.col_idx[(mu[0] + m[0], mu[1] + m[1], mu[2] + m[2])] for m in self.mono4]
                for mu in mults
            ],
            dtype=np.intp,
        )
        self.nb_pos = {m: i for i, m in enumerate(self.nb)}
        self.basis_pos = {m: i for i, m in enumerate(self.basis_cols)}
        self.extract_idx = [self.basis_pos[m] for m in ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))]
        # coefficients of each cleared polynomial are linear in (H, g)
        tensor = np.zeros((6, len(self.mono4), 90))
        for k in range(90):
            H = np.zeros((9, 9))
            g = np.zeros(9)
            if k < 81:
                H[divmod(k, 9)] = 1.0
            else:
                g[k - 81] = 1.0
            for j, poly in enumerate(_expand_polys_dict(H, g)):
                for mono, val in poly.items():
                    tensor[j, self.mono4_idx[mono], k] = val
        self.coeff_tensor = tensor

    def coefficients(self, H: np.ndarray, g: np.ndarray) -> np.ndarray:
        """(6, len(mono4)) coefficient matrix of the cleared polynomials."""
        return self.coeff_tensor @ np.concatenate([H.ravel(), g])


_CONTEXT: _SolverContext | None = None


def _context() -> _SolverContext:
    global _CONTEXT
    if _CONTEXT is None:
        _CONTEXT = _SolverContext()
    return _CONTEXT


def _coefficient_scales(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    coeffs = _context().coefficients(H, g)
    return np.maximum(np.max(np.abs(coeffs), axis=1), 1e-300)


def stationarity_residual(system: StackedSystem, q: np.ndarray) -> float:
    """Scale-free stationarity measure: max |p_j(q)| / (kappa_j (1+|q|^2)^2)."""
    q = np.asarray(q, dtype=float)
    s = float(q @ q)
    kappa = _coefficient_scales(system.H, system.g)
    vals = np.abs(_eval_cleared(system.H, system.g, q))
    return float(np.max(vals / (kappa * (1.0 + s) ** 2)))


# ---------------------------------------------------------------------------
# root finding backends
# ---------------------------------------------------------------------------


def _polish_roots(H: np.ndarray, g: np.ndarray, kappa: np.ndarray, roots: np.ndarray) -> list[np.ndarray]:
    """Gauss-Newton polish on the six residuals; keep converged, dedupe."""

    def norm_res(q):
        s = float(q @ q)
        return np.max(np.abs(_eval_cleared(H, g, q)) / (kappa * (1.0 + s) ** 2))

    polished = []
    for q0 in roots:
        q = np.array(q0, dtype=float)
        best = (norm_res(q), q.copy())
        for _ in range(25):
            res = _eval_cleared(H, g, q)
            J = np.empty((6, 3))
            h = 1e-7 * (1.0 + np.abs(q))
            for k in range(3):
                e = np.zeros(3)
                e[k] = h[k]
                J[:, k] = (_eval_cleared(H, g, q + e) - _eval_cleared(H, g, q - e)) / (2.0 * h[k])
            delta, *_ = np.linalg.lstsq(J, -res, rcond=None)
            norm = np.linalg.norm(delta)
            if norm > 0.5:
                delta *= 0.5 / norm
            q = q + delta
            cur = norm_res(q)
            if cur < best[0]:
                best = (cur, q.copy())
            if cur < 1e-13 or norm < 1e-14 * (1.0 + np.linalg.norm(q)):
                break
        if best[0] < STATIONARITY_TOL:
            polished.append(best)
    polished.sort(key=lambda item: item[0])
    out: list[np.ndarray] = []
    for _, q in polished:
        if all(np.max(np.abs(q - prev)) > 1e-6 * (1.0 + np.max(np.abs(q))) for prev in out):
            out.append(q)
    return out


def _roots_action(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """All candidate Cayley roots via the elimination template."""
    ctx = _context()
    coeffs = ctx.coefficients(H, g)
    scale = np.maximum(np.max(np.abs(coeffs), axis=1), 1e-300)
    coeffs = coeffs / scale[:, None]

    n_mults = len(ctx.mults)
    C = np.zeros((6 * n_mults, ctx.n_nb + ctx.n_basis))
    rows = np.arange(n_mults)
    for j in range(6):
        block = np.zeros((n_mults, C.shape[1]))
        block[rows[:, None], ctx.shift_cols] = coeffs[j][None, :]
        C[j * n_mults : (j + 1) * n_mults] = block
    row_scale = np.maximum(np.max(np.abs(C), axis=1), 1e-300)
    C /= row_scale[:, None]

    C_nb = C[:, : ctx.n_nb]
    C_b = C[:, ctx.n_nb :]
    # rows of C span the ideal slice: find y with y^T C_nb = e_t for each
    # non-basis target t, then t reduces to -(y^T C_b) on the quotient basis
    Y, residuals, rank, _ = np.linalg.lstsq(C_nb.T, np.eye(ctx.n_nb), rcond=None)
    if rank < ctx.n_nb:
        raise NoRealRoots("elimination template is rank deficient for this data")
    NF = -(Y.T @ C_b)  # (n_nb, n_basis): normal form of each nb monomial

    N = ctx.n_basis
    action = np.zeros((N, N))
    for var, weight in enumerate(_ACTION_MIX):
        Av = np.zeros((N, N))
        for i, b in enumerate(ctx.basis_cols):
            t = (b[0] + (var == 0), b[1] + (var == 1), b[2] + (var == 2))
            if t in ctx.basis_pos:
                Av[i, ctx.basis_pos[t]] = 1.0
            else:
                Av[i] = NF[ctx.nb_pos[t]]
        action += weight * Av

    _, vecs = np.linalg.eig(action)
    i1, ix, iy, iz = ctx.extract_idx
    roots = []
    for k in range(N):
        w = vecs[:, k]
        denom = w[i1]
        if abs(denom) < 1e-10 * np.max(np.abs(w)):
            continue
        qc = np.array([w[ix], w[iy], w[iz]]) / denom
        if np.max(np.abs(qc.imag)) > 1e-6 * (1.0 + np.max(np.abs(qc.real))):
            continue
        roots.append(qc.real)
    return np.array(roots) if roots else np.zeros((0, 3))


def _eval_cleared_batch(H: np.ndarray, g: np.ndarray, Q: np.ndarray) -> np.ndarray:
    s = np.einsum("ki,ki->k", Q, Q)
    K = Q.shape[0]
    Sk = np.zeros((K, 3, 3))
    Sk[:, 0, 1] = -Q[:, 2]
    Sk[:, 0, 2] = Q[:, 1]
    Sk[:, 1, 0] = Q[:, 2]
    Sk[:, 1, 2] = -Q[:, 0]
    Sk[:, 2, 0] = -Q[:, 1]
    Sk[:, 2, 1] = Q[:, 0]
    Rt = (
        (1.0 - s)[:, None, None] * np.eye(3)[None]
        + 2.0 * Q[:, :, None] * Q[:, None, :]
        + 2.0 * Sk
    )
    Mt = (Rt.reshape(K, 9) @ H.T - (1.0 + s)[:, None] * g[None, :]).reshape(K, 3, 3)
    E = np.transpose(Rt, (0, 2, 1)) @ Mt - np.transpose(Mt, (0, 2, 1)) @ Rt
    F = Mt @ np.transpose(Rt, (0, 2, 1)) - Rt @ np.transpose(Mt, (0, 2, 1))
    return np.stack([E[:, 0, 1], E[:, 0, 2], E[:, 1, 2], F[:, 0, 1], F[:, 0, 2], F[:, 1, 2]], axis=1)


def _sampling_seeds(count: int) -> np.ndarray:
    """Deterministic Cayley seeds roughly uniform over rotations."""
    rng = np.random.default_rng(987654321)
    quats = rng.normal(size=(count * 3, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    w = np.abs(quats[:, 0])
    keep = w > 0.12  # skip near-180-degree seeds where Cayley blows up
    seeds = quats[keep, 1:] / w[keep, None]
    return seeds[:count]


def _roots_sampling(H: np.ndarray, g: np.ndarray, seeds: int = 400) -> np.ndarray:
    Q = np.vstack([np.zeros((1, 3)), _sampling_seeds(seeds)])
    for _ in range(40):
        res = _eval_cleared_batch(H, g, Q)
        J = np.empty((Q.shape[0], 6, 3))
        h = 1e-7 * (1.0 + np.abs(Q))
        for k in range(3):
            dq = np.zeros_like(Q)
            dq[:, k] = h[:, k]
            J[:, :, k] = (_eval_cleared_batch(H, g, Q + dq) - _eval_cleared_batch(H, g, Q - dq)) / (
                2.0 * h[:, k][:, None]
            )
        JtJ = np.transpose(J, (0, 2, 1)) @ J
        Jtr = np.einsum("kij,ki->kj", J, res)
        JtJ += 1e-12 * np.trace(JtJ, axis1=1, axis2=2)[:, None, None] * np.eye(3)[None]
        try:
            delta = -np.linalg.solve(JtJ, Jtr[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            delta = -np.stack([np.linalg.lstsq(J[k], res[k], rcond=None)[0] for k in range(Q.shape[0])])
        norms = np.linalg.norm(delta, axis=1)
        big = norms > 1.0
        delta[big] *= (1.0 / norms[big])[:, None]
        Q = Q + delta
    return Q


def solve_rotation(system: StackedSystem, backend: str = "action") -> list[np.ndarray]:
    """All real stationary rotations of the reduced objective, as Cayley vectors.

    Raises:
        NoRealRoots: backend produced no stationary real root.
        ValueError: unknown backend name.
    """
    H, g = system.H, system.g
    kappa = _coefficient_scales(H, g)
    if backend == "action":
        raw = _roots_action(H, g)
    elif backend == "sampling":
        raw = _roots_sampling(H, g)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    roots = _polish_roots(H, g, kappa, raw)
    if not roots:
        raise NoRealRoots(f"backend {backend!r} found no real stationary point")
    return roots


# ---------------------------------------------------------------------------
# full pose solve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoseCandidate:
    """One stationary pose with its objective value."""

    rotation: np.ndarray
    translation: np.ndarray
    cost: float
    cayley: np.ndarray
    positive_depths: int = 0

    def as_transform(self) -> RigidTransform:
        return RigidTransform(self.rotation, self.translation)


@dataclass
class GPnPResult:
    best: PoseCandidate
    candidates: list[PoseCandidate]
    diagnostics: dict = field(default_factory=dict)


def _positive_depths(f: np.ndarray, v: np.ndarray, M: np.ndarray, R: np.ndarray, t: np.ndarray) -> int:
    pts = M @ R.T + t - v
    return int(np.sum(np.einsum("ni,ni->n", f, pts) > 0.0))


def _collinearity_check(M: np.ndarray) -> None:
    centered = M - M.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] <= 1e-12 or sv[1] <= 1e-8 * sv[0]:
        raise DegenerateGeometry("world points are collinear")


def solve_pose(
    observations: list[GeneralizedObservation],
    polish: bool = True,
    backend: str = "action",
) -> GPnPResult:
    """Globally solve for the rig pose from generalized observations.

    Args:
        observations: ray/point correspondences in the reference frame.
        polish: run an LM refinement of the best candidate (default on).
        backend: "action" or "sampling" rotation root finder.

    Raises:
        TooFewPoints, DegenerateGeometry, RankDeficientB, NoRealRoots
    """
    n = len(observations)
    if n < 3:
        raise TooFewPoints(f"need at least 3 observations, got {n}")
    f = np.array([o.f for o in observations])
    v = np.array([o.v for o in observations])
    M = np.array([o.point for o in observations])
    _collinearity_check(M)

    raw = build_system(observations)

    # solve roots on a centered, unit-scale copy: identical rotations,
    # translation maps back as t = t'/s - R mu
    mu = M.mean(axis=0)
    scale = 1.0 / max(float(np.sqrt(np.mean(np.sum((M - mu) ** 2, axis=1)))), 1e-12)
    An, Bn, Dn = _stack_arrays(f, (v * scale), (M - mu) * scale)
    _, Hn, gn = _reduce_system(An, Bn, Dn)
    kappa = _coefficient_scales(Hn, gn)
    if backend == "action":
        roots = _polish_roots(Hn, gn, kappa, _roots_action(Hn, gn))
    elif backend == "sampling":
        roots = _polish_roots(Hn, gn, kappa, _roots_sampling(Hn, gn))
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if not roots:
        raise NoRealRoots(f"backend {backend!r} found no real stationary point")

    candidates = []
    for q in roots:
        R = cayley_to_rotation(q)
        t = solve_translation(raw, R)
        candidates.append(
            PoseCandidate(
                rotation=R,
                translation=t,
                cost=raw.cost(R, t),
                cayley=q,
                positive_depths=_positive_depths(f, v, M, R, t),
            )
        )
    candidates.sort(key=lambda c: c.cost)
    best_cost = candidates[0].cost
    tied = [c for c in candidates if c.cost <= best_cost * (1.0 + 1e-12) + 1e-300]
    best = max(tied, key=lambda c: c.positive_depths)

    diagnostics = {
        "backend": backend,
        "n_roots": len(roots),
        "n_candidates": len(candidates),
        "cond_B": float(np.linalg.cond(raw.B)),
        "cond_A": float(np.linalg.cond(raw.A)),
        "normalization_scale": scale,
        "polished": bool(polish),
    }

    if polish:
        refined = refine_pose(observations, best, system=raw)
        if refined.cost <= best.cost:
            best = refined

    return GPnPResult(best=best, candidates=candidates, diagnostics=diagnostics)


def refine_pose(
    observations: list[GeneralizedObservation],
    initial: PoseCandidate,
    system: StackedSystem | None = None,
) -> PoseCandidate:
    """LM polish of one pose on the full objective; never increases cost."""
    if system is None:
        system = build_system(observations)
    f = np.array([o.f for o in observations])
    v = np.array([o.v for o in observations])
    M = np.array([o.point for o in observations])
    n = len(observations)
    S = np.zeros((n, 3, 3))
    S[:, 0, 1] = -f[:, 2]
    S[:, 0, 2] = f[:, 1]
    S[:, 1, 0] = f[:, 2]
    S[:, 1, 2] = -f[:, 0]
    S[:, 2, 0] = -f[:, 1]
    S[:, 2, 1] = f[:, 0]
    Mx = np.zeros((n, 3, 3))
    Mx[:, 0, 1] = -M[:, 2]
    Mx[:, 0, 2] = M[:, 1]
    Mx[:, 1, 0] = M[:, 2]
    Mx[:, 1, 2] = -M[:, 0]
    Mx[:, 2, 0] = -M[:, 1]
    Mx[:, 2, 1] = M[:, 0]

    def residual(x):
        R = x[:9].reshape(3, 3)
        t = x[9:]
        return np.einsum("nij,nj->ni", S, M @ R.T + t - v).ravel()

    def jacobian(x):
        R = x[:9].reshape(3, 3)
        J = np.empty((3 * n, 6))
        J[:, :3] = -(S @ (R[None] @ Mx)).reshape(3 * n, 3)
        J[:, 3:] = np.tile(S, (1, 1, 1)).reshape(3 * n, 3)
        return J

    x0 = np.concatenate([initial.rotation.ravel(), initial.translation])
    problem = LeastSquaresProblem(
        x0, [("rotation", 9), ("euclidean", 3)], residual, jacobian_fn=jacobian
    )
    x, _ = minimize(problem, SolveConfig(max_iterations=100))
    R = x[:9].reshape(3, 3)
    t = solve_translation(system, R)
    cost = system.cost(R, t)
    if cost > initial.cost:
        return initial
    try:
        cay = rotation_to_cayley(R)
    except Exception:
        cay = initial.cayley
    return PoseCandidate(
        rotation=R,
        translation=t,
        cost=cost,
        cayley=cay,
        positive_depths=_positive_depths(f, v, M, R, t),
    )
