"""Offline generator for the rotation-solver elimination template.

Discovers, once, the algebraic structure of the six stationarity
polynomials used by rigpose.gpnp: the quotient-basis monomials, the shift
degree needed for the elimination template, and the solution count. Writes
the result to src/rigpose/_gpnp_template.py.

The structure is discovered on exact rational instances reduced modulo a
prime, so ranks and standard monomials are computed exactly. Run from the
repository root:

    python3 tools/generate_gpnp_template.py
"""

from __future__ import annotations

import itertools
import sys
from pathlib import Path

import numpy as np
import sympy as sp
from sympy import Matrix, Rational, symbols

X, Y, Z = symbols("x y z")

PRIMES = (30011, 46817, 65537)


def _skew(f):
    return Matrix([[0, -f[2], f[1]], [f[2], 0, -f[0]], [-f[1], f[0], 0]])


def exact_instance(n: int, rng: np.random.Generator, central: bool = False):
    """Random exact-rational reduced system (H, g) from n ray/point pairs."""
    A = sp.zeros(3 * n, 9)
    B = sp.zeros(3 * n, 3)
    D = sp.zeros(3 * n, 1)
    v_shared = Matrix([Rational(int(rng.integers(-3, 4)), 10) for _ in range(3)])
    for i in range(n):
        M = Matrix([Rational(int(rng.integers(-9, 10)), int(rng.integers(1, 4))) for _ in range(3)])
        f = Matrix([Rational(int(rng.integers(-5, 6))) for _ in range(3)])
        while f.norm() == 0:
            f = Matrix([Rational(int(rng.integers(-5, 6))) for _ in range(3)])
        v = v_shared if central else Matrix([Rational(int(rng.integers(-4, 5)), 10) for _ in range(3)])
        S = _skew(f)
        for r in range(3):
            for c in range(3):
                for k in range(3):
                    A[3 * i + r, 3 * c + k] = S[r, c] * M[k]
        B[3 * i : 3 * i + 3, :] = S
        D[3 * i : 3 * i + 3, 0] = S * v
    BtB_inv = (B.T * B).inv()
    AtB = A.T * B
    H = A.T * A - AtB * BtB_inv * AtB.T
    g = A.T * D - AtB * BtB_inv * (B.T * D)
    return H, g


def exact_consistent_instance(n: int, rng: np.random.Generator, central: bool = False):
    """Exact instance whose objective has a zero-cost solution (noise-free)."""
    q = Matrix([Rational(1, 3), Rational(-2, 5), Rational(1, 7)])
    s = (q.T * q)[0, 0]
    R = ((1 - s) * sp.eye(3) + 2 * q * q.T + 2 * _skew(q)) / (1 + s)
    t = Matrix([Rational(int(rng.integers(-9, 10)), 5) for _ in range(3)])
    A = sp.zeros(3 * n, 9)
    B = sp.zeros(3 * n, 3)
    D = sp.zeros(3 * n, 1)
    v_shared = Matrix([Rational(int(rng.integers(-3, 4)), 10) for _ in range(3)])
    for i in range(n):
        M = Matrix([Rational(int(rng.integers(-9, 10)), int(rng.integers(1, 4))) for _ in range(3)])
        v = v_shared if central else Matrix([Rational(int(rng.integers(-4, 5)), 10) for _ in range(3)])
        f = R * M + t - v  # exactly on the ray, unnormalized
        S = _skew(f)
        for r in range(3):
            for c in range(3):
                for k in range(3):
                    A[3 * i + r, 3 * c + k] = S[r, c] * M[k]
        B[3 * i : 3 * i + 3, :] = S
        D[3 * i : 3 * i + 3, 0] = S * v
    BtB_inv = (B.T * B).inv()
    AtB = A.T * B
    H = A.T * A - AtB * BtB_inv * AtB.T
    g = A.T * D - AtB * BtB_inv * (B.T * D)
    return H, g


def cayley_numerator():
    s = X * X + Y * Y + Z * Z
    Rt = Matrix(
        [
            [1 + X * X - Y * Y - Z * Z, 2 * X * Y - 2 * Z, 2 * Y + 2 * X * Z],
            [2 * X * Y + 2 * Z, 1 - X * X + Y * Y - Z * Z, 2 * Y * Z - 2 * X],
            [2 * X * Z - 2 * Y, 2 * X + 2 * Y * Z, 1 - X * X - Y * Y + Z * Z],
        ]
    )
    return Rt, s


def build_polys(H: Matrix, g: Matrix):
    """Six denominator-cleared stationarity polynomials (sympy Poly, ZZ)."""
    Rt, s = cayley_numerator()
    r = Matrix([Rt[i // 3, i % 3] for i in range(9)])
    m = H * r - (1 + s) * g
    Mt = Matrix(3, 3, lambda i, j: m[3 * i + j])
    E = Rt.T * Mt - Mt.T * Rt
    F = Mt * Rt.T - Rt * Mt.T
    exprs = [E[0, 1], E[0, 2], E[1, 2], F[0, 1], F[0, 2], F[1, 2]]
    polys = []
    for e in exprs:
        p = sp.Poly(sp.expand(e), X, Y, Z)
        denoms = [sp.denom(c) for c in p.coeffs()]
        p = p * sp.lcm(denoms)
        polys.append(sp.Poly(p, X, Y, Z))
    return polys


def grevlex_key(mono):
    # graded reverse lex: higher total degree first; ties: last nonzero of
    # the difference negative -> precede. Encoded so max() picks the leader.
    return (sum(mono), tuple(-e for e in reversed(mono)))


def monomials_up_to(deg: int):
    out = [
        (i, j, k)
        for i in range(deg + 1)
        for j in range(deg + 1)
        for k in range(deg + 1)
        if i + j + k <= deg
    ]
    out.sort(key=grevlex_key, reverse=True)
    return out


def leading_monomial(poly: sp.Poly):
    return max(poly.monoms(), key=grevlex_key)


def standard_monomials(lead_monos):
    """Monomials not divisible by any leading monomial (finite if 0-dim)."""
    bounds = []
    for var in range(3):
        pure = [m[var] for m in lead_monos if sum(m) == m[var]]
        if not pure:
            raise RuntimeError("ideal not zero-dimensional (no pure power for var %d)" % var)
        bounds.append(min(pure))
    basis = []
    for m in monomials_up_to(sum(bounds)):
        if not any(all(m[t] >= lm[t] for t in range(3)) for lm in lead_monos):
            basis.append(m)
    basis.sort(key=grevlex_key)
    return basis


def rank_mod_p(M: np.ndarray, p: int) -> int:
    """Row-echelon rank of an integer matrix modulo p."""
    A = np.mod(M.astype(np.int64), p)
    rows, cols = A.shape
    rank = 0
    for c in range(cols):
        piv = None
        for r in range(rank, rows):
            if A[r, c] % p:
                piv = r
                break
        if piv is None:
            continue
        A[[rank, piv]] = A[[piv, rank]]
        inv = pow(int(A[rank, c]), p - 2, p)
        A[rank] = (A[rank] * inv) % p
        mask = np.arange(rows) != rank
        factors = A[mask, c].copy()
        A[mask] = (A[mask] - factors[:, None] * A[rank][None, :]) % p
        rank += 1
        if rank == rows:
            break
    return rank


def poly_coeff_dict(poly: sp.Poly):
    return {m: int(c) for m, c in zip(poly.monoms(), poly.coeffs())}


def shift_matrix(polys, dmax: int, p: int):
    """Stacked coefficient rows of all monomial shifts m*poly, deg <= dmax."""
    cols = monomials_up_to(dmax)
    col_idx = {m: i for i, m in enumerate(cols)}
    rows = []
    shifts = []
    for j, poly in enumerate(polys):
        cd = poly_coeff_dict(poly)
        deg = max(sum(m) for m in cd)
        for mult in monomials_up_to(dmax - deg):
            row = np.zeros(len(cols), dtype=np.int64)
            for m, c in cd.items():
                t = (m[0] + mult[0], m[1] + mult[1], m[2] + mult[2])
                row[col_idx[t]] = c % p
            rows.append(row)
            shifts.append((j, mult))
    return np.array(rows), cols, shifts


def template_ok(polys, basis, dmax: int, p: int) -> bool:
    """True if shifts up to dmax reduce every non-basis monomial to basis."""
    M, cols, _ = shift_matrix(polys, dmax, p)
    basis_set = set(basis)
    nb_idx = [i for i, m in enumerate(cols) if m not in basis_set]
    nb_cols = M[:, nb_idx]
    present = np.flatnonzero(np.any(nb_cols % p, axis=0))
    # every multiplication target x*b outside the basis must be reducible
    targets = set()
    for var in range(3):
        for b in basis:
            t = list(b)
            t[var] += 1
            t = tuple(t)
            if t not in basis_set:
                targets.add(t)
    present_monos = {cols[nb_idx[i]] for i in present}
    if not targets <= present_monos:
        return False
    return rank_mod_p(nb_cols[:, present], p) == len(present)


def analyze(name: str, H, g, primes=PRIMES):
    print(f"--- family: {name}")
    polys = build_polys(H, g)
    results = []
    for p in primes:
        gb = sp.groebner([pl.as_expr() for pl in polys], X, Y, Z, modulus=p, order="grevlex")
        leads = [leading_monomial(sp.Poly(e, X, Y, Z, modulus=p)) for e in gb.exprs]
        basis = standard_monomials(leads)
        results.append(tuple(basis))
        print(f"    p={p}: N={len(basis)} max_deg={max(sum(m) for m in basis)}")
    if len(set(results)) != 1:
        raise RuntimeError("quotient basis differs across primes; bad reduction")
    basis = list(results[0])
    for dmax in range(max(sum(m) for m in basis) + 1, 11):
        if template_ok(polys, basis, dmax, primes[0]):
            print(f"    template closes at dmax={dmax}")
            return basis, dmax
    raise RuntimeError("no dmax <= 10 closes the template")


def emit(path: Path, basis, dmax: int) -> None:
    lines = [
        '"""Elimination-template constants for the rotation solver.',
        "",
        "Generated by tools/generate_gpnp_template.py; do not edit by hand.",
        "The quotient basis and shift degree were discovered on exact rational",
        "instances modulo several primes and agree across the general, minimal",
        "(n=3) and central (single ray origin) problem families.",
        '"""',
        "",
        f"SOLUTION_COUNT = {len(basis)}",
        f"SHIFT_MAX_DEGREE = {dmax}",
        "",
        "# quotient-ring monomial basis as (i, j, k) exponents of (x, y, z),",
        "# graded-reverse-lex ascending",
        "BASIS = (",
    ]
    for m in basis:
        lines.append(f"    {m!r},")
    lines += [")", ""]
    path.write_text("\n".join(lines))
    print(f"wrote {path}")


def main() -> int:
    rng = np.random.default_rng(20240817)
    fam_general = analyze("general n=6", *exact_instance(6, rng))
    fam_general2 = analyze("general n=4", *exact_instance(4, rng))
    fam_minimal = analyze("minimal n=3", *exact_instance(3, rng))
    fam_central = analyze("central n=8", *exact_instance(8, rng, central=True))
    if not (fam_general == fam_general2 == fam_minimal == fam_central):
        raise RuntimeError("families disagree; a single template is not valid")
    basis, dmax = fam_general
    emit(Path(__file__).resolve().parents[1] / "src" / "rigpose" / "_gpnp_template.py", basis, dmax)
    return 0


if __name__ == "__main__":
    sys.exit(main())
