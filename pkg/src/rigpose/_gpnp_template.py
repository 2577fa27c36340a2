"""Elimination-template constants for the rotation solver.

Generated by tools/generate_gpnp_template.py; do not edit by hand.
The quotient basis and shift degree were discovered on exact rational
instances modulo several primes and agree across the general, minimal
(n=3) and central (single ray origin) problem families.
"""

SOLUTION_COUNT = 40
SHIFT_MAX_DEGREE = 8

# quotient-ring monomial basis as (i, j, k) exponents of (x, y, z),
# graded-reverse-lex ascending
BASIS = (
    (0, 0, 0),
    (0, 0, 1),
    (0, 1, 0),
    (1, 0, 0),
    (0, 0, 2),
    (0, 1, 1),
    (1, 0, 1),
    (0, 2, 0),
    (1, 1, 0),
    (2, 0, 0),
    (0, 0, 3),
    (0, 1, 2),
    (1, 0, 2),
    (0, 2, 1),
    (1, 1, 1),
    (2, 0, 1),
    (0, 3, 0),
    (1, 2, 0),
    (2, 1, 0),
    (3, 0, 0),
    (0, 0, 4),
    (0, 1, 3),
    (1, 0, 3),
    (0, 2, 2),
    (1, 1, 2),
    (2, 0, 2),
    (0, 3, 1),
    (1, 2, 1),
    (2, 1, 1),
    (0, 0, 5),
    (0, 1, 4),
    (1, 0, 4),
    (0, 2, 3),
    (1, 1, 3),
    (2, 0, 3),
    (0, 3, 2),
    (0, 0, 6),
    (0, 1, 5),
    (1, 0, 5),
    (0, 0, 7),
)
