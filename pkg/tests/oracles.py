"""Independent reference implementations used only by the tests.

None of these share code with the package: exact rational products,
the defining O(N^2) DFT sum, set-based group arithmetic and plain-loop
permutation algebra.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def exact_product(a, b) -> list[list[Fraction]]:
    a = [[Fraction(int(v)) for v in row] for row in np.asarray(a).real.tolist()]
    b = [[Fraction(int(v)) for v in row] for row in np.asarray(b).real.tolist()]
    n, k, m = len(a), len(b), len(b[0])
    return [[sum((a[i][j] * b[j][l] for j in range(k)), Fraction(0)) for l in range(m)] for i in range(n)]


def dft_by_definition(x: np.ndarray, m: int, D: int, sign: int = +1) -> np.ndarray:
    idx = np.indices((m,) * D).reshape(D, -1).T
    x = np.asarray(x, dtype=np.complex128)
    out = np.empty(x.shape, dtype=np.complex128)
    # the kernel is built block by block of output rows to bound memory
    for lo in range(0, len(idx), 512):
        phase = (idx[lo : lo + 512] @ idx.T) % m
        out[lo : lo + 512] = np.exp(sign * 2j * np.pi * phase / m) @ x
    return out


def cyclic_convolution(x: np.ndarray, y: np.ndarray, m: int, D: int) -> np.ndarray:
    grid = (m,) * D
    xg, yg = x.reshape(grid), y.reshape(grid)
    out = np.zeros(grid, dtype=complex)
    for idx in itertools.product(range(m), repeat=D):
        out += xg[idx] * np.roll(yg, idx, axis=tuple(range(D)))
    return out.ravel()


def differences(s, t, m: int) -> set[tuple[int, ...]]:
    return {tuple((a - b) % m for a, b in zip(p, q)) for p in s for q in t}


def stpp_holds(triples, m: int) -> bool:
    """Definition check with Python sets and explicit loops."""
    n = len(triples)
    for i, j, k in itertools.product(range(n), repeat=3):
        qx = differences(triples[i][0], triples[j][0], m)
        qy = differences(triples[j][1], triples[k][1], m)
        qz = differences(triples[k][2], triples[i][2], m)
        for a in qx:
            for b in qy:
                need = tuple((-(u + v)) % m for u, v in zip(a, b))
                if need in qz:
                    zero = not any(a) and not any(b) and not any(need)
                    if not (zero and i == j == k):
                        return False
    return True


# permutations as dicts of images; wreath elements as (rows, perm) with rows a tuple of tuples


def compose(p: tuple[int, ...], q: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(p[q[i]] for i in range(len(q)))


def invert(p: tuple[int, ...]) -> tuple[int, ...]:
    out = [0] * len(p)
    for i, v in enumerate(p):
        out[v] = i
    return tuple(out)


def act(p: tuple[int, ...], rows):
    """Coordinate permutation moving row i to position p(i)."""
    out = [None] * len(rows)
    for i, row in enumerate(rows):
        out[p[i]] = row
    return tuple(out)


def wreath_mul(a, b, m: int):
    (ha, pa), (hb, pb) = a, b
    moved = act(pa, hb)
    h = tuple(tuple((x + y) % m for x, y in zip(r1, r2)) for r1, r2 in zip(ha, moved))
    return h, compose(pa, pb)
