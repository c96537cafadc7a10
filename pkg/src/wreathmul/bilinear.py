"""Recursive bilinear (Strassen-like) matrix multiplication and its error bounds.

A scheme multiplies k-by-k matrices with t non-scalar products::

    P_s = (sum_i u_is x_i) * (sum_j v_js y_j),     c_r = sum_s w_rs P_s

Index conventions (0-based):

* ``x_i`` / ``y_j`` enumerate the entries of A / B column by column, so
  ``i = col * k + row``.
* ``c_r`` enumerates the entries of C row by row, ``r = h * k + l``.

Applied to blocks instead of scalars this gives the recursive algorithm.
Every block linear combination multiplies by the coefficient first and then
adds the terms with :func:`~wreathmul.matcore.tree_sum`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import flops
from .matcore import (
    DimensionError,
    Matrix,
    _check_same_precision,
    naive_kernel,
    parse_entry,
    real_view,
    tree_sum,
)


class SchemeError(ValueError):
    """A scheme is malformed or does not compute the matrix product."""


class ScheduleError(ValueError):
    """A schedule does not fit the requested matrix order."""


@dataclass(frozen=True, eq=False)
class BilinearScheme:
    k: int
    t: int
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    name: str = ""
    # verification tolerance; 0 means exact agreement
    tolerance: float = 0.0

    def __post_init__(self) -> None:
        if self.k < 1 or self.t < 1:
            raise SchemeError("k and t must be positive")
        for label in ("U", "V", "W"):
            mat = np.array(getattr(self, label), dtype=np.complex128)
            if mat.shape != (self.k * self.k, self.t):
                raise SchemeError(
                    f"{label} has shape {mat.shape}, expected {(self.k * self.k, self.t)}"
                )
            mat.setflags(write=False)
            object.__setattr__(self, label, mat)

    @property
    def is_real(self) -> bool:
        return not (np.any(self.U.imag) or np.any(self.V.imag) or np.any(self.W.imag))

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"BilinearScheme{label}(k={self.k}, t={self.t})"


@dataclass(frozen=True)
class SchemeStats:
    a: tuple[int, ...]
    b: tuple[int, ...]
    c: tuple[int, ...]
    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    gamma: tuple[int, ...]
    e: tuple[int, ...]
    e_max: int
    u_norm: float
    v_norm: float
    w_norm: float

    @property
    def growth_factor(self) -> float:
        """``e_max * ||U|| * ||V|| * ||W||``, the per-level growth of the bound."""
        return self.e_max * self.u_norm * self.v_norm * self.w_norm

    @property
    def level_log_depth(self) -> int:
        """``max_{r,s} (alpha_s + beta_s + gamma_r + 3)``."""
        return max(self.alpha[s] + self.beta[s] for s in range(len(self.a))) + max(self.gamma) + 3


@dataclass
class Schedule:
    levels: list[BilinearScheme]
    base_threshold: int = 1

    def block_factor(self) -> int:
        return math.prod(s.k for s in self.levels)

    def base_order(self, n: int) -> int:
        factor = self.block_factor()
        if n % factor:
            raise ScheduleError(f"order {n} is not divisible by the schedule's block factor {factor}")
        base = n // factor
        if base > self.base_threshold:
            raise ScheduleError(
                f"order {n} leaves base blocks of order {base} > threshold {self.base_threshold}"
            )
        return base


@dataclass(frozen=True)
class PrePostLevel:
    t: float
    pre_norm: float
    post_norm: float
    f_pre: float = 0.0
    f_post: float = 0.0


# ------------------------------------------------------------------ schemes


def _ceil_log2(n: int) -> int:
    return math.ceil(math.log2(n)) if n > 1 else 0


def trivial_scheme() -> BilinearScheme:
    return BilinearScheme(1, 1, [[1]], [[1]], [[1]], name="scalar")


def strassen_scheme() -> BilinearScheme:
    """Strassen's 7-product scheme.

    Product order (fixed, so the per-column statistics are reproducible)::

        P1 = (A11 + A22)(B11 + B22)     P5 = (A11 + A12) B22
        P2 = (A21 + A22) B11            P6 = (A21 - A11)(B11 + B12)
        P3 = A11 (B12 - B22)            P7 = (A12 - A22)(B21 + B22)
        P4 = A22 (B21 - B11)

        C11 = P1 + P4 - P5 + P7         C12 = P3 + P5
        C21 = P2 + P4                   C22 = P1 - P2 + P3 + P6
    """
    # rows of U and V: column-wise entries 11, 21, 12, 22
    U = [
        [1, 0, 1, 0, 1, -1, 0],   # A11
        [0, 1, 0, 0, 0, 1, 0],    # A21
        [0, 0, 0, 0, 1, 0, 1],    # A12
        [1, 1, 0, 1, 0, 0, -1],   # A22
    ]
    V = [
        [1, 1, 0, -1, 0, 1, 0],   # B11
        [0, 0, 0, 1, 0, 0, 1],    # B21
        [0, 0, 1, 0, 0, 1, 0],    # B12
        [1, 0, -1, 0, 1, 0, 1],   # B22
    ]
    # rows of W: row-wise entries 11, 12, 21, 22
    W = [
        [1, 0, 0, 1, -1, 0, 1],
        [0, 0, 1, 0, 1, 0, 0],
        [0, 1, 0, 1, 0, 0, 0],
        [1, -1, 1, 0, 0, 1, 0],
    ]
    return BilinearScheme(2, 7, U, V, W, name="strassen")


def naive_scheme(k: int) -> BilinearScheme:
    """The k^3-product definition of the matrix product written as a scheme."""
    t = k**3
    U = np.zeros((k * k, t))
    V = np.zeros((k * k, t))
    W = np.zeros((k * k, t))
    s = 0
    for h in range(k):
        for l in range(k):
            for j in range(k):
                U[j * k + h, s] = 1  # A[h, j]
                V[l * k + j, s] = 1  # B[j, l]
                W[h * k + l, s] = 1
                s += 1
    return BilinearScheme(k, t, U, V, W, name=f"naive{k}")


def product_tensor(s: BilinearScheme) -> np.ndarray:
    """``T[r, i, j] = sum_s w_rs u_is v_js``: output r on inputs E_i, E_j."""
    return np.einsum("rs,is,js->rij", s.W, s.U, s.V)


def target_tensor(k: int) -> np.ndarray:
    """The same tensor for the exact k-by-k product."""
    T = np.zeros((k * k, k * k, k * k))
    for h in range(k):
        for l in range(k):
            for j in range(k):
                T[h * k + l, j * k + h, l * k + j] = 1
    return T


def scheme_defects(s: BilinearScheme) -> list[tuple[int, int]]:
    """Output entries ``(h, l)`` (0-based) that the scheme gets wrong."""
    diff = np.abs(product_tensor(s) - target_tensor(s.k))
    bad = np.any(diff > s.tolerance, axis=(1, 2))
    return [divmod(int(r), s.k) for r in np.flatnonzero(bad)]


def verify_scheme(s: BilinearScheme) -> bool:
    return not scheme_defects(s)


def scheme_stats(s: BilinearScheme) -> SchemeStats:
    nz_u = s.U != 0
    nz_v = s.V != 0
    nz_w = s.W != 0
    a = nz_u.sum(axis=0).astype(int)
    b = nz_v.sum(axis=0).astype(int)
    c = nz_w.sum(axis=1).astype(int)
    e = (nz_w.astype(int) * (a * b)[None, :]).sum(axis=1)
    return SchemeStats(
        a=tuple(int(v) for v in a),
        b=tuple(int(v) for v in b),
        c=tuple(int(v) for v in c),
        alpha=tuple(_ceil_log2(int(v)) for v in a),
        beta=tuple(_ceil_log2(int(v)) for v in b),
        gamma=tuple(_ceil_log2(int(v)) for v in c),
        e=tuple(int(v) for v in e),
        e_max=int(e.max()),
        u_norm=float(np.abs(s.U).max()),
        v_norm=float(np.abs(s.V).max()),
        w_norm=float(np.abs(s.W).max()),
    )


# -------------------------------------------------------------- scheme files


def _parse_coeff(token) -> complex:
    if isinstance(token, (int, float)):
        return complex(token)
    token = str(token).strip()
    if token.endswith("i"):
        return parse_entry(token)
    return complex(float(Fraction(token)))


def _format_coeff(z: complex) -> str:
    if z.imag == 0:
        frac = Fraction(z.real)
        return str(frac) if frac.denominator <= 1 << 20 else repr(z.real)
    return f"{z.real!r}{z.imag:+}i"


def scheme_from_dict(doc: dict, verify: bool = True) -> BilinearScheme:
    try:
        k, t = int(doc["k"]), int(doc["t"])
        mats = [[[_parse_coeff(v) for v in row] for row in doc[key]] for key in ("U", "V", "W")]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemeError(f"malformed scheme document: {exc}") from exc
    scheme = BilinearScheme(
        k, t, *mats, name=str(doc.get("name", "")), tolerance=float(doc.get("tolerance", 0.0))
    )
    if verify:
        defects = scheme_defects(scheme)
        if defects:
            h, l = defects[0]
            raise SchemeError(
                f"scheme {scheme.name or '<unnamed>'} does not compute the product: "
                f"output entry (h={h + 1}, l={l + 1}) is wrong"
            )
    return scheme


def scheme_to_dict(s: BilinearScheme) -> dict:
    doc = {
        "k": s.k,
        "t": s.t,
        "U": [[_format_coeff(v) for v in row] for row in s.U],
        "V": [[_format_coeff(v) for v in row] for row in s.V],
        "W": [[_format_coeff(v) for v in row] for row in s.W],
    }
    if s.name:
        doc["name"] = s.name
    if s.tolerance:
        doc["tolerance"] = s.tolerance
    return doc


def load_scheme(path: str | Path, verify: bool = True) -> BilinearScheme:
    return scheme_from_dict(json.loads(Path(path).read_text()), verify=verify)


def save_scheme(s: BilinearScheme, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scheme_to_dict(s), indent=2) + "\n")


# -------------------------------------------------------------- multiplying

# elements per stacked recursion batch before falling back to depth-first
_STACK_LIMIT = 1 << 21


def _coefficients(mat: np.ndarray, dtype) -> np.ndarray:
    if np.issubdtype(dtype, np.complexfloating):
        return mat.astype(dtype)
    return mat.real.astype(dtype)


def _combine(blocks: list[np.ndarray], coeffs: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(coeffs)
    if idx.size == 0:
        return np.zeros_like(blocks[0])
    terms = np.stack([coeffs[i] * blocks[i] for i in idx])
    flops.record("mul", terms.size)
    return tree_sum(terms)


def _multiply_levels(a: np.ndarray, b: np.ndarray, levels: Sequence[BilinearScheme]) -> np.ndarray:
    """Apply ``levels[0]`` to the batch ``(batch, n, n)``, recurse, naive at the end."""
    if not levels:
        return naive_kernel(a, b)
    s, rest = levels[0], levels[1:]
    batch, n, _ = a.shape
    k = s.k
    m = n // k
    if k == 1:
        blocks_a, blocks_b = [a], [b]
    else:
        ra = a.reshape(batch, k, m, k, m)
        rb = b.reshape(batch, k, m, k, m)
        # column-wise block order: i = col * k + row
        blocks_a = [ra[:, i % k, :, i // k, :] for i in range(k * k)]
        blocks_b = [rb[:, i % k, :, i // k, :] for i in range(k * k)]
    U = _coefficients(s.U, a.dtype)
    V = _coefficients(s.V, a.dtype)
    W = _coefficients(s.W, a.dtype)

    if s.t * batch * m * m <= _STACK_LIMIT:
        lhs = np.stack([_combine(blocks_a, U[:, j]) for j in range(s.t)])
        rhs = np.stack([_combine(blocks_b, V[:, j]) for j in range(s.t)])
        prods = _multiply_levels(
            lhs.reshape(s.t * batch, m, m), rhs.reshape(s.t * batch, m, m), rest
        ).reshape(s.t, batch, m, m)
        products = list(prods)
    else:
        products = [
            _multiply_levels(_combine(blocks_a, U[:, j]), _combine(blocks_b, V[:, j]), rest)
            for j in range(s.t)
        ]

    out = np.empty((batch, k, m, k, m), dtype=products[0].dtype)
    for r in range(k * k):
        h, l = divmod(r, k)
        out[:, h, :, l, :] = _combine(products, W[r])
    return out.reshape(batch, n, n)


def stationary_levels(n: int, k: int, base_threshold: int) -> tuple[int, int]:
    """Smallest ``p`` with ``ceil(n / k^p) <= base_threshold``; returns ``(p, base)``."""
    if base_threshold < 1:
        raise ValueError("base_threshold must be positive")
    p = 0
    if k == 1:
        if n > base_threshold:
            raise ScheduleError("a k=1 scheme cannot shrink the problem")
        return 0, n
    while -(-n // k**p) > base_threshold:
        p += 1
    return p, -(-n // k**p)


def _run_batched(a: np.ndarray, b: np.ndarray, levels: Sequence[BilinearScheme]) -> np.ndarray:
    """Pick the real fast path when possible; ``a``, ``b`` are ``(batch, n, n)``."""
    all_real = all(s.is_real for s in levels)
    real = real_view(a, b) if all_real else None
    if real is not None:
        out = _multiply_levels(real[0], real[1], levels)
        return out.astype(a.dtype)
    return _multiply_levels(a, b, levels)


def multiply_stationary_array(
    a: np.ndarray, b: np.ndarray, s: BilinearScheme, base_threshold: int = 8
) -> np.ndarray:
    """Batched form: ``a``, ``b`` of shape ``(..., n, n)``, zero-padded internally."""
    if a.shape != b.shape or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"expected equal square operands, got {a.shape} and {b.shape}")
    n = a.shape[-1]
    p, base = stationary_levels(n, s.k, base_threshold)
    padded = base * s.k**p
    lead = a.shape[:-2]
    fa = a.reshape(-1, n, n)
    fb = b.reshape(-1, n, n)
    if padded != n:
        pad = ((0, 0), (0, padded - n), (0, padded - n))
        fa, fb = np.pad(fa, pad), np.pad(fb, pad)
    out = _run_batched(fa, fb, [s] * p)
    return out[:, :n, :n].reshape(*lead, n, n)


def multiply_stationary(a: Matrix, b: Matrix, s: BilinearScheme, base_threshold: int = 8) -> Matrix:
    """Recursive product with scheme ``s`` at every level.

    Inputs are zero-padded to ``base * k^p`` where ``p`` is the fewest
    levels that bring the blocks down to ``base <= base_threshold``; the
    blocks at that order are multiplied naively.
    """
    if a.shape != b.shape or a.rows != a.cols:
        raise DimensionError(f"expected equal square operands, got {a.shape} and {b.shape}")
    _check_same_precision(a.data, b.data)
    return Matrix(multiply_stationary_array(a.data, b.data, s, base_threshold), a.precision)


def multiply_nonstationary(a: Matrix, b: Matrix, sched: Schedule) -> Matrix:
    """Level ``j`` uses ``sched.levels[j]``; the order must match the schedule exactly."""
    if a.shape != b.shape or a.rows != a.cols:
        raise DimensionError(f"expected equal square operands, got {a.shape} and {b.shape}")
    _check_same_precision(a.data, b.data)
    sched.base_order(a.rows)
    out = _run_batched(a.data[None], b.data[None], sched.levels)
    return Matrix(out[0], a.precision)


# ------------------------------------------------------------- error bounds


def _log_k(n: int, k: int) -> int:
    if k < 2:
        raise ValueError("log_k n is undefined for k < 2")
    p = round(math.log(n, k)) if n >= 1 else -1
    if p < 0 or k**p != n:
        raise ValueError(f"{n} is not a power of {k}")
    return p


def error_bound_stationary(s: BilinearScheme, n: int, eps: float = 1.0) -> float:
    """``mu(n) * eps`` for the stationary algorithm in the max-entry norm.

    ``mu(n) = (1 + max_{r,s}(alpha_s + beta_s + gamma_r + 3) * log_k n)
    * (e_max ||U|| ||V|| ||W||)^(log_k n)``, with the ``+1`` kept outside
    the product with ``log_k n`` so the depth term is added once, not per level.
    """
    p = _log_k(n, s.k)
    st = scheme_stats(s)
    return (1 + st.level_log_depth * p) * st.growth_factor**p * eps


def error_bound_nonstationary(sched: Schedule, eps: float = 1.0) -> float:
    """``(1 + sum_j depth_j) * prod_j growth_j * eps``; an empty schedule gives ``eps``."""
    stats = [scheme_stats(s) for s in sched.levels]
    depth = sum(st.level_log_depth for st in stats)
    growth = math.prod(st.growth_factor for st in stats)
    return (1 + depth) * growth * eps


def error_bound_prepost(levels: Sequence[PrePostLevel], mu_base: float) -> float:
    """Unroll ``mu(n_j) = mu(n_{j+1}) t ||Post|| ||Pre||^2 + 2 f_pre t ||Post|| + f_post ||Pre||^2``.

    ``levels[0]`` is the outermost level; the recursion starts from
    ``mu_base`` below the last one.
    """
    mu = float(mu_base)
    for lv in reversed(levels):
        if min(lv.t, lv.pre_norm, lv.post_norm, lv.f_pre, lv.f_post) < 0:
            raise ValueError("pre/post level quantities must be nonnegative")
        mu = (
            mu * lv.t * lv.post_norm * lv.pre_norm**2
            + 2 * lv.f_pre * lv.t * lv.post_norm
            + lv.f_post * lv.pre_norm**2
        )
    return mu
