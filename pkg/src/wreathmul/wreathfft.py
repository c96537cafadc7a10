"""Discrete Fourier transform over (Z/m)^D.

Forward::

    a_hat(i) = sum_j exp(+2 pi i <i, j> / m) a(j)          (no scaling)

Inverse::

    c(j) = m^-D sum_i exp(-2 pi i <i, j> / m) c_hat(i)

Each axis is transformed in turn (axis 0 first) by mixed-radix
Cooley-Tukey: a length-L transform splits off the smallest prime factor p
of L, transforms the p decimated subsequences of length L/p, and combines
them as ``X[k] = sum_r w_L^(rk) Y_r[k mod L/p]``. For p = 2 that is the
usual butterfly; a prime length is transformed directly. All sums go
through :func:`~wreathmul.matcore.tree_sum`.

Twiddles are computed once per length in binary64, snapped to exact values
at multiples of a quarter turn, and rounded once to the working dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import flops
from .matcore import tree_sum

# elements per chunk of leading lines while transforming one axis
_CHUNK = 1 << 21


@dataclass(frozen=True, eq=False)
class GroupArray:
    """Values indexed by (Z/m)^D, stored as a row-major ``m^D`` vector.

    ``data`` may carry extra leading batch axes: shape ``(..., m^D)``.
    """

    m: int
    D: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.m < 1 or self.D < 0:
            raise ValueError("need m >= 1 and D >= 0")
        arr = np.asarray(self.data)
        if not np.iscomplexobj(arr):
            arr = arr.astype(np.complex64 if arr.dtype == np.float32 else np.complex128)
        if arr.ndim == 0 or arr.shape[-1] != self.m**self.D:
            raise ValueError(f"last axis must have length m^D = {self.m**self.D}, got {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def size(self) -> int:
        return self.m**self.D

    def grid(self) -> np.ndarray:
        """View with one axis per dimension."""
        return self.data.reshape(self.data.shape[:-1] + (self.m,) * self.D)


@lru_cache(maxsize=None)
def _twiddles64(length: int, sign: int) -> np.ndarray:
    k = np.arange(length)
    w = np.exp(sign * 2j * np.pi * k / length)
    # exact values at multiples of a quarter turn
    for kk in range(length):
        if (4 * kk) % length == 0:
            exact = (1, 1j, -1, -1j)[4 * kk // length]
            w[kk] = exact if sign > 0 else np.conj(exact)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def twiddles(length: int, sign: int, dtype) -> np.ndarray:
    """``exp(sign * 2 pi i k / length)`` for ``k < length`` in ``dtype``."""
    w = _twiddles64(length, sign).astype(dtype)
    w.setflags(write=False)
    return w


def smallest_prime_factor(n: int) -> int:
    for p in range(2, math.isqrt(n) + 1):
        if n % p == 0:
            return p
    return n


def _fft_mid(x: np.ndarray, sign: int) -> np.ndarray:
    """Transform the middle axis of ``x`` with shape ``(A, L, B)``."""
    a_len, length, b_len = x.shape
    if length == 1:
        return x
    p = smallest_prime_factor(length)
    w = twiddles(length, sign, x.dtype)
    if length == 2:
        # w = -1 exactly: X0 = x0 + x1, X1 = x0 - x1
        out = np.empty_like(x)
        np.add(x[:, 0], x[:, 1], out=out[:, 0])
        np.subtract(x[:, 0], x[:, 1], out=out[:, 1])
        flops.record("add", x.size)
        return out
    if p == length:
        # direct DFT: X[k] = sum_j w^(jk) x[j]
        kernel = w[np.outer(np.arange(length), np.arange(length)) % length]
        terms = kernel[:, None, :, None] * np.moveaxis(x, 1, 0)[:, :, None, :]
        flops.record("mul", terms.size)
        return tree_sum(terms)
    q = length // p
    # element j = j1 * p + r goes to subsequence r at position j1
    sub = x.reshape(a_len, q, p, b_len).transpose(2, 0, 1, 3).reshape(p * a_len, q, b_len)
    y = _fft_mid(sub, sign).reshape(p, a_len, q, b_len)
    if p == 2:
        t = w[:q][None, :, None] * y[1]
        flops.record("mul", t.size)
        flops.record("add", 2 * t.size)
        return np.concatenate([y[0] + t, y[0] - t], axis=1)
    ks = np.arange(length)
    tw = w[(np.arange(p)[:, None] * ks[None, :]) % length]  # (p, L)
    terms = tw[:, None, :, None] * np.tile(y, (1, 1, p, 1))
    flops.record("mul", terms.size)
    return tree_sum(terms)


def fft_axes(x: np.ndarray, m: int, D: int, sign: int) -> np.ndarray:
    """Unscaled transform of the trailing ``m^D`` axis of ``x`` (any leading shape)."""
    lead = x.shape[:-1]
    batch = int(np.prod(lead)) if lead else 1
    out = np.ascontiguousarray(x).reshape(batch, m**D)
    if m == 1:
        return out.reshape(x.shape)
    for axis in range(D):
        pre = batch * m**axis
        post = m ** (D - 1 - axis)
        view = out.reshape(pre, m, post)
        step = max(1, _CHUNK // (m * post))
        if step >= pre:
            out = _fft_mid(view, sign)
        else:
            result = np.empty_like(view)
            for lo in range(0, pre, step):
                result[lo : lo + step] = _fft_mid(view[lo : lo + step], sign)
            out = result
        out = out.reshape(batch, m**D)
    return out.reshape(x.shape)


def _as_complex(data: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(data):
        return data
    return data.astype(np.complex64 if data.dtype == np.float32 else np.complex128)


def dft_forward(a: GroupArray) -> GroupArray:
    return GroupArray(a.m, a.D, fft_axes(_as_complex(a.data), a.m, a.D, +1))


def dft_inverse(a: GroupArray) -> GroupArray:
    out = fft_axes(_as_complex(a.data), a.m, a.D, -1)
    scale = out.real.dtype.type(1.0 / a.size)
    flops.record("mul", out.size)
    return GroupArray(a.m, a.D, out * scale)


# ------------------------------------------------------------- error bound

_SQRT2 = math.sqrt(2.0)
# one complex product with a rounded twiddle: twiddle rounding plus the product
_MUL = 1.0 + 2.0 * _SQRT2
# primes covered by the default constant
_DEFAULT_PRIMES = (2, 3, 5, 7, 11, 13)


def stage_bound(p: int) -> float:
    """Normwise relative error of one radix-p stage of the unitary transform, in units of u.

    Radix 2: ``y = s0 +/- w s1``. The product costs ``_MUL * u * |s1|`` and
    the addition ``sqrt(2) * u * (|s0| + |w s1|)`` per complex entry, which
    in the 2-norm of the (unitary) butterfly output gives at most
    ``1 + 4 sqrt(2)``.

    Radix p (direct): every output is a tree sum of p products. Each entry
    is off by at most ``(_MUL + sqrt(2) ceil(log2 p)) * u * sum_j |x_j|``;
    summing over the p outputs and dividing by the unitary scale gives
    ``sqrt(p) * (_MUL + sqrt(2) ceil(log2 p))``, plus ``_MUL`` for the
    twiddles applied when the stage follows a split.
    """
    if p == 2:
        return 1.0 + 4.0 * _SQRT2
    return math.sqrt(p) * (_MUL + _SQRT2 * math.ceil(math.log2(p))) + _MUL


def _prime_factors(n: int) -> set[int]:
    out = set()
    while n > 1:
        p = smallest_prime_factor(n)
        out.add(p)
        n //= p
    return out


@dataclass(frozen=True)
class FFTStats:
    c_f: float

    def f_bound(self, n: int) -> float:
        """``f(n) = c_f * ceil(log2 n)``; ``f(1) = 0``."""
        return self.c_f * math.ceil(math.log2(n)) if n > 1 else 0.0


def fft_error_constant(m: int | None = None) -> FFTStats:
    """Certified ``c_f`` for transforms over (Z/m)^D (default: any m built from primes <= 13).

    A length-n transform is a chain of stages whose radices multiply to n,
    so the stage errors add up to ``sum_i stage_bound(p_i)``, which is at
    most ``max_p(stage_bound(p) / log2 p) * log2 n``. One more ``u`` covers
    the final ``1/m^D`` scaling of the inverse.
    """
    primes = _DEFAULT_PRIMES if m is None else tuple(sorted(_prime_factors(m))) or (2,)
    c = max(stage_bound(p) / math.log2(p) for p in primes)
    return FFTStats(c + 1.0)

