"""Abelian STP matrix multiplication through the wreath product H^N x Sym_N.

Rows of A are indexed by ``X = (prod X_i) x Sym_N`` and columns by ``Y``;
row index ``= vector_index * N! + perm_index``. One level of the algorithm:

1. embed      ``a = sum A_xy e_{x^-1 y}`` (placement only)
2. fft        abelian DFT over H^N of every permutation slot
3. assemble   ``A^chi[rho, sigma] = a_hat[rho.chi, slot(sigma rho^-1)]``
4. multiply   ``C^chi = A^chi B^chi`` for each orbit representative chi
5. disassemble ``c_hat[chi, slot(sigma)] = C^chi0[tau, sigma tau]`` with ``chi = tau.chi0``
6. inverse    inverse DFT of every slot
7. output     ``C_xz = c[x^-1 z]``

Storage convention. The group algebra vector lives in an array of shape
``(N!, |H|^N)``. Slot ``s`` (a permutation index) holds the coefficients of
group elements ``(h, perms[s]^-1)``. With the left law
``(h, p)(h', p') = (h + p.h', p p')`` this is the choice for which the
index formulas of steps 3 and 5 reproduce the convolution ``c = a * b``.

Characters ``chi`` are index tuples in ``(Z/m)^(N d)``; Sym_N acts on them
by permuting the N rows, ``(p.chi)_i = chi_{p^-1(i)}``. Orbit
representatives are the row-sorted tuples, i.e. the lexicographically
least member of each orbit, and ``tau`` is the least permutation with
``chi = tau.chi0`` (the stable argsort of the rows).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import flops
from .bilinear import error_bound_stationary, multiply_stationary_array, strassen_scheme
from .grouplib import (
    GroupSpec,
    STPPTriples,
    find_stpp_witness,
    growth_for_modulus,
    perm_tables,
    product_vectors,
    stpp_family,
)
from .matcore import (
    DimensionError,
    Matrix,
    NormKind,
    _check_same_precision,
    naive_kernel,
    naive_mu,
    op_eps,
)
from .wreathfft import fft_axes, fft_error_constant

DEFAULT_BUDGET_BYTES = 4 * 1024**3
BUDGET_ENV = "WREATHMUL_BUDGET_BYTES"
# complex arrays of |H|^N * N! slots assumed alive at the peak of one run
_LIVE_ARRAYS = 4


class BudgetExceeded(MemoryError):
    """The configuration would allocate more than the memory budget allows."""


class CollisionError(ValueError):
    """Two matrix entries were mapped to the same group element."""


def default_budget() -> int:
    raw = os.environ.get(BUDGET_ENV)
    if raw is None:
        return DEFAULT_BUDGET_BYTES
    try:
        return int(float(raw))
    except ValueError as exc:
        raise ValueError(f"{BUDGET_ENV} must be a byte count, got {raw!r}") from exc


def xi_count(size_h: int, n_wreath: int) -> int:
    """``|Xi(H^N)| = binom(|H| + N - 1, N)``."""
    return math.comb(size_h + n_wreath - 1, n_wreath)


def sorted_tuples(size: int, length: int) -> np.ndarray:
    """All non-decreasing ``length``-tuples over ``range(size)`` in lexicographic order."""
    dtype = np.int32 if size < 2**31 else np.int64
    out = np.arange(size, dtype=dtype)[:, None]
    for _ in range(length - 1):
        last = out[:, -1].astype(np.int64)
        counts = size - last
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        offsets = np.arange(int(counts.sum()), dtype=np.int64) - starts
        rows = np.repeat(out, counts, axis=0)
        new = (np.repeat(last, counts) + offsets).astype(dtype)
        out = np.concatenate([rows, new[:, None]], axis=1)
    return out


def _encode_rows(rows: np.ndarray, size_h: int) -> np.ndarray:
    n = rows.shape[-1]
    weights = size_h ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return rows.astype(np.int64) @ weights


def _decode_rows(codes: np.ndarray, size_h: int, n: int) -> np.ndarray:
    out = np.empty(codes.shape + (n,), dtype=np.int64)
    rest = np.asarray(codes, dtype=np.int64).copy()
    for i in range(n - 1, -1, -1):
        out[..., i] = rest % size_h
        rest //= size_h
    return out


@dataclass
class IndexMaps:
    """Precomputed gathers; all flat indices address ``(N!, |H|^N)`` or the chi batch."""

    embed_xy: np.ndarray        # (n, n): slot * |H|^N + code of x^-1 y
    embed_yz: np.ndarray        # (n, n): same for y^-1 z
    output_xz: np.ndarray       # (n, n): same for x^-1 z
    assemble: np.ndarray        # (|Xi|, N!, N!) into the transformed arrays
    disassemble: np.ndarray     # (N!, |H|^N) into the flattened C batch


@dataclass(eq=False)
class STPConfig:
    group: GroupSpec
    n_wreath: int
    triples: STPPTriples
    k_n: int
    n: int
    budget_bytes: int
    perms: np.ndarray = field(repr=False)
    compose: np.ndarray = field(repr=False)
    perm_inverse: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.group.m

    @property
    def size_h(self) -> int:
        return self.group.order

    @property
    def group_size(self) -> int:
        """``|H|^N``."""
        return self.size_h**self.n_wreath

    @property
    def n_perms(self) -> int:
        return math.factorial(self.n_wreath)

    @property
    def dims(self) -> int:
        """Number of (Z/m) axes of H^N."""
        return self.n_wreath * self.group.d

    @property
    def xi_size(self) -> int:
        return xi_count(self.size_h, self.n_wreath)

    def memory_estimate(self) -> int:
        slots = self.n_perms * self.group_size
        index_bytes = 4 * (2 * slots + 3 * self.n * self.n)
        return slots * 16 * _LIVE_ARRAYS + index_bytes

    @cached_property
    def xi_reps(self) -> np.ndarray:
        """``(|Xi|, N)`` row codes of the orbit representatives, lexicographically sorted."""
        return sorted_tuples(self.size_h, self.n_wreath)

    @cached_property
    def orbit_sizes(self) -> np.ndarray:
        reps = self.xi_reps
        if self.n_wreath == 1:
            return np.ones(len(reps), dtype=np.int64)
        # N! / prod(multiplicity!) from the runs of equal sorted entries
        size = np.full(len(reps), self.n_perms, dtype=np.int64)
        run = np.ones(len(reps), dtype=np.int64)
        for i in range(1, self.n_wreath):
            same = reps[:, i] == reps[:, i - 1]
            run = np.where(same, run + 1, 1)
            size //= np.where(same, run, 1)
        return size

    # ------------------------------------------------------------ index maps

    def _vectors(self, which: int) -> np.ndarray:
        return product_vectors([tr[which] for tr in self.triples.triples])

    def _quotient_map(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """Flat slot index of ``(l, s)^-1 (r, u)`` for every row/column pair."""
        m, size_h, nf = self.m, self.size_h, self.n_perms
        spec = self.group
        diffs = (right[None, :, :, :] - left[:, None, :, :]) % m  # (|L|, |R|, N, d)
        out = np.empty((len(left), nf, len(right), nf), dtype=np.int64)
        hn = self.group_size
        for si, sigma in enumerate(self.perms):
            # (sigma^-1 . h)_i = h_{sigma(i)}
            codes = _encode_rows(spec.encode(diffs[:, :, sigma, :]), size_h)
            # element (x^-1 y) has permutation part sigma^-1 tau, stored in slot tau^-1 sigma
            slots = self.compose[self.perm_inverse, si]
            out[:, si, :, :] = slots[None, None, :] * hn + codes[:, :, None]
        return out.reshape(len(left) * nf, len(right) * nf)

    @cached_property
    def maps(self) -> IndexMaps:
        xs, ys, zs = self._vectors(0), self._vectors(1), self._vectors(2)
        embed_xy = self._quotient_map(xs, ys)
        embed_yz = self._quotient_map(ys, zs)
        for label, idx in (("X x Y", embed_xy), ("Y x Z", embed_yz)):
            if len(np.unique(idx)) != idx.size:
                raise CollisionError(f"two entries of {label} map to the same group element")
        output_xz = self._quotient_map(xs, zs)
        total = self.n_perms * self.group_size
        itype = np.int32 if total < 2**31 else np.int64

        nf, hn, size_h = self.n_perms, self.group_size, self.size_h
        reps = self.xi_reps
        # row codes of rho.chi0 have (rho.chi)_i = chi_{rho^-1(i)}
        chi_codes = np.empty((len(reps), nf), dtype=np.int64)
        for ri in range(nf):
            rinv = self.perms[self.perm_inverse[ri]]
            chi_codes[:, ri] = _encode_rows(reps[:, rinv], size_h)
        # slot of sigma rho^-1 for (rho, sigma)
        slot = self.compose[:, self.perm_inverse].T  # slot[rho, sigma] = index(sigma * rho^-1)
        assemble = (slot[None, :, :] * hn + chi_codes[:, :, None]).astype(itype)
        del chi_codes

        disassemble = self._disassemble_map(itype)
        return IndexMaps(
            embed_xy.astype(itype),
            embed_yz.astype(itype),
            output_xz.astype(itype),
            assemble,
            disassemble,
        )

    def _disassemble_map(self, itype) -> np.ndarray:
        nf, hn, size_h, n = self.n_perms, self.group_size, self.size_h, self.n_wreath
        out = np.empty((nf, hn), dtype=itype)
        rep_codes = _encode_rows(self.xi_reps, size_h)
        # perm lookup by base-N code of the one-line tuple
        pweights = n ** np.arange(n - 1, -1, -1, dtype=np.int64)
        plookup = np.zeros(n**n, dtype=np.int64)
        plookup[self.perms @ pweights] = np.arange(nf)
        step = 1 << 20
        for lo in range(0, hn, step):
            codes = np.arange(lo, min(hn, lo + step), dtype=np.int64)
            rows = _decode_rows(codes, size_h, n)
            order = np.argsort(rows, axis=1, kind="stable")  # tau in one-line form
            chi0 = np.take_along_axis(rows, order, axis=1)
            rep = np.searchsorted(rep_codes, _encode_rows(chi0, size_h))
            tau = plookup[order @ pweights]
            base = rep * nf * nf + tau * nf
            # column sigma tau
            out[:, lo : lo + len(codes)] = base[None, :] + self.compose[:, tau]
        return out


def build_config(m: int, n_wreath: int, budget_bytes: int | None = None) -> STPConfig:
    """One level of the bundled family over (Z/m)^(3l) with N = ``n_wreath`` triples.

    m = 2 is accepted: every subset is a singleton, so ``k_N = 1`` and the
    level serves ``n = N!``; it is degenerate only for growth exponents.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    if n_wreath < 2:
        raise ValueError("need N >= 2")
    triples = stpp_family(n_wreath, m)
    witness = find_stpp_witness(triples)
    if witness is not None:
        raise ValueError(f"bundled triples fail the STPP check: {witness}")
    k_n = math.prod(len(tr[0]) for tr in triples.triples)
    for c in (1, 2):
        if math.prod(len(tr[c]) for tr in triples.triples) != k_n:
            raise ValueError("prod |X_i|, prod |Y_i| and prod |Z_i| differ")
    perms, compose, inverse = perm_tables(n_wreath)
    cfg = STPConfig(
        group=triples.group,
        n_wreath=n_wreath,
        triples=triples,
        k_n=k_n,
        n=k_n * math.factorial(n_wreath),
        budget_bytes=default_budget() if budget_bytes is None else int(budget_bytes),
        perms=perms,
        compose=compose,
        perm_inverse=inverse,
    )
    need = cfg.memory_estimate()
    if need > cfg.budget_bytes:
        raise BudgetExceeded(
            f"(m={m}, N={n_wreath}) needs about {need / 2**30:.2f} GiB, budget is "
            f"{cfg.budget_bytes / 2**30:.2f} GiB (set {BUDGET_ENV} to raise it)"
        )
    return cfg


# ------------------------------------------------------------------ steps


def embed(a: np.ndarray, cfg: STPConfig, which: str = "xy") -> np.ndarray:
    """Place ``a`` of shape ``(..., n, n)`` into ``(..., N!, |H|^N)`` arrays. No arithmetic."""
    if a.shape[-2:] != (cfg.n, cfg.n):
        raise DimensionError(f"expected order {cfg.n}, got {a.shape[-2:]}")
    idx = cfg.maps.embed_xy if which == "xy" else cfg.maps.embed_yz
    lead = a.shape[:-2]
    out = np.zeros(lead + (cfg.n_perms * cfg.group_size,), dtype=a.dtype)
    out[..., idx.ravel()] = a.reshape(lead + (-1,))
    return out.reshape(lead + (cfg.n_perms, cfg.group_size))


def transform(arrays: np.ndarray, cfg: STPConfig, inverse: bool = False) -> np.ndarray:
    """Abelian DFT of each slot (forward unscaled, inverse with ``1/|H|^N``)."""
    out = fft_axes(arrays, cfg.m, cfg.dims, -1 if inverse else +1)
    if inverse:
        flops.record("mul", out.size)
        out = out * out.real.dtype.type(1.0 / cfg.group_size)
    return out


def assemble(hat: np.ndarray, cfg: STPConfig) -> np.ndarray:
    """``(..., N!, |H|^N)`` transformed arrays to ``(..., |Xi|, N!, N!)`` matrices. No arithmetic."""
    lead = hat.shape[:-2]
    flat = hat.reshape(lead + (-1,))
    return flat[..., cfg.maps.assemble]


def disassemble(c_batch: np.ndarray, cfg: STPConfig) -> np.ndarray:
    """``(..., |Xi|, N!, N!)`` products back to ``(..., N!, |H|^N)``. No arithmetic."""
    lead = c_batch.shape[:-3]
    flat = c_batch.reshape(lead + (-1,))
    return flat[..., cfg.maps.disassemble]


def output(c: np.ndarray, cfg: STPConfig) -> np.ndarray:
    """Read ``C_xz = c[x^-1 z]``. No arithmetic."""
    lead = c.shape[:-2]
    flat = c.reshape(lead + (-1,))
    return flat[..., cfg.maps.output_xz]


Inner = Callable[[np.ndarray, np.ndarray], np.ndarray]


def inner_multiplier(inner: str | Inner = "naive", inner_config: STPConfig | None = None) -> Inner:
    """Batched ``(batch, k, k)`` multiplier for step 4."""
    if callable(inner):
        return inner
    if inner == "naive":
        return naive_kernel
    if inner == "strassen":
        scheme = strassen_scheme()
        return lambda a, b: multiply_stationary_array(a, b, scheme, base_threshold=1)
    if inner == "stp":
        if inner_config is None:
            raise ValueError("inner='stp' needs an inner_config")
        return lambda a, b: stp_multiply_array(a, b, inner_config, "naive")
    raise ValueError(f"unknown inner multiplier {inner!r}")


def multiply_batch(a_batch: np.ndarray, b_batch: np.ndarray, inner: str | Inner = "naive",
                   inner_config: STPConfig | None = None) -> np.ndarray:
    if a_batch.shape != b_batch.shape:
        raise DimensionError(f"batches differ: {a_batch.shape} vs {b_batch.shape}")
    k = a_batch.shape[-1]
    fn = inner_multiplier(inner, inner_config)
    lead = a_batch.shape[:-2]
    out = fn(a_batch.reshape(-1, k, k), b_batch.reshape(-1, k, k))
    return out.reshape(lead + (k, k))


def stp_multiply_array(a: np.ndarray, b: np.ndarray, cfg: STPConfig, inner: str | Inner = "naive",
                       inner_config: STPConfig | None = None) -> np.ndarray:
    """Batched product of ``(..., r, r)`` complex arrays with ``r <= cfg.n``."""
    if a.shape != b.shape or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"expected equal square operands, got {a.shape} and {b.shape}")
    r = a.shape[-1]
    if r > cfg.n:
        raise DimensionError(f"order {r} exceeds the configuration's order {cfg.n}")
    dtype = np.result_type(a, b, np.complex64)
    if r < cfg.n:
        pad = [(0, 0)] * (a.ndim - 2) + [(0, cfg.n - r), (0, cfg.n - r)]
        a, b = np.pad(a, pad), np.pad(b, pad)
    a, b = a.astype(dtype, copy=False), b.astype(dtype, copy=False)
    with flops.stage("embed"):
        ea = embed(a, cfg, "xy")
        eb = embed(b, cfg, "yz")
    with flops.stage("fft"):
        ea = transform(ea, cfg)
        eb = transform(eb, cfg)
    with flops.stage("assemble"):
        a_batch = assemble(ea, cfg)
        del ea
        b_batch = assemble(eb, cfg)
        del eb
    with flops.stage("multiply"):
        c_batch = multiply_batch(a_batch, b_batch, inner, inner_config)
        del a_batch, b_batch
    with flops.stage("disassemble"):
        c_hat = disassemble(c_batch, cfg)
        del c_batch
    with flops.stage("inverse_fft"):
        c = transform(c_hat, cfg, inverse=True)
        del c_hat
    with flops.stage("output"):
        out = output(c, cfg)
    return out[..., :r, :r]


def stp_multiply(a: Matrix, b: Matrix, cfg: STPConfig, inner: str | Inner = "naive",
                 inner_config: STPConfig | None = None) -> Matrix:
    """Product through one STP level; inputs smaller than ``cfg.n`` are zero-padded."""
    if a.shape != b.shape or a.rows != a.cols:
        raise DimensionError(f"expected equal square operands, got {a.shape} and {b.shape}")
    _check_same_precision(a.data, b.data)
    return Matrix(stp_multiply_array(a.data, b.data, cfg, inner, inner_config), a.precision)


# ----------------------------------------------------------------- bounds


def inner_mu_frobenius(cfg: STPConfig, inner: str = "naive", complex_data: bool = True) -> float:
    """Frobenius-norm ``mu(N!)`` of the step-4 multiplier, in units of the unit roundoff."""
    k = cfg.n_perms
    if inner == "naive":
        mu = naive_mu(k, NormKind.FROBENIUS)
    elif inner == "strassen":
        # ||E||_F <= k ||E||_max and ||M||_max <= ||M||_F; inputs are padded to 2^levels
        levels = math.ceil(math.log2(k)) if k > 1 else 0
        mu = k * error_bound_stationary(strassen_scheme(), 2**levels) if levels else 1.0
    else:
        raise ValueError(f"no bound for inner multiplier {inner!r}")
    return mu * (op_eps(complex_data=complex_data) / op_eps())


def predicted_bound_final(cfg: STPConfig, mu_inner: float, eps: float = 1.0, fft=None) -> float:
    """``[f(|H|^N) + 2 N! |H|^(N/2) f(|H|^N) + N! |H|^(N/2) mu(N!)] * eps``."""
    fft = fft_error_constant(cfg.m) if fft is None else fft
    f = fft.f_bound(cfg.group_size)
    root = math.sqrt(cfg.group_size)
    nf = cfg.n_perms
    return (f + 2 * nf * root * f + nf * root * mu_inner) * eps


def predicted_bound_crude(cfg: STPConfig, mu_inner: float, eps: float = 1.0, fft=None) -> float:
    """``[|H|^(3N/2) mu(N!) + 2 |H|^N (N!)^(-1/2) f + N! |H|^(N/2) f] * eps``."""
    fft = fft_error_constant(cfg.m) if fft is None else fft
    f = fft.f_bound(cfg.group_size)
    hn = cfg.group_size
    nf = cfg.n_perms
    return (hn**1.5 * mu_inner + 2 * hn / math.sqrt(nf) * f + nf * math.sqrt(hn) * f) * eps


def prepost_level(cfg: STPConfig, fft=None, exact_t: bool = True):
    """Pre/post operator quantities of one STP level in the form ``error_bound_prepost`` takes."""
    from .bilinear import PrePostLevel

    fft = fft_error_constant(cfg.m) if fft is None else fft
    f = fft.f_bound(cfg.group_size)
    root = math.sqrt(cfg.group_size)
    nf = cfg.n_perms
    t = cfg.xi_size if exact_t else cfg.group_size / nf
    return PrePostLevel(
        t=t,
        pre_norm=math.sqrt(nf) * root,
        post_norm=1 / root,
        f_pre=math.sqrt(nf) * root * f,
        f_post=f / root,
    )


# --------------------------------------------------------------- exponents


def round_up(x: float, digits: int = 2) -> float:
    """Round toward +infinity at ``digits`` decimals, as asymptotic ``O(n^c)`` exponents are quoted."""
    scale = 10**digits
    return math.ceil(x * scale - 1e-9) / scale


@dataclass(frozen=True)
class ExponentReport:
    alpha: float
    beta: float
    runtime_exp: float
    frobenius_err_exp: float
    maxnorm_err_exp: float

    @property
    def sum_exp(self) -> float:
        return self.runtime_exp + self.frobenius_err_exp

    def quoted(self) -> dict[str, float]:
        """Exponents rounded up to two decimals."""
        return {
            "runtime_exp": round_up(self.runtime_exp),
            "frobenius_err_exp": round_up(self.frobenius_err_exp),
            "maxnorm_err_exp": round_up(self.maxnorm_err_exp),
        }

    def as_dict(self) -> dict[str, float]:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "runtime_exp": self.runtime_exp,
            "frobenius_err_exp": self.frobenius_err_exp,
            "maxnorm_err_exp": self.maxnorm_err_exp,
        }


def exponents_from_growth(alpha: float, beta: float) -> ExponentReport:
    """Runtime ``(a-1)/b``, Frobenius error ``(a+2)/(2b)`` and max-norm error (one more)."""
    if beta <= 0:
        raise ValueError("degenerate family: beta must be positive")
    runtime = (alpha - 1) / beta
    frob = (alpha + 2) / (2 * beta)
    report = ExponentReport(alpha, beta, runtime, frob, frob + 1)
    if not math.isclose(report.sum_exp, 3 * alpha / (2 * beta), rel_tol=1e-12):
        raise AssertionError("runtime + Frobenius exponents differ from 3 alpha / (2 beta)")
    return report


def exponent_report(m: int) -> ExponentReport:
    growth = growth_for_modulus(m)
    growth.require_nondegenerate()
    report = exponents_from_growth(growth.alpha, growth.beta)
    if not report.sum_exp > 3:
        raise AssertionError(f"exponent sum {report.sum_exp} is not above 3")
    return report


def flop_report(counter) -> dict[str, int]:
    """Per-step operation totals ``{step: count}`` from a :class:`~wreathmul.flops.FlopCounter`."""
    steps = ("embed", "fft", "assemble", "multiply", "disassemble", "inverse_fft", "output")
    totals = counter.by_stage()
    return {s: int(totals.get(s, 0)) for s in steps}
