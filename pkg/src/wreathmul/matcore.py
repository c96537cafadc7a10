"""Dense complex matrices at two precisions, norms, and the naive oracle.

Working precision stores each component as binary32 and reference
precision as binary64. Matrices wrap a read-only 2-D NumPy array of dtype
``complex64`` or ``complex128``; the dtype *is* the precision.

All sums of more than two terms go through :func:`tree_sum`, which adds
the first ``ceil(n/2)`` terms and the remaining terms recursively and then
adds the two partial sums. Its result depends only on the inputs, never on
chunking or batching, so every kernel built on it is bitwise
deterministic.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import flops


class PrecisionError(TypeError):
    """Operands of different precisions were combined."""


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class Precision(enum.Enum):
    WORKING = "working"
    REFERENCE = "reference"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.complex64 if self is Precision.WORKING else np.complex128)

    @property
    def real_dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.WORKING else np.float64)

    @property
    def unit_roundoff(self) -> float:
        return 2.0**-24 if self is Precision.WORKING else 2.0**-53

    @classmethod
    def of(cls, dtype) -> "Precision":
        dtype = np.dtype(dtype)
        if dtype in (np.complex64, np.float32):
            return cls.WORKING
        if dtype in (np.complex128, np.float64):
            return cls.REFERENCE
        raise PrecisionError(f"unsupported dtype {dtype}")


EPS_WORKING = Precision.WORKING.unit_roundoff


def op_eps(precision: Precision = Precision.WORKING, complex_data: bool = False) -> float:
    """Per-operation relative error bound.

    Real rounding gives the unit roundoff ``u``. A complex product computed
    as ``(ac - bd) + (ad + bc)i`` is off by at most ``sqrt(2)*gamma_2*|x||y|``,
    about ``2*sqrt(2)*u``, which also dominates complex addition (error at most
    ``u*|x+y|``).
    """
    u = precision.unit_roundoff
    return 2.0 * math.sqrt(2.0) * u if complex_data else u


class NormKind(enum.Enum):
    MAX_ENTRY = "max_entry"
    FROBENIUS = "frobenius"


@dataclass(frozen=True)
class Scalar:
    value: complex
    precision: Precision = Precision.REFERENCE

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", self.precision.dtype.type(self.value))

    def _check(self, other: "Scalar") -> None:
        if not isinstance(other, Scalar):
            raise TypeError(f"expected Scalar, got {type(other).__name__}")
        if other.precision is not self.precision:
            raise PrecisionError(f"cannot mix {self.precision.value} and {other.precision.value}")

    def __add__(self, other: "Scalar") -> "Scalar":
        self._check(other)
        return Scalar(self.value + other.value, self.precision)

    def __sub__(self, other: "Scalar") -> "Scalar":
        self._check(other)
        return Scalar(self.value - other.value, self.precision)

    def __mul__(self, other: "Scalar") -> "Scalar":
        self._check(other)
        return Scalar(self.value * other.value, self.precision)

    def __neg__(self) -> "Scalar":
        return Scalar(-self.value, self.precision)

    def __complex__(self) -> complex:
        return complex(self.value)


class Matrix:
    """Immutable dense matrix; ``data`` is a read-only complex array."""

    __slots__ = ("_data",)

    def __init__(self, data, precision: Precision | None = None) -> None:
        arr = np.asarray(data)
        if precision is None:
            if np.iscomplexobj(arr) or arr.dtype in (np.float32, np.float64):
                precision = Precision.of(arr.dtype)
            else:
                precision = Precision.REFERENCE
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"expected a non-empty 2-D array, got shape {arr.shape}")
        arr = np.array(arr, dtype=precision.dtype, copy=True)
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def cols(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    @property
    def precision(self) -> Precision:
        return Precision.of(self._data.dtype)

    def __getitem__(self, idx):
        return self._data[idx]

    def is_real(self) -> bool:
        return not np.any(self._data.imag)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return self._data.dtype == other._data.dtype and np.array_equal(self._data, other._data)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols}, {self.precision.value})"

    @classmethod
    def zeros(cls, rows: int, cols: int, precision: Precision = Precision.REFERENCE) -> "Matrix":
        return cls(np.zeros((rows, cols)), precision)

    @classmethod
    def identity(cls, n: int, precision: Precision = Precision.REFERENCE) -> "Matrix":
        return cls(np.eye(n), precision)


def _check_same_precision(*arrays: np.ndarray) -> None:
    kinds = {Precision.of(a.dtype) for a in arrays}
    if len(kinds) > 1:
        raise PrecisionError("operands have different precisions")


def real_view(*arrays: np.ndarray) -> tuple[np.ndarray, ...] | None:
    """Return real parts if every array has an all-zero imaginary part.

    Real arithmetic on ``x + 0i`` rounds exactly like the complex kernels do,
    so the real path gives the same values at a fraction of the cost.
    """
    if any(np.any(a.imag) for a in arrays):
        return None
    return tuple(np.ascontiguousarray(a.real) for a in arrays)


# ---------------------------------------------------------------- summation


def _is_pow2(n: int) -> bool:
    return n & (n - 1) == 0


def _tree(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    if n == 1:
        return x[0]
    if _is_pow2(n):
        # for 2^p terms the split tree is plain adjacent pairing
        while x.shape[0] > 1:
            x = x[0::2] + x[1::2]
        return x[0]
    h = (n + 1) // 2
    left, right = x[:h], x[h:]
    if left.shape[0] == right.shape[0]:
        both = _tree(np.stack([left, right], axis=1))
        return both[0] + both[1]
    return _tree(left) + _tree(right)


def tree_sum(x: np.ndarray) -> np.ndarray:
    """Balanced-tree sum over axis 0 (elementwise over the remaining axes)."""
    x = np.asarray(x)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot sum an empty sequence")
    flops.record("add", (n - 1) * (x[0].size if x.ndim > 1 else 1))
    out = _tree(x)
    return np.array(out, copy=True) if n == 1 else out


def pairwise_sum(xs: Sequence[Scalar] | np.ndarray) -> Scalar | np.ndarray:
    """Sum ``xs`` with the ``ceil(log2 n)``-depth tree.

    A sequence of :class:`Scalar` gives a :class:`Scalar`; an array is summed
    along axis 0.
    """
    if isinstance(xs, np.ndarray):
        return tree_sum(xs)
    xs = list(xs)
    if not xs:
        raise ValueError("cannot sum an empty sequence")
    precision = xs[0].precision
    if any(x.precision is not precision for x in xs):
        raise PrecisionError("pairwise_sum needs terms of one precision")
    arr = np.array([x.value for x in xs], dtype=precision.dtype)
    return Scalar(tree_sum(arr)[()], precision)


# ------------------------------------------------------------ multiplication

# products allocated per chunk of the naive kernel
_NAIVE_CHUNK = 1 << 22


def naive_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched textbook product ``(..., n, k) @ (..., k, m)`` with tree sums."""
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"cannot multiply {a.shape[-2:]} by {b.shape[-2:]}")
    n, k = a.shape[-2:]
    m = b.shape[-1]
    batch = a.shape[:-2]
    dtype = np.result_type(a, b)
    flat_a = a.reshape(-1, n, k)
    flat_b = b.reshape(-1, k, m)
    total = flat_a.shape[0]
    out = np.empty((total, n, m), dtype=dtype)
    flops.record("product", total * n * k * m)
    per_item = n * k * m
    # chunk over the batch, then over rows, so the product tensor stays small
    if per_item <= _NAIVE_CHUNK:
        step = max(1, _NAIVE_CHUNK // per_item)
        for lo in range(0, total, step):
            hi = min(total, lo + step)
            prod = flat_a[lo:hi, :, :, None] * flat_b[lo:hi, None, :, :]
            out[lo:hi] = tree_sum(np.moveaxis(prod, 2, 0))
    else:
        rstep = max(1, _NAIVE_CHUNK // (k * m))
        for item in range(total):
            for lo in range(0, n, rstep):
                hi = min(n, lo + rstep)
                prod = flat_a[item, lo:hi, :, None] * flat_b[item, None, :, :]
                out[item, lo:hi] = tree_sum(np.moveaxis(prod, 1, 0))
    return out.reshape(*batch, n, m)


def naive_multiply(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    _check_same_precision(a.data, b.data)
    real = real_view(a.data, b.data)
    if real is not None:
        return Matrix(naive_kernel(*real), a.precision)
    return Matrix(naive_kernel(a.data, b.data), a.precision)


def naive_mu(n: int, kind: NormKind = NormKind.MAX_ENTRY) -> float:
    """Error coefficient of :func:`naive_multiply` for inner dimension ``n``.

    Each entry is a tree sum of ``n`` rounded products, so it lies within
    ``(ceil(log2 n) + 1) * eps * sum_k |a_ik||b_kj|`` of the truth. In the
    max-entry norm that sum is at most ``n*||A||*||B||``; in the Frobenius
    norm ``|| |A||B| ||_F <= ||A||_F ||B||_F``.
    """
    per_entry = math.ceil(math.log2(n)) + 1 if n > 1 else 1
    return float(n * per_entry) if kind is NormKind.MAX_ENTRY else float(per_entry)


def reference_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """binary64 BLAS product of the widened inputs, for error measurement only."""
    return np.asarray(a, dtype=np.complex128) @ np.asarray(b, dtype=np.complex128)


# --------------------------------------------------------------------- norms


def norm_array(a: np.ndarray, kind: NormKind) -> float:
    a = np.asarray(a, dtype=np.complex128)
    if kind is NormKind.MAX_ENTRY:
        return float(np.max(np.abs(a))) if a.size else 0.0
    return float(np.sqrt(np.sum(a.real**2 + a.imag**2)))


def norm(a: Matrix | np.ndarray, kind: NormKind = NormKind.MAX_ENTRY) -> float:
    return norm_array(a.data if isinstance(a, Matrix) else a, kind)


# ------------------------------------------------------------------ reshaping


def pad_to(a: Matrix, rows: int, cols: int) -> Matrix:
    if rows < a.rows or cols < a.cols:
        raise DimensionError(f"cannot pad {a.shape} down to {(rows, cols)}")
    if (rows, cols) == a.shape:
        return a
    out = np.zeros((rows, cols), dtype=a.data.dtype)
    out[: a.rows, : a.cols] = a.data
    return Matrix(out, a.precision)


def truncate(a: Matrix, rows: int, cols: int) -> Matrix:
    if rows > a.rows or cols > a.cols:
        raise DimensionError(f"cannot truncate {a.shape} to {(rows, cols)}")
    return Matrix(a.data[:rows, :cols], a.precision)


def convert_precision(a: Matrix, to: Precision) -> Matrix:
    return Matrix(a.data, to)


def random_matrix(
    rng: np.random.Generator,
    rows: int,
    cols: int | None = None,
    precision: Precision = Precision.WORKING,
    complex_data: bool = False,
) -> Matrix:
    """Entries uniform on [-1, 1] (both components when ``complex_data``)."""
    cols = rows if cols is None else cols
    re_part = rng.uniform(-1.0, 1.0, size=(rows, cols))
    if complex_data:
        re_part = re_part + 1j * rng.uniform(-1.0, 1.0, size=(rows, cols))
    return Matrix(re_part, precision)


# ---------------------------------------------------------------- text format

_TOKEN = re.compile(r"^(?P<re>[+-]?[^+-]+(?:[eE][+-]?\d+)?)(?P<im>[+-][^+-]*(?:[eE][+-]?\d+)?)i$")


def format_entry(z: complex) -> str:
    re_s = repr(float(z.real))
    im = float(z.imag)
    im_s = repr(im)
    if not im_s.startswith("-"):
        im_s = "+" + im_s
    return f"{re_s}{im_s}i"


def parse_entry(token: str) -> complex:
    match = _TOKEN.match(token.strip())
    if match is None:
        raise ValueError(f"malformed matrix entry {token!r}")
    return complex(float(match["re"]), float(match["im"]))


def format_matrix(a: Matrix) -> str:
    lines = [f"{a.rows} {a.cols}"]
    for row in a.data:
        lines.append(" ".join(format_entry(z) for z in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, precision: Precision = Precision.REFERENCE) -> Matrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix text")
    rows, cols = (int(v) for v in lines[0].split())
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"expected {rows} rows, found {len(body)}")
    data = np.empty((rows, cols), dtype=np.complex128)
    for i, line in enumerate(body):
        tokens = line.split()
        if len(tokens) != cols:
            raise ValueError(f"row {i}: expected {cols} entries, found {len(tokens)}")
        data[i] = [parse_entry(t) for t in tokens]
    return Matrix(data, precision)


def load_matrix(path: str | Path, precision: Precision = Precision.REFERENCE) -> Matrix:
    return parse_matrix(Path(path).read_text(), precision)


def save_matrix(a: Matrix, path: str | Path) -> None:
    Path(path).write_text(format_matrix(a))


def as_matrices(arrays: Iterable[np.ndarray], precision: Precision) -> list[Matrix]:
    return [Matrix(a, precision) for a in arrays]
