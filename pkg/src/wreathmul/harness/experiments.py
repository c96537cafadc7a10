"""Error experiments and exponent fits.

Every trial draws A and B with entries uniform on [-1, 1] from a Philox
generator keyed by ``(seed, n, trial)``, rounds them to working precision,
multiplies at working precision, and compares against the binary64 product
of the same rounded inputs. The reported value is the coefficient of
``eps`` in ``||C_comp - C|| <= mu * eps * ||A|| ||B||``.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..bilinear import error_bound_stationary, multiply_stationary_array, strassen_scheme
from ..matcore import EPS_WORKING, NormKind, Precision, naive_kernel, naive_mu, norm_array, real_view, reference_product
from ..stpalg import build_config, inner_mu_frobenius, predicted_bound_final, stp_multiply_array

SCHEMA_VERSION = 1


class InvariantViolation(AssertionError):
    """A measured error exceeded its predicted bound."""


def trial_rng(seed: int, n: int, trial: int) -> np.random.Generator:
    """Counter-based generator; identical streams on every platform."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, n, trial])))


def trial_inputs(seed: int, n: int, trial: int, complex_data: bool = False) -> tuple[np.ndarray, np.ndarray]:
    rng = trial_rng(seed, n, trial)
    shape = (2, n, n)
    data = rng.uniform(-1.0, 1.0, size=shape)
    if complex_data:
        data = data + 1j * rng.uniform(-1.0, 1.0, size=shape)
    data = data.astype(Precision.WORKING.dtype)
    return data[0], data[1]


@dataclass
class Algorithm:
    name: str
    norm: NormKind
    multiply: Callable[[np.ndarray, np.ndarray], np.ndarray]
    predicted: Callable[[int], float]
    sizes_ok: Callable[[int], bool]


def _naive_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    real = real_view(a, b)
    out = naive_kernel(*real) if real is not None else naive_kernel(a, b)
    return out.astype(a.dtype)


def make_algorithm(spec: str, base_threshold: int = 8, inner: str = "naive",
                   budget_bytes: int | None = None, complex_data: bool = False) -> Algorithm:
    """``naive``, ``strassen`` or ``stp(m,N)`` (also ``stp:m,N``)."""
    spec = spec.strip().lower()
    if spec == "naive":
        return Algorithm("naive", NormKind.MAX_ENTRY, _naive_product,
                         lambda n: naive_mu(n, NormKind.MAX_ENTRY), lambda n: n >= 1)
    if spec == "strassen":
        scheme = strassen_scheme()

        def bound(n: int) -> float:
            # zero padding only ever enlarges the order, so bound the next power of two
            return error_bound_stationary(scheme, 2 ** max(1, math.ceil(math.log2(n))))

        return Algorithm(
            "strassen", NormKind.MAX_ENTRY,
            lambda a, b: multiply_stationary_array(a, b, scheme, base_threshold),
            bound, lambda n: n >= 2,
        )
    match = re.fullmatch(r"stp[(:]\s*(\d+)\s*,\s*(\d+)\s*\)?", spec)
    if match:
        m, n_wreath = int(match[1]), int(match[2])
        cfg = build_config(m, n_wreath, budget_bytes)
        mu = inner_mu_frobenius(cfg, inner, complex_data=True)
        predicted = predicted_bound_final(cfg, mu)
        return Algorithm(
            f"stp({m},{n_wreath})", NormKind.FROBENIUS,
            lambda a, b: stp_multiply_array(a, b, cfg, inner),
            lambda n: predicted, lambda n: 1 <= n <= cfg.n,
        )
    raise ValueError(f"unknown algorithm {spec!r}; expected naive, strassen or stp(m,N)")


@dataclass
class TrialRecord:
    n: int
    trial: int
    measured: float
    predicted: float

    @property
    def ratio(self) -> float:
        return self.measured / self.predicted if self.predicted else math.inf


@dataclass
class ErrorReport:
    algorithm: str
    n: int
    trials: int
    norm: NormKind
    measured_max: float
    measured_mean: float
    predicted: float
    eps: float
    seed: int
    elapsed_ms: float
    records: list[TrialRecord] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.measured_max <= self.predicted

    def as_dict(self) -> dict:
        out = asdict(self)
        out["norm"] = self.norm.value
        out["records"] = [
            {"n": r.n, "trial": r.trial, "measured": r.measured, "predicted": r.predicted, "ratio": r.ratio}
            for r in self.records
        ]
        return out


def measure_trial(alg: Algorithm, n: int, trial: int, seed: int, complex_data: bool = False) -> float:
    a, b = trial_inputs(seed, n, trial, complex_data)
    c = alg.multiply(a, b)
    ref = reference_product(a, b)
    err = norm_array(np.asarray(c, dtype=np.complex128) - ref, alg.norm)
    scale = EPS_WORKING * norm_array(a, alg.norm) * norm_array(b, alg.norm)
    return err / scale if scale else 0.0


def run_error_experiment(algorithm: str | Algorithm, sizes: Sequence[int], trials: int, seed: int = 0,
                         complex_data: bool = False, check: bool = True, **options) -> list[ErrorReport]:
    """One :class:`ErrorReport` per size; raises :class:`InvariantViolation` if any trial exceeds its bound."""
    alg = make_algorithm(algorithm, **options) if isinstance(algorithm, str) else algorithm
    if trials < 1:
        raise ValueError("need at least one trial")
    reports = []
    for n in sorted(sizes):
        if not alg.sizes_ok(n):
            raise ValueError(f"size {n} is not supported by {alg.name}")
        predicted = alg.predicted(n)
        start = time.perf_counter()
        records = [
            TrialRecord(n, t, measure_trial(alg, n, t, seed, complex_data), predicted) for t in range(trials)
        ]
        elapsed = (time.perf_counter() - start) * 1e3
        values = [r.measured for r in records]
        reports.append(ErrorReport(
            algorithm=alg.name, n=n, trials=trials, norm=alg.norm,
            measured_max=max(values), measured_mean=float(np.mean(values)), predicted=predicted,
            eps=EPS_WORKING, seed=seed, elapsed_ms=elapsed, records=records,
        ))
    if check:
        bad = [r for r in reports if not r.ok]
        if bad:
            r = bad[0]
            raise InvariantViolation(
                f"{r.algorithm} at n={r.n}: measured {r.measured_max:.6g} exceeds predicted {r.predicted:.6g}"
            )
    return reports


# ---------------------------------------------------------------- fitting


@dataclass(frozen=True)
class ExponentFit:
    pairs: tuple[tuple[float, float], ...]
    slope: float
    intercept: float
    r_squared: float


def fit_exponent(pairs: Sequence[tuple[float, float]]) -> ExponentFit:
    """Least squares on ``(log n, log value)``; needs 3 sizes spanning 2 octaves."""
    pairs = tuple((float(n), float(v)) for n, v in pairs)
    ns = np.array([p[0] for p in pairs])
    vs = np.array([p[1] for p in pairs])
    if len(set(ns)) < 3:
        raise ValueError("need at least three distinct sizes")
    if np.any(ns <= 0) or np.any(vs <= 0):
        raise ValueError("sizes and values must be positive")
    if ns.max() / ns.min() < 4:
        raise ValueError("sizes must span at least two octaves")
    x, y = np.log(ns), np.log(vs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / total if total else 1.0
    return ExponentFit(pairs, float(slope), float(intercept), r2)


def parse_sizes(text: str) -> list[int]:
    """``2:1024`` (powers of two in range), ``18`` or ``4,8,16``."""
    text = text.strip()
    if ":" in text:
        lo_s, hi_s = text.split(":", 1)
        lo, hi = int(lo_s), int(hi_s)
        if lo < 1 or hi < lo:
            raise ValueError(f"bad size range {text!r}")
        out, p = [], 1
        while p <= hi:
            if p >= lo:
                out.append(p)
            p *= 2
        if not out:
            raise ValueError(f"no power of two in {text!r}")
        return out
    sizes = [int(v) for v in text.split(",") if v.strip()]
    if not sizes or min(sizes) < 1:
        raise ValueError(f"bad size list {text!r}")
    return sizes
