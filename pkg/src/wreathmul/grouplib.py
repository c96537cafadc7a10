"""Finite abelian groups (Z/m)^d, wreath products H wr Sym_N and STPP triples.

Abelian groups use additive notation throughout. Permutations are 0-based
one-line tuples; ``Sym_N`` is enumerated in lexicographic order, so the
index of a permutation is its Lehmer-code rank.

Wreath product law (left action of Sym_N on coordinates)::

    (h, p) (h', p') = (h + p.h', p p'),   (p.h)_i = h_{p^-1(i)},   (p p')(i) = p(p'(i))
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# default number of (q_x, q_y, q_z) combinations a brute-force check may examine
DEFAULT_BUDGET = 10**8
# default number of (x, sigma, y, tau) quadruples for the unique-quotient check
QUOTIENT_BUDGET = 10**7


class BudgetError(RuntimeError):
    """A brute-force search would exceed its configured budget."""


class GroupMismatch(ValueError):
    """Elements or subsets from different groups were combined."""


# ------------------------------------------------------------------- groups


@dataclass(frozen=True)
class GroupSpec:
    m: int
    d: int

    def __post_init__(self) -> None:
        if self.m < 2 or self.d < 1:
            raise ValueError(f"need m >= 2 and d >= 1, got m={self.m}, d={self.d}")

    @property
    def order(self) -> int:
        return self.m**self.d

    def element(self, residues: Iterable[int]) -> "GroupElement":
        return GroupElement(tuple(residues), self.m)

    def zero(self) -> "GroupElement":
        return GroupElement((0,) * self.d, self.m)

    def encode(self, arr: np.ndarray) -> np.ndarray:
        """Row-major integer code of residue vectors along the last axis."""
        weights = self.m ** np.arange(self.d - 1, -1, -1, dtype=np.int64)
        return np.asarray(arr, dtype=np.int64) @ weights

    def decode(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        out = np.empty(codes.shape + (self.d,), dtype=np.int64)
        rest = codes.copy()
        for c in range(self.d - 1, -1, -1):
            out[..., c] = rest % self.m
            rest //= self.m
        return out


@dataclass(frozen=True)
class GroupElement:
    residues: tuple[int, ...]
    m: int

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError("modulus must be at least 2")
        object.__setattr__(self, "residues", tuple(int(r) % self.m for r in self.residues))

    def _check(self, other: "GroupElement") -> None:
        if self.m != other.m or len(self.residues) != len(other.residues):
            raise GroupMismatch("elements belong to different groups")

    def __add__(self, other: "GroupElement") -> "GroupElement":
        self._check(other)
        return GroupElement(tuple(a + b for a, b in zip(self.residues, other.residues)), self.m)

    def __sub__(self, other: "GroupElement") -> "GroupElement":
        self._check(other)
        return GroupElement(tuple(a - b for a, b in zip(self.residues, other.residues)), self.m)

    def __neg__(self) -> "GroupElement":
        return GroupElement(tuple(-a for a in self.residues), self.m)

    def is_zero(self) -> bool:
        return not any(self.residues)


def as_array(elements, m: int | None = None) -> np.ndarray:
    """``(count, d)`` residue array from a list of elements or an array."""
    if isinstance(elements, np.ndarray):
        arr = elements.astype(np.int64)
    else:
        elements = list(elements)
        if not elements:
            raise ValueError("empty subset")
        if isinstance(elements[0], GroupElement):
            arr = np.array([e.residues for e in elements], dtype=np.int64)
        else:
            arr = np.array(elements, dtype=np.int64)
    if arr.ndim != 2:
        raise ValueError(f"expected a (count, d) array of residues, got shape {arr.shape}")
    return arr % m if m is not None else arr


# ------------------------------------------------------------- permutations


@dataclass(frozen=True)
class Permutation:
    images: tuple[int, ...]

    def __post_init__(self) -> None:
        images = tuple(int(i) for i in self.images)
        if sorted(images) != list(range(len(images))):
            raise ValueError(f"{images} is not a permutation of 0..{len(images) - 1}")
        object.__setattr__(self, "images", images)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @property
    def degree(self) -> int:
        return len(self.images)

    def __call__(self, i: int) -> int:
        return self.images[i]

    def __mul__(self, other: "Permutation") -> "Permutation":
        """Composition ``(self * other)(i) = self(other(i))``."""
        if self.degree != other.degree:
            raise GroupMismatch("permutations of different degree")
        return Permutation(tuple(self.images[j] for j in other.images))

    def inverse(self) -> "Permutation":
        inv = [0] * self.degree
        for i, j in enumerate(self.images):
            inv[j] = i
        return Permutation(tuple(inv))

    def index(self) -> int:
        return perm_index(self.images)

    def act(self, rows: np.ndarray) -> np.ndarray:
        """``(p.h)_i = h_{p^-1(i)}`` on the leading axis of ``rows``."""
        return np.asarray(rows)[list(self.inverse().images)]


@lru_cache(maxsize=None)
def all_perms(n: int) -> tuple[tuple[int, ...], ...]:
    """Sym_n in lexicographic order."""
    return tuple(itertools.permutations(range(n)))


def perm_index(images: Sequence[int]) -> int:
    """Lexicographic rank (Lehmer code)."""
    images = list(images)
    n = len(images)
    rank = 0
    for i in range(n):
        smaller = sum(1 for j in range(i + 1, n) if images[j] < images[i])
        rank += smaller * math.factorial(n - 1 - i)
    return rank


def perm_tables(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(perms, compose, inverse)`` index tables for Sym_n.

    ``perms[i]`` is the i-th permutation, ``compose[i, j]`` the index of
    ``perms[i] * perms[j]`` and ``inverse[i]`` the index of its inverse.
    """
    perms = np.array(all_perms(n), dtype=np.int64).reshape(-1, n)
    lookup = {p: i for i, p in enumerate(all_perms(n))}
    size = len(perms)
    compose = np.empty((size, size), dtype=np.int64)
    inverse = np.empty(size, dtype=np.int64)
    for i, p in enumerate(all_perms(n)):
        inv = [0] * n
        for a, b in enumerate(p):
            inv[b] = a
        inverse[i] = lookup[tuple(inv)]
        for j, q in enumerate(all_perms(n)):
            compose[i, j] = lookup[tuple(p[k] for k in q)]
    return perms, compose, inverse


# ---------------------------------------------------------- wreath products


@dataclass(frozen=True)
class WreathElement:
    h: tuple[tuple[int, ...], ...]
    perm: Permutation
    m: int

    def __post_init__(self) -> None:
        h = tuple(tuple(int(v) % self.m for v in row) for row in self.h)
        if len(h) != self.perm.degree:
            raise ValueError(f"h has {len(h)} rows but the permutation has degree {self.perm.degree}")
        if len({len(row) for row in h}) > 1:
            raise ValueError("rows of h must have equal length")
        object.__setattr__(self, "h", h)

    @classmethod
    def from_array(cls, h, perm: Sequence[int] | Permutation, m: int) -> "WreathElement":
        if not isinstance(perm, Permutation):
            perm = Permutation(tuple(perm))
        return cls(tuple(tuple(row) for row in np.asarray(h).tolist()), perm, m)

    @property
    def n_wreath(self) -> int:
        return self.perm.degree

    @property
    def d(self) -> int:
        return len(self.h[0]) if self.h else 0

    def h_array(self) -> np.ndarray:
        return np.array(self.h, dtype=np.int64).reshape(self.n_wreath, self.d)


def wreath_identity(n_wreath: int, d: int, m: int) -> WreathElement:
    return WreathElement(((0,) * d,) * n_wreath, Permutation.identity(n_wreath), m)


def _check_compatible(a: WreathElement, b: WreathElement) -> None:
    if a.m != b.m or a.n_wreath != b.n_wreath or a.d != b.d:
        raise GroupMismatch(
            f"cannot combine elements of ({a.m}, N={a.n_wreath}, d={a.d}) and ({b.m}, N={b.n_wreath}, d={b.d})"
        )


def wreath_multiply(a: WreathElement, b: WreathElement) -> WreathElement:
    _check_compatible(a, b)
    h = a.h_array() + a.perm.act(b.h_array())
    return WreathElement.from_array(h % a.m, a.perm * b.perm, a.m)


def wreath_inverse(a: WreathElement) -> WreathElement:
    inv = a.perm.inverse()
    return WreathElement.from_array((-inv.act(a.h_array())) % a.m, inv, a.m)


# ------------------------------------------------------------ quotient sets


def _unique_rows(arr: np.ndarray) -> np.ndarray:
    return np.unique(arr, axis=0) if arr.size else arr


def quotient_array(s, t, m: int) -> np.ndarray:
    """Distinct differences ``s - t`` as a sorted ``(count, d)`` array."""
    sa, ta = as_array(s, m), as_array(t, m)
    if sa.shape[1] != ta.shape[1]:
        raise GroupMismatch("subsets have different ranks")
    diffs = (sa[:, None, :] - ta[None, :, :]) % m
    return _unique_rows(diffs.reshape(-1, sa.shape[1]))


def quotient_set(s, t, m: int | None = None) -> frozenset[GroupElement]:
    """``Q(S, T) = {s - t}`` for subsets given as element lists or residue arrays."""
    if m is None:
        first = next(iter(s))
        if not isinstance(first, GroupElement):
            raise ValueError("modulus required for raw residue arrays")
        m = first.m
    return frozenset(GroupElement(tuple(row), m) for row in quotient_array(s, t, m).tolist())


@dataclass(frozen=True)
class Witness:
    """A solution of ``q_x + q_y + q_z = 0`` that the property forbids."""

    i: int
    j: int
    k: int
    q_x: tuple[int, ...]
    q_y: tuple[int, ...]
    q_z: tuple[int, ...]


def _search(qx: np.ndarray, qy: np.ndarray, qz: np.ndarray, m: int, allow_zero: bool):
    """First ``(q_x, q_y, q_z)`` summing to 0, skipping the all-zero one if allowed."""
    spec = GroupSpec(m, qx.shape[1])
    z_codes = np.sort(spec.encode(qz))
    step = max(1, (1 << 20) // max(1, len(qy)))
    for lo in range(0, len(qx), step):
        block = qx[lo : lo + step]
        need = (-(block[:, None, :] + qy[None, :, :])) % m
        codes = spec.encode(need)
        pos = np.searchsorted(z_codes, codes)
        hit = (pos < len(z_codes)) & (z_codes[np.minimum(pos, len(z_codes) - 1)] == codes)
        if allow_zero:
            hit &= ~(np.all(block[:, None, :] == 0, axis=2) & np.all(qy[None, :, :] == 0, axis=2))
        if hit.any():
            a, b = np.argwhere(hit)[0]
            return tuple(block[a].tolist()), tuple(qy[b].tolist()), tuple(need[a, b].tolist())
    return None


def find_triple_product_witness(x, y, z, m: int, budget: int = DEFAULT_BUDGET) -> Witness | None:
    qx, qy, qz = (quotient_array(s, s, m) for s in (x, y, z))
    if len(qx) * len(qy) * len(qz) > budget:
        raise BudgetError(f"{len(qx) * len(qy) * len(qz)} combinations exceed the budget {budget}")
    found = _search(qx, qy, qz, m, allow_zero=True)
    return None if found is None else Witness(0, 0, 0, *found)


def check_triple_product(x, y, z, m: int | None = None, budget: int = DEFAULT_BUDGET) -> bool:
    if m is None:
        m = next(iter(x)).m
    return find_triple_product_witness(x, y, z, m, budget) is None


# -------------------------------------------------------------- STPP triples


@dataclass(frozen=True, eq=False)
class STPPTriples:
    group: GroupSpec
    triples: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]
    # name of the bundled construction, if any; growth parameters need it
    family: str | None = None
    family_m: int | None = None

    def __post_init__(self) -> None:
        cleaned = []
        for triple in self.triples:
            if len(triple) != 3:
                raise ValueError("each entry must be an (X, Y, Z) triple")
            parts = []
            for s in triple:
                arr = as_array(s, self.group.m)
                if arr.shape[1] != self.group.d:
                    raise GroupMismatch(f"subset rank {arr.shape[1]} differs from group rank {self.group.d}")
                arr = _unique_rows(arr)
                arr.setflags(write=False)
                parts.append(arr)
            cleaned.append(tuple(parts))
        if not cleaned:
            raise ValueError("need at least one triple")
        object.__setattr__(self, "triples", tuple(cleaned))

    @property
    def n_triples(self) -> int:
        return len(self.triples)

    def sizes(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(tuple(len(s) for s in t) for t in self.triples)

    def equal_sizes(self) -> bool:
        return all(len({sz[c] for sz in self.sizes()}) == 1 for c in range(3))

    def as_elements(self) -> list[tuple[list[GroupElement], ...]]:
        m = self.group.m
        return [tuple([GroupElement(tuple(r), m) for r in s.tolist()] for s in t) for t in self.triples]

    def with_subset(self, i: int, which: int, subset) -> "STPPTriples":
        """Copy with ``triples[i][which]`` replaced (which: 0=X, 1=Y, 2=Z)."""
        triples = [list(t) for t in self.triples]
        triples[i][which] = as_array(subset, self.group.m)
        return STPPTriples(self.group, tuple(tuple(t) for t in triples))


def find_stpp_witness(t: STPPTriples, budget: int = DEFAULT_BUDGET) -> Witness | None:
    m = t.group.m
    n = t.n_triples
    index = range(n)
    quot = {}
    for which in range(3):
        for a in index:
            for b in index:
                quot[which, a, b] = quotient_array(t.triples[a][which], t.triples[b][which], m)
    total = sum(
        len(quot[0, i, j]) * len(quot[1, j, k]) * len(quot[2, k, i])
        for i in index for j in index for k in index
    )
    if total > budget:
        raise BudgetError(f"{total} combinations exceed the budget {budget}")
    for i in index:
        for j in index:
            for k in index:
                found = _search(
                    quot[0, i, j], quot[1, j, k], quot[2, k, i], m, allow_zero=(i == j == k)
                )
                if found is not None:
                    return Witness(i, j, k, *found)
    return None


def check_stpp(t: STPPTriples, budget: int = DEFAULT_BUDGET) -> bool:
    return find_stpp_witness(t, budget) is None


# -------------------------------------------------------- bundled families


def _axis_subset(m: int, axis: int, d: int = 3) -> np.ndarray:
    arr = np.zeros((m - 1, d), dtype=np.int64)
    arr[:, axis] = np.arange(1, m)
    return arr


def _bar_subsets(m: int) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    # triple i puts X on axis i, Y on axis i+1, Z on axis i+2 (mod 3)
    return [
        (_axis_subset(m, i % 3), _axis_subset(m, (i + 1) % 3), _axis_subset(m, (i + 2) % 3))
        for i in range(2)
    ]


def running_example_triples(m: int) -> STPPTriples:
    """The two triples over (Z/m)^3 built from ``{1, ..., m-1}`` on single axes."""
    if m < 2:
        raise ValueError("m must be at least 2")
    return STPPTriples(GroupSpec(m, 3), tuple(_bar_subsets(m)), family="running", family_m=m)


def family_levels(n_triples: int) -> int:
    """``l = ceil(log2 N)``, at least 1 so that N = 1 still uses one copy of H."""
    return max(1, math.ceil(math.log2(n_triples))) if n_triples > 1 else 1


def _product_subset(parts: Sequence[np.ndarray]) -> np.ndarray:
    rows = [np.concatenate(combo) for combo in itertools.product(*parts)]
    return np.array(rows, dtype=np.int64)


def stpp_family(n_triples: int, m: int) -> STPPTriples:
    """N triples over (Z/m)^(3l): triple i uses the bar subsets picked by the binary digits of i."""
    if n_triples < 1:
        raise ValueError("need at least one triple")
    if m < 2:
        raise ValueError("m must be at least 2")
    ell = family_levels(n_triples)
    bars = _bar_subsets(m)
    triples = []
    for i in range(n_triples):
        digits = [(i >> (ell - 1 - p)) & 1 for p in range(ell)]
        triples.append(tuple(_product_subset([bars[b][c] for b in digits]) for c in range(3)))
    return STPPTriples(GroupSpec(m, 3 * ell), tuple(triples), family="running", family_m=m)


@dataclass(frozen=True)
class GrowthParameters:
    alpha: float
    beta: float
    degenerate: bool = False

    def require_nondegenerate(self) -> None:
        if self.degenerate:
            raise ValueError("degenerate family: k_N = 1, so beta = 0 and the exponents are infinite")


def growth_for_modulus(m: int) -> GrowthParameters:
    """Closed-form growth parameters of the bundled family over (Z/m)^3."""
    if m < 2:
        raise ValueError("m must be at least 2")
    alpha = 3 * math.log2(m)
    beta = math.log2(m - 1)
    return GrowthParameters(alpha, beta, degenerate=(m == 2))


def growth_parameters(t: STPPTriples, n_triples: int | None = None) -> GrowthParameters:
    """Limiting exponents ``|H_N| = N^(alpha+o(1))``, ``k_N = N^(beta N + o(N))``.

    Only the bundled family has known limits; other triples are refused.
    """
    n_triples = t.n_triples if n_triples is None else n_triples
    if n_triples < 2:
        raise ValueError("growth parameters need N >= 2")
    if t.family != "running" or t.family_m is None:
        raise ValueError("growth parameters are only known for the bundled family")
    return growth_for_modulus(t.family_m)


# -------------------------------------------------------- unique quotients


def product_vectors(subsets: Sequence[np.ndarray]) -> np.ndarray:
    """All ``(x_1, ..., x_N)`` with ``x_i`` in ``subsets[i]``, as ``(count, N, d)``."""
    sizes = [len(s) for s in subsets]
    grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
    out = np.stack([subsets[i][g.ravel()] for i, g in enumerate(grids)], axis=1)
    return out


def find_quotient_collision(t: STPPTriples, budget: int = QUOTIENT_BUDGET):
    """Two distinct ``(x, s, y, u)`` with equal ``(x s)^-1 (y u)``, or None."""
    n = t.n_triples
    m = t.group.m
    xs = product_vectors([tr[0] for tr in t.triples])
    ys = product_vectors([tr[1] for tr in t.triples])
    nf = math.factorial(n)
    count = (len(xs) * nf) * (len(ys) * nf)
    if count > budget:
        raise BudgetError(f"{count} quadruples exceed the budget {budget}")
    perms, compose, inverse = perm_tables(n)
    spec = GroupSpec(m, t.group.d)
    diffs = (ys[None, :, :, :] - xs[:, None, :, :]) % m  # (|X|, |Y|, N, d)
    size_h = spec.order
    codes = np.empty((len(xs), nf, len(ys), nf), dtype=np.int64)
    weights = size_h ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for si, sigma in enumerate(perms):
        # sigma^-1 . h has rows h[sigma]
        rows = spec.encode(diffs[:, :, sigma, :])  # (|X|, |Y|, N)
        hcode = rows @ weights
        perm_part = compose[inverse[si]]  # index of sigma^-1 tau for each tau
        codes[:, si, :, :] = (perm_part[None, None, :] * size_h**n) + hcode[:, :, None]
    flat = codes.ravel()
    order = np.argsort(flat, kind="stable")
    dup = np.flatnonzero(flat[order][1:] == flat[order][:-1])
    if dup.size == 0:
        return None
    first, second = order[dup[0]], order[dup[0] + 1]
    shape = codes.shape
    return np.unravel_index(first, shape), np.unravel_index(second, shape)


def check_unique_quotient(t: STPPTriples, n_triples: int | None = None, budget: int = QUOTIENT_BUDGET) -> bool:
    if n_triples is not None and n_triples != t.n_triples:
        raise ValueError(f"triples hold {t.n_triples} entries, not {n_triples}")
    return find_quotient_collision(t, budget) is None


# ------------------------------------------------------------ serialization


def triples_to_dict(t: STPPTriples) -> dict:
    doc = {
        "m": t.group.m,
        "d": t.group.d,
        "N": t.n_triples,
        "triples": [[s.tolist() for s in tr] for tr in t.triples],
    }
    if t.family is not None:
        doc["family"] = t.family
        doc["family_m"] = t.family_m
    return doc


def triples_from_dict(doc: dict, trust: bool = False) -> STPPTriples:
    try:
        group = GroupSpec(int(doc["m"]), int(doc["d"]))
        raw = doc["triples"]
        if len(raw) != int(doc["N"]):
            raise ValueError(f"N={doc['N']} but {len(raw)} triples given")
        triples = tuple(tuple(np.array(s, dtype=np.int64).reshape(-1, group.d) for s in tr) for tr in raw)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed triples document: {exc}") from exc
    t = STPPTriples(group, triples, family=doc.get("family"), family_m=doc.get("family_m"))
    if not trust:
        witness = find_stpp_witness(t)
        if witness is not None:
            raise ValueError(f"triples violate the simultaneous triple product property: {witness}")
    return t


def load_triples(path: str | Path, trust: bool = False) -> STPPTriples:
    return triples_from_dict(json.loads(Path(path).read_text()), trust=trust)


def save_triples(t: STPPTriples, path: str | Path) -> None:
    Path(path).write_text(json.dumps(triples_to_dict(t)) + "\n")
