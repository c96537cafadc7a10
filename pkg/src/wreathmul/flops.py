"""Optional scalar-operation counting.

Kernels report the number of scalar additions and multiplications they
perform. Counting is off unless a :class:`FlopCounter` is active, so the
hot paths pay one context-variable lookup per call and nothing else.

Complex operations count as one operation each, matching the rounded
arithmetic model where every ``+``, ``-`` and ``*`` carries one error.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import defaultdict
from typing import Iterator

_ACTIVE: contextvars.ContextVar["FlopCounter | None"] = contextvars.ContextVar(
    "wreathmul_flop_counter", default=None
)


class FlopCounter:
    """Accumulates ``{stage: {kind: count}}``.

    ``kind`` is one of ``"add"``, ``"mul"`` (coefficient and twiddle
    multiplications) or ``"product"`` (non-scalar products at the base of a
    recursion, i.e. entries of A times entries of B).
    """

    def __init__(self) -> None:
        self.counts: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
        self._stage = "total"

    @contextlib.contextmanager
    def stage(self, name: str) -> Iterator[None]:
        previous, self._stage = self._stage, name
        # make sure empty stages still show up in reports
        self.counts[name]
        try:
            yield
        finally:
            self._stage = previous

    def add(self, kind: str, count: int) -> None:
        self.counts[self._stage][kind] += int(count)

    def total(self, kind: str | None = None) -> int:
        if kind is None:
            return sum(sum(c.values()) for c in self.counts.values())
        return sum(c.get(kind, 0) for c in self.counts.values())

    def by_stage(self) -> dict[str, int]:
        return {name: sum(c.values()) for name, c in self.counts.items()}

    def as_dict(self) -> dict[str, dict[str, int]]:
        return {name: dict(c) for name, c in self.counts.items()}


@contextlib.contextmanager
def count_flops() -> Iterator[FlopCounter]:
    counter = FlopCounter()
    token = _ACTIVE.set(counter)
    try:
        yield counter
    finally:
        _ACTIVE.reset(token)


def record(kind: str, count: int) -> None:
    counter = _ACTIVE.get()
    if counter is not None:
        counter.add(kind, count)


@contextlib.contextmanager
def stage(name: str) -> Iterator[None]:
    counter = _ACTIVE.get()
    if counter is None:
        yield
        return
    with counter.stage(name):
        yield
