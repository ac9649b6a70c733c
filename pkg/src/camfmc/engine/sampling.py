"""Reproducible input samples drawn from a shared, random-access stream.

Uniform variates come from numpy's Philox counter-based generator keyed by
the seed. The variate for sample ``i`` and coordinate ``c`` sits at position
``i * d + c`` of the stream, so any block of samples can be generated
independently and a longer batch always extends a shorter one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SampleBatch", "derive_seed", "draw_uniform", "draw_samples", "check_bounds"]

# Philox emits four 64-bit words per counter increment.
_WORDS_PER_BLOCK = 4


def derive_seed(seed: int, *tags) -> int:
    """Child seed for an independent stream, e.g. ``derive_seed(s, "pilot")``."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for t in tags:
        if isinstance(t, str):
            words.extend(t.encode())
        else:
            words.append(int(t))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def _philox(seed: int) -> np.random.Philox:
    s = int(seed) & ((1 << 128) - 1)
    return np.random.Philox(key=[s & 0xFFFFFFFFFFFFFFFF, s >> 64])


def draw_uniform(seed: int, start: int, stop: int, d: int) -> np.ndarray:
    """Rows ``start..stop-1`` of the unit-cube stream for ``seed``."""
    if start < 0 or stop < start:
        raise ValueError(f"invalid row range [{start}, {stop})")
    bg = _philox(seed)
    offset = start * d
    bg.advance(offset // _WORDS_PER_BLOCK)
    gen = np.random.Generator(bg)
    skip = offset % _WORDS_PER_BLOCK
    if skip:
        gen.random(skip)
    return gen.random((stop - start) * d).reshape(stop - start, d)


def check_bounds(bounds, d: int | None = None) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError("bounds must have shape (d, 2)")
    if d is not None and b.shape[0] != d:
        raise ValueError(f"expected {d} bounds, got {b.shape[0]}")
    if not np.all(np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
        raise ValueError("each bound must be a finite interval [left, right] with left < right")
    return b


@dataclass(frozen=True)
class SampleBatch:
    seed: int
    bounds: np.ndarray
    inputs: np.ndarray

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def dimension(self) -> int:
        return self.inputs.shape[1]

    def prefix(self, m: int) -> np.ndarray:
        return self.inputs[:m]


def draw_samples(seed: int, count: int, d: int, bounds=None, start: int = 0) -> SampleBatch:
    """Draw ``count`` i.i.d. uniform samples on the box ``bounds``
    (the unit cube by default), beginning at row ``start`` of the stream."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    b = check_bounds(np.tile([0.0, 1.0], (d, 1)) if bounds is None else bounds, d)
    u = draw_uniform(seed, start, start + count, d)
    x = b[:, 0] + (b[:, 1] - b[:, 0]) * u
    return SampleBatch(int(seed), b, x)
