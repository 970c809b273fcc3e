"""Detection and counting of boundary-to-boundary crossings on dyadic paths.

A "big jump" at grid step i is a move from strictly inside the lower
epsilon-margin to strictly inside the upper one:

    values[i-1] < -L + epsilon   and   values[i] > L - epsilon.

Values clamped exactly onto +-L count as inside the margin (strict
comparison against -L + epsilon with epsilon > 0 already includes them).
Windows are half-open unit-time intervals (a, b], mapped to grid steps
a*2^n + 1 .. b*2^n.  Downward crossings (upper to lower margin) are
statistically identical by the sign symmetry of the kernel and are not
counted separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import WindowOutOfRange
from .qseries import QParams
from .sampler import PathGrid

__all__ = ["JumpSpec", "JumpEvent", "JumpCount", "detect_jumps", "count_events", "bernoulli_indicators"]


@dataclass(frozen=True)
class JumpSpec:
    """Margin width and counting window for crossing detection."""

    qp: QParams
    epsilon: float
    window: tuple[int, int]

    def __post_init__(self) -> None:
        if not (0.0 < self.epsilon < self.qp.L):
            raise ValueError(
                f"epsilon must lie in (0, L) = (0, {self.qp.L!r}), got {self.epsilon!r}"
            )
        a, b = self.window
        if not (isinstance(a, int) and isinstance(b, int) and 0 <= a < b):
            raise ValueError(f"window must be integers 0 <= a < b, got {self.window!r}")


@dataclass(frozen=True)
class JumpEvent:
    """One detected crossing: the grid step and the two states involved."""

    step_index: int
    y_from: float
    y_to: float


@dataclass(frozen=True)
class JumpCount:
    """Crossing counts per unit interval of the window, plus bookkeeping."""

    epsilon: float
    n: int
    window: tuple[int, int]
    per_unit_interval: np.ndarray
    total: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "epsilon": self.epsilon,
                "n": self.n,
                "window": list(self.window),
                "per_interval": [int(c) for c in self.per_unit_interval],
                "total": int(self.total),
            }
        )


def _crossing_mask(values: np.ndarray, lo_thr: float, hi_thr: float) -> np.ndarray:
    """Boolean mask over steps 1..len-1: crossing from below lo_thr to above hi_thr."""
    return (values[:-1] < lo_thr) & (values[1:] > hi_thr)


def detect_jumps(path: PathGrid, spec: JumpSpec) -> list[JumpEvent]:
    """All crossings with step index inside the window, in increasing order."""
    a, b = spec.window
    if b > path.horizon:
        raise WindowOutOfRange(
            f"window {spec.window!r} exceeds path horizon {path.horizon}"
        )
    spu = 2**path.n
    lo_thr = -spec.qp.L + spec.epsilon
    hi_thr = spec.qp.L - spec.epsilon
    seg = path.values[a * spu : b * spu + 1]
    mask = _crossing_mask(seg, lo_thr, hi_thr)
    steps = np.nonzero(mask)[0] + a * spu + 1
    return [
        JumpEvent(step_index=int(i), y_from=float(path.values[i - 1]), y_to=float(path.values[i]))
        for i in steps
    ]


def count_events(path: PathGrid, spec: JumpSpec) -> JumpCount:
    """Aggregate detected crossings per unit interval of the window.

    A single event cannot be double counted at consecutive steps: its
    landing state is above L - epsilon, which cannot also lie below
    -L + epsilon when epsilon < L.
    """
    events = detect_jumps(path, spec)
    a, b = spec.window
    spu = 2**path.n
    per = np.zeros(b - a, dtype=np.int64)
    for ev in events:
        # Crossing time i/2^n belongs to interval (m-1, m] with m = ceil(i / 2^n).
        m = -(-ev.step_index // spu)
        per[m - 1 - a] += 1
    return JumpCount(
        epsilon=spec.epsilon, n=path.n, window=spec.window, per_unit_interval=per,
        total=int(per.sum()),
    )


def bernoulli_indicators(count: JumpCount) -> np.ndarray:
    """Per-interval indicator of at least one crossing; its sum is the
    windowed count of crossing-active intervals."""
    return (count.per_unit_interval >= 1).astype(np.int64)
