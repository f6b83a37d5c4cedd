"""Local two-wing outcome model with a shared global gauge key.

A source emits correlated pairs. Each pair carries a hidden variable
``lam`` drawn uniformly on [0, 1) and a dimensionless time parameter
``t`` on [0, 1). The left wing always reports the gauge value
``g(t) = ±1``; the right wing reports ``-g(t)`` when ``lam`` falls below
a threshold set by its own magnet direction, ``+g(t)`` otherwise.
Neither wing's outcome function depends on the other wing's setting,
and the gauge is a global ±1 function of ``t`` only (distributable as a
key file). The product of the two outcomes averages to minus the dot
product of the two settings; a balanced gauge (e.g. a Rademacher
function) makes both marginal means vanish.

All operations here are pure and deterministic: identical inputs give
identical outcomes, so everything is safe to evaluate concurrently.
Scalar entry points accept numpy arrays as well and vectorize.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

__all__ = [
    "NORM_TOL",
    "Setting",
    "PairEvent",
    "PairStream",
    "GaugeKey",
    "MODE_CONSTANT",
    "MODE_RADEMACHER",
    "MODE_RADEMACHER_RARB",
    "Outcome",
    "PairClass",
    "MeasurementRecord",
    "rademacher",
    "rarb_eval",
    "gauge_eval",
    "sample_pair_stream",
    "derive_subseed",
    "measure_left",
    "measure_right",
    "measure_pairs",
    "classify_pair",
]

NORM_TOL = 1e-12

#: An outcome is the detector number encoded as a sign: +1 for detector 1,
#: -1 for detector 2.
Outcome = int


@dataclass(frozen=True)
class Setting:
    """Unit vector in the plane transverse to the emission axis.

    The constructor normalizes inputs that are off unit length by more
    than ``NORM_TOL`` and rejects zero or non-finite vectors. Components
    already within tolerance are kept bit-for-bit (reproducibility).
    """

    b2: float
    b3: float

    def __post_init__(self) -> None:
        b2 = float(self.b2)
        b3 = float(self.b3)
        if not (math.isfinite(b2) and math.isfinite(b3)):
            raise ValueError(f"setting components must be finite, got ({self.b2}, {self.b3})")
        sq = b2 * b2 + b3 * b3
        if sq < NORM_TOL:
            raise ValueError("zero vector is not a valid setting")
        if abs(sq - 1.0) > NORM_TOL:
            norm = math.sqrt(sq)
            b2, b3 = b2 / norm, b3 / norm
        object.__setattr__(self, "b2", b2)
        object.__setattr__(self, "b3", b3)

    @classmethod
    def from_angle(cls, theta: float) -> "Setting":
        return cls(math.cos(theta), math.sin(theta))

    @property
    def angle(self) -> float:
        return math.atan2(self.b3, self.b2)

    def dot(self, other: "Setting") -> float:
        return self.b2 * other.b2 + self.b3 * other.b3

    def close_to(self, other: "Setting", tol: float = NORM_TOL) -> bool:
        return abs(self.b2 - other.b2) <= tol and abs(self.b3 - other.b3) <= tol


@dataclass(frozen=True)
class PairEvent:
    """One emitted pair: index ``n``, hidden variable ``lam``, time parameter ``t``.

    Both wings receive the same event; the shared ``t`` is what lets the
    two stations evaluate the global gauge at an identical argument with
    no channel between them.
    """

    n: int
    lam: float
    t: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"pair index must be >= 1, got {self.n}")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lam must lie in [0, 1), got {self.lam}")
        if not 0.0 <= self.t < 1.0:
            raise ValueError(f"t must lie in [0, 1), got {self.t}")


@dataclass(frozen=True)
class PairStream:
    """A run of pair events backed by arrays; iterates as ``PairEvent``s.

    ``n`` is strictly increasing. Index ranges of separate runs are kept
    disjoint by the caller (distinct sample spaces per experiment).
    """

    n: np.ndarray
    lam: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.n) == len(self.lam) == len(self.t)):
            raise ValueError("pair stream arrays must have equal length")
        if len(self.n) and np.any(np.diff(self.n) <= 0):
            raise ValueError("pair indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.n)

    def __getitem__(self, i: int) -> PairEvent:
        return PairEvent(int(self.n[i]), float(self.lam[i]), float(self.t[i]))

    def __iter__(self) -> Iterator[PairEvent]:
        for i in range(len(self)):
            yield self[i]

    def with_start_index(self, start: int) -> "PairStream":
        """Same draws, reindexed to start at ``start`` (disjoint-range bookkeeping)."""
        if start < 1:
            raise ValueError("start index must be >= 1")
        n = np.arange(start, start + len(self), dtype=np.int64)
        return PairStream(n=n, lam=self.lam, t=self.t)


MODE_CONSTANT = "constant-plus-one"
MODE_RADEMACHER = "rademacher"
MODE_RADEMACHER_RARB = "rademacher-times-rarb"
_MODES = (MODE_CONSTANT, MODE_RADEMACHER, MODE_RADEMACHER_RARB)


def rademacher(j: int, t):
    """Balanced ±1 square wave of order ``j``: sign(sin(2^(j+1) pi t)).

    Accepts a scalar in [0, 1) or an array; the (measure-zero) points
    where the sine vanishes exactly map to +1.
    """
    if not isinstance(j, (int, np.integer)) or j < 1:
        raise ValueError(f"Rademacher order must be a positive integer, got {j!r}")
    arr = np.asarray(t, dtype=np.float64)
    if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) >= 1.0):
        raise ValueError("t must lie in [0, 1)")
    s = np.sin((2.0 ** (j + 1)) * np.pi * arr)
    out = np.where(s < 0.0, -1, 1).astype(np.int8)
    if arr.ndim == 0:
        return int(out)
    return out


def _splitmix64(z: np.ndarray) -> np.ndarray:
    # Standard splitmix64 finalizer; uint64 arithmetic wraps silently.
    z = (z + np.uint64(0x9E3779B97F4A7C15)).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def rarb_eval(seed: int, t):
    """Keyed deterministic ±1 factor of ``t``: a hash of (seed, bits of t).

    Stands in for an arbitrary extra ±1 gauge component while staying
    reproducible and shareable as part of a key file.
    """
    scalar = np.ndim(t) == 0
    arr = np.ascontiguousarray(t, dtype=np.float64)  # promotes 0-d to 1-d
    bits = arr.reshape(-1).view(np.uint64)
    z = _splitmix64(bits ^ np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF))
    out = np.where(z & np.uint64(1), 1, -1).astype(np.int8)
    if scalar:
        return int(out[0])
    return out.reshape(arr.shape)


@dataclass(frozen=True)
class GaugeKey:
    """Shared specification of the global ±1 gauge function of ``t``.

    Modes: ``constant-plus-one`` (identity), ``rademacher`` (order ``j``),
    or ``rademacher-times-rarb`` (Rademacher times a keyed ±1 hash).
    Both wings hold the same key, so they agree on the gauge at every
    ``t`` without communicating.
    """

    mode: str = MODE_RADEMACHER
    j: int = 1
    rarb_seed: Union[int, None] = None

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"unknown gauge mode {self.mode!r}")
        if self.mode != MODE_CONSTANT:
            if not isinstance(self.j, (int, np.integer)) or self.j < 1:
                raise ValueError(f"gauge key needs a positive Rademacher order, got {self.j!r}")
        if self.mode == MODE_RADEMACHER_RARB:
            if self.rarb_seed is None:
                raise ValueError("rademacher-times-rarb mode needs rarb_seed")
        elif self.rarb_seed is not None:
            raise ValueError(f"rarb_seed is only meaningful in {MODE_RADEMACHER_RARB} mode")

    def evaluate(self, t):
        return gauge_eval(self, t)

    def to_json(self) -> dict:
        return {"v": 1, "mode": self.mode, "j": int(self.j), "rarb_seed": self.rarb_seed}

    @classmethod
    def from_json(cls, obj: dict) -> "GaugeKey":
        if obj.get("v") != 1:
            raise ValueError(f"unsupported gauge key schema version: {obj.get('v')!r}")
        seed = obj.get("rarb_seed")
        return cls(mode=obj["mode"], j=int(obj.get("j", 1)), rarb_seed=None if seed is None else int(seed))

    def digest_hex(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(payload).hexdigest()


def gauge_eval(key: GaugeKey, t):
    """Evaluate the global gauge at ``t`` (scalar or array); always ±1."""
    if key.mode == MODE_CONSTANT:
        arr = np.asarray(t, dtype=np.float64)
        if arr.ndim == 0:
            return 1
        return np.ones(arr.shape, dtype=np.int8)
    r = rademacher(key.j, t)
    if key.mode == MODE_RADEMACHER:
        return r
    return r * rarb_eval(key.rarb_seed, t)


def derive_subseed(master_seed: int, index: int) -> int:
    """Fixed key-derivation rule for per-experiment sub-seeds.

    Keeps separate setting-pair runs (and separate sweep steps, source
    sessions, ...) on independent, reproducible streams that any process
    can re-derive from the master seed.
    """
    digest = hashlib.sha256(f"{int(master_seed)}/{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def sample_pair_stream(seed: int, count: int) -> PairStream:
    """Draw ``count`` pair events: independent uniforms on [0, 1) for lam and t.

    Deterministic given ``seed``; indices run 1..count. ``lam`` is drawn
    as one block, then ``t``.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))
    lam = rng.random(count)
    t = rng.random(count)
    return PairStream(n=np.arange(1, count + 1, dtype=np.int64), lam=lam, t=t)


def measure_left(a: Setting, e: PairEvent, key: GaugeKey) -> Outcome:
    """Left-wing outcome: the gauge value at the event's ``t``, for every ``lam``.

    The setting argument is accepted (keeping the conventional two-wing
    signature) but never read: runs are conditioned so the left magnet
    is the [1, 0] reference direction.
    """
    if not isinstance(a, Setting):
        raise TypeError("a must be a Setting")
    return int(gauge_eval(key, e.t))


def _threshold(b: Setting) -> float:
    return 0.5 * (1.0 + b.b2)


def measure_right(b: Setting, e: PairEvent, key: GaugeKey) -> Outcome:
    """Right-wing outcome from the local setting, the event, and the key only.

    Flips the gauge value when ``lam <= (1 + b2)/2`` (inclusive), so equal
    settings are anti-correlated with certainty.
    """
    g = int(gauge_eval(key, e.t))
    return -g if e.lam <= _threshold(b) else g


def measure_pairs(b: Setting, events: PairStream, key: GaugeKey) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized run of both wings over a pair stream.

    Returns int8 arrays (left, right); elementwise identical to calling
    measure_left / measure_right per event.
    """
    g = gauge_eval(key, events.t)
    g = np.asarray(g, dtype=np.int8)
    flip = events.lam <= _threshold(b)
    right = np.where(flip, -g, g).astype(np.int8)
    return g, right


class PairClass(enum.Enum):
    EQUAL = "equal"
    DIFFERENT = "different"


def classify_pair(left: Outcome, right: Outcome) -> PairClass:
    """Equal iff both detectors carry the same number, i.e. the product is +1."""
    if left not in (1, -1) or right not in (1, -1):
        raise ValueError(f"outcomes must be +1 or -1, got ({left}, {right})")
    return PairClass.EQUAL if left * right == 1 else PairClass.DIFFERENT


@dataclass(frozen=True)
class MeasurementRecord:
    """One wing's registered outcome for one pair."""

    pair_index: int
    station: str  # "L" or "R"
    setting: Setting
    outcome: Outcome

    def __post_init__(self) -> None:
        if self.pair_index < 1:
            raise ValueError(f"pair_index must be >= 1, got {self.pair_index}")
        if self.station not in ("L", "R"):
            raise ValueError(f"station must be 'L' or 'R', got {self.station!r}")
        if self.outcome not in (1, -1):
            raise ValueError(f"outcome must be +1 or -1, got {self.outcome!r}")
