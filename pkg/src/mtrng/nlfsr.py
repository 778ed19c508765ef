"""Nonlinear feedback shift register expander.

Fibonacci convention: the register's LSB (``x0``) is the output bit, the
register shifts right by one and the feedback ``f(x0, ..., x_{n-1})``
enters at the MSB. ``f`` is given in algebraic normal form as a list of
AND-monomials over tap indices, XORed together. Serialized specs read
``width=4;anf=0,1,2*3``; a constant 1 term is written ``const``.

The expander takes ``width`` true-random seed bits (MSB first), XORs them
into the register, clocks out ``reseed_interval`` bits, takes the next
seed chunk, and so on. The register starts at zero, so the first reseed is
a plain load. XOR-ing rather than overwriting keeps every earlier chunk in
the state, which stops correlations inside a seed chunk from leaking into
the output.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .bits import BitStream

log = logging.getLogger(__name__)

MIN_WIDTH, MAX_WIDTH = 3, 32
MAX_EXHAUSTIVE_WIDTH = 24
DEFAULT_RESEED_INTERVAL = 1024
DEFAULT_CLI_WIDTH = 24


class SeedExhaustedError(ValueError):
    """Not enough seed bits for the requested output length."""


def _canonical(monomials) -> tuple[tuple[int, ...], ...]:
    # x XOR x = 0: monomials appearing an even number of times cancel
    counts: dict[tuple[int, ...], int] = {}
    for m in monomials:
        key = tuple(sorted(set(int(i) for i in m)))
        counts[key] = counts.get(key, 0) ^ 1
    return tuple(sorted((m for m, c in counts.items() if c), key=lambda m: (len(m), m)))


@dataclass(frozen=True)
class NlfsrSpec:
    width_n: int
    feedback: tuple[tuple[int, ...], ...]
    include_zero_state: bool = False

    def __post_init__(self):
        if not MIN_WIDTH <= self.width_n <= MAX_WIDTH:
            raise ValueError(f"width must lie in [{MIN_WIDTH}, {MAX_WIDTH}]")
        anf = _canonical(self.feedback)
        for m in anf:
            if any(i < 0 or i >= self.width_n for i in m):
                raise ValueError(f"monomial {m} references a tap outside width {self.width_n}")
        object.__setattr__(self, "feedback", anf)

    @property
    def masks(self) -> tuple[int, ...]:
        return tuple(sum(1 << i for i in m) for m in self.feedback)

    @property
    def nonsingular(self) -> bool:
        """True when f = x0 XOR g(x1..x_{n-1}), i.e. clocking is a bijection."""
        return (0,) in self.feedback and all(0 not in m for m in self.feedback if m != (0,))

    def feedback_bit(self, register: int) -> int:
        fb = 0
        for mask in self.masks:
            if register & mask == mask:
                fb ^= 1
        if self.include_zero_state and register >> 1 == 0:
            fb ^= 1
        return fb

    def to_line(self) -> str:
        anf = ",".join("*".join(map(str, m)) if m else "const" for m in self.feedback)
        line = f"width={self.width_n};anf={anf}"
        return line + (";zero=1" if self.include_zero_state else "")

    @classmethod
    def parse(cls, line: str) -> "NlfsrSpec":
        fields = {}
        for part in line.strip().split(";"):
            if "=" not in part:
                raise ValueError(f"bad spec field {part!r}")
            k, v = part.split("=", 1)
            fields[k.strip()] = v.strip()
        unknown = set(fields) - {"width", "anf", "zero"}
        if unknown or "width" not in fields or "anf" not in fields:
            raise ValueError(f"spec line needs width= and anf= (got {sorted(fields)})")
        monomials = []
        for term in filter(None, fields["anf"].split(",")):
            term = term.strip()
            monomials.append(() if term == "const" else tuple(int(i) for i in term.split("*")))
        return cls(int(fields["width"]), tuple(monomials), fields.get("zero", "0") in ("1", "true"))


# Full-period feedback functions, one per shipped width; each is checked
# by exhaustive walk in the test suite. The 20-bit function is the
# primitive LFSR x0+x3 with its feedback flipped on two conjugate state
# pairs (x1..x19 = 1 except x9 free and x13 = 0), which joins the cycles
# back into one; those flips account for the two long monomials.
# The 24-bit function is built the same way from x0+x1+x3+x4 (x16 free,
# x22 = 0).
_W20_PAIRS = [i for i in range(1, 20) if i not in (9, 13)]
_W24_PAIRS = [i for i in range(1, 24) if i not in (16, 22)]
DEFAULT_SPECS = {
    4: NlfsrSpec(4, ((0,), (1,), (2,), (2, 3))),
    8: NlfsrSpec(8, ((0,), (1,), (6,), (1, 2))),
    16: NlfsrSpec(16, ((0,), (2,), (13,), (2, 3))),
    20: NlfsrSpec(20, ((0,), (3,), tuple(_W20_PAIRS), tuple(_W20_PAIRS + [13]))),
    24: NlfsrSpec(24, ((0,), (1,), (3,), (4,), tuple(_W24_PAIRS), tuple(_W24_PAIRS + [22]))),
}


def default_spec(width: int = DEFAULT_CLI_WIDTH, include_zero_state: bool = False) -> NlfsrSpec:
    try:
        spec = DEFAULT_SPECS[width]
    except KeyError:
        raise ValueError(f"no default feedback for width {width}; shipped: {sorted(DEFAULT_SPECS)}") from None
    return replace(spec, include_zero_state=include_zero_state)


@dataclass(frozen=True)
class ExpanderState:
    register: int
    spec: NlfsrSpec
    bits_since_reseed: int = 0
    reseed_interval: int = DEFAULT_RESEED_INTERVAL

    def __post_init__(self):
        if self.reseed_interval < 1:
            raise ValueError("reseed_interval must be >= 1")
        if not 0 <= self.bits_since_reseed < self.reseed_interval:
            raise ValueError("bits_since_reseed must lie in [0, reseed_interval)")
        if not 0 <= self.register < (1 << self.spec.width_n):
            raise ValueError("register does not fit the width")
        if self.register == 0 and not self.spec.include_zero_state:
            raise ValueError("all-zero register is a dead state without zero-state completion")

    @classmethod
    def load(cls, spec: NlfsrSpec, chunk: int, reseed_interval: int = DEFAULT_RESEED_INTERVAL) -> "ExpanderState":
        """First reseed, applied to the all-zero starting register."""
        if chunk == 0 and not spec.include_zero_state:
            log.warning("all-zero seed chunk replaced by 0...01")
            chunk = 1
        return cls(chunk, spec, 0, reseed_interval)


def next_register(register: int, spec: NlfsrSpec) -> tuple[int, int]:
    """One clock: returns (new register, output bit)."""
    fb = spec.feedback_bit(register)
    return (register >> 1) | (fb << (spec.width_n - 1)), register & 1


def clock(state: ExpanderState) -> tuple[ExpanderState, int]:
    """Clock once; the counter wraps to 0 when a reseed is due."""
    reg, out = next_register(state.register, state.spec)
    since = (state.bits_since_reseed + 1) % state.reseed_interval
    return replace(state, register=reg, bits_since_reseed=since), out


def reseed(state: ExpanderState, chunk: int) -> ExpanderState:
    """XOR a seed chunk into the register and restart the interval count.

    A register that would become all-zero (without zero-state completion)
    is set to 0...01 instead.
    """
    reg = state.register ^ chunk
    if reg == 0 and not state.spec.include_zero_state:
        log.warning("reseed produced the all-zero register; replaced by 0...01")
        reg = 1
    return replace(state, register=reg, bits_since_reseed=0)


def _feedback_array(spec: NlfsrSpec) -> np.ndarray:
    states = np.arange(1 << spec.width_n, dtype=np.uint32)
    fb = np.zeros(1 << spec.width_n, dtype=np.uint8)
    for mask in spec.masks:
        m = np.uint32(mask)
        fb ^= (states & m) == m
    if spec.include_zero_state:
        fb ^= (states >> np.uint32(1)) == 0
    return fb


def successor_table(spec: NlfsrSpec) -> np.ndarray:
    """Next state for every register value (width <= 24)."""
    if spec.width_n > MAX_EXHAUSTIVE_WIDTH:
        raise ValueError(f"exhaustive tables need width <= {MAX_EXHAUSTIVE_WIDTH}")
    states = np.arange(1 << spec.width_n, dtype=np.uint32)
    fb = _feedback_array(spec).astype(np.uint32)
    return (states >> np.uint32(1)) | (fb << np.uint32(spec.width_n - 1))


@dataclass(frozen=True)
class PeriodResult:
    period: int | None  # None: the seed never recurs (singular feedback)
    full: bool


def period(spec: NlfsrSpec, seed: int = 1) -> PeriodResult:
    """Length of the cycle through ``seed``, by exhaustive enumeration.

    ``full`` means the cycle holds every nonzero state (``2^n - 1``), or
    every state (``2^n``) with zero-state completion.
    """
    succ = successor_table(spec)
    size = len(succ)
    if not 0 <= seed < size:
        raise ValueError("seed does not fit the width")
    if spec.nonsingular:
        # clocking is a permutation: after k rounds of pointer doubling,
        # label[x] is the smallest state among the 2^k states from x on,
        # so after n rounds every state carries its cycle's minimum
        label = np.arange(size, dtype=np.uint32)
        nxt = succ
        for _ in range(spec.width_n):
            np.minimum(label, label[nxt], out=label)
            nxt = nxt[nxt]
        length = int(np.count_nonzero(label == label[seed]))
    else:
        succ_l = succ.tolist()
        s, length = succ_l[seed], 1
        while s != seed and length <= size:
            s = succ_l[s]
            length += 1
        if s != seed:
            return PeriodResult(None, False)
    target = size if spec.include_zero_state else size - 1
    return PeriodResult(length, length == target)


def seed_chunks(seed_bits: BitStream, spec: NlfsrSpec, n_epochs: int) -> list[int]:
    """Seed bits cut into ``width``-bit integers, MSB first."""
    n = spec.width_n
    need = n * n_epochs
    if seed_bits.n_bits < need:
        raise SeedExhaustedError(f"need {need} seed bits for {n_epochs} reseeds, have {seed_bits.n_bits}")
    chunks = seed_bits.to_bits()[:need].reshape(n_epochs, n).astype(np.uint64)
    weights = np.left_shift(np.uint64(1), np.arange(n - 1, -1, -1, dtype=np.uint64))
    return [int(v) for v in chunks @ weights]


@lru_cache(maxsize=4)
def _feedback_table(spec: NlfsrSpec) -> bytes:
    return _feedback_array(spec).tobytes()


class _FeedbackFn:
    def __init__(self, spec: NlfsrSpec):
        self.spec = spec

    def __getitem__(self, register: int) -> int:
        return self.spec.feedback_bit(register)


def expand(seed_bits: BitStream, spec: NlfsrSpec, reseed_interval: int, n_out: int) -> BitStream:
    """Expand a seed stream into ``n_out`` output bits.

    Needs ``width * ceil(n_out / reseed_interval)`` seed bits. Equivalent to
    alternating :func:`reseed` and ``reseed_interval`` calls of
    :func:`clock`, starting from the zero register.
    """
    if reseed_interval < 1:
        raise ValueError("reseed_interval must be >= 1")
    if n_out < 0:
        raise ValueError("n_out must be >= 0")
    if n_out == 0:
        return BitStream(b"", 0)
    n = spec.width_n
    chunks = seed_chunks(seed_bits, spec, math.ceil(n_out / reseed_interval))
    fb = _feedback_table(spec) if n <= MAX_EXHAUSTIVE_WIDTH else _FeedbackFn(spec)
    top = n - 1
    # The next n output bits are the register's own bits (LSB first), so
    # the register is snapshotted every n clocks instead of per bit.
    words, counts = [], []
    s, zeroed = 0, 0
    for chunk in chunks:
        s ^= chunk
        if s == 0 and not spec.include_zero_state:
            s, zeroed = 1, zeroed + 1
        left = reseed_interval
        while left:
            k = n if left >= n else left
            words.append(s)
            counts.append(k)
            for _ in range(k):
                s = (s >> 1) | (fb[s] << top)
            left -= k
    if zeroed:
        log.warning("%d reseed(s) produced the all-zero register; replaced by 0...01", zeroed)
    w = np.asarray(words, dtype=np.uint64)
    bits = ((w[:, None] >> np.arange(n, dtype=np.uint64)[None, :]) & np.uint64(1)).astype(np.uint8)
    keep = np.arange(n)[None, :] < np.asarray(counts)[:, None]
    return BitStream.from_bits(bits[keep][:n_out])


def bitmap(bits: BitStream, side: int) -> np.ndarray:
    """Row-major ``side x side`` image of the first ``side^2`` bits (1 = black)."""
    if side < 1:
        raise ValueError("side must be >= 1")
    if bits.n_bits < side * side:
        raise ValueError(f"bitmap of side {side} needs {side * side} bits, have {bits.n_bits}")
    return bits.to_bits()[: side * side].reshape(side, side)
