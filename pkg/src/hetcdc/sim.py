"""Bit-exact shuffle simulator.

A :class:`~hetcdc.shuffle_opt.ShuffleLoadPlan` is turned into concrete coded
multicast messages over synthetic intermediate values (IVs), delivered, and
decoded at every worker. Decoding uses only each worker's own inventory; the
generator is consulted again only for the final correctness check.

Every stream and segment is described by *pieces*: byte ranges of a source
``(q, files)``, where ``files`` is a file bitmask. For CDC a source is a
single IV; for C-CDC it is the wraparound sum of the IVs of ``files`` for
function ``q``. A worker can materialise a piece only if it stores every
file of the source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .placement import Placement
from .shuffle_opt import CCDC, CDC, ShuffleLoadPlan, check_variant
from .system import SystemConfig, format_subset, members, popcount


class ScheduleError(ValueError):
    """The plan cannot be realised (flow violation or bad IV size)."""


class DecodingError(RuntimeError):
    """A worker could not build or decode a segment."""

    def __init__(self, worker: int, subset: int, segment: str, reason: str):
        self.worker, self.subset, self.segment = worker, subset, segment
        super().__init__(
            f"worker {worker + 1} in {format_subset(subset)}, segment {segment}: {reason}"
        )


# (q, files mask, byte offset, byte length)
Piece = tuple[int, int, int, int]


def _slice(pieces: list[Piece], start: int, length: int) -> list[Piece]:
    out, pos, end = [], 0, start + length
    for q, f, off, ln in pieces:
        lo, hi = max(start, pos), min(end, pos + ln)
        if lo < hi:
            out.append((q, f, off + lo - pos, hi - lo))
        pos += ln
        if pos >= end:
            break
    return out


def function_ranges(config: SystemConfig, num_functions: int) -> list[range]:
    """Contiguous blocks of the ``Q`` functions reduced by each worker."""
    out, start = [], 0
    for w in config.reducing_loads:
        size = w * num_functions
        if size.denominator != 1:
            raise ScheduleError(f"Q={num_functions} does not make W_k*Q integral")
        out.append(range(start, start + int(size)))
        start += int(size)
    return out


def choose_iv_bits(plan: ShuffleLoadPlan, num_functions: int, multiplier: int = 1) -> int:
    """Smallest byte-aligned ``T`` making every ``T*Q*x`` of the plan whole bytes."""
    d = 1
    for v in plan.values.values():
        d = math.lcm(d, (v * num_functions).denominator)
    return 8 * d * multiplier


@dataclass
class MapOutput:
    """IV inventories after the Map phase."""

    placement: Placement
    demand: int
    num_functions: int
    iv_bits: int
    seed: int
    inventories: list[dict[tuple[int, int], bytes]]

    @property
    def iv_bytes(self) -> int:
        return self.iv_bits // 8

    def reference(self, q: int, n: int) -> bytes:
        return generate_iv(q, n, self.seed, self.iv_bits)


def generate_iv(q: int, n: int, seed: int, iv_bits: int) -> bytes:
    """Deterministic pseudorandom payload of IV ``(q, n)``."""
    if iv_bits % 8:
        raise ScheduleError("IV size must be a whole number of bytes")
    return np.random.default_rng([seed, q, n]).bytes(iv_bits // 8)


def map_phase(
    placement: Placement, demand: int, num_functions: int, iv_bits: int, seed: int = 0
) -> MapOutput:
    """Every worker computes all ``Q`` IVs of each demanded file it stores."""
    if iv_bits <= 0 or iv_bits % 8:
        raise ScheduleError("IV size must be a positive whole number of bytes")
    inventories = []
    for k in range(placement.num_workers):
        inv = {}
        for n in placement.files_at(k):
            if demand >> n & 1:
                for q in range(num_functions):
                    inv[(q, n)] = generate_iv(q, n, seed, iv_bits)
        inventories.append(inv)
    return MapOutput(placement, demand, num_functions, iv_bits, seed, inventories)


@dataclass
class Segment:
    recipient: int
    stream: int  # subset of the recipient stream
    offset: int  # bits
    length: int  # bits
    pieces: list[Piece]


@dataclass
class ShuffleSchedule:
    """Segment assignment realising a plan.

    ``messages[(s, j)]`` lists the per-recipient segments that sender ``j``
    XORs together inside subset ``s``; ``streams[(k, s)]`` holds the pieces of
    recipient ``k``'s stream in ``s`` and ``own_bytes[(k, s)]`` the length of
    its leading part made of locally needed IVs. ``residuals[(k, s, i)]`` is
    the tail segment handed down to ``s - i``.
    """

    variant: str
    num_workers: int
    demand: int
    num_functions: int
    iv_bits: int
    functions: list[range]
    messages: dict[tuple[int, int], list[Segment]] = field(default_factory=dict)
    streams: dict[tuple[int, int], list[Piece]] = field(default_factory=dict)
    own_bytes: dict[tuple[int, int], int] = field(default_factory=dict)
    residuals: dict[tuple[int, int, int], Segment] = field(default_factory=dict)

    def message_bits(self, s: int, j: int) -> int:
        segs = self.messages.get((s, j), [])
        return segs[0].length if segs else 0

    @property
    def total_bits(self) -> int:
        return sum(self.message_bits(s, j) for s, j in self.messages)


def _stream_length(pieces: list[Piece]) -> int:
    return sum(p[3] for p in pieces)


def build_schedule(
    plan: ShuffleLoadPlan,
    placement: Placement,
    config: SystemConfig,
    demand: int | None = None,
    num_functions: int | None = None,
    iv_bits: int | None = None,
) -> ShuffleSchedule:
    """Nested partition of every recipient stream into multicast segments.

    Subsets are processed from the largest down so that residual segments
    delegated by a superset are known before the subset's streams are cut.
    """
    variant = check_variant(plan.variant)
    demand = plan.demand if demand is None else demand
    K = config.num_workers
    Q = config.function_count if num_functions is None else num_functions
    T = choose_iv_bits(plan, Q) if iv_bits is None else iv_bits
    if T % 8:
        raise ScheduleError("IV size must be a whole number of bytes")
    funcs = function_ranges(config, Q)
    tq = T * Q

    def bits(x: Fraction) -> int:
        b = x * tq
        if b.denominator != 1 or b.numerator % 8:
            raise ScheduleError(f"T={T} gives a non byte-aligned size T*Q*{x}")
        return int(b)

    files_by_subset: dict[int, list[int]] = {}
    for n, s in enumerate(placement.assignment):
        if demand >> n & 1:
            files_by_subset.setdefault(s, []).append(n)

    sched = ShuffleSchedule(variant, K, demand, Q, T, funcs)
    iv_bytes = T // 8
    order = sorted((s for s in range(1 << K) if popcount(s) >= 2), key=lambda s: (-popcount(s), s))
    for s in order:
        for k in members(s):
            u = s & ~(1 << k)
            files = files_by_subset.get(u, [])
            pieces: list[Piece] = []
            if files:
                if variant == CDC:
                    pieces += [(q, 1 << n, 0, iv_bytes) for n in files for q in funcs[k]]
                else:
                    fmask = sum(1 << n for n in files)
                    pieces += [(q, fmask, 0, iv_bytes) for q in funcs[k]]
            own = _stream_length(pieces)
            for i in range(K):
                if not s >> i & 1 and (k, s | 1 << i, i) in sched.residuals:
                    pieces += sched.residuals[(k, s | 1 << i, i)].pieces
            need = Fraction(len(files) if variant == CDC else min(len(files), 1)) * config.reducing_loads[k]
            inflow = sum((plan.residual(k, s | 1 << i, i) for i in range(K) if not s >> i & 1), Fraction(0))
            outflow = sum((plan.residual(k, s, i) for i in members(s) if i != k), Fraction(0))
            send = sum((plan.sender_size(j, s) for j in members(s) if j != k), Fraction(0))
            if need + inflow != send + outflow:
                raise ScheduleError(
                    f"flow not conserved for worker {k + 1} in {format_subset(s)}: "
                    f"{need} + {inflow} != {send} + {outflow}"
                )
            if _stream_length(pieces) * 8 != bits(need + inflow):
                raise ScheduleError(f"stream length mismatch for worker {k + 1} in {format_subset(s)}")
            sched.streams[(k, s)] = pieces
            sched.own_bytes[(k, s)] = own
            pos = 0
            for j in members(s):
                if j == k:
                    continue
                ln = bits(plan.sender_size(j, s))
                seg = Segment(k, s, pos * 8, ln, _slice(pieces, pos, ln // 8))
                sched.messages.setdefault((s, j), []).append(seg)
                pos += ln // 8
            for i in members(s):
                if i == k or popcount(s) < 3:
                    continue
                ln = bits(plan.residual(k, s, i))
                if ln:
                    sched.residuals[(k, s, i)] = Segment(k, s, pos * 8, ln, _slice(pieces, pos, ln // 8))
                pos += ln // 8
    for (s, j), segs in list(sched.messages.items()):
        if all(seg.length == 0 for seg in segs):
            del sched.messages[(s, j)]
    check_sender_capability(sched, placement)
    return sched


def check_sender_capability(sched: ShuffleSchedule, placement: Placement) -> None:
    """Every segment must be computable by every member of its subset except the recipient."""
    for (s, j), segs in sched.messages.items():
        for seg in segs:
            others = s & ~(1 << seg.recipient)
            for q, f, _, _ in seg.pieces:
                for n in members(f):
                    if placement.assignment[n] & others != others:
                        raise DecodingError(
                            j, s, f"to {seg.recipient + 1}",
                            f"file {n + 1} is not stored by all of {format_subset(others)}",
                        )


def _materialise(pieces: list[Piece], inv: dict, worker: int, s: int, label: str) -> np.ndarray:
    chunks = []
    for q, f, off, ln in pieces:
        acc = np.zeros(ln, dtype=np.uint8)
        for n in members(f):
            iv = inv.get((q, n))
            if iv is None:
                raise DecodingError(worker, s, label, f"missing IV (q={q + 1}, file={n + 1})")
            acc += np.frombuffer(iv, dtype=np.uint8, count=ln, offset=off)
        chunks.append(acc)
    return np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.uint8)


@dataclass
class ShuffleTranscript:
    variant: str
    iv_bits: int
    num_functions: int
    messages: dict[tuple[int, int], bytes]
    decoded_segments: dict[int, int]
    total_bits: int
    verified: bool

    def summary(self) -> str:
        lines = [
            f"variant: {self.variant}",
            f"T_bits: {self.iv_bits}",
            f"Q: {self.num_functions}",
            f"total_bits: {self.total_bits}",
            f"verified: {str(self.verified).lower()}",
        ]
        for (s, j) in sorted(self.messages, key=lambda x: (-popcount(x[0]), x[0], x[1])):
            lines.append(f"subset {format_subset(s)} sender {j + 1}: {len(self.messages[(s, j)]) * 8} bits")
        return "\n".join(lines) + "\n"

    def hexdump(self) -> str:
        return "".join(
            f"{format_subset(s)}/{j + 1}: {msg.hex()}\n"
            for (s, j), msg in sorted(self.messages.items())
        )


def execute_and_verify(
    schedule: ShuffleSchedule, maps: MapOutput, plan: ShuffleLoadPlan | None = None, mode: str | None = None
) -> ShuffleTranscript:
    """Encode, deliver and decode every message, then check every reducer input.

    Raises :class:`DecodingError` naming the worker, subset and segment on
    the first failure.
    """
    mode = check_variant(mode or schedule.variant)
    if mode != schedule.variant:
        raise ScheduleError("execution mode differs from the schedule variant")
    inv = maps.inventories
    K = schedule.num_workers
    recovered: dict[tuple[int, int], dict[int, np.ndarray]] = {}
    messages = {}
    decoded = dict.fromkeys(range(K), 0)
    for (s, j), segs in schedule.messages.items():
        msg = np.zeros(segs[0].length // 8, dtype=np.uint8)
        for seg in segs:
            msg ^= _materialise(seg.pieces, inv[j], j, s, f"to {seg.recipient + 1}")
        messages[(s, j)] = msg.tobytes()
        for seg in segs:
            k = seg.recipient
            out = msg.copy()
            for other in segs:
                if other is not seg:
                    out ^= _materialise(other.pieces, inv[k], k, s, f"from {j + 1} for {other.recipient + 1}")
            recovered.setdefault((k, s), {})[seg.offset // 8] = out
            decoded[k] += 1

    # Assemble streams bottom-up: residual tails were delivered inside smaller subsets.
    streams: dict[tuple[int, int], np.ndarray] = {}
    for s in sorted({s for (_, s) in schedule.streams}, key=lambda s: (popcount(s), s)):
        for k in members(s):
            total = _stream_length(schedule.streams[(k, s)])
            buf = np.zeros(total, dtype=np.uint8)
            have = np.zeros(total, dtype=bool)
            for off, part in recovered.get((k, s), {}).items():
                buf[off : off + len(part)] = part
                have[off : off + len(part)] = True
            for i in members(s):
                seg = schedule.residuals.get((k, s, i))
                if seg is None:
                    continue
                # The tail reappears as inflow in the stream of s - i.
                sub = s & ~(1 << i)
                start = _inflow_offset(schedule, k, sub, s, i)
                part = streams[(k, sub)][start : start + seg.length // 8]
                buf[seg.offset // 8 : seg.offset // 8 + len(part)] = part
                have[seg.offset // 8 : seg.offset // 8 + len(part)] = True
            if not have.all():
                raise DecodingError(k, s, "stream", "bytes left undelivered")
            streams[(k, s)] = buf

    _verify_reducers(schedule, maps, streams)
    total = sum(len(m) * 8 for m in messages.values())
    if plan is not None and Fraction(total) != plan.load * schedule.iv_bits * schedule.num_functions:
        raise DecodingError(0, 0, "transcript", f"{total} bits sent, plan requires {plan.load} TQ")
    return ShuffleTranscript(mode, schedule.iv_bits, schedule.num_functions, messages, decoded, total, True)


def _inflow_offset(schedule: ShuffleSchedule, k: int, sub: int, sup: int, i: int) -> int:
    pos = schedule.own_bytes[(k, sub)]
    for i2 in range(schedule.num_workers):
        if sub >> i2 & 1:
            continue
        seg = schedule.residuals.get((k, sub | 1 << i2, i2))
        if seg is None:
            continue
        if i2 == i:
            return pos
        pos += seg.length // 8
    raise DecodingError(k, sup, f"residual to {format_subset(sub)}", "inflow not found")


def _verify_reducers(schedule: ShuffleSchedule, maps: MapOutput, streams) -> None:
    placement, demand = maps.placement, maps.demand
    K = schedule.num_workers
    nbytes = maps.iv_bytes
    for k in range(K):
        funcs = schedule.functions[k]
        got: dict[tuple[int, int], bytes] = {}
        agg = {q: np.zeros(nbytes, dtype=np.uint8) for q in funcs}
        for n in placement.files_at(k):
            if demand >> n & 1:
                for q in funcs:
                    got[(q, n)] = maps.inventories[k][(q, n)]
                    agg[q] += np.frombuffer(got[(q, n)], dtype=np.uint8)
        for (k2, s), pieces in schedule.streams.items():
            if k2 != k:
                continue
            data = streams[(k, s)]
            pos = 0
            for q, f, off, ln in pieces[: _own_piece_count(pieces, schedule.own_bytes[(k, s)])]:
                chunk = data[pos : pos + ln]
                pos += ln
                if schedule.variant == CDC:
                    got[(q, members(f)[0])] = chunk.tobytes()
                else:
                    agg[q] += chunk
        for q in funcs:
            want = np.zeros(nbytes, dtype=np.uint8)
            for n in members(demand):
                ref = maps.reference(q, n)
                want += np.frombuffer(ref, dtype=np.uint8)
                if schedule.variant == CDC and got.get((q, n)) != ref:
                    raise DecodingError(k, 0, f"IV (q={q + 1}, file={n + 1})", "recovered value differs")
            if schedule.variant == CCDC and not np.array_equal(agg[q], want):
                raise DecodingError(k, 0, f"aggregate q={q + 1}", "reduced sum differs")


def _own_piece_count(pieces: list[Piece], own_bytes: int) -> int:
    pos = 0
    for i, p in enumerate(pieces):
        if pos >= own_bytes:
            return i
        pos += p[3]
    return len(pieces)


def simulate(
    placement: Placement,
    config: SystemConfig,
    demand: int,
    variant: str = CDC,
    seed: int = 0,
    multiplier: int = 1,
) -> ShuffleTranscript:
    """Plan, schedule, map, shuffle and verify one demand end to end."""
    from .shuffle_opt import shuffle_plan

    plan = shuffle_plan(placement, config, demand, variant)
    Q = config.function_count
    T = choose_iv_bits(plan, Q, multiplier)
    sched = build_schedule(plan, placement, config, demand, Q, T)
    maps = map_phase(placement, demand, Q, T, seed)
    return execute_and_verify(sched, maps, plan, variant)
