"""
Hitting, return and waiting times of cylinders.

Indexing convention: an occurrence at shift k means the word sits at
0-based positions k..k+n-1 (1-based k+1..k+n), matching theta_k. Shifts
start at 1. Searches carry an explicit cap on the shift; a search that
reaches the cap reports a censored record.
"""

import logging
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from hitrev.errors import InputError
from hitrev.model import MarkovModel, Trajectory, WordLike, as_symbols, stream

logger = logging.getLogger(__name__)


class TimeRecord(BaseModel):
    """A hitting / return / waiting time, possibly censored at ``cap``."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["hit", "return", "waiting"]
    word_len: int
    value: Optional[int]
    censored: bool
    cap: int
    scanned: int

    @property
    def bound(self) -> int:
        """The value, or the cap when censored (a lower bound)."""
        return self.cap if self.censored else self.value

    def as_row(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.word_len,
            "value": self.value,
            "censored": self.censored,
            "scanned": self.scanned,
        }


class PeriodClass(BaseModel):
    """Minimal self-overlap shift k of an n-block."""

    model_config = ConfigDict(frozen=True)

    n: int
    k: int


class MatchingLengths(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    plus: int
    minus: int


class StreamSearch:
    """
    Single-pass search for several patterns over a chunked byte stream.

    Keeps only the last ``max(len(pattern)) - 1`` bytes between chunks, so
    memory is O(n + chunk) however far the search runs. Each chunk is
    scanned with ``bytes.find``.
    """

    def __init__(self, patterns: Sequence[bytes], cap: int):
        if cap < 1:
            raise InputError("Search cap must be >= 1")
        if not patterns or any(len(p) == 0 for p in patterns):
            raise InputError("Patterns must be non-empty")
        self.patterns = list(patterns)
        self.cap = cap
        self.found: List[Optional[int]] = [None] * len(self.patterns)
        self._keep = max(len(p) for p in self.patterns) - 1
        self._tail = b""
        self._offset = 0

    @property
    def done(self) -> bool:
        if all(f is not None for f in self.found):
            return True
        # every shift <= cap has been examined for every pattern
        reached = self._offset + len(self._tail)
        return all(f is not None or reached - len(p) >= self.cap for f, p in zip(self.found, self.patterns))

    def feed(self, chunk: bytes) -> bool:
        """Consume one chunk; returns True once the search is settled."""
        buf = self._tail + chunk
        base = self._offset
        for i, pattern in enumerate(self.patterns):
            if self.found[i] is not None:
                continue
            start = max(0, 1 - base)
            end = min(len(buf), self.cap - base + len(pattern))
            if end - start < len(pattern):
                continue
            pos = buf.find(pattern, start, end)
            if pos >= 0:
                self.found[i] = base + pos

        keep = min(self._keep, len(buf))
        self._tail = buf[len(buf) - keep:] if keep else b""
        self._offset = base + len(buf) - keep
        return self.done

    def records(self, kinds: Sequence[str]) -> List[TimeRecord]:
        out = []
        for kind, pattern, pos in zip(kinds, self.patterns, self.found):
            out.append(
                TimeRecord(
                    kind=kind,
                    word_len=len(pattern),
                    value=pos,
                    censored=pos is None,
                    cap=self.cap,
                    scanned=self.cap if pos is None else pos,
                )
            )
        return out


def search_chunks(
    chunks: Iterable[np.ndarray],
    words: Sequence[WordLike],
    kinds: Sequence[str],
    cap: int,
) -> List[TimeRecord]:
    """
    Hitting times of several words in one pass over a chunk iterator.

    Raises InputError if the iterator ends before the search is settled.
    """
    search = StreamSearch([as_symbols(w).tobytes() for w in words], cap)
    for chunk in chunks:
        if search.feed(chunk.tobytes()):
            records = search.records(kinds)
            if any(r.censored for r in records):
                logger.debug("Search censored at cap %d for words of length %d", cap, records[0].word_len)
            return records
    raise InputError("Stream ended before every shift up to the cap was examined")


def _resolve_cap(trajectory: Trajectory, n: int, cap: Optional[int]) -> int:
    if n < 1:
        raise InputError("Word length must be >= 1")
    if len(trajectory) < n + 1:
        raise InputError(f"Trajectory of length {len(trajectory)} too short for words of length {n}")
    limit = len(trajectory) - n
    if cap is None:
        return limit
    if cap > limit:
        raise InputError(f"Cap {cap} exceeds len(trajectory) - n = {limit}")
    return cap


def hitting_time(trajectory: Trajectory, word: WordLike, cap: Optional[int] = None) -> TimeRecord:
    """
    Smallest shift k >= 1 at which ``word`` occurs in the trajectory.

    Args:
        trajectory: Trajectory to search
        word: Block to look for
        cap: Largest shift examined, at most len(trajectory) - n

    Returns:
        TimeRecord of kind "hit"
    """
    symbols = as_symbols(word)
    cap = _resolve_cap(trajectory, symbols.size, cap)
    return search_chunks([trajectory.symbols], [symbols], ["hit"], cap)[0]


def return_time(trajectory: Trajectory, n: int, cap: Optional[int] = None) -> TimeRecord:
    """T^+_n: hitting time of the trajectory's own first n symbols."""
    cap = _resolve_cap(trajectory, n, cap)
    return search_chunks([trajectory.symbols], [trajectory.symbols[:n]], ["return"], cap)[0]


def reverse_hitting_time(trajectory: Trajectory, n: int, cap: Optional[int] = None) -> TimeRecord:
    """T^-_n: hitting time of the reversed first n symbols."""
    cap = _resolve_cap(trajectory, n, cap)
    return search_chunks([trajectory.symbols], [trajectory.symbols[:n][::-1]], ["hit"], cap)[0]


def return_and_reverse_times(
    trajectory: Trajectory, n: int, cap: Optional[int] = None
) -> Tuple[TimeRecord, TimeRecord]:
    """(T^+_n, T^-_n) from a single pass."""
    cap = _resolve_cap(trajectory, n, cap)
    prefix = trajectory.symbols[:n]
    plus, minus = search_chunks([trajectory.symbols], [prefix, prefix[::-1]], ["return", "hit"], cap)
    return plus, minus


def waiting_times(
    word_source: Trajectory, target: Trajectory, n: int, cap: Optional[int] = None
) -> Tuple[TimeRecord, TimeRecord]:
    """
    (W^+_n, W^-_n): hitting times in ``target`` of the first n symbols of
    ``word_source`` and of their reversal, from one pass over ``target``.
    """
    if len(word_source) < n:
        raise InputError(f"Word source shorter than n = {n}")
    cap = _resolve_cap(target, n, cap)
    prefix = word_source.symbols[:n]
    plus, minus = search_chunks([target.symbols], [prefix, prefix[::-1]], ["waiting", "waiting"], cap)
    return plus, minus


def stream_return_times(model: MarkovModel, seed: int, n: int, cap: int) -> Tuple[np.ndarray, TimeRecord, TimeRecord]:
    """
    (x_1..x_n, T^+_n, T^-_n) on a lazily generated trajectory.

    Only O(n + chunk) symbols are held at any time.
    """
    chunks = stream(model, seed)
    head = []
    held = 0
    while held < n:
        chunk = next(chunks)
        head.append(chunk)
        held += chunk.size
    start = np.concatenate(head)
    prefix = start[:n].copy()

    def replay():
        yield start
        yield from chunks

    plus, minus = search_chunks(replay(), [prefix, prefix[::-1]], ["return", "hit"], cap)
    return prefix, plus, minus


def stream_waiting_times(
    model: MarkovModel, source_prefix: np.ndarray, target_seed: int, cap: int
) -> Tuple[TimeRecord, TimeRecord]:
    """(W^+_n, W^-_n) of a given prefix in a lazily generated target."""
    prefix = as_symbols(source_prefix)
    return tuple(
        search_chunks(stream(model, target_seed), [prefix, prefix[::-1]], ["waiting", "waiting"], cap)
    )


def prefix_function(word: WordLike) -> np.ndarray:
    """Knuth-Morris-Pratt failure function: longest proper border of each prefix."""
    symbols = as_symbols(word).tolist()
    border = [0] * len(symbols)
    k = 0
    for i in range(1, len(symbols)):
        while k and symbols[i] != symbols[k]:
            k = border[k - 1]
        if symbols[i] == symbols[k]:
            k += 1
        border[i] = k
    return np.array(border, dtype=np.int64)


def word_period(word: WordLike) -> PeriodClass:
    """Minimal shift k in 1..n with the word overlapping itself; k = n if none."""
    symbols = as_symbols(word)
    if symbols.size == 0:
        raise InputError("Word must have length >= 1")
    n = int(symbols.size)
    return PeriodClass(n=n, k=n - int(prefix_function(symbols)[-1]))


def _first_unrepeated(block: np.ndarray, reverse: bool) -> int:
    data = block.tobytes()
    for k in range(1, block.size):
        word = block[:k][::-1] if reverse else block[:k]
        if data.find(word.tobytes(), 1) < 0:
            return k
    return int(block.size)


def matching_lengths(trajectory: Trajectory, n: int) -> MatchingLengths:
    """
    L^+_n and L^-_n over the first n symbols x_1..x_n.

    L^+ is the smallest k such that x_1..x_k does not occur again at a
    shift >= 1 inside x_1..x_n; L^- the same for the reversed prefixes
    x_k..x_1. The full block can never reoccur at a positive shift, so both
    are at most n.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    if len(trajectory) < n:
        raise InputError(f"Trajectory shorter than n = {n}")
    block = trajectory.symbols[:n]
    plus = _first_unrepeated(block, reverse=False)
    minus = _first_unrepeated(block, reverse=True)
    return MatchingLengths(n=n, plus=plus, minus=minus)
