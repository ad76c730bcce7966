"""
Finite-alphabet, finite-order, strictly positive stationary Markov models.

These are the Gibbs measures with finite-range potential: the one-sided
potential is f(w) = log p(w_1..w_r -> w_{r+1}) and its pressure is zero by
construction. States of an order-r model are r-blocks encoded big-endian,
index(a_1..a_r) = sum_i a_i * m**(r - i).
"""

import hashlib
import json
import logging
import string
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from hitrev.errors import InputError, NumericError, ValidationError

logger = logging.getLogger(__name__)

MAX_ORDER = 4
MAX_STATES = 256
ROW_TOLERANCE = 1e-12
POWER_TOLERANCE = 1e-14
POWER_MAX_ITER = 10**6
CHUNK_SIZE = 1 << 14
FIRST_CHUNK = 1 << 8


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of distinct, non-empty tokens."""

    symbols: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(str(s) for s in self.symbols)
        if len(symbols) < 2:
            raise ValidationError("Alphabet needs at least 2 symbols")
        if len(symbols) > MAX_STATES:
            raise ValidationError(f"Alphabet larger than {MAX_STATES} symbols")
        for token in symbols:
            if not token or token != token.strip() or "," in token:
                raise ValidationError(f"Invalid token: {token!r}")
        if len(set(symbols)) != len(symbols):
            raise ValidationError("Alphabet tokens must be unique")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def compact(self) -> bool:
        """True when every token is a single character."""
        return all(len(t) == 1 for t in self.symbols)

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise InputError(f"Unknown token: {token!r}") from None

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.uint8)

    def decode(self, indices: Sequence[int]) -> list:
        return [self.symbols[int(i)] for i in indices]

    def join(self, indices: Sequence[int]) -> str:
        """Render a block, e.g. for state names in model files."""
        sep = "" if self.compact else ","
        return sep.join(self.decode(indices))

    def split(self, text: str) -> np.ndarray:
        """Inverse of ``join``."""
        tokens = list(text) if self.compact else text.split(",")
        return self.encode(tokens)


def default_alphabet(m: int) -> Alphabet:
    if m <= 26:
        return Alphabet(tuple(string.ascii_lowercase[:m]))
    return Alphabet(tuple(f"s{i}" for i in range(m)))


@dataclass(frozen=True)
class Word:
    """A finite block x_1..x_n of alphabet indices."""

    symbols: Tuple[int, ...]

    def __post_init__(self):
        symbols = tuple(int(s) for s in self.symbols)
        if not symbols:
            raise InputError("Word must have length >= 1")
        if min(symbols) < 0:
            raise InputError("Word indices must be non-negative")
        object.__setattr__(self, "symbols", symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def reverse(self) -> "Word":
        return Word(self.symbols[::-1])

    def as_array(self) -> np.ndarray:
        return np.array(self.symbols, dtype=np.uint8)

    @classmethod
    def from_tokens(cls, alphabet: Alphabet, tokens: Union[str, Sequence[str]]) -> "Word":
        if isinstance(tokens, str):
            return cls(tuple(alphabet.split(tokens)))
        return cls(tuple(alphabet.encode(tokens)))


WordLike = Union[Word, Sequence[int], np.ndarray]


def as_symbols(word: WordLike) -> np.ndarray:
    """Coerce a word-like value into a uint8 array."""
    if isinstance(word, Word):
        return word.as_array()
    arr = np.asarray(word)
    if arr.ndim != 1:
        raise InputError("Word must be one-dimensional")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise InputError("Word indices out of range")
    return arr.astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A realized symbol sequence with generation metadata."""

    symbols: np.ndarray
    seed: Optional[int] = None
    model_id: Optional[str] = None

    def __post_init__(self):
        arr = as_symbols(self.symbols).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    def __len__(self) -> int:
        return int(self.symbols.size)

    def __eq__(self, other):
        if isinstance(other, Trajectory):
            return (
                np.array_equal(self.symbols, other.symbols)
                and self.seed == other.seed
                and self.model_id == other.model_id
            )
        return NotImplemented

    __hash__ = None

    def check_alphabet(self, m: int) -> None:
        if self.symbols.size and int(self.symbols.max()) >= m:
            raise InputError(f"Trajectory uses symbol index >= alphabet size {m}")


def block_digits(m: int, k: int) -> np.ndarray:
    """All k-blocks over m symbols, row i being the big-endian digits of i."""
    powers = m ** np.arange(k - 1, -1, -1, dtype=np.int64)
    idx = np.arange(m**k, dtype=np.int64)
    return (idx[:, None] // powers) % m


def reversal_permutation(m: int, k: int) -> np.ndarray:
    """Index of reverse(w) for every k-block index w."""
    powers = m ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return block_digits(m, k)[:, ::-1] @ powers


def window_states(symbols: np.ndarray, m: int, r: int) -> np.ndarray:
    """State index of every length-r window of ``symbols``."""
    powers = m ** np.arange(r - 1, -1, -1, dtype=np.int64)
    windows = np.lib.stride_tricks.sliding_window_view(symbols.astype(np.int64), r)
    return windows @ powers


def _infer_order(n_states: int, m: int) -> int:
    order, size = 0, 1
    while size < n_states:
        size *= m
        order += 1
    if size != n_states or order < 1:
        raise ValidationError(f"Table with {n_states} rows is not m**r for m={m}")
    return order


def _validate_table(transitions: np.ndarray) -> None:
    if transitions.ndim != 2:
        raise ValidationError("Transition table must be two-dimensional")
    if not np.all(np.isfinite(transitions)):
        raise ValidationError("Transition table has non-finite entries")
    if np.any(transitions <= 0.0):
        raise ValidationError("Transition probabilities must be strictly positive")
    sums = transitions.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOLERANCE)
    if bad.size:
        raise ValidationError(f"Row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")


def lifted_matrix(transitions: np.ndarray) -> np.ndarray:
    """Transition matrix of the r-block chain, u -> (u * m + b) mod m**r."""
    n_states, m = transitions.shape
    rows = np.repeat(np.arange(n_states), m)
    cols = (np.arange(n_states)[:, None] * m + np.arange(m)[None, :]).ravel() % n_states
    lifted = np.zeros((n_states, n_states))
    lifted[rows, cols] = transitions.ravel()
    return lifted


def _solve_stationary(lifted: np.ndarray) -> np.ndarray:
    n = lifted.shape[0]
    a = lifted.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return linalg.solve(a, b)


def stationary_distribution(transitions: np.ndarray) -> np.ndarray:
    """
    Stationary law of the r-block chain defined by a (m**r, m) table.

    Power iteration to 1e-14, dense linear solve as fallback.

    Args:
        transitions: Row-stochastic, strictly positive table

    Returns:
        Distribution over the m**r states
    """
    table = np.asarray(transitions, dtype=float)
    _validate_table(table)
    _infer_order(table.shape[0], table.shape[1])
    lifted = lifted_matrix(table)

    n = lifted.shape[0]
    pi = np.full(n, 1.0 / n)
    converged = False
    for _ in range(POWER_MAX_ITER):
        nxt = pi @ lifted
        nxt /= nxt.sum()
        delta = np.abs(nxt - pi).sum()
        pi = nxt
        if delta <= POWER_TOLERANCE:
            converged = True
            break

    if not converged or np.abs(pi @ lifted - pi).sum() >= ROW_TOLERANCE:
        logger.warning("Power iteration did not settle; falling back to dense solve")
        pi = _solve_stationary(lifted)
        if np.any(pi <= 0) or np.abs(pi @ lifted - pi).sum() >= ROW_TOLERANCE:
            raise NumericError("Stationary distribution did not converge")
        pi = pi / pi.sum()
    return pi


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """Order-r stationary chain over a finite alphabet.

    Build with ``MarkovModel.from_transitions``; the stationary law is then
    computed. Arrays are read-only after construction.
    """

    alphabet: Alphabet
    order: int
    transitions: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        m = self.alphabet.size
        if not 1 <= self.order <= MAX_ORDER:
            raise ValidationError(f"Order must be in 1..{MAX_ORDER}")
        if m**self.order > MAX_STATES:
            raise ValidationError(f"m**r = {m ** self.order} exceeds {MAX_STATES} states")

        table = np.array(self.transitions, dtype=float)
        if table.shape != (m**self.order, m):
            raise ValidationError(f"Transition table shape {table.shape} != {(m ** self.order, m)}")
        _validate_table(table)

        pi = np.array(self.stationary, dtype=float)
        if pi.shape != (m**self.order,) or np.any(pi <= 0) or abs(pi.sum() - 1.0) > ROW_TOLERANCE:
            raise ValidationError("Stationary law must be a positive distribution over states")
        if np.abs(pi @ lifted_matrix(table) - pi).sum() >= ROW_TOLERANCE:
            raise ValidationError("Stationary law is not a fixed point of the transitions")

        for arr in (table, pi):
            arr.setflags(write=False)
        object.__setattr__(self, "transitions", table)
        object.__setattr__(self, "stationary", pi)

    @classmethod
    def from_transitions(cls, alphabet: Alphabet, order: int, transitions) -> "MarkovModel":
        table = np.asarray(transitions, dtype=float)
        return cls(alphabet, order, table, stationary_distribution(table))

    @property
    def size(self) -> int:
        return self.alphabet.size

    @property
    def n_states(self) -> int:
        return self.size**self.order

    @cached_property
    def log_transitions(self) -> np.ndarray:
        return np.log(self.transitions)

    @cached_property
    def log_stationary(self) -> np.ndarray:
        return np.log(self.stationary)

    @cached_property
    def model_id(self) -> str:
        payload = {
            "alphabet": list(self.alphabet.symbols),
            "order": self.order,
            "transitions": [[format(float(x), ".15g") for x in row] for row in self.transitions],
        }
        blob = json.dumps(payload, separators=(",", ":"), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def __eq__(self, other):
        if isinstance(other, MarkovModel):
            return (
                self.alphabet == other.alphabet
                and self.order == other.order
                and np.array_equal(self.transitions, other.transitions)
            )
        return NotImplemented

    def __hash__(self):
        return hash(self.model_id)

    def check_word(self, word: WordLike) -> np.ndarray:
        symbols = as_symbols(word)
        if symbols.size == 0:
            raise InputError("Word must have length >= 1")
        if int(symbols.max()) >= self.size:
            raise InputError(f"Word uses symbol index >= alphabet size {self.size}")
        return symbols


def block_law(model: MarkovModel, k: int) -> np.ndarray:
    """Stationary probability of every k-block, indexed big-endian."""
    m, r = model.size, model.order
    if k < 1:
        raise ValidationError("Block length must be >= 1")
    if k <= r:
        return model.stationary.reshape(m**k, m ** (r - k)).sum(axis=1)
    mu = model.stationary
    for _ in range(k - r):
        states = np.arange(mu.size) % model.n_states
        mu = (mu[:, None] * model.transitions[states]).ravel()
    return mu


def reverse_model(model: MarkovModel) -> MarkovModel:
    """
    Law of the time-reversed process as an order-r model.

    p^R(u -> b) = mu(reverse(u b)) / pi(reverse(u)) with mu the stationary
    (r+1)-block law.
    """
    m, r = model.size, model.order
    mu = block_law(model, r + 1)
    idx = np.arange(model.n_states * m).reshape(model.n_states, m)
    reversed_table = mu[reversal_permutation(m, r + 1)[idx]]
    reversed_table /= model.stationary[reversal_permutation(m, r)][:, None]
    reversed_table /= reversed_table.sum(axis=1, keepdims=True)
    return MarkovModel.from_transitions(model.alphabet, r, reversed_table)


def _check_seed(seed: int) -> None:
    if not 0 <= int(seed) < 2**64:
        raise InputError("Seed must be a 64-bit unsigned integer")


def stream(
    model: MarkovModel,
    seed: int,
    prefix: Optional[WordLike] = None,
    chunk_size: int = CHUNK_SIZE,
) -> Iterator[np.ndarray]:
    """
    Generate a trajectory lazily, chunk by chunk.

    The first chunk is the initial block: r symbols drawn from the stationary
    law, or ``prefix`` when given (a start conditioned on that cylinder).
    Every later symbol consumes exactly one uniform draw, so output is
    prefix-consistent across lengths and chunk sizes. Chunks start at 256
    symbols and double up to ``chunk_size``.
    """
    _check_seed(seed)
    m, r, n_states = model.size, model.order, model.n_states
    rng = np.random.Generator(np.random.PCG64(int(seed)))

    if prefix is None:
        cum = np.cumsum(model.stationary)
        state = min(int(np.searchsorted(cum, rng.random(), side="right")), n_states - 1)
        head = block_digits(m, r)[state].astype(np.uint8)
    else:
        head = model.check_word(prefix)
        if head.size < r:
            raise InputError(f"Conditioning prefix shorter than order {r}")
        state = int(window_states(head[-r:], m, r)[0])
    yield head

    cum_rows = np.cumsum(model.transitions, axis=1)
    cum_rows[:, -1] = 1.0
    cum_rows = cum_rows.tolist()
    size = min(FIRST_CHUNK, chunk_size)
    while True:
        out = bytearray(size)
        for i, u in enumerate(rng.random(size).tolist()):
            b = bisect_right(cum_rows[state], u)
            out[i] = b
            state = (state * m + b) % n_states
        yield np.frombuffer(bytes(out), dtype=np.uint8)
        size = min(2 * size, chunk_size)


def simulate(model: MarkovModel, length: int, seed: int) -> Trajectory:
    """
    Simulate ``length`` symbols; a pure function of (model, length, seed).

    Args:
        model: Generating model
        length: Number of symbols, at least the model order
        seed: 64-bit seed

    Returns:
        Trajectory carrying the seed and the model hash
    """
    if length < model.order:
        raise InputError(f"Length {length} shorter than model order {model.order}")

    parts, total = [], 0
    for chunk in stream(model, seed):
        parts.append(chunk)
        total += chunk.size
        if total >= length:
            break
    symbols = np.concatenate(parts)[:length]
    return Trajectory(symbols, seed=int(seed), model_id=model.model_id)


def cylinder_log_prob(model: MarkovModel, word: WordLike) -> float:
    """Natural log of P([x_1..x_n]) for n >= r."""
    symbols = model.check_word(word)
    r = model.order
    if symbols.size < r:
        raise InputError(f"Cylinders shorter than the order ({r}) are unsupported")
    states = window_states(symbols, model.size, r)
    value = model.log_stationary[states[0]]
    value += model.log_transitions[states[:-1], symbols[r:].astype(np.int64)].sum()
    return float(value)


def entropy_production_exact(model: MarkovModel, word: WordLike) -> float:
    """log P([x_1..x_n]) - log P([x_n..x_1])."""
    symbols = model.check_word(word)
    return cylinder_log_prob(model, symbols) - cylinder_log_prob(model, symbols[::-1])


def entropy_production_sum(
    model: MarkovModel,
    word: WordLike,
    reversed_model: Optional[MarkovModel] = None,
) -> float:
    """
    Ergodic sum of log p(u -> b) - log p^R(u -> b) along the word.

    Differs from ``entropy_production_exact`` only by the boundary term
    log pi(x_1..x_r) - log pi^R(x_1..x_r).
    """
    symbols = model.check_word(word)
    r = model.order
    if symbols.size < r:
        raise InputError(f"Words shorter than the order ({r}) are unsupported")
    backward = reversed_model if reversed_model is not None else reverse_model(model)
    states = window_states(symbols, model.size, r)[:-1]
    nxt = symbols[r:].astype(np.int64)
    return float((model.log_transitions[states, nxt] - backward.log_transitions[states, nxt]).sum())


def empirical_model(
    trajectory: Trajectory,
    alphabet: Alphabet,
    order: int = 1,
    pseudocount: float = 1.0,
) -> MarkovModel:
    """
    Plug-in model from transition counts plus a pseudocount.

    Args:
        trajectory: Observed data
        alphabet: Alphabet of the data
        order: Model order r
        pseudocount: Added to every count; must be positive

    Returns:
        Strictly positive MarkovModel
    """
    if pseudocount <= 0:
        raise ValidationError("Pseudocount must be positive")
    trajectory.check_alphabet(alphabet.size)
    m = alphabet.size
    counts = np.zeros((m**order, m))
    if len(trajectory) > order:
        states = window_states(trajectory.symbols, m, order)[:-1]
        np.add.at(counts, (states, trajectory.symbols[order:].astype(np.int64)), 1.0)
    table = counts + pseudocount
    table /= table.sum(axis=1, keepdims=True)
    return MarkovModel.from_transitions(alphabet, order, table)


def cyclic_chain(q: float = 0.5, r: float = 0.25, m: int = 3) -> MarkovModel:
    """p(i -> i+1) = q, p(i -> i-1) = r, p(i -> i) = 1 - q - r, indices mod m."""
    if m < 3:
        raise ValidationError("Cyclic chain needs m >= 3")
    stay = 1.0 - q - r
    table = np.zeros((m, m))
    for i in range(m):
        table[i, (i + 1) % m] = q
        table[i, (i - 1) % m] = r
        table[i, i] = stay
    return MarkovModel.from_transitions(default_alphabet(m), 1, table)


def iid_uniform(m: int = 2, order: int = 1) -> MarkovModel:
    table = np.full((m**order, m), 1.0 / m)
    return MarkovModel.from_transitions(default_alphabet(m), order, table)


def symmetric_chain(m: int = 3, seed: int = 0) -> MarkovModel:
    """Random chain with a symmetric (hence doubly stochastic) transition matrix."""
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.05, 1.0, size=(m, m))
    weights = np.triu(weights, 1)
    weights = weights + weights.T
    scale = 1.25 * weights.sum(axis=1).max()
    table = weights / scale
    table[np.diag_indices(m)] = 1.0 - table.sum(axis=1)
    return MarkovModel.from_transitions(default_alphabet(m), 1, table)


def reversible_chain(m: int = 3, seed: int = 0) -> MarkovModel:
    """Random chain in detailed balance: p_ij proportional to symmetric weights."""
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.05, 1.0, size=(m, m))
    weights = weights + weights.T
    return MarkovModel.from_transitions(default_alphabet(m), 1, weights / weights.sum(axis=1, keepdims=True))


def random_model(m: int = 3, order: int = 1, seed: int = 0) -> MarkovModel:
    rng = np.random.default_rng(seed)
    table = rng.uniform(0.05, 1.0, size=(m**order, m))
    return MarkovModel.from_transitions(default_alphabet(m), order, table / table.sum(axis=1, keepdims=True))


BUILTIN_MODELS: Dict[str, Callable[[], MarkovModel]] = {
    "cyclic": cyclic_chain,
    "iid2": lambda: iid_uniform(2),
    "iid3": lambda: iid_uniform(3),
    "symmetric3": lambda: symmetric_chain(3, seed=0),
    "reversible3": lambda: reversible_chain(3, seed=0),
    "random3": lambda: random_model(3, 1, seed=0),
    "random2o2": lambda: random_model(2, 2, seed=0),
}


def derive_seed(base_seed: int, *keys) -> int:
    """Stable 64-bit seed from a base seed and any labels (suite, n, trial...)."""
    label = ":".join(str(k) for k in (base_seed,) + keys)
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")
