"""
Model files, trajectory files and report emission.
"""

import io
import json
import logging
import math
import os
import sys
from decimal import Decimal, InvalidOperation
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from hitrev.errors import InputError, ValidationError
from hitrev.model import BUILTIN_MODELS, MAX_ORDER, MAX_STATES, Alphabet, MarkovModel, Trajectory, block_digits

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"


def _parse_probability(value: Any, where: str) -> float:
    if isinstance(value, bool):
        raise ValidationError(f"Probability at {where} is not a number")
    try:
        number = Decimal(str(value))
    except InvalidOperation:
        raise ValidationError(f"Probability at {where} is not a decimal: {value!r}") from None
    if not number.is_finite():
        raise ValidationError(f"Probability at {where} is not finite")
    return float(number)


def model_from_dict(data: Dict[str, Any]) -> MarkovModel:
    """Build a model from the ``{alphabet, order, transitions}`` mapping."""
    try:
        alphabet = Alphabet(tuple(data["alphabet"]))
        order = int(data["order"])
        rows = data["transitions"]
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Model file missing or malformed field: {e}") from None
    if not isinstance(rows, dict):
        raise ValidationError("'transitions' must map state strings to rows")

    m = alphabet.size
    if not 1 <= order <= MAX_ORDER or m**order > MAX_STATES:
        raise ValidationError(f"Unsupported order {order} for alphabet of size {m}")
    states = [alphabet.join(d) for d in block_digits(m, order)]
    unknown = set(rows) - set(states)
    if unknown:
        raise ValidationError(f"Unknown state(s) in transitions: {sorted(unknown)[:3]}")

    table = np.zeros((len(states), m))
    for i, state in enumerate(states):
        row = rows.get(state)
        if not isinstance(row, dict):
            raise ValidationError(f"Missing transition row for state {state!r}")
        extra = set(row) - set(alphabet.symbols)
        if extra:
            raise ValidationError(f"Unknown token(s) in row {state!r}: {sorted(extra)}")
        for j, token in enumerate(alphabet.symbols):
            if token not in row:
                raise ValidationError(f"Row {state!r} has no entry for {token!r}")
            table[i, j] = _parse_probability(row[token], f"{state}->{token}")
    return MarkovModel.from_transitions(alphabet, order, table)


def model_to_dict(model: MarkovModel) -> Dict[str, Any]:
    alphabet = model.alphabet
    transitions = {}
    for i, digits in enumerate(block_digits(model.size, model.order)):
        transitions[alphabet.join(digits)] = {
            token: float(model.transitions[i, j]) for j, token in enumerate(alphabet.symbols)
        }
    return {"alphabet": list(alphabet.symbols), "order": model.order, "transitions": transitions}


def load_model(path: str) -> MarkovModel:
    """
    Load a JSON model file.

    Probabilities are read as decimals (numbers or numeric strings) and every
    row is validated.
    """
    if not os.path.exists(path):
        raise InputError(f"Model file not found: {path}")
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f, parse_float=Decimal, parse_int=Decimal)
        except json.JSONDecodeError as e:
            raise InputError(f"Model file is not valid JSON: {e.msg}", line=e.lineno, offset=e.colno) from None
    if not isinstance(data, dict):
        raise ValidationError("Model file must contain a JSON object")
    model = model_from_dict(data)
    logger.debug("Loaded model %s from %s", model.model_id[:12], path)
    return model


def dump_model(model: MarkovModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, indent=2)
        f.write("\n")


def resolve_model(ref: str) -> MarkovModel:
    """A ``builtin:<name>`` reference or a path to a model file."""
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        if name not in BUILTIN_MODELS:
            raise InputError(f"Unknown builtin model {name!r}; choose from {sorted(BUILTIN_MODELS)}")
        return BUILTIN_MODELS[name]()
    return load_model(ref)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


def _ingest_compact(text: str, alphabet: Alphabet) -> np.ndarray:
    if text.isascii():
        lookup = np.full(128, -1, dtype=np.int16)
        for i, token in enumerate(alphabet.symbols):
            if token.isascii():
                lookup[ord(token)] = i
        codes = lookup[np.frombuffer(text.encode("ascii"), dtype=np.uint8)]
    else:
        codes = np.array([alphabet.symbols.index(c) if c in alphabet.symbols else -1 for c in text], dtype=np.int16)
    bad = np.flatnonzero(codes < 0)
    if bad.size:
        at = int(bad[0])
        raise InputError(f"Unknown token {text[at]!r}", line=1, offset=at + 1)
    return codes.astype(np.uint8)


def _ingest_lines(lines, alphabet: Alphabet) -> np.ndarray:
    index = {token: i for i, token in enumerate(alphabet.symbols)}
    tokens = pd.Series(lines, dtype=object).str.strip()
    codes = tokens.map(index)
    bad = np.flatnonzero(codes.isna().to_numpy())
    if bad.size:
        at = int(bad[0])
        raise InputError(f"Unknown token {tokens.iloc[at]!r}", line=at + 1, offset=1)
    return codes.to_numpy(dtype=np.uint8)


def ingest_trajectory(path: str, alphabet: Alphabet) -> Trajectory:
    """
    Read a trajectory file.

    A single line over a single-character alphabet is read in compact mode,
    one character per symbol; otherwise the file holds one token per line.

    Args:
        path: UTF-8 text file
        alphabet: Alphabet the tokens belong to

    Returns:
        Trajectory without seed or model hash
    """
    if not os.path.exists(path):
        raise InputError(f"Trajectory file not found: {path}")
    with open(path, encoding="utf-8") as f:
        text = f.read()
    text = text.rstrip("\r\n")
    if not text:
        raise InputError(f"Trajectory file is empty: {path}")

    if alphabet.compact and "\n" not in text:
        symbols = _ingest_compact(text, alphabet)
    else:
        symbols = _ingest_lines(text.split("\n"), alphabet)
    logger.debug("Read %d symbols from %s", symbols.size, path)
    return Trajectory(symbols)


def write_trajectory(trajectory: Trajectory, alphabet: Alphabet, path: str, compact: Optional[bool] = None) -> None:
    """Write a trajectory in compact mode (default for one-character alphabets) or one token per line."""
    trajectory.check_alphabet(alphabet.size)
    compact = alphabet.compact if compact is None else compact
    if compact and not alphabet.compact:
        raise InputError("Compact mode needs a single-character alphabet")
    tokens = np.array(alphabet.symbols, dtype=object)[trajectory.symbols]
    sep = "" if compact else "\n"
    with open(path, "w", encoding="utf-8") as f:
        f.write(sep.join(tokens.tolist()))
        f.write("\n")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

Report = Union[BaseModel, pd.DataFrame, Dict[str, Any]]


def _plain(value: Any) -> Any:
    """JSON-ready copy; non-finite floats become null."""
    if isinstance(value, BaseModel):
        return _plain(value.model_dump())
    if isinstance(value, pd.DataFrame):
        return [_plain(row) for row in value.to_dict(orient="records")]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def report_json(report: Report) -> str:
    """A single JSON object; floats keep their shortest round-trip repr."""
    data = _plain(report)
    if not isinstance(data, dict):
        data = {"rows": data}
    return json.dumps(data, allow_nan=False)


def report_frame(report: Report) -> pd.DataFrame:
    if isinstance(report, pd.DataFrame):
        return report
    data = _plain(report)
    if isinstance(data, list):
        return pd.DataFrame(data)
    return pd.json_normalize(data, sep=".")


def report_csv(report: Report) -> str:
    buf = io.StringIO()
    report_frame(report).to_csv(buf, index=False, float_format="%.17g", lineterminator="\n")
    return buf.getvalue()


def emit_report(report: Report, format: str = "json", path: Optional[str] = None) -> None:
    """
    Serialize a report to ``path`` or stdout.

    Args:
        report: Pydantic model, mapping or DataFrame
        format: "json" (one object) or "csv" (header row first)
        path: Output file; stdout when None
    """
    if format == "json":
        text = report_json(report) + "\n"
    elif format == "csv":
        text = report_csv(report)
    else:
        raise InputError(f"Unknown output format: {format!r}")

    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        logger.info("Wrote %s report to %s", format, path)
