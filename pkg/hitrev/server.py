"""
Tool registry behind the command line.

Each tool takes a parameter mapping and returns a result mapping; the CLI is
a thin adapter that builds the parameters and renders the result. Results
carry the effective settings under ``"settings"``; tabular results also
carry a ``"table"`` DataFrame used for CSV output.
"""

import logging
import threading
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from harness.suites import SuiteConfig, run_all
from hitrev.config import Settings
from hitrev.errors import InputError, UsageError
from hitrev.estimators import (
    estimate_dual,
    estimate_entropy_rate,
    estimate_entropy_rate_stream,
    estimate_H,
    estimate_H_stream,
    estimate_W,
    estimate_W_stream,
    split_pairs,
    test_reversibility_sign,
    test_reversibility_sign_stream,
    test_reversibility_threshold,
    threshold_test,
)
from hitrev.io import ingest_trajectory, resolve_model, write_trajectory
from hitrev.matching import return_and_reverse_times, stream_return_times, stream_waiting_times, waiting_times
from hitrev.model import (
    Alphabet,
    MarkovModel,
    Trajectory,
    derive_seed,
    empirical_model,
    entropy_production_exact,
    simulate,
)
from hitrev.oracle import (
    default_rate_grid,
    default_scgf_grid,
    entropy_rate_exact,
    mep_exact,
    oracle_summary,
    rate_curve,
    scgf_curve,
)

logger = logging.getLogger(__name__)

_MODEL = {"type": "string", "description": "Model file path or builtin:<name> (e.g. 'builtin:cyclic')"}
_TRAJECTORY = {"type": "string", "description": "Trajectory file (compact one-line or one token per line)"}
_N = {"type": "integer", "description": "Word length n", "minimum": 1}


class HitrevServer:
    """
    Tool server for entropy-production estimation.
    Provides simulation, time searches, estimators, oracles, validation suites and tests.
    """

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or Settings()

    def list_tools(self) -> List[Dict[str, Any]]:
        """List all available tools with JSON-schema parameters."""
        return [
            {
                "name": "simulate",
                "description": "Simulate a stationary trajectory of a Markov model; deterministic in the seed.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "model": _MODEL,
                        "length": {"type": "integer", "minimum": 1},
                        "out": {"type": "string", "description": "Output trajectory file"},
                    },
                    "required": ["model", "length"],
                },
            },
            {
                "name": "times",
                "description": "Return, reverse hitting and waiting times of the first n symbols (TimeRecord rows).",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "model": _MODEL,
                        "trajectory": _TRAJECTORY,
                        "target": _TRAJECTORY,
                        "alphabet": {"type": "string", "description": "Comma-separated tokens"},
                        "n": _N,
                    },
                    "required": ["n"],
                },
            },
            {
                "name": "estimate",
                "description": "Entropy-production estimate (H: hitting, W: waiting, dual: matching lengths) or entropy rate.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "which": {"type": "string", "enum": ["H", "W", "dual", "entropy"]},
                        "model": _MODEL,
                        "trajectory": _TRAJECTORY,
                        "target": _TRAJECTORY,
                        "alphabet": {"type": "string"},
                        "n": _N,
                    },
                    "required": ["which", "n"],
                },
            },
            {
                "name": "oracle",
                "description": "Exact MEP, variance, SCGF and rate-function curves and symmetry residuals of a model.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "model": _MODEL,
                        "scgf_grid": {"type": "integer", "minimum": 2},
                        "rate_grid": {"type": "integer", "minimum": 1},
                        "curve": {"type": "string", "enum": ["scgf", "rate"]},
                    },
                    "required": ["model"],
                },
            },
            {
                "name": "validate",
                "description": "Run a Monte Carlo validation suite (exponential, consistency, clt, ldp, calibration).",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "suite": {"type": "string", "enum": ["exponential", "consistency", "clt", "ldp", "calibration"]},
                        "model": _MODEL,
                        "n": {"type": "array", "items": {"type": "integer"}},
                        "trials": {"type": "integer", "minimum": 100},
                    },
                    "required": ["suite", "n"],
                },
            },
            {
                "name": "test",
                "description": "Irreversibility test: sign test on waiting-time estimates or threshold test on the hitting-time estimate.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "method": {"type": "string", "enum": ["sign", "threshold"]},
                        "model": _MODEL,
                        "trajectory": _TRAJECTORY,
                        "alphabet": {"type": "string"},
                        "n": _N,
                        "pairs": {"type": "integer", "minimum": 20},
                    },
                    "required": ["method", "n"],
                },
            },
        ]

    def execute_tool(self, tool_name: str, parameters: dict, cancel: Optional[threading.Event] = None):
        """Execute a tool with the given parameters."""
        logger.debug("Calling %s with %s", tool_name, parameters)

        if tool_name == "simulate":
            return self.simulate(parameters)

        elif tool_name == "times":
            return self.times(parameters)

        elif tool_name == "estimate":
            return self.estimate(parameters)

        elif tool_name == "oracle":
            return self.oracle(parameters)

        elif tool_name == "validate":
            return self.validate(parameters, cancel)

        elif tool_name == "test":
            return self.test(parameters)

        else:
            return {"error": f"Unknown tool: {tool_name}"}

    # -- helpers -------------------------------------------------------------

    def _param(self, parameters: dict, name: str):
        value = parameters.get(name)
        return getattr(self.settings, name) if value is None else value

    def _model(self, parameters: dict) -> Optional[MarkovModel]:
        ref = self._param(parameters, "model")
        return resolve_model(ref) if ref else None

    def _alphabet(self, parameters: dict, model: Optional[MarkovModel]) -> Alphabet:
        if model is not None:
            return model.alphabet
        tokens = parameters.get("alphabet")
        if not tokens:
            raise UsageError("Reading a trajectory file needs --model or --alphabet")
        return Alphabet(tuple(t.strip() for t in tokens.split(",")))

    def _files(self, parameters: dict, model: Optional[MarkovModel]) -> Tuple[Optional[Trajectory], Optional[Trajectory]]:
        paths = parameters.get("trajectory"), parameters.get("target")
        if not any(paths):
            return None, None
        alphabet = self._alphabet(parameters, model)
        return tuple(ingest_trajectory(p, alphabet) if p else None for p in paths)

    @staticmethod
    def _clamp(cap: int, trajectory: Trajectory, n: int) -> int:
        """The requested cap, clamped to what a finite trajectory can examine."""
        limit = len(trajectory) - n
        if limit < 1:
            raise InputError(f"Trajectory of length {len(trajectory)} too short for n = {n}")
        return min(cap, limit)

    def _envelope(self, **items) -> Dict[str, Any]:
        items["settings"] = self.settings.model_dump()
        return items

    # -- tools ---------------------------------------------------------------

    def simulate(self, parameters: dict) -> Dict[str, Any]:
        model = self._model(parameters)
        if model is None:
            raise UsageError("simulate needs a model")
        seed = self._param(parameters, "seed")
        trajectory = simulate(model, int(parameters["length"]), seed)
        out = parameters.get("out")
        if out:
            write_trajectory(trajectory, model.alphabet, out)
            logger.info("Wrote %d symbols to %s", len(trajectory), out)
        result = self._envelope(model_id=model.model_id, seed=seed, length=len(trajectory), out=out)
        if not out:
            sep = "" if model.alphabet.compact else "\n"
            result["trajectory"] = sep.join(model.alphabet.decode(trajectory.symbols))
        return result

    def times(self, parameters: dict) -> Dict[str, Any]:
        n = int(parameters["n"])
        model = self._model(parameters)
        trajectory, target = self._files(parameters, model)
        seed = self._param(parameters, "seed")
        cap = self._param(parameters, "cap")

        if trajectory is not None:
            records = list(return_and_reverse_times(trajectory, n, self._clamp(cap, trajectory, n)))
            if target is not None:
                records += waiting_times(trajectory, target, n, self._clamp(cap, target, n))
        elif model is not None:
            prefix, plus, minus = stream_return_times(model, seed, n, cap)
            records = [plus, minus]
            records += stream_waiting_times(model, prefix, derive_seed(seed, "target"), cap)
        else:
            raise UsageError("times needs --model or --trajectory")

        table = pd.DataFrame([r.as_row() for r in records])
        return self._envelope(records=records, table=table)

    def estimate(self, parameters: dict) -> Dict[str, Any]:
        which = parameters.get("which", "H")
        n = int(parameters["n"])
        model = self._model(parameters)
        trajectory, target = self._files(parameters, model)
        seed = self._param(parameters, "seed")
        cap = self._param(parameters, "cap")
        extras: Dict[str, Any] = {}

        if trajectory is not None:
            if which == "H":
                report = estimate_H(trajectory, n, self._clamp(cap, trajectory, n))
            elif which == "W":
                if target is None:
                    raise UsageError("estimate --which W needs two trajectory files")
                report = estimate_W(trajectory, target, n, self._clamp(cap, target, n))
            elif which == "dual":
                report = estimate_dual(trajectory, n)
            else:
                report = estimate_entropy_rate(trajectory, n, self._clamp(cap, trajectory, n))
            alphabet = self._alphabet(parameters, model)
            order = model.order if model is not None else 1
            extras["plugin_mep"] = mep_exact(empirical_model(trajectory, alphabet, order))
            prefix = trajectory.symbols[:n]
        elif model is not None:
            if which == "H":
                report, prefix = estimate_H_stream(model, seed, n, cap)
            elif which == "W":
                report, prefix = estimate_W_stream(model, derive_seed(seed, "source"), derive_seed(seed, "target"), n, cap)
            elif which == "dual":
                trajectory = simulate(model, max(n, model.order), seed)
                report, prefix = estimate_dual(trajectory, n), trajectory.symbols[:n]
            else:
                report, prefix = estimate_entropy_rate_stream(model, seed, n, cap)
        else:
            raise UsageError(f"estimate --which {which} needs --model or the trajectory files it reads")

        if model is not None:
            if which == "entropy":
                extras["entropy_rate"] = entropy_rate_exact(model)
            else:
                extras["mep"] = mep_exact(model)
                if prefix.size >= model.order:
                    extras["exact"] = entropy_production_exact(model, prefix)
        return self._envelope(report=report, **extras)

    def oracle(self, parameters: dict) -> Dict[str, Any]:
        model = self._model(parameters)
        if model is None:
            raise UsageError("oracle needs a model")
        grid = default_scgf_grid(int(parameters.get("scgf_grid") or 41))
        rates = default_rate_grid(model, int(parameters.get("rate_grid") or 9))
        scgf = scgf_curve(model, grid)
        rate = rate_curve(model, rates)
        summary = oracle_summary(model, grid)
        curve = parameters.get("curve") or "scgf"
        table = scgf.to_frame() if curve == "scgf" else rate.to_frame()
        return self._envelope(summary=summary, scgf=scgf, rate=rate, table=table)

    def validate(self, parameters: dict, cancel: Optional[threading.Event] = None) -> Dict[str, Any]:
        fields = {
            "suite": parameters["suite"],
            "model": self._param(parameters, "model") or "builtin:cyclic",
            "n_values": list(parameters["n"]),
            "base_seed": self._param(parameters, "seed"),
            "cap": self._param(parameters, "cap"),
            "workers": self._param(parameters, "workers"),
            "alpha": self._param(parameters, "alpha"),
        }
        for name in ("trials", "estimator", "word", "p_grid", "pairs"):
            if parameters.get(name) is not None:
                fields[name] = parameters[name]
        if parameters.get("raw_out"):
            fields["out"] = parameters["raw_out"]
        try:
            config = SuiteConfig(**fields)
        except ValueError as e:
            raise UsageError(f"Invalid suite configuration: {e}") from None

        report = run_all([config], cancel=cancel)[0]
        return self._envelope(report=report, table=pd.DataFrame(report.rows))

    def test(self, parameters: dict) -> Dict[str, Any]:
        method = parameters.get("method", "sign")
        n = int(parameters["n"])
        model = self._model(parameters)
        trajectory, _ = self._files(parameters, model)
        seed = self._param(parameters, "seed")
        cap = self._param(parameters, "cap")
        alpha = self._param(parameters, "alpha")
        pairs = int(parameters.get("pairs") or 100)

        if method == "threshold":
            c_thr = self._param(parameters, "c_thr")
            if trajectory is not None:
                report = test_reversibility_threshold(trajectory, n, self._clamp(cap, trajectory, n), c_thr)
            elif model is not None:
                report = threshold_test(estimate_H_stream(model, seed, n, cap)[0], c_thr)
            else:
                raise UsageError("test needs --model or --trajectory")
        else:
            if trajectory is not None:
                segments = split_pairs(trajectory, pairs)
                report = test_reversibility_sign(segments, n, self._clamp(cap, segments[0][1], n), alpha)
            elif model is not None:
                report = test_reversibility_sign_stream(model, pairs, n, cap, alpha=alpha, base_seed=seed)
            else:
                raise UsageError("test needs --model or --trajectory")
        return self._envelope(report=report)


__all__ = ["HitrevServer"]
