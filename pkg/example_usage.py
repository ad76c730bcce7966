"""
Example Usage - hitrev
Demonstrates the library, the tool server and a validation suite programmatically.
"""

import logging

from hitrev.config import load_settings
from hitrev.estimators import estimate_H, estimate_W_stream, split_pairs, test_reversibility_sign
from hitrev.matching import return_and_reverse_times
from hitrev.model import cyclic_chain, simulate
from hitrev.oracle import mep_exact, oracle_summary, rate_function, scgf

logging.basicConfig(level=logging.WARNING)

print("=" * 70)
print("hitrev - Example Usage")
print("=" * 70)


# Example 1: Times and estimates on one trajectory
print("\n" + "=" * 70)
print("EXAMPLE 1: Times and Estimates on One Trajectory")
print("=" * 70)

model = cyclic_chain(0.5, 0.25)
trajectory = simulate(model, 200_000, seed=1)
n = 10

plus, minus = return_and_reverse_times(trajectory, n)
print(f"\nReturn time T+   : {plus.value} (censored={plus.censored})")
print(f"Reverse hit T-   : {minus.value} (censored={minus.censored})")

report = estimate_H(trajectory, n)
print(f"Hitting estimate : {report.raw} ({report.per_symbol} per symbol)")
print(f"Exact MEP        : {mep_exact(model):.6f}")


# Example 2: Waiting-time estimates from streamed trajectories
print("\n\n" + "=" * 70)
print("EXAMPLE 2: Waiting-Time Estimates from Streams")
print("=" * 70)

for n in (4, 8, 12):
    report, prefix = estimate_W_stream(model, source_seed=10 + n, target_seed=20 + n, n=n, cap=10**7)
    print(f"\nn={n:>2}  S^W={report.raw}  per symbol={report.per_symbol}")


# Example 3: Sign test on segment pairs
print("\n\n" + "=" * 70)
print("EXAMPLE 3: Sign Test on Segment Pairs")
print("=" * 70)

pairs = split_pairs(trajectory, 100)
result = test_reversibility_sign(pairs, 6, cap=900)
print(f"\nDecision: {result.decision}")
print(f"p-value : {result.p_value:.3g}")
print(f"Counts  : +{result.params['plus']} / -{result.params['minus']} / ties {result.params['ties']}")


# Example 4: Oracle values
print("\n\n" + "=" * 70)
print("EXAMPLE 4: Oracle Values")
print("=" * 70)

summary = oracle_summary(model)
print(f"\nMEP                : {summary.mep:.6f}")
print(f"sigma^2            : {summary.sigma2:.6f}")
print(f"slopes c-, c+      : {summary.c_minus:.6f}, {summary.c_plus:.6f}")
for p in (-1.5, -0.5, 0.5):
    print(f"E({p:+.1f})           : {scgf(model, p):.6f}")
point = rate_function(model, summary.mep / 2)
print(f"I(MEP/2)           : {point.value:.6f}")


# Example 5: Using the Tool Server
print("\n\n" + "=" * 70)
print("EXAMPLE 5: Using the Tool Server")
print("=" * 70)

from hitrev.server import HitrevServer

server = HitrevServer(load_settings(model="builtin:cyclic", seed=3))

print("\n--- Available Tools ---")
for tool in server.list_tools():
    print(f"\n{tool['name']}")
    print(f"Description: {tool['description']}")

print("\n\n--- Executing Tool: estimate ---")
result = server.execute_tool("estimate", {"which": "W", "n": 8})
print(result["report"])
print(f"exact block value: {result.get('exact')}")

print("\n\n--- Executing Tool: validate (small consistency run) ---")
result = server.execute_tool("validate", {"suite": "consistency", "n": [4, 6], "trials": 100})
print(result["table"])


print("\n" + "=" * 70)
print("Examples completed!")
print("=" * 70)
