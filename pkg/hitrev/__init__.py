"""
Entropy-production estimation for finite-order Markov (Gibbsian) processes
via hitting, return and waiting times.
"""

__version__ = "0.1.0"

# Model identity hashes are sha256 over the canonical JSON of
# (alphabet, order, transitions rounded to 15 significant digits).
MODEL_HASH_ALGORITHM = "sha256-15g"
