"""Exception types shared across the package.

The CLI maps these onto exit codes: DataFormatError -> 3, NumericError -> 4.
"""


class DataFormatError(Exception):
    """Malformed or incompatible input file (WAV, SCF1, SCW1, sidecar)."""


class NumericError(Exception):
    """Unrecoverable numerical failure (e.g. Cholesky after loading escalation)."""
