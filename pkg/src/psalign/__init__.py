"""Secret-shared inner joins of ID-keyed datasets over an oblivious switching network."""

from .psa import Dataset, JoinedShares, ProtocolAbort, plain_inner_join, run_level1, run_level2

__version__ = "0.1.0"

__all__ = ["Dataset", "JoinedShares", "ProtocolAbort", "plain_inner_join", "run_level1", "run_level2"]
