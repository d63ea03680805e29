"""Cluster-correlation expansion for central-spin decoherence near clock transitions."""

__version__ = "0.1.0"
