"""Neural machine translation into pairs of language varieties."""

__version__ = "0.1.0"
