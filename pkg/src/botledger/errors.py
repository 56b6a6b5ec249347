"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class BotledgerError(Exception):
    """Base class for all fatal pipeline errors."""


class DataError(BotledgerError):
    """Malformed, missing, or inconsistent input data or artifacts."""


class NumericError(BotledgerError):
    """Numeric breakdown: non-finite values where finite math is required."""
