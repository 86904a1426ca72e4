"""Exception types shared across premreg."""
from __future__ import annotations


class PremregError(Exception):
    """Base class for all premreg failures."""


class DomainError(PremregError, ValueError):
    """An argument lies outside the domain of the operation."""


class DataError(PremregError, ValueError):
    """Input data is malformed or cannot support the requested fit."""


class NumericalError(PremregError, RuntimeError):
    """A numerical routine produced an unusable result."""
