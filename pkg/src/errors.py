# src/errors.py


class ContactFlowError(Exception):
    """Base class for numeric and domain failures; the CLI maps these to exit code 2."""


class DomainError(ContactFlowError, ValueError):
    """An argument lies outside the domain of a formula (e.g. |y| >= 1)."""


class PhaseError(ContactFlowError):
    """The operation needs the low-temperature (multivalued) phase."""


class RegionError(ContactFlowError):
    """A state or field value lies outside the region an operation is defined on."""


class ConvergenceError(ContactFlowError):
    """The root solver did not reach its residual tolerance."""


class BlowupError(ContactFlowError):
    """A trajectory left the bounded region |y|, |z| <= bound."""
