#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Errors Module for the Masked RBM toolkit
This module defines the exception hierarchy shared by all components.
"""


class MaskedRbmError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(MaskedRbmError, ValueError):
    """Raised when array shapes do not agree."""

    def __init__(self, what, expected, actual):
        self.expected = tuple(expected) if expected is not None else None
        self.actual = tuple(actual) if actual is not None else None
        super().__init__(f"{what}: expected shape {self.expected}, got {self.actual}")


class DomainError(MaskedRbmError, ValueError):
    """Raised when a value lies outside the support of a distribution."""


class NumericalError(MaskedRbmError, ArithmeticError):
    """Raised when a computation produces non-finite values.

    Args:
        message (str): Description of the failure.
        pixel (int, optional): Flat index of the offending pixel.
    """

    def __init__(self, message, pixel=None):
        self.pixel = pixel
        if pixel is not None:
            message = f"{message} (pixel {pixel})"
        super().__init__(message)


class DivergenceError(NumericalError):
    """Raised when a parameter update overflows.

    Args:
        block (str): Name of the parameter block that became non-finite.
        last_good: The last parameters known to be finite, if any.
    """

    def __init__(self, block, last_good=None):
        self.block = block
        self.last_good = last_good
        super().__init__(f"Non-finite values in parameter block '{block}'")


class ConfigError(MaskedRbmError, ValueError):
    """Raised for invalid configuration values."""


class FormatError(MaskedRbmError, ValueError):
    """Raised for malformed files (containers, images, manifests)."""
