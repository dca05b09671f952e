"""Detector implementations; importing this package registers them."""

from . import dtmc, iat, ooa, pasad  # noqa: F401
