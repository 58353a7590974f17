"""Prototype-guided zero-shot alignment on embedding vectors."""

from ._core import *  # noqa: F401,F403
from ._core import PgfaError, TrainerState, Activation

__all__ = [name for name in dir() if not name.startswith("_")]
