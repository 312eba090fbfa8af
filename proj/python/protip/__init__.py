"""Python bindings for the protip progressive tool-retrieval core."""

from ._protip import *  # noqa: F401,F403
from ._protip import ProtipError, run_cli

__all__ = [name for name in dir() if not name.startswith("_")]
