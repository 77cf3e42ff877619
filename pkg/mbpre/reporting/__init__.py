"""
Run reporting
"""

from .logging import EVENTS, RunLogger

__all__ = ["EVENTS", "RunLogger"]
