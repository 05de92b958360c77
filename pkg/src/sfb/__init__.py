"""Soft forward-backward zero-shot RL on tabular MDPs."""

__version__ = "0.1.0"
