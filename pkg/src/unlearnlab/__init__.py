"""Desk-scale lab for sequential copyright-takedown unlearning on compact language models."""

__version__ = "0.1.0"
