"""Synthesize extractive QA datasets in a new language and score QA predictions."""

__version__ = "0.1.0"
