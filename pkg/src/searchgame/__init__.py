"""Competitive search engine game toolkit."""

__version__ = "0.1.0"
