"""Minimax risk-information tradeoffs and one-shot remote prediction schemes."""
__version__ = "0.1.0"
