"""Risk-sensitive quantal response equilibria and optimistic value iteration."""

__version__ = "0.1.0"
