"""Reaction-time-conditioned open set recognition.

Collect timed human responses over a two-row recognition task, train a
multi-exit classifier whose loss is conditioned on per-image mean reaction
times, calibrate per-exit confidence thresholds, and evaluate known/unknown
discrimination with early-exit decision rules.
"""

__version__ = "0.1.0"
