"""MOSS: modular-supervision task-oriented dialog framework.

Four dialog modules (understanding, state tracking, policy, generation)
share one encoder, own chained decoders, and can be removed per instance or
left unsupervised per dialog.
"""

__version__ = "0.1.0"
