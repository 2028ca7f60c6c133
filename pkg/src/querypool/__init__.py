"""Pool-based active learning with uncertainty sampling.

Train a probabilistic classifier while strategically choosing which pool
examples an oracle should label, compare four uncertainty measures against
random sampling, and serve a human-labeling session over HTTP.
"""

__version__ = "0.1.0"
