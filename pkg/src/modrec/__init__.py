"""Radio modulation recognition toolkit.

Synthesizes labeled IQ datasets under channel impairments, extracts
cyclic-moment features, trains classical and convolutional classifiers,
and evaluates accuracy against SNR.
"""

__version__ = "0.1.0"

FRAME_LEN = 128
