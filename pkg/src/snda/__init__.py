"""Desk-scale unrolled-denoising text generation.

Non-autoregressive token-sequence denoisers trained with an unrolled
reconstruction objective and decoded by Markov-chain sampling.
"""

__version__ = "0.1.0"
