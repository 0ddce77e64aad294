"""Acoustic unit discovery: syllable segmentation, unit clustering, HMM self-training
and GMM-UBM gender identification."""

__version__ = "0.1.0"
