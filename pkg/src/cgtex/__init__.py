"""Exemplar-based texture synthesis with conditional generative ConvNets."""

__version__ = "0.1.0"
