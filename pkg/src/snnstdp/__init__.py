"""Unsupervised STDP learning in a two-layer spiking network with ideal and
finite-state (memristive) synapses."""

__version__ = "0.1.0"
