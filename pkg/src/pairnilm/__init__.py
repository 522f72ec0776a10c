"""Appliance identification from steady-state current/voltage waveforms.

A one-vs-one ensemble of small tanh/softmax networks votes on the
appliance category of normalized single-period signatures.
"""

__version__ = "0.1.0"
