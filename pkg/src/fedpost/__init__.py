"""Federated posterior averaging simulation engine.

Implements a generalized federated round loop with two client update
rules (plain local SGD deltas and posterior-sampled, covariance-corrected
deltas), an iterate-averaged SGD sampler, exact closed-form oracles for
least-squares pools, and analysis sweeps for bias/variance, sample
quality, and timing behavior.
"""

__version__ = "0.1.0"
