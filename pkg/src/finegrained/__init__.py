"""Exact simulators, hashing-based counting and experiments for fine-grained sampling hardness.

The package computes IQP and Clifford+T output distributions through GF(2) gap sums, checks
the Toeplitz hash family behind hashing-based approximate counting, and runs the estimation
chain that turns a good classical sampler into multiplicative estimates of gap values.
"""

__version__ = "0.1.0"
