"""Utilities shared by the finegrained modules: bits, errors, limits, seeds and reports."""
