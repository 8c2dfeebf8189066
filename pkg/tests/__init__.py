"""Tests for finegrained."""
