"""Bandit-driven molecule selection inside a simulated design-make-test-
analyze loop: adaptive zooming over a fingerprint dissimilarity space,
baseline selection strategies, a synthetic activity twin, and a reproducible
experiment harness with a CLI."""

__version__ = "0.1.0"
