"""Discrete Bayesian-network decision-support pipeline.

Four phases over categorical data: information-theoretic feature selection,
structure learning, Bayes-factor model ranking, and posterior-predictive
classification, each with auditable file outputs.
"""

__version__ = "0.1.0"
