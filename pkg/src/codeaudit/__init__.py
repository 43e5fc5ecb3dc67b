"""Audit pipeline for code sharing in prediction-model research.

Screens open-access articles for prediction-model scope and code
availability statements, resolves and downloads the cited repositories,
flattens them into assessor-ready text, scores them against a 14-feature
reproducibility rubric, validates automated output against human
annotations, and aggregates cohort-level statistics.
"""

__version__ = "0.1.0"
