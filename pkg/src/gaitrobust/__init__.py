"""Adversarial robustness workbench for skeleton-based gait person identification."""

__version__ = "0.1.0"
