"""Desk-scale lab for contrastive-stratification interaction prediction."""

__version__ = "0.1.0"
