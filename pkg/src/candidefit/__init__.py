"""Candide-3 landmark fitting, action-unit features and emotion classifiers."""

__version__ = "0.1.0"
