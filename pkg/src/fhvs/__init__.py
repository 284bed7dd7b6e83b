"""Variance-smoothing Fay-Herriot small area estimation for stratified cluster surveys."""

__version__ = "0.1.0"
