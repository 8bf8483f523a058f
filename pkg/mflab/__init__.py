"""
mflab - maximum-margin and hierarchical matrix factorization toolkit.
"""

__version__ = "1.0.0"
