"""
Factorization, embedding and evaluation services.
"""
