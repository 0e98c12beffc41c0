"""
Integration tests: whole training and ablation runs.
"""
