"""
Tests for the tensor core.
"""
