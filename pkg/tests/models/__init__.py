"""
Tests for network modules.
"""
