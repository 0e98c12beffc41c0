"""
Tests for service modules.
"""
