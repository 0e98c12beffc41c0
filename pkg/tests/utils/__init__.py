"""
Tests for utility helpers.
"""
