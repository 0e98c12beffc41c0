"""
Test module for DepthFormer.
"""
