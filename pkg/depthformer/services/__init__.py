"""
Services: metrics, data, training and evaluation.
"""
