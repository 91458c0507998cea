"""
Unit tests for valuerag
"""
