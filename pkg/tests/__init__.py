# Tests Package
"""Unit tests for RAG service."""
