"""Hierarchy-aware product classification: category, sub-category and attributes."""
