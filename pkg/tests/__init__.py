"""Tests for who-woulda-won."""
