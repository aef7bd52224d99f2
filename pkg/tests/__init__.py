"""Tests for the tagad package."""
