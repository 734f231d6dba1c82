"""Tests for the qsc-analysis package."""
