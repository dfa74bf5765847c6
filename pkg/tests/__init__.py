"""Tests for pyeventfill."""
