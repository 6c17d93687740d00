"""Tests for the CgLp reset-control toolbox."""
