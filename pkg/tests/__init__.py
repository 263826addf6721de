"""Test suite for panelecm."""
