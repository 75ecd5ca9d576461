"""Desk-scale reproduction tests package."""
